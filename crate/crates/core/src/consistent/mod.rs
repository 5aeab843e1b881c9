//! Consistent sequences: sized objects, embeddings, group actions, compatible
//! norms, and randomized compatibility/equivariance checks.
//!
//! A model `f = (f_n)` is compatible with a sequence when
//! `f_N(embed(x, N)) == embed(f_n(x), N)` and every `f_n` is equivariant.

mod check;
mod norm;
mod object;

pub use check::{
    check_compatibility, check_equivariance, output_sequence, set_of, CheckReport, Deviation, SizedMap, COMPAT_TOL,
};
pub use norm::{default_norm, norm, NormKind};
pub use object::{act, embed, random_orthogonal, GroupElement, SequenceKind, SizedObject};
