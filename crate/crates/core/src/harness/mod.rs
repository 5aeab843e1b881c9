//! Sampling from limit objects, transfer runs and convergence-rate fits.
//!
//! A [`SamplerSpec`] pairs a limit (distribution, signal, graphon or cloud
//! mixture) with a sampling scheme. [`run_transfer`] evaluates a model on
//! samples of increasing size and summarizes the distances to a reference
//! per size (median and central 80% band) in a [`RateReport`], including a
//! log–log slope from [`fit_rate`].

mod rate;
mod sampler;
mod transfer;

pub use rate::{fit_rate, median, quantile, Band, RateFit, RateReport, CONSTANT_TOL};
pub use sampler::{
    box_surface_point, quadrature_nodes, sample, sphere_point, step_error, CloudComponent, CloudShape, Graphon,
    Limit, SamplerSpec, ScalarDist, Scheme, SignalFn,
};
pub use transfer::{empirical_w1_rate, mean_field_reference, run_transfer, Reference, TransferPoint, TransferRun};
