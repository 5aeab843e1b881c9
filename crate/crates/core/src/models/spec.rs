use serde::{Deserialize, Serialize};

use crate::consistent::SequenceKind;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DsciVariant {
    Normalized,
    Compatible,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    #[serde(alias = "deepset")]
    DeepSet,
    #[serde(alias = "norm-deepset")]
    NormDeepSet,
    PointNet,
    Mpnn,
    Ign2Norm,
    Ggnn,
    Cggnn,
    Dsci(DsciVariant),
    SvdDs,
}

impl Family {
    /// Input sequence the family is designed for.
    pub fn natural_sequence(self) -> SequenceKind {
        match self {
            Family::DeepSet => SequenceKind::ZeroPadSet,
            Family::NormDeepSet | Family::PointNet => SequenceKind::DupSet,
            Family::Mpnn | Family::Ign2Norm | Family::Ggnn | Family::Cggnn => SequenceKind::DupGraph,
            Family::Dsci(_) | Family::SvdDs => SequenceKind::DupPointCloud,
        }
    }

    pub fn is_graph(self) -> bool {
        matches!(self, Family::Mpnn | Family::Ign2Norm | Family::Ggnn | Family::Cggnn)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Sum,
    Mean,
    Max,
    NormalizedSum,
}

fn d_one() -> usize {
    1
}
fn d_hidden() -> usize {
    50
}
fn d_three() -> usize {
    3
}
fn d_two() -> usize {
    2
}
fn d_true() -> bool {
    true
}

/// Architecture description. Widths: every MLP has `mlp_layers` affine
/// layers with `hidden` units between them; graph families stack `depth`
/// layers with `hidden` channels between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    /// Feature width of the input (set rows, node signals, cloud dimension).
    pub in_dim: usize,
    #[serde(default = "d_one")]
    pub out_dim: usize,
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    #[serde(default = "d_three")]
    pub mlp_layers: usize,
    #[serde(default = "d_three")]
    pub depth: usize,
    /// Message degree `S` for GGNN/CGGNN.
    #[serde(default = "d_two")]
    pub degree: usize,
    #[serde(default)]
    pub activation: Activation,
    /// MPNN only; defaults to normalized sum.
    #[serde(default)]
    pub aggregation: Option<Aggregation>,
    /// When false, the set encoder `ρ` has no biases, so `ρ(0) = 0`.
    #[serde(default = "d_true")]
    pub rho_bias: bool,
}

impl ModelSpec {
    pub fn new(family: Family, in_dim: usize) -> Self {
        Self {
            family,
            in_dim,
            out_dim: 1,
            hidden: d_hidden(),
            mlp_layers: 3,
            depth: 3,
            degree: 2,
            activation: Activation::Relu,
            aggregation: None,
            rho_bias: true,
        }
    }

    pub fn hidden(mut self, h: usize) -> Self {
        self.hidden = h;
        self
    }

    pub fn mlp_layers(mut self, l: usize) -> Self {
        self.mlp_layers = l;
        self
    }

    pub fn depth(mut self, d: usize) -> Self {
        self.depth = d;
        self
    }

    pub fn degree(mut self, s: usize) -> Self {
        self.degree = s;
        self
    }

    pub fn out_dim(mut self, d: usize) -> Self {
        self.out_dim = d;
        self
    }

    pub fn activation(mut self, a: Activation) -> Self {
        self.activation = a;
        self
    }

    pub fn aggregation(mut self, a: Aggregation) -> Self {
        self.aggregation = Some(a);
        self
    }

    pub fn rho_bias(mut self, b: bool) -> Self {
        self.rho_bias = b;
        self
    }

    pub fn mpnn_aggregation(&self) -> Aggregation {
        self.aggregation.unwrap_or(Aggregation::NormalizedSum)
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_dim == 0 || self.hidden == 0 || self.mlp_layers == 0 || self.depth == 0 {
            return Err(invalid("widths, MLP layer count and depth must be positive"));
        }
        let needs_features = !matches!(self.family, Family::Ign2Norm);
        if needs_features && self.in_dim == 0 {
            return Err(invalid(format!("{:?} needs in_dim >= 1", self.family)));
        }
        if self.aggregation.is_some() && self.family != Family::Mpnn {
            return Err(invalid("aggregation is only configurable for MPNN"));
        }
        if matches!(self.family, Family::Dsci(_) | Family::SvdDs) && self.in_dim > 16 {
            return Err(invalid("point-cloud dimension above 16 is not supported"));
        }
        Ok(())
    }
}
