use crate::error::{invalid, Result};
use crate::models::params::ParamStore;
use crate::models::spec::Activation;
use crate::models::tape::{Tape, Var};
use crate::tensor::{Matrix, RngStream};

/// Affine chain `x W_0 + b_0 → act → … → x W_L + b_L`, applied row-wise.
/// The last layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    prefix: String,
    dims: Vec<usize>,
    bias: bool,
}

/// Widths `[input, hidden, …, hidden, output]` for `layers` affine maps.
pub fn chain(input: usize, hidden: usize, output: usize, layers: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend(std::iter::repeat(hidden).take(layers.saturating_sub(1)));
    d.push(output);
    d
}

pub(crate) fn apply_act(tape: &mut Tape, x: Var, act: Activation) -> Var {
    match act {
        Activation::Relu => tape.relu(x),
        Activation::Tanh => tape.tanh(x),
    }
}

pub(crate) fn param(tape: &mut Tape, store: &ParamStore, name: &str) -> Result<Var> {
    let e = store
        .entry(name)
        .ok_or_else(|| invalid(format!("unknown parameter {name}")))?;
    let offset = e.offset;
    Ok(tape.param(store.matrix(name)?, offset))
}

impl Mlp {
    /// Registers weights `{prefix}.l{i}.w` (`in x out`) and biases
    /// `{prefix}.l{i}.b`, initialized from `U[±√(1/fan_in)]`.
    pub fn register(prefix: &str, dims: Vec<usize>, bias: bool, store: &mut ParamStore, rng: &mut RngStream) -> Result<Self> {
        let mlp = Self::describe(prefix, dims, bias)?;
        mlp.init(store, rng)?;
        Ok(mlp)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut RngStream) -> Result<()> {
        for (i, w) in self.dims.windows(2).enumerate() {
            let bound = (1.0 / w[0] as f64).sqrt();
            store.add_uniform(&format!("{}.l{i}.w", self.prefix), w[0], w[1], bound, rng)?;
            if self.bias {
                store.add_uniform(&format!("{}.l{i}.b", self.prefix), 1, w[1], bound, rng)?;
            }
        }
        Ok(())
    }

    /// Names and widths only; parameters are looked up at evaluation time.
    pub fn describe(prefix: &str, dims: Vec<usize>, bias: bool) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(invalid(format!("MLP {prefix} needs positive widths, got {dims:?}")));
        }
        Ok(Self {
            prefix: prefix.to_string(),
            dims,
            bias,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().expect("nonempty")
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, act: Activation) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols != self.dims[0] {
            return Err(invalid(format!("MLP {} expects width {}, got {cols}", self.prefix, self.dims[0])));
        }
        let layers = self.dims.len() - 1;
        let mut h = x;
        for i in 0..layers {
            let w = param(tape, store, &format!("{}.l{i}.w", self.prefix))?;
            h = tape.matmul(h, w);
            if self.bias {
                let b = param(tape, store, &format!("{}.l{i}.b", self.prefix))?;
                h = tape.add_row_bias(h, b);
            }
            if i + 1 < layers {
                h = apply_act(tape, h, act);
            }
        }
        Ok(h)
    }
}

/// Number of values in the flat layout used by [`mlp_forward`]: per layer,
/// the row-major `in x out` weight followed by the `out` bias.
pub fn mlp_param_len(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn flat_store(dims: &[usize], params: &[f64]) -> Result<(ParamStore, Mlp)> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(invalid(format!("invalid width chain {dims:?}")));
    }
    if params.len() != mlp_param_len(dims) {
        return Err(invalid(format!(
            "width chain {dims:?} needs {} parameters, got {}",
            mlp_param_len(dims),
            params.len()
        )));
    }
    let mut store = ParamStore::new();
    let mut at = 0;
    for (i, w) in dims.windows(2).enumerate() {
        store.add(&format!("mlp.l{i}.w"), w[0], w[1], params[at..at + w[0] * w[1]].to_vec())?;
        at += w[0] * w[1];
        store.add(&format!("mlp.l{i}.b"), 1, w[1], params[at..at + w[1]].to_vec())?;
        at += w[1];
    }
    let mlp = Mlp {
        prefix: "mlp".into(),
        dims: dims.to_vec(),
        bias: true,
    };
    Ok((store, mlp))
}

/// Evaluates the MLP with widths `dims` stored flat in `params` at `x`.
pub fn mlp_forward(dims: &[usize], act: Activation, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let (store, mlp) = flat_store(dims, params)?;
    if x.len() != dims[0] {
        return Err(invalid(format!("input has length {}, expected {}", x.len(), dims[0])));
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(Matrix::from_vec(1, x.len(), x.to_vec())?);
    let out = mlp.forward(&mut tape, &store, xv, act)?;
    Ok(tape.value(out).data().to_vec())
}

/// Adds `∂⟨grad_out, f(x)⟩/∂params` into `grad_params` and returns the
/// gradient with respect to `x`.
pub fn mlp_backward(
    dims: &[usize],
    act: Activation,
    params: &[f64],
    x: &[f64],
    grad_out: &[f64],
    grad_params: &mut [f64],
) -> Result<Vec<f64>> {
    let (store, mlp) = flat_store(dims, params)?;
    if x.len() != dims[0] || grad_out.len() != mlp.out_dim() || grad_params.len() != params.len() {
        return Err(invalid("mlp_backward: shape mismatch"));
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(Matrix::from_vec(1, x.len(), x.to_vec())?);
    let out = mlp.forward(&mut tape, &store, xv, act)?;
    tape.backward(out, Matrix::from_vec(1, grad_out.len(), grad_out.to_vec())?);
    tape.scatter_param_grads(grad_params);
    Ok(tape.grad(xv).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; x.len()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases() {
        let dims = [3, 4, 2];
        let zeros = vec![0.0; mlp_param_len(&dims)];
        assert_eq!(mlp_forward(&dims, Activation::Relu, &zeros, &[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        // One hidden ReLU unit with unit weights, then a unit readout.
        let p = [1.0, 0.0, 1.0, 0.0];
        assert_eq!(mlp_forward(&[1, 1, 1], Activation::Relu, &p, &[-1.0]).unwrap(), vec![0.0]);
        assert!(mlp_forward(&dims, Activation::Relu, &zeros[1..], &[1.0, 2.0, 3.0]).is_err());
        assert!(mlp_forward(&dims, Activation::Relu, &zeros, &[1.0]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let dims = [3, 5, 2];
        let mut r = RngStream::new(8);
        let params = r.gaussians(mlp_param_len(&dims));
        let x = r.gaussians(3);
        let gout = r.gaussians(2);
        for act in [Activation::Relu, Activation::Tanh] {
            let mut gp = vec![0.0; params.len()];
            let gx = mlp_backward(&dims, act, &params, &x, &gout, &mut gp).unwrap();
            let f = |p: &[f64], x: &[f64]| -> f64 {
                let y = mlp_forward(&dims, act, p, x).unwrap();
                y.iter().zip(&gout).map(|(a, b)| a * b).sum()
            };
            let h = 1e-5;
            for k in 0..params.len() {
                let mut a = params.clone();
                a[k] += h;
                let mut b = params.clone();
                b[k] -= h;
                let fd = (f(&a, &x) - f(&b, &x)) / (2.0 * h);
                assert!((fd - gp[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", gp[k]);
            }
            for k in 0..3 {
                let mut a = x.clone();
                a[k] += h;
                let mut b = x.clone();
                b[k] -= h;
                let fd = (f(&params, &a) - f(&params, &b)) / (2.0 * h);
                assert!((fd - gx[k]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
    }
}
