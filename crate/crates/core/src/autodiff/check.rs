use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Central-difference gradient of a scalar function, one coordinate at a time.
///
/// This is the reference the reverse-mode rules are checked against, so it only
/// ever calls `f` and never touches the graph machinery.
pub fn finite_diff_oracle<T: Real>(
    mut f: impl FnMut(&Tensor<T>) -> Result<f64>,
    x: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Invalid(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = T::from_f64(orig.to_f64() + eps);
        let hi = f(&probe)?;
        probe.data_mut()[i] = T::from_f64(orig.to_f64() - eps);
        let lo = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::NonFiniteValue(format!(
                "function value at coordinate {i}"
            )));
        }
        out.data_mut()[i] = T::from_f64((hi - lo) / (2.0 * eps));
    }
    Ok(out)
}

/// Fixed, uneven projection weights so every output element matters differently.
fn projection(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 + libm::sin(0.7 * i as f64 + 0.3))
        .collect()
}

/// Builds `sum(build(inputs) * r)` for a fixed projection `r` and compares its
/// reverse-mode gradient with respect to every input against central
/// differences. Returns the worst error over inputs, each measured relative
/// to the largest finite-difference magnitude of that input (floored at 1e-6).
///
/// The graph is higher-order, so `build` may itself call [`Graph::grad`].
pub fn gradient_check(
    build: impl Fn(&mut Graph<f64>, &[NodeId]) -> NodeId,
    inputs: &[Tensor<f64>],
    eps: f64,
) -> Result<f64> {
    let mut g = Graph::with_higher_order();
    let names: Vec<String> = (0..inputs.len()).map(|k| format!("x{k}")).collect();
    let ids: Vec<NodeId> = names
        .iter()
        .zip(inputs)
        .map(|(n, t)| g.input(n, t.clone()))
        .collect();
    let out = build(&mut g, &ids);
    let shape = g.shape(out).to_vec();
    let r = g.constant(Tensor::from_f64_slice(
        &shape,
        &projection(crate::tensor::numel(&shape)),
    )?);
    let weighted = g.mul(out, r);
    let loss = g.sum_all(weighted);
    let analytic = g.gradients(loss, &ids)?;

    let mut bindings: BTreeMap<String, Tensor<f64>> =
        names.iter().cloned().zip(inputs.iter().cloned()).collect();
    let mut worst = 0.0f64;
    for (k, name) in names.iter().enumerate() {
        let numeric = finite_diff_oracle(
            |t| {
                bindings.insert(name.clone(), t.clone());
                g.eval(&bindings)?;
                Ok(g.value(loss).item())
            },
            &inputs[k],
            eps,
        )?;
        bindings.insert(name.clone(), inputs[k].clone());
        let scale = numeric.data().iter().fold(1e-6f64, |m, v| m.max(v.abs()));
        worst = worst.max(analytic[k].max_abs_diff(&numeric) / scale);
    }
    Ok(worst)
}
