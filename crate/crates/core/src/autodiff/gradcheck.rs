use alloc::vec::Vec;

use rand::Rng;

use super::{Array, Graph, Inputs, NodeId, ParamId, ParameterStore};
use crate::math::Real;
use crate::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference half step, expected in `[1e-6, 1e-2]`.
    pub eps: f64,
    /// Coordinates sampled per parameter; `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
    /// Restrict to these parameters; empty means all reachable ones.
    pub params: Vec<ParamId>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_coords_per_param: Some(16),
            params: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    /// max |analytic - numeric| / max(1, |analytic|, |numeric|)
    pub max_rel_error: f64,
    pub worst: Option<(ParamId, usize)>,
    pub coords_checked: usize,
    /// Coordinates whose finite difference was not finite.
    pub non_finite: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.non_finite == 0 && self.max_rel_error <= tol
    }
}

/// Compares backprop gradients of a scalar `output` with central finite
/// differences. Parameter values are restored before returning; gradient
/// slots of `store` are left holding the analytic gradient.
pub fn grad_check<T: Real, R: Rng + ?Sized>(
    graph: &mut Graph<T>,
    output: NodeId,
    store: &mut ParameterStore<T>,
    inputs: &Inputs<T>,
    opts: &GradCheckOptions,
    rng: &mut R,
) -> Result<GradCheckReport> {
    store.zero_grad();
    graph.forward(store, inputs)?;
    graph.backward(output, Array::scalar(T::ONE), store)?;

    let ids: Vec<ParamId> = if opts.params.is_empty() {
        store.ids().collect()
    } else {
        opts.params.clone()
    };
    let mut report = GradCheckReport::default();
    for id in ids {
        let n = store.value(id).len();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(k) if k < n => (0..k).map(|_| rng.random_range(0..n)).collect(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let original = store.value(id).data()[c];
            let plus = original + T::from_f64(opts.eps);
            let minus = original - T::from_f64(opts.eps);
            store.value_mut(id).data_mut()[c] = plus;
            let f_plus = eval(graph, store, inputs, output);
            store.value_mut(id).data_mut()[c] = minus;
            let f_minus = eval(graph, store, inputs, output);
            store.value_mut(id).data_mut()[c] = original;
            report.coords_checked += 1;
            let (Some(fp), Some(fm)) = (f_plus, f_minus) else {
                report.non_finite += 1;
                continue;
            };
            // Use the representable step actually taken.
            let h = plus.to_f64() - minus.to_f64();
            let numeric = (fp - fm) / h;
            let analytic = store.grad(id).data()[c].to_f64();
            if !numeric.is_finite() {
                report.non_finite += 1;
                continue;
            }
            let denom = 1f64.max(analytic.abs()).max(numeric.abs());
            let err = (analytic - numeric).abs() / denom;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((id, c));
            }
        }
    }
    // Leave cached values consistent with the restored parameters.
    graph.forward(store, inputs)?;
    Ok(report)
}

fn eval<T: Real>(
    graph: &mut Graph<T>,
    store: &ParameterStore<T>,
    inputs: &Inputs<T>,
    output: NodeId,
) -> Option<f64> {
    match graph.forward(store, inputs) {
        Ok(()) => Some(graph.value(output).item().to_f64()),
        Err(_) => None,
    }
}
