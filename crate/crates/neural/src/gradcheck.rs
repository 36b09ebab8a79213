use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::params::{Gradients, ParamId, ParamStore};
use crate::NeuralError;

/// Gradients whose magnitude falls below this are compared on an absolute
/// scale: the relative error uses `max(|analytic|, |numeric|, floor)`.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    /// Parameter name, flat coordinate, analytic and numeric derivative of the
    /// worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares analytic gradients against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε`.
///
/// `loss_fn` evaluates the loss for a given store and returns it together
/// with the gradients of a backward pass. Up to `sample` coordinates of every
/// non-frozen parameter of `params` are checked (all of them when the tensor is
/// smaller).
pub fn grad_check<F>(
    loss_fn: F,
    params: &ParamStore,
    eps: f64,
    sample: usize,
    seed: u64,
) -> Result<GradCheckReport, NeuralError>
where
    F: Fn(&ParamStore) -> (f64, Gradients),
{
    let (base_loss, grads) = loss_fn(params);
    if !base_loss.is_finite() {
        return Err(NeuralError::NonFinite("loss".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        coordinates_checked: 0,
        worst: None,
    };
    let mut probe = params.clone();
    let ids: Vec<ParamId> = params.ids().filter(|&id| !params.is_frozen(id)).collect();
    for id in ids {
        let n = params.value(id).len();
        let coords: Vec<usize> = if n <= sample {
            (0..n).collect()
        } else {
            let mut c = sample_indices(&mut rng, n, sample).into_vec();
            c.sort_unstable();
            c
        };
        for c in coords {
            let original = params.value(id).data()[c];
            probe.value_mut(id).data_mut()[c] = original + eps;
            let (plus, _) = loss_fn(&probe);
            probe.value_mut(id).data_mut()[c] = original - eps;
            let (minus, _) = loss_fn(&probe);
            probe.value_mut(id).data_mut()[c] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NeuralError::NonFinite("perturbed loss".into()));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(params, id).map_or(0.0, |g| g.data()[c]);
            let err = relative_error(analytic, numeric);
            report.coordinates_checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some((params.get(id).name.clone(), c, analytic, numeric));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::tensor::Tensor;

    #[test]
    fn sum_of_squares() {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::row_vector(vec![1.0, 2.0, 3.0]));
        let report = grad_check(
            |s| {
                let mut g = Graph::new();
                let x = g.param(s, id);
                let sq = g.mul(x, x);
                let loss = g.sum_all(sq);
                (g.scalar(loss), g.backward(loss))
            },
            &store,
            1e-5,
            10,
            0,
        )
        .unwrap();
        assert_eq!(report.coordinates_checked, 3);
        assert!(report.max_relative_error < 1e-8, "{:?}", report);
    }

    #[test]
    fn softmax_cross_entropy() {
        let mut store = ParamStore::new();
        let id = store.add("logits", Tensor::row_vector(vec![0.0, 0.0]));
        let f = |s: &ParamStore| {
            let mut g = Graph::new();
            let x = g.param(s, id);
            let loss = g.cross_entropy(x, &[0], None);
            (g.scalar(loss), g.backward(loss))
        };
        let (_, grads) = f(&store);
        assert_eq!(grads.get(&store, id).unwrap().data(), &[-0.5, 0.5]);
        let report = grad_check(f, &store, 1e-5, 10, 0).unwrap();
        assert!(report.max_relative_error < 1e-8, "{:?}", report);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::row_vector(vec![1.0]));
        let err = grad_check(
            |s| {
                let mut g = Graph::new();
                let x = g.param(s, id);
                let y = g.scale(x, f64::INFINITY);
                let loss = g.sum_all(y);
                (g.scalar(loss), Gradients::new())
            },
            &store,
            1e-5,
            1,
            0,
        );
        assert!(matches!(err, Err(NeuralError::NonFinite(_))));
    }
}
