//! Central-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::Rng;

/// Compares analytic gradients against central finite differences of
/// `loss_fn` over a random sample of at least `sample` parameters
/// (or all of them, if fewer). Returns the maximum relative error
/// `|ga - gn| / max(|ga|, |gn|, 1e-8)`.
///
/// `loss_fn` must be a deterministic function of the parameter vector:
/// run in eval precision (f64) with dropout disabled.
pub fn grad_check<F>(
    mut loss_fn: F,
    params: &mut [f64],
    analytic: &[f64],
    epsilon: f64,
    sample: usize,
    rng: &mut impl Rng,
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut indices: Vec<usize> = (0..params.len()).collect();
    indices.shuffle(rng);
    indices.truncate(sample.max(1).min(params.len()));

    let mut max_rel = 0.0f64;
    for &i in &indices {
        let orig = params[i];
        params[i] = orig + epsilon;
        let plus = loss_fn(params);
        params[i] = orig - epsilon;
        let minus = loss_fn(params);
        params[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_model_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let coeffs: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut params: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let analytic = coeffs.clone();
        let c = coeffs.clone();
        let err = grad_check(
            move |p| p.iter().zip(&c).map(|(a, b)| a * b).sum(),
            &mut params,
            &analytic,
            1e-5,
            200,
            &mut rng,
        );
        assert!(err < 1e-9, "linear grad check error {err}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // loss = sum p^2, true gradient 2p; corrupt it by scaling
        let corrupted: Vec<f64> = params.iter().map(|p| 3.0 * p).collect();
        let err = grad_check(
            |p| p.iter().map(|v| v * v).sum(),
            &mut params,
            &corrupted,
            1e-5,
            200,
            &mut rng,
        );
        assert!(err > 1e-2, "corruption not detected, error {err}");
    }
}
