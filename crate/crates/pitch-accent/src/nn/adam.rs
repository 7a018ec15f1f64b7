//! Adam with bias correction over a flat parameter vector.

/// Optimizer state: first/second moment estimates aligned with the
/// flattened parameter vector, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments with the canonical defaults
    /// `beta1=0.9, beta2=0.999, eps=1e-8`.
    pub fn new(param_count: usize, lr: f64) -> AdamState {
        AdamState {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.first_moment.len());
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = &mut state.first_moment[i];
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        let v = &mut state.second_moment[i];
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut params = vec![1.5, -0.25];
        let mut state = AdamState::new(2, 1e-3);
        adam_step(&mut params, &[0.0, 0.0], &mut state);
        assert_eq!(params, vec![1.5, -0.25]);
    }

    #[test]
    fn single_step_closed_form() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(1, 1e-3);
        adam_step(&mut params, &[1.0], &mut state);
        // bias correction makes m_hat = v_hat = 1 exactly on step one
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((params[0] - expected).abs() < 1e-15, "{}", params[0]);
        assert!((params[0] + 0.000999995).abs() < 1e-7);
    }

    #[test]
    fn constant_gradient_steps_shrink() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(1, 1e-3);
        adam_step(&mut params, &[1.0], &mut state);
        let delta1 = params[0];
        let before = params[0];
        adam_step(&mut params, &[1.0], &mut state);
        let delta2 = params[0] - before;
        assert!(delta2.abs() <= delta1.abs() + 1e-9);
    }
}
