//! Inverted dropout: units are zeroed at train time with probability
//! `p` and survivors are scaled by `1/(1-p)`, so eval mode is the
//! identity.

use rand::Rng;

use super::Phase;

/// Applies dropout, returning the output and the mask of per-unit
/// scales (0 for dropped units, `1/(1-p)` for survivors). The backward
/// pass is an elementwise product with the same mask.
pub fn dropout(input: &[f64], p: f64, phase: Phase, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    assert!((0.0..1.0).contains(&p), "dropout rate must be in [0, 1)");
    match phase {
        Phase::Eval => (input.to_vec(), vec![1.0; input.len()]),
        Phase::Train => {
            if p == 0.0 {
                return (input.to_vec(), vec![1.0; input.len()]);
            }
            let scale = 1.0 / (1.0 - p);
            let mask: Vec<f64> = (0..input.len())
                .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
                .collect();
            let out = input.iter().zip(&mask).map(|(x, m)| x * m).collect();
            (out, mask)
        }
    }
}
