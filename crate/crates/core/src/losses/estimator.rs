/// Estimate of `E_{p⁻}[φ]` from draws of the unlabeled distribution
/// `p = τ⁺ p⁺ + (1 − τ⁺) p⁻` and of the positive distribution `p⁺`.
///
/// Inputs are already-applied φ values.
pub fn corrected_expectation_estimator(samples_p: &[f64], samples_pplus: &[f64], tau_plus: f64) -> f64 {
    assert!(tau_plus < 1.0, "tau_plus must be < 1");
    let mean = |s: &[f64]| {
        if s.is_empty() {
            0.0
        } else {
            s.iter().sum::<f64>() / s.len() as f64
        }
    };
    (mean(samples_p) - tau_plus * mean(samples_pplus)) / (1.0 - tau_plus)
}
