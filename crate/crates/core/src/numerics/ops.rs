//! Scalar numeric building blocks: cosine similarity, stabilized softmax
//! cross-entropy, and a central-difference gradient oracle for tests.

use thiserror::Error;

/// Norms below this are treated as degenerate for cosine similarity.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("degenerate vector: norm {norm:e} below {MIN_NORM:e}")]
    DegenerateVector { norm: f64 },
    #[error("non-finite values in cosine similarity")]
    NonFiniteVector,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("target index {index} out of range for {classes} classes")]
    TargetOutOfRange { index: usize, classes: usize },
    #[error("non-finite gradient: training diverged")]
    NonFiniteGradient,
    #[error("schedule exhausted: step {step} beyond total {total}")]
    ScheduleExhausted { step: u64, total: u64 },
    #[error("probe step {h:e} outside [1e-7, 1e-3]")]
    ProbeStepOutOfRange { h: f64 },
    #[error("oracle failure: non-finite loss at coordinate {coordinate}")]
    OracleFailure { coordinate: usize },
}

/// Cosine similarity of two equal-length vectors, clamped into [-1, 1] to
/// absorb the last-bit rounding that can push |sim| just past 1.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, NumericsError> {
    if u.len() != v.len() {
        return Err(NumericsError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    let nu = nu.sqrt();
    let nv = nv.sqrt();
    // Overflowed or NaN inputs must surface as an error, not as a NaN that
    // poisons a later comparison.
    if !dot.is_finite() || !nu.is_finite() || !nv.is_finite() {
        return Err(NumericsError::NonFiniteVector);
    }
    if nu < MIN_NORM {
        return Err(NumericsError::DegenerateVector { norm: nu });
    }
    if nv < MIN_NORM {
        return Err(NumericsError::DegenerateVector { norm: nv });
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Stabilized softmax cross-entropy.
///
/// Returns `(loss, dlogits)` where `dlogits = softmax(logits) - onehot(target)`,
/// i.e. the exact analytic gradient of the loss w.r.t. the logits. The max is
/// subtracted before exponentiation so logits of magnitude up to ~1e3 stay
/// finite.
pub fn softmax_cross_entropy(
    logits: &[f64],
    target: usize,
) -> Result<(f64, Vec<f64>), NumericsError> {
    if target >= logits.len() {
        return Err(NumericsError::TargetOutOfRange {
            index: target,
            classes: logits.len(),
        });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    let mut probs = Vec::with_capacity(logits.len());
    for &z in logits {
        let e = (z - max).exp();
        probs.push(e);
        denom += e;
    }
    // loss = log(sum exp(z - max)) - (z_t - max)
    let loss = denom.ln() - (logits[target] - max);
    for (i, p) in probs.iter_mut().enumerate() {
        *p /= denom;
        if i == target {
            *p -= 1.0;
        }
    }
    Ok((loss, probs))
}

/// Central-difference gradient oracle: `df/dx_i ~ (f(x+h e_i) - f(x-h e_i)) / 2h`.
///
/// Used by tests as the independent reference every analytic gradient in the
/// crate is checked against. Deliberately derivative-free so it cannot share a
/// bug with the code under test.
pub fn finite_difference_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(NumericsError::ProbeStepOutOfRange { h });
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(NumericsError::OracleFailure { coordinate: i });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Largest relative gap between two gradient vectors:
/// `max_i |a_i - b_i| / max(1, |a_i|, |b_i|)`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / 1.0_f64.max(x.abs()).max(y.abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_identical_is_one() {
        assert_eq!(cosine_similarity(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 1.0);
    }

    #[test]
    fn cosine_orthogonal_is_zero() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_basis_pair() {
        let got = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((got - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cosine_zero_vector_errors() {
        let err = cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, NumericsError::DegenerateVector { .. }));
    }

    #[test]
    fn cosine_scale_invariant() {
        let u = [0.3, -1.2, 0.7];
        let v = [2.0, 0.1, -0.4];
        let base = cosine_similarity(&u, &v).unwrap();
        for c in [1e-6, 0.5, 3.0, 1e6] {
            let scaled: Vec<f64> = u.iter().map(|x| c * x).collect();
            let got = cosine_similarity(&scaled, &v).unwrap();
            assert!((got - base).abs() < 1e-12, "c={c}: {got} vs {base}");
        }
    }

    #[test]
    fn uniform_logits_loss_is_ln_v() {
        let (loss, _) = softmax_cross_entropy(&[0.0; 4], 2).unwrap();
        assert!((loss - 4.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn saturated_target_loss_near_zero() {
        let mut logits = vec![0.0; 8];
        logits[3] = 40.0;
        let (loss, _) = softmax_cross_entropy(&logits, 3).unwrap();
        assert!(loss < 1e-9, "loss={loss}");
    }

    #[test]
    fn huge_logits_stay_finite() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 999.0, -1000.0], 1).unwrap();
        assert!(loss.is_finite());
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn target_out_of_range_errors() {
        assert!(matches!(
            softmax_cross_entropy(&[0.0, 0.0], 2),
            Err(NumericsError::TargetOutOfRange { .. })
        ));
    }

    #[test]
    fn ce_gradient_matches_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let n = rng.gen_range(2..8);
            let target = rng.gen_range(0..n);
            let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (_, analytic) = softmax_cross_entropy(&logits, target).unwrap();
            let numeric = finite_difference_grad(
                |z| softmax_cross_entropy(z, target).unwrap().0,
                &logits,
                1e-5,
            )
            .unwrap();
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-7, "trial {trial}: rel err {err}");
        }
    }

    #[test]
    fn oracle_exact_on_quadratic() {
        // f(x) = sum x_i^2 has gradient 2x; central differences are exact for
        // quadratics up to rounding.
        let x = [1.0, -2.0, 0.5];
        let grad = finite_difference_grad(|p| p.iter().map(|v| v * v).sum(), &x, 1e-4).unwrap();
        for (g, xi) in grad.iter().zip(&x) {
            assert!((g - 2.0 * xi).abs() < 1e-8);
        }
    }

    #[test]
    fn oracle_zero_on_constant() {
        let grad = finite_difference_grad(|_| 42.0, &[1.0, 2.0], 1e-5).unwrap();
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn oracle_rejects_bad_step() {
        assert!(matches!(
            finite_difference_grad(|_| 0.0, &[1.0], 1e-9),
            Err(NumericsError::ProbeStepOutOfRange { .. })
        ));
    }

    #[test]
    fn oracle_reports_non_finite() {
        assert!(matches!(
            finite_difference_grad(|p| (p[0] - 1.0).ln(), &[1.0], 1e-5),
            Err(NumericsError::OracleFailure { .. })
        ));
    }
}
