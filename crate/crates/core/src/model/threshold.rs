//! Folding of batch normalization + sign binarization into an integer
//! comparison on the popcount.

use super::{BatchNormParams, ModelError, Sign};

/// Real-valued binarization of the batch-normalized popcount.
///
/// This is the reference predicate every folded threshold must agree with.
pub fn bn_binarize(p: &BatchNormParams, phi: i64) -> bool {
    p.gamma * (phi as f64 + p.bias - p.mu) / p.sigma + p.beta >= 0.0
}

/// Folds `p` into `(thresh, sign)` such that, for every integer popcount
/// `phi` in `0..=n_rf`, the folded comparison equals [`bn_binarize`].
///
/// The closed form `x = mu - b - beta * sigma / gamma` is used as a starting
/// point; the result is then nudged against the predicate itself so that
/// rounding at integer boundaries cannot flip a decision. Thresholds that
/// fall outside the popcount range collapse to `Const0`/`Const1`.
pub fn derive_threshold(p: &BatchNormParams, n_rf: usize) -> Result<(i64, Sign), ModelError> {
    if !(p.sigma > 0.0) {
        return Err(ModelError::Sigma {
            path: String::new(),
            sigma: p.sigma,
        });
    }
    if n_rf == 0 {
        return Err(ModelError::Schema {
            path: String::new(),
            msg: "receptive field must be non-empty".into(),
        });
    }
    let n = n_rf as i64;
    let pred = |phi: i64| bn_binarize(p, phi);

    if p.gamma == 0.0 {
        let sign = if p.beta >= 0.0 { Sign::Const1 } else { Sign::Const0 };
        return Ok((0, sign));
    }

    let x = p.mu - p.bias - p.beta * p.sigma / p.gamma;
    let clamp = |v: f64| -> i64 {
        if v.is_nan() {
            0
        } else {
            v.max(-1.0).min(n as f64 + 1.0) as i64
        }
    };

    if p.gamma > 0.0 {
        // predicate is non-decreasing in phi: find the smallest phi that passes
        let mut t = clamp(x.ceil());
        while t > 0 && pred(t - 1) {
            t -= 1;
        }
        while t <= n && !pred(t) {
            t += 1;
        }
        Ok(canonical(t, Sign::Geq, n_rf))
    } else {
        // non-increasing: find the largest phi that passes
        let mut t = clamp(x.floor());
        while t < n && pred(t + 1) {
            t += 1;
        }
        while t >= 0 && !pred(t) {
            t -= 1;
        }
        Ok(canonical(t, Sign::Leq, n_rf))
    }
}

/// Collapses comparisons that are constant over `0..=n_rf`.
pub fn canonical(thresh: i64, sign: Sign, n_rf: usize) -> (i64, Sign) {
    let n = n_rf as i64;
    match sign {
        Sign::Geq if thresh <= 0 => (0, Sign::Const1),
        Sign::Geq if thresh > n => (0, Sign::Const0),
        Sign::Leq if thresh >= n => (0, Sign::Const1),
        Sign::Leq if thresh < 0 => (0, Sign::Const0),
        Sign::Const0 | Sign::Const1 => (0, sign),
        _ => (thresh, sign),
    }
}
