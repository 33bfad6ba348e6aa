//! Training losses: MSE, L1, Huber, and Tukey's biweight.
//!
//! Tukey's biweight saturates at c^2/6 per sample and its influence vanishes
//! beyond the threshold, so large-residual samples stop driving updates.
//! Residuals are optionally scaled by 1.4826 * MAD per batch so the threshold
//! is scale-free; the scale is treated as a constant when differentiating
//! (the usual IRLS treatment).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// 95%-efficiency threshold for Tukey's biweight under Gaussian noise.
pub const TUKEY_C_DEFAULT: f64 = 4.685;
/// Consistency factor making MAD estimate the standard deviation.
pub const MAD_CONSISTENCY: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    L1,
    Huber,
    Tukey,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::L1 => "l1",
            LossKind::Huber => "huber",
            LossKind::Tukey => "tukey",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub tukey_c: f64,
    pub huber_delta: f64,
    /// Scale Tukey residuals by 1.4826 * MAD of the batch. Ignored by the
    /// other kinds.
    pub mad_scaling: bool,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            tukey_c: TUKEY_C_DEFAULT,
            huber_delta: 1.0,
            mad_scaling: true,
        }
    }

    pub fn mse() -> Self {
        Self::new(LossKind::Mse)
    }

    pub fn l1() -> Self {
        Self::new(LossKind::L1)
    }

    pub fn huber(delta: f64) -> Self {
        Self {
            huber_delta: delta,
            ..Self::new(LossKind::Huber)
        }
    }

    pub fn tukey(c: f64, mad_scaling: bool) -> Self {
        Self {
            tukey_c: c,
            mad_scaling,
            ..Self::new(LossKind::Tukey)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.tukey_c <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tukey_c must be positive, got {}",
                self.tukey_c
            )));
        }
        if self.huber_delta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "huber_delta must be positive, got {}",
                self.huber_delta
            )));
        }
        Ok(())
    }
}

/// Tukey's biweight: (c^2/6) * (1 - (1 - (r/c)^2)^3) for |r| <= c, else c^2/6.
pub fn tukey_rho(r: f64, c: f64) -> f64 {
    let sat = c * c / 6.0;
    if r.abs() > c {
        sat
    } else {
        let t = 1.0 - (r / c).powi(2);
        sat * (1.0 - t * t * t)
    }
}

/// Influence function of Tukey's biweight: r*(1 - (r/c)^2)^2 inside the
/// threshold, exactly 0 outside.
pub fn tukey_psi(r: f64, c: f64) -> f64 {
    if r.abs() > c {
        0.0
    } else {
        let t = 1.0 - (r / c).powi(2);
        r * t * t
    }
}

fn check_batch(preds: &[f64], targets: &[f64]) -> Result<()> {
    if preds.is_empty() || targets.is_empty() {
        return Err(Error::InvalidArgument("empty prediction/target vectors".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::shape(
            "loss",
            format!("{} predictions vs {} targets", preds.len(), targets.len()),
        ));
    }
    if preds.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss inputs".into()));
    }
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-batch residual scale: 1.4826 * median(|e - median(e)|). Returns 1.0
/// when MAD scaling is off or the batch is degenerate (MAD == 0).
pub fn residual_scale(spec: &LossSpec, residuals: &[f64]) -> f64 {
    if spec.kind != LossKind::Tukey || !spec.mad_scaling {
        return 1.0;
    }
    let mut e = residuals.to_vec();
    let med = median(&mut e);
    let mut dev: Vec<f64> = residuals.iter().map(|r| (r - med).abs()).collect();
    let mad = median(&mut dev);
    if mad == 0.0 {
        1.0
    } else {
        MAD_CONSISTENCY * mad
    }
}

/// Mean loss over the batch.
pub fn loss_value(spec: &LossSpec, preds: &[f64], targets: &[f64]) -> Result<f64> {
    spec.validate()?;
    check_batch(preds, targets)?;
    let residuals: Vec<f64> = preds.iter().zip(targets).map(|(p, t)| p - t).collect();
    let n = residuals.len() as f64;
    let total = match spec.kind {
        LossKind::Mse => residuals.iter().map(|e| e * e).sum::<f64>(),
        LossKind::L1 => residuals.iter().map(|e| e.abs()).sum::<f64>(),
        LossKind::Huber => {
            let d = spec.huber_delta;
            residuals
                .iter()
                .map(|e| {
                    if e.abs() <= d {
                        0.5 * e * e
                    } else {
                        d * (e.abs() - 0.5 * d)
                    }
                })
                .sum::<f64>()
        }
        LossKind::Tukey => {
            let s = residual_scale(spec, &residuals);
            residuals.iter().map(|e| tukey_rho(e / s, spec.tukey_c)).sum::<f64>()
        }
    };
    Ok(total / n)
}

/// d(mean loss)/d(prediction_i). The L1 subgradient at zero residual is 0;
/// the Tukey MAD scale is held constant.
pub fn loss_gradient(spec: &LossSpec, preds: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    check_batch(preds, targets)?;
    let residuals: Vec<f64> = preds.iter().zip(targets).map(|(p, t)| p - t).collect();
    let n = residuals.len() as f64;
    let grad = match spec.kind {
        LossKind::Mse => residuals.iter().map(|e| 2.0 * e / n).collect(),
        LossKind::L1 => residuals
            .iter()
            .map(|e| {
                if *e == 0.0 {
                    0.0
                } else {
                    e.signum() / n
                }
            })
            .collect(),
        LossKind::Huber => {
            let d = spec.huber_delta;
            residuals
                .iter()
                .map(|e| {
                    if e.abs() <= d {
                        e / n
                    } else {
                        d * e.signum() / n
                    }
                })
                .collect()
        }
        LossKind::Tukey => {
            let s = residual_scale(spec, &residuals);
            residuals
                .iter()
                .map(|e| tukey_psi(e / s, spec.tukey_c) / (s * n))
                .collect()
        }
    };
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL_KINDS: [LossKind; 4] = [LossKind::Mse, LossKind::L1, LossKind::Huber, LossKind::Tukey];

    #[test]
    fn zero_residuals_give_zero_loss_and_gradient() {
        let p = vec![1.0, -2.0, 0.5];
        for kind in ALL_KINDS {
            let spec = LossSpec::new(kind);
            assert_eq!(loss_value(&spec, &p, &p).unwrap(), 0.0);
            assert!(loss_gradient(&spec, &p, &p).unwrap().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn tukey_saturates_exactly_beyond_threshold() {
        let spec = LossSpec::tukey(TUKEY_C_DEFAULT, false);
        let sat = TUKEY_C_DEFAULT * TUKEY_C_DEFAULT / 6.0;
        for r in [4.685, 5.0, 100.0, -7.3] {
            assert_eq!(loss_value(&spec, &[r], &[0.0]).unwrap(), sat);
            assert_eq!(loss_gradient(&spec, &[r + 0.1 * r.signum()], &[0.0]).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn tukey_closed_form_at_r2() {
        // rho(2.0) with c = 4.685, evaluated from the closed form.
        let spec = LossSpec::tukey(TUKEY_C_DEFAULT, false);
        let v = loss_value(&spec, &[2.0], &[0.0]).unwrap();
        assert!((v - 1.6576630874988754).abs() < 1e-12, "got {v}");
        let g = loss_gradient(&spec, &[2.0], &[0.0]).unwrap()[0];
        assert!((g - 1.3374668237772656).abs() < 1e-12, "got {g}");
    }

    #[test]
    fn mad_scaling_makes_threshold_scale_free() {
        // Residuals 100x larger, same shape: the scaled loss is identical.
        let spec = LossSpec::tukey(TUKEY_C_DEFAULT, true);
        let t = vec![0.0; 5];
        let p1 = vec![0.1, -0.2, 0.05, 0.3, -0.15];
        let p2: Vec<f64> = p1.iter().map(|v| v * 100.0).collect();
        let a = loss_value(&spec, &p1, &t).unwrap();
        let b = loss_value(&spec, &p2, &t).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn mad_zero_falls_back_to_unscaled() {
        // All residuals equal: MAD = 0, so residuals pass through unscaled
        // and the loss is nonzero (saturated here).
        let spec = LossSpec::tukey(TUKEY_C_DEFAULT, true);
        let v = loss_value(&spec, &[5.0, 5.0, 5.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, TUKEY_C_DEFAULT * TUKEY_C_DEFAULT / 6.0);
    }

    #[test]
    fn huber_is_quadratic_then_linear() {
        let spec = LossSpec::huber(1.0);
        // |e| <= delta: 0.5 e^2
        assert!((loss_value(&spec, &[0.5], &[0.0]).unwrap() - 0.125).abs() < 1e-15);
        // |e| > delta: delta(|e| - delta/2)
        assert!((loss_value(&spec, &[3.0], &[0.0]).unwrap() - 2.5).abs() < 1e-15);
        assert!((loss_gradient(&spec, &[3.0], &[0.0]).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let spec = LossSpec::mse();
        assert!(loss_value(&spec, &[], &[]).is_err());
        assert!(loss_gradient(&spec, &[], &[]).is_err());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let spec = LossSpec::mse();
        assert!(loss_value(&spec, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn invalid_constants_rejected() {
        let mut spec = LossSpec::tukey(0.0, false);
        assert!(loss_value(&spec, &[1.0], &[0.0]).is_err());
        spec = LossSpec::huber(-1.0);
        assert!(loss_value(&spec, &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let preds = vec![0.3, -1.2, 2.4, 0.9, -0.4];
        let targets = vec![0.1, 0.3, 2.0, -1.5, -0.4];
        let h = 1e-6;
        for kind in ALL_KINDS {
            let mut spec = LossSpec::new(kind);
            spec.mad_scaling = false; // scale is constant by definition then
            let grad = loss_gradient(&spec, &preds, &targets).unwrap();
            for i in 0..preds.len() {
                if kind == LossKind::L1 && (preds[i] - targets[i]).abs() < 1e-3 {
                    continue; // kink at the origin
                }
                let mut hi = preds.clone();
                let mut lo = preds.clone();
                hi[i] += h;
                lo[i] -= h;
                let num = (loss_value(&spec, &hi, &targets).unwrap()
                    - loss_value(&spec, &lo, &targets).unwrap())
                    / (2.0 * h);
                let denom = grad[i].abs().max(num.abs()).max(1.0);
                assert!(
                    (grad[i] - num).abs() / denom < 1e-6,
                    "{kind:?} grad[{i}] {} vs fd {num}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn tukey_mad_gradient_matches_frozen_scale_finite_difference() {
        // The analytic gradient treats the MAD scale as a constant, so the
        // oracle differentiates the loss with the scale frozen at its
        // unperturbed value.
        let preds = vec![0.5, -0.8, 1.9, 0.2, -2.6, 0.05];
        let targets = vec![0.0, 0.1, 1.0, -0.3, 0.4, 0.0];
        let spec = LossSpec::tukey(TUKEY_C_DEFAULT, true);
        let residuals: Vec<f64> = preds.iter().zip(&targets).map(|(p, t)| p - t).collect();
        let s = residual_scale(&spec, &residuals);
        let frozen = LossSpec::tukey(TUKEY_C_DEFAULT, false);
        let scaled = |p: &[f64]| {
            let ps: Vec<f64> = p.iter().map(|v| v / s).collect();
            let ts: Vec<f64> = targets.iter().map(|v| v / s).collect();
            loss_value(&frozen, &ps, &ts).unwrap()
        };
        let grad = loss_gradient(&spec, &preds, &targets).unwrap();
        let h = 1e-6;
        for i in 0..preds.len() {
            let mut hi = preds.clone();
            let mut lo = preds.clone();
            hi[i] += h;
            lo[i] -= h;
            let num = (scaled(&hi) - scaled(&lo)) / (2.0 * h);
            let denom = grad[i].abs().max(num.abs()).max(1.0);
            assert!((grad[i] - num).abs() / denom < 1e-6);
        }
    }
}
