//! Leading modified-equation coefficients of the FTCS scheme and the
//! anti-diffusion predictor for temporal oscillations.
//!
//! The scheme's modified equation reads
//!
//! ```text
//! p_t - (k p_x)_x = (A + B) p_x^2 p_xx + C p_xx^2 + D p_xxx p_x + (E + F) p_x^4 + G p_xxxx
//! ```
//!
//! Harmonic averaging changes only `B` and `F`, by `dB_H` and `dF_H`.

use serde::Serialize;

use crate::coefficients::{CoefficientModel, KDerivatives};
use crate::error::{GpmeError, Result};
use crate::flux::AveragingRule;
use crate::grid::Field;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModEqCoefficients {
    pub averaging: AveragingRule,
    pub a: f64,
    /// `B` for the requested rule (`B + dB_H` for harmonic).
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    /// `F` for the requested rule (`F + dF_H` for harmonic).
    pub f: f64,
    pub g: f64,
    pub delta_b_h: f64,
    pub delta_f_h: f64,
}

/// `A = -(7 dt / 2)(k_p^2 + k k_pp)`.
#[inline]
pub fn coefficient_a(d: &KDerivatives, dt: f64) -> f64 {
    -3.5 * dt * (d.k_p * d.k_p + d.k * d.k_pp)
}

/// `(dB_H, dF_H)`; needs `k > 0`.
pub fn harmonic_deltas(d: &KDerivatives, dx: f64) -> Result<(f64, f64)> {
    if !(d.k > 0.0) {
        return Err(GpmeError::Domain(format!(
            "harmonic corrections need k > 0, got k = {}",
            d.k
        )));
    }
    let dx2 = dx * dx;
    let inv_k = 1.0 / d.k;
    let delta_b = -0.75 * dx2 * d.k_p * d.k_p * inv_k;
    let delta_f =
        -0.25 * dx2 * (2.0 * d.k_p * d.k_pp * inv_k - d.k_p * d.k_p * d.k_p * inv_k * inv_k);
    Ok((delta_b, delta_f))
}

/// `(B^H, F^H)`, the coefficients the MHM counteracts. Independent of `dt`.
pub fn harmonic_bf(d: &KDerivatives, dx: f64) -> Result<(f64, f64)> {
    let (db, df) = harmonic_deltas(d, dx)?;
    let dx2 = dx * dx;
    Ok((0.75 * dx2 * d.k_pp + db, dx2 / 6.0 * d.k_ppp + df))
}

/// Modified-equation coefficients at state `p` for step sizes `dt`, `dx`.
pub fn coefficients(
    model: &CoefficientModel,
    p: f64,
    dt: f64,
    dx: f64,
    averaging: AveragingRule,
) -> Result<ModEqCoefficients> {
    if !(p > 0.0) {
        return Err(GpmeError::Domain(format!(
            "modified equation needs p > 0, got {p}"
        )));
    }
    let kd = model.derivatives(p)?;
    let (k, k_p, k_pp, k_ppp) = (kd.k, kd.k_p, kd.k_pp, kd.k_ppp);
    let dx2 = dx * dx;
    let (delta_b_h, delta_f_h) = harmonic_deltas(&kd, dx)?;
    let b = 0.75 * dx2 * k_pp;
    let f = dx2 / 6.0 * k_ppp;
    let (b, f) = match averaging {
        AveragingRule::Arithmetic => (b, f),
        AveragingRule::Harmonic => (b + delta_b_h, f + delta_f_h),
    };
    Ok(ModEqCoefficients {
        averaging,
        a: coefficient_a(&kd, dt),
        b,
        c: k_p * (-2.0 * k * dt + dx2 / 4.0),
        d: k_p * (-3.0 * k * dt + dx2 / 3.0),
        e: -0.5 * dt * (3.0 * k_p * k_pp + k * k_ppp),
        f,
        g: k * (-k * dt / 2.0 + dx2 / 12.0),
        delta_b_h,
        delta_f_h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorReport {
    pub min_effective_diffusion: f64,
    /// Interior node indices where `k + (A + B^H) (D-p)^2 < 0`.
    pub violating_nodes: Vec<usize>,
}

/// Effective `p_xx` coefficient `k + (A + B^H) (D-p)^2` of the harmonic scheme
/// at every interior node. A negative value flags anti-diffusion.
pub fn oscillation_predictor(
    field: &Field,
    model: &CoefficientModel,
    dt: f64,
    dx: f64,
) -> Result<PredictorReport> {
    let p = &field.values;
    if p.len() < 3 {
        return Err(GpmeError::Argument(
            "predictor needs at least one interior node".into(),
        ));
    }
    let mut min_effective_diffusion = f64::INFINITY;
    let mut violating_nodes = Vec::new();
    for i in 1..p.len() - 1 {
        let kd = model.derivatives(p[i])?;
        let (b_h, _) = harmonic_bf(&kd, dx)?;
        let back = (p[i] - p[i - 1]) / dx;
        let eff = kd.k + (coefficient_a(&kd, dt) + b_h) * back * back;
        if eff < 0.0 {
            violating_nodes.push(i);
        }
        min_effective_diffusion = min_effective_diffusion.min(eff);
    }
    Ok(PredictorReport {
        min_effective_diffusion,
        violating_nodes,
    })
}
