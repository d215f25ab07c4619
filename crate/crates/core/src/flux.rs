//! Two-point face averages, face fluxes, the conservative FTCS spatial operator
//! and the modified-harmonic (MHM) correction.
//!
//! With `u_{i+1/2} = -(p_{i+1} - p_i) / dx` and `F_{i+1/2} = k_{i+1/2} u_{i+1/2}`
//! the operator at an interior node is `L_i = (F_{i-1/2} - F_{i+1/2}) / dx`.
//! The MHM adds `-B^H (D-p)^2 (D+D-p) - F^H (D-p)^4` at every interior node,
//! with `B^H`, `F^H` evaluated at `p_i` and `D-` the backward difference.

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::error::{GpmeError, Result};
use crate::grid::{Field, ProblemSetup};
use crate::modeq;

/// Admissible face coefficients: finite and non-negative (NaN is outside).
const ADMISSIBLE_K: std::ops::Range<f64> = 0.0..f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingRule {
    Arithmetic,
    Harmonic,
}

/// Which of the two MHM counter-terms are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MhmMode {
    #[default]
    Full,
    /// Only `-B^H (D-p)^2 (D+D-p)`.
    TermIOnly,
    /// Only `-F^H (D-p)^4`.
    TermIIOnly,
}

/// Where the MHM correction is switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MhmSwitch {
    /// Every interior node.
    #[default]
    Global,
    /// Only nodes where the anti-diffusion predictor is negative.
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialOperatorConfig {
    pub averaging: AveragingRule,
    pub mhm_enabled: bool,
    #[serde(default)]
    pub mhm_mode: MhmMode,
    #[serde(default)]
    pub mhm_switch: MhmSwitch,
}

impl SpatialOperatorConfig {
    pub fn arithmetic() -> Self {
        Self::plain(AveragingRule::Arithmetic)
    }

    pub fn harmonic() -> Self {
        Self::plain(AveragingRule::Harmonic)
    }

    /// Harmonic base scheme with the full, global MHM correction.
    pub fn mhm() -> Self {
        Self::mhm_with(MhmMode::Full)
    }

    pub fn mhm_with(mode: MhmMode) -> Self {
        SpatialOperatorConfig {
            averaging: AveragingRule::Harmonic,
            mhm_enabled: true,
            mhm_mode: mode,
            mhm_switch: MhmSwitch::Global,
        }
    }

    fn plain(averaging: AveragingRule) -> Self {
        SpatialOperatorConfig {
            averaging,
            mhm_enabled: false,
            mhm_mode: MhmMode::Full,
            mhm_switch: MhmSwitch::Global,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mhm_enabled && self.averaging != AveragingRule::Harmonic {
            return Err(GpmeError::Config(
                "the MHM correction is defined on top of harmonic averaging".into(),
            ));
        }
        Ok(())
    }

    /// Short label: `arithmetic`, `harmonic`, `mhm`, `mhm-term1`, ...
    pub fn label(&self) -> String {
        match (self.averaging, self.mhm_enabled) {
            (AveragingRule::Arithmetic, _) => "arithmetic".into(),
            (AveragingRule::Harmonic, false) => "harmonic".into(),
            (AveragingRule::Harmonic, true) => {
                let mut s = String::from("mhm");
                match self.mhm_mode {
                    MhmMode::Full => {}
                    MhmMode::TermIOnly => s.push_str("-term1"),
                    MhmMode::TermIIOnly => s.push_str("-term2"),
                }
                if self.mhm_switch == MhmSwitch::Local {
                    s.push_str("-local");
                }
                s
            }
        }
    }
}

/// Two-point average of nonnegative neighbouring coefficients.
pub fn face_average(rule: AveragingRule, k_left: f64, k_right: f64) -> Result<f64> {
    if !(k_left >= 0.0 && k_right >= 0.0) {
        return Err(GpmeError::Domain(format!(
            "face average needs nonnegative coefficients, got {k_left}, {k_right}"
        )));
    }
    Ok(average_unchecked(rule, k_left, k_right))
}

#[inline]
fn average_unchecked(rule: AveragingRule, a: f64, b: f64) -> f64 {
    match rule {
        AveragingRule::Arithmetic => 0.5 * (a + b),
        AveragingRule::Harmonic => {
            let s = a + b;
            if s == 0.0 {
                0.0
            } else {
                2.0 * a * b / s
            }
        }
    }
}

/// `u_{i+1/2} = -(p_right - p_left) / dx` (not the Darcy sign convention).
#[inline]
pub fn face_velocity(p_left: f64, p_right: f64, dx: f64) -> f64 {
    -(p_right - p_left) / dx
}

/// Fluxes `F_{j+1/2}` on all `n` faces; face `j` sits between nodes `j` and `j + 1`.
pub fn face_fluxes(
    values: &[f64],
    dx: f64,
    model: &CoefficientModel,
    averaging: AveragingRule,
) -> Result<Vec<f64>> {
    let mut k = Vec::new();
    let mut flux = Vec::new();
    compute_fluxes(values, dx, model, averaging, &mut k, &mut flux)?;
    Ok(flux)
}

fn compute_fluxes(
    values: &[f64],
    dx: f64,
    model: &CoefficientModel,
    averaging: AveragingRule,
    k: &mut Vec<f64>,
    flux: &mut Vec<f64>,
) -> Result<()> {
    fill_coefficients(values, model, k)?;
    fluxes_from_coefficients(values, k, dx, averaging, flux);
    Ok(())
}

/// `k(p_i)` at every node; NaN, infinite or negative values are numerical failures.
pub(crate) fn fill_coefficients(
    values: &[f64],
    model: &CoefficientModel,
    k: &mut Vec<f64>,
) -> Result<()> {
    k.clear();
    // dispatch once per sweep so the per-node loop stays branch-free
    match *model {
        CoefficientModel::Linear => k.extend_from_slice(values),
        CoefficientModel::Pme { m: 1.0 } => k.extend_from_slice(values),
        CoefficientModel::Pme { m: 2.0 } => k.extend(values.iter().map(|&p| p * p)),
        CoefficientModel::Pme { m: 3.0 } => k.extend(values.iter().map(|&p| p * p * p)),
        _ => k.extend(values.iter().map(|&p| model.k(p))),
    }
    // branch-free scan; locate the offending node only on failure
    let admissible = k.iter().fold(true, |ok, &v| ok & ADMISSIBLE_K.contains(&v));
    if !admissible {
        let i = k
            .iter()
            .position(|v| !ADMISSIBLE_K.contains(v))
            .unwrap_or(0);
        return Err(GpmeError::numerical(
            Some(i),
            format!("inadmissible coefficient k({}) = {}", values[i], k[i]),
        ));
    }
    Ok(())
}

/// Largest entry of a validated coefficient vector.
pub(crate) fn max_coefficient(k: &[f64]) -> f64 {
    k.iter().copied().fold(0.0, f64::max)
}

pub(crate) fn fluxes_from_coefficients(
    values: &[f64],
    k: &[f64],
    dx: f64,
    averaging: AveragingRule,
    flux: &mut Vec<f64>,
) {
    flux.clear();
    for j in 0..values.len() - 1 {
        let kf = average_unchecked(averaging, k[j], k[j + 1]);
        flux.push(kf * face_velocity(values[j], values[j + 1], dx));
    }
}

/// MHM counter-terms at one interior node from its two neighbours.
pub fn mhm_correction(
    p_prev: f64,
    p_i: f64,
    p_next: f64,
    dx: f64,
    model: &CoefficientModel,
    mode: MhmMode,
) -> Result<f64> {
    let d = model.derivatives(p_i)?;
    let (b_h, f_h) = modeq::harmonic_bf(&d, dx)?;
    Ok(mhm_terms(b_h, f_h, p_prev, p_i, p_next, dx, mode))
}

#[inline]
fn mhm_terms(
    b_h: f64,
    f_h: f64,
    p_prev: f64,
    p_i: f64,
    p_next: f64,
    dx: f64,
    mode: MhmMode,
) -> f64 {
    let back = (p_i - p_prev) / dx;
    let back2 = back * back;
    let second = (p_next - 2.0 * p_i + p_prev) / (dx * dx);
    let term_i = -b_h * back2 * second;
    let term_ii = -f_h * back2 * back2;
    match mode {
        MhmMode::Full => term_i + term_ii,
        MhmMode::TermIOnly => term_i,
        MhmMode::TermIIOnly => term_ii,
    }
}

/// Reusable buffers for repeated operator evaluations.
#[derive(Debug, Default, Clone)]
pub struct OperatorWorkspace {
    pub(crate) k: Vec<f64>,
    flux: Vec<f64>,
}

/// Semi-discrete right-hand side `L(p)`; boundary slots are zero.
///
/// `dt` only matters for [`MhmSwitch::Local`], whose predictor depends on the step size.
pub fn spatial_operator(
    field: &Field,
    setup: &ProblemSetup,
    cfg: &SpatialOperatorConfig,
    dt: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; field.len()];
    apply_operator(
        &field.values,
        setup,
        cfg,
        dt,
        &mut OperatorWorkspace::default(),
        &mut out,
    )?;
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(GpmeError::numerical(Some(i), "non-finite spatial operator"));
    }
    Ok(out)
}

pub(crate) fn apply_operator(
    values: &[f64],
    setup: &ProblemSetup,
    cfg: &SpatialOperatorConfig,
    dt: f64,
    ws: &mut OperatorWorkspace,
    out: &mut [f64],
) -> Result<()> {
    let n_nodes = values.len();
    if n_nodes != setup.grid.num_nodes() || out.len() != n_nodes {
        return Err(GpmeError::Argument(format!(
            "field has {} values, grid has {} nodes",
            n_nodes,
            setup.grid.num_nodes()
        )));
    }
    let dx = setup.grid.dx();
    compute_fluxes(
        values,
        dx,
        &setup.model,
        cfg.averaging,
        &mut ws.k,
        &mut ws.flux,
    )?;
    out[0] = 0.0;
    out[n_nodes - 1] = 0.0;
    let inv_dx = 1.0 / dx;
    for i in 1..n_nodes - 1 {
        out[i] = (ws.flux[i - 1] - ws.flux[i]) * inv_dx;
    }
    if cfg.mhm_enabled {
        for i in 1..n_nodes - 1 {
            let d = setup
                .model
                .derivatives(values[i])
                .map_err(|e| GpmeError::numerical(Some(i), e.to_string()))?;
            let (b_h, f_h) = modeq::harmonic_bf(&d, dx)
                .map_err(|e| GpmeError::numerical(Some(i), e.to_string()))?;
            if cfg.mhm_switch == MhmSwitch::Local {
                let back = (values[i] - values[i - 1]) / dx;
                let a = modeq::coefficient_a(&d, dt);
                if d.k + (a + b_h) * back * back >= 0.0 {
                    continue;
                }
            }
            out[i] += mhm_terms(
                b_h,
                f_h,
                values[i - 1],
                values[i],
                values[i + 1],
                dx,
                cfg.mhm_mode,
            );
        }
    }
    Ok(())
}

/// Face-average error against the exact midpoint value, with its leading-order prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationCheck {
    pub measured: f64,
    pub predicted: f64,
}

/// Compare the face average of a smooth profile with its leading truncation term.
///
/// `profile(x)` returns `(k, k_x, k_xx)`.
pub fn truncation_leading<F>(
    rule: AveragingRule,
    profile: F,
    x_face: f64,
    dx: f64,
) -> Result<TruncationCheck>
where
    F: Fn(f64) -> (f64, f64, f64),
{
    let (k_left, _, _) = profile(x_face - 0.5 * dx);
    let (k_right, _, _) = profile(x_face + 0.5 * dx);
    let (k, k_x, k_xx) = profile(x_face);
    let measured = face_average(rule, k_left, k_right)? - k;
    let arithmetic_term = dx * dx / 8.0 * k_xx;
    let predicted = match rule {
        AveragingRule::Arithmetic => arithmetic_term,
        AveragingRule::Harmonic => {
            if !(k > 0.0) {
                return Err(GpmeError::Domain("harmonic truncation needs k > 0".into()));
            }
            arithmetic_term - dx * dx / 4.0 * k_x * k_x / k
        }
    };
    Ok(TruncationCheck {
        measured,
        predicted,
    })
}
