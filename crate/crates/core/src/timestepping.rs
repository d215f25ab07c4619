//! Forward Euler, Backward Euler (Picard with lagged coefficients) and TVD RK2
//! integrators over the finite-volume spatial operator.

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::error::{GpmeError, Result};
use crate::flux::{
    apply_operator, fill_coefficients, max_coefficient, AveragingRule, OperatorWorkspace,
    SpatialOperatorConfig,
};
use crate::grid::{apply_bc_values, Field, ProblemSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    ForwardEuler,
    BackwardEuler,
    TvdRk2,
}

impl TimeScheme {
    pub fn is_explicit(&self) -> bool {
        !matches!(self, TimeScheme::BackwardEuler)
    }

    pub fn label(&self) -> &'static str {
        match self {
            TimeScheme::ForwardEuler => "fe",
            TimeScheme::BackwardEuler => "be",
            TimeScheme::TvdRk2 => "rk2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPower {
    /// `dt = dx^2 / factor`
    DxSquared,
    /// `dt = dx * factor`
    Dx,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtRule {
    pub factor: f64,
    pub power: DtPower,
}

impl DtRule {
    pub fn dx_squared_over(factor: f64) -> Self {
        DtRule {
            factor,
            power: DtPower::DxSquared,
        }
    }

    pub fn dx_times(factor: f64) -> Self {
        DtRule {
            factor,
            power: DtPower::Dx,
        }
    }

    /// Standard explicit factors: `dx^2/4`, `/8`, `/16` for `m = 1, 2, 3`
    /// and `dx^2/2` for superslow diffusion.
    pub fn default_for(model: &CoefficientModel) -> Self {
        let factor = match *model {
            CoefficientModel::Linear => 4.0,
            CoefficientModel::Superslow => 2.0,
            CoefficientModel::Pme { m } if m <= 1.0 => 4.0,
            CoefficientModel::Pme { m } if m <= 2.0 => 8.0,
            CoefficientModel::Pme { .. } => 16.0,
        };
        DtRule::dx_squared_over(factor)
    }

    pub fn dt(&self, dx: f64) -> f64 {
        match self.power {
            DtPower::DxSquared => dx * dx / self.factor,
            DtPower::Dx => dx * self.factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardSettings {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PicardSettings {
    fn default() -> Self {
        PicardSettings {
            max_iters: 200,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub scheme: TimeScheme,
    pub dt_rule: DtRule,
    pub t_end: f64,
    #[serde(default)]
    pub nonlinear_solver: PicardSettings,
}

impl IntegratorConfig {
    pub fn new(scheme: TimeScheme, dt_rule: DtRule, t_end: f64) -> Self {
        IntegratorConfig {
            scheme,
            dt_rule,
            t_end,
            nonlinear_solver: PicardSettings::default(),
        }
    }

    pub fn validate(&self, op: &SpatialOperatorConfig) -> Result<()> {
        op.validate()?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(GpmeError::Config(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if !(self.dt_rule.factor > 0.0 && self.dt_rule.factor.is_finite()) {
            return Err(GpmeError::Config(format!(
                "time-step factor must be positive, got {}",
                self.dt_rule.factor
            )));
        }
        if self.nonlinear_solver.max_iters == 0 || !(self.nonlinear_solver.tol > 0.0) {
            return Err(GpmeError::Config(
                "Picard settings need max_iters > 0 and tol > 0".into(),
            ));
        }
        if op.mhm_enabled && self.scheme == TimeScheme::BackwardEuler {
            return Err(GpmeError::Config(
                "the MHM correction is derived for the explicit scheme and cannot be combined with Backward Euler"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityCheck {
    /// `2 max_i k(p_i) dt / dx^2`
    pub ratio: f64,
    pub ok: bool,
}

/// Largest accepted `2 k_max dt / dx^2`; the slack lets `dt = dx^2 / c` with
/// `k_max = c / 2` pass despite rounding.
pub const STABILITY_LIMIT: f64 = 1.0 + 1e-12;

/// Linear diffusion-number heuristic for explicit steps.
pub fn stability_guard(
    field: &Field,
    model: &CoefficientModel,
    dt: f64,
    dx: f64,
) -> StabilityCheck {
    let k_max = field
        .values
        .iter()
        .map(|&p| model.k(p))
        .fold(0.0_f64, |a, k| if k.is_nan() { f64::NAN } else { a.max(k) });
    let ratio = 2.0 * k_max * dt / (dx * dx);
    StabilityCheck {
        ratio,
        ok: ratio <= STABILITY_LIMIT,
    }
}

/// Iteration history of one implicit step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PicardStats {
    pub iterations: usize,
    /// Max-norm change of the iterate, one entry per iteration.
    pub updates: Vec<f64>,
}

/// Time integrator with reusable scratch buffers.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    setup: &'a ProblemSetup,
    op: SpatialOperatorConfig,
    picard: PicardSettings,
    ws: OperatorWorkspace,
    rhs: Vec<f64>,
    stage: Vec<f64>,
    k: Vec<f64>,
    tri: Tridiagonal,
    k_max: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(setup: &'a ProblemSetup, op: SpatialOperatorConfig, picard: PicardSettings) -> Self {
        let n = setup.grid.num_nodes();
        Stepper {
            setup,
            op,
            picard,
            ws: OperatorWorkspace::default(),
            rhs: vec![0.0; n],
            stage: vec![0.0; n],
            k: Vec::with_capacity(n),
            tri: Tridiagonal::with_capacity(n),
            k_max: 0.0,
        }
    }

    fn check_len(&self, field: &Field) -> Result<()> {
        if field.len() != self.setup.grid.num_nodes() {
            return Err(GpmeError::Argument(format!(
                "field has {} values, grid has {} nodes",
                field.len(),
                self.setup.grid.num_nodes()
            )));
        }
        Ok(())
    }

    /// Advance `field` in place by `dt` with `scheme`.
    pub fn step(&mut self, scheme: TimeScheme, field: &mut Field, dt: f64) -> Result<PicardStats> {
        if !(dt > 0.0) {
            return Err(GpmeError::Argument(format!(
                "dt must be positive, got {dt}"
            )));
        }
        self.check_len(field)?;
        self.k_max = 0.0;
        match scheme {
            TimeScheme::ForwardEuler => {
                self.forward_euler(field, dt)?;
                Ok(PicardStats::default())
            }
            TimeScheme::TvdRk2 => {
                self.tvd_rk2(field, dt)?;
                Ok(PicardStats::default())
            }
            TimeScheme::BackwardEuler => self.backward_euler(field, dt),
        }
    }

    /// Largest nodal `k` seen by the explicit operator evaluations of the last step.
    pub fn last_k_max(&self) -> f64 {
        self.k_max
    }

    fn forward_euler(&mut self, field: &mut Field, dt: f64) -> Result<()> {
        apply_operator(
            &field.values,
            self.setup,
            &self.op,
            dt,
            &mut self.ws,
            &mut self.rhs,
        )?;
        self.k_max = self.k_max.max(max_coefficient(&self.ws.k));
        let last = field.len() - 1;
        for i in 1..last {
            field.values[i] += dt * self.rhs[i];
        }
        field.time += dt;
        apply_bc_values(&mut field.values, self.setup, field.time);
        field.check_finite()
    }

    fn tvd_rk2(&mut self, field: &mut Field, dt: f64) -> Result<()> {
        let last = field.len() - 1;
        let t_new = field.time + dt;
        apply_operator(
            &field.values,
            self.setup,
            &self.op,
            dt,
            &mut self.ws,
            &mut self.rhs,
        )?;
        self.k_max = self.k_max.max(max_coefficient(&self.ws.k));
        self.stage.copy_from_slice(&field.values);
        for i in 1..last {
            self.stage[i] += dt * self.rhs[i];
        }
        apply_bc_values(&mut self.stage, self.setup, t_new);
        apply_operator(
            &self.stage,
            self.setup,
            &self.op,
            dt,
            &mut self.ws,
            &mut self.rhs,
        )?;
        self.k_max = self.k_max.max(max_coefficient(&self.ws.k));
        for i in 1..last {
            field.values[i] = 0.5 * field.values[i] + 0.5 * self.stage[i] + 0.5 * dt * self.rhs[i];
        }
        field.time = t_new;
        apply_bc_values(&mut field.values, self.setup, t_new);
        field.check_finite()
    }

    fn backward_euler(&mut self, field: &mut Field, dt: f64) -> Result<PicardStats> {
        if self.op.mhm_enabled {
            return Err(GpmeError::Config(
                "Backward Euler does not support the MHM correction".into(),
            ));
        }
        let t_new = field.time + dt;
        let last = field.len() - 1;
        // rhs holds p^n, stage holds the current iterate
        self.rhs.copy_from_slice(&field.values);
        self.stage.copy_from_slice(&field.values);
        apply_bc_values(&mut self.stage, self.setup, t_new);
        let dx = self.setup.grid.dx();
        let mut stats = PicardStats::default();
        for _ in 0..self.picard.max_iters {
            fill_coefficients(&self.stage, &self.setup.model, &mut self.k)?;
            self.tri.assemble_implicit(
                &self.rhs,
                &self.k,
                &self.stage,
                self.op.averaging,
                dt / (dx * dx),
            );
            let new = self.tri.solve()?;
            let mut update = 0.0_f64;
            for (j, v) in new.iter().enumerate() {
                update = update.max((v - self.stage[j + 1]).abs());
            }
            self.stage[1..last].copy_from_slice(new);
            stats.iterations += 1;
            stats.updates.push(update);
            if !update.is_finite() {
                return Err(GpmeError::numerical(None, "Picard iterate is not finite"));
            }
            if update < self.picard.tol {
                field.values.copy_from_slice(&self.stage);
                field.time = t_new;
                field.check_finite()?;
                return Ok(stats);
            }
        }
        Err(GpmeError::NonConvergence {
            iterations: stats.iterations,
            residual: stats.updates.last().copied().unwrap_or(f64::NAN),
        })
    }
}

/// One Forward Euler step: `p^{n+1} = p^n + dt L(p^n)`, boundaries refreshed at `t + dt`.
pub fn step_forward_euler(
    field: &Field,
    setup: &ProblemSetup,
    cfg: &SpatialOperatorConfig,
    dt: f64,
) -> Result<Field> {
    let mut out = field.clone();
    Stepper::new(setup, *cfg, PicardSettings::default()).step(
        TimeScheme::ForwardEuler,
        &mut out,
        dt,
    )?;
    Ok(out)
}

/// One Backward Euler step solved by Picard iteration with lagged face coefficients.
pub fn step_backward_euler(
    field: &Field,
    setup: &ProblemSetup,
    cfg: &SpatialOperatorConfig,
    dt: f64,
    solver: PicardSettings,
) -> Result<(Field, PicardStats)> {
    let mut out = field.clone();
    let stats = Stepper::new(setup, *cfg, solver).step(TimeScheme::BackwardEuler, &mut out, dt)?;
    Ok((out, stats))
}

/// One two-stage TVD Runge-Kutta step.
pub fn step_tvd_rk2(
    field: &Field,
    setup: &ProblemSetup,
    cfg: &SpatialOperatorConfig,
    dt: f64,
) -> Result<Field> {
    let mut out = field.clone();
    Stepper::new(setup, *cfg, PicardSettings::default()).step(TimeScheme::TvdRk2, &mut out, dt)?;
    Ok(out)
}

/// Tridiagonal system over the interior unknowns, solved by the Thomas algorithm.
#[derive(Debug, Clone, Default)]
pub(crate) struct Tridiagonal {
    pub(crate) lower: Vec<f64>,
    pub(crate) diag: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl Tridiagonal {
    fn with_capacity(n: usize) -> Self {
        Tridiagonal {
            lower: Vec::with_capacity(n),
            diag: Vec::with_capacity(n),
            upper: Vec::with_capacity(n),
            rhs: Vec::with_capacity(n),
            scratch: Vec::with_capacity(n),
        }
    }

    /// `p_i - r [k_{i+1/2} (p_{i+1} - p_i) - k_{i-1/2} (p_i - p_{i-1})] = p^n_i`
    /// with face coefficients averaged from the nodal `k` and Dirichlet values
    /// taken from `current`'s boundary slots.
    pub(crate) fn assemble_implicit(
        &mut self,
        previous: &[f64],
        k: &[f64],
        current: &[f64],
        averaging: AveragingRule,
        r: f64,
    ) {
        let last = previous.len() - 1;
        self.lower.clear();
        self.diag.clear();
        self.upper.clear();
        self.rhs.clear();
        let face = |j: usize| match averaging {
            AveragingRule::Arithmetic => 0.5 * (k[j] + k[j + 1]),
            AveragingRule::Harmonic => {
                let s = k[j] + k[j + 1];
                if s == 0.0 {
                    0.0
                } else {
                    2.0 * k[j] * k[j + 1] / s
                }
            }
        };
        for i in 1..last {
            let kw = face(i - 1);
            let ke = face(i);
            let mut b = previous[i];
            if i == 1 {
                b += r * kw * current[0];
            }
            if i == last - 1 {
                b += r * ke * current[last];
            }
            self.lower.push(-r * kw);
            self.diag.push(1.0 + r * (kw + ke));
            self.upper.push(-r * ke);
            self.rhs.push(b);
        }
    }

    /// Solve in place; the solution overwrites and is returned from `rhs`.
    pub(crate) fn solve(&mut self) -> Result<&[f64]> {
        let n = self.diag.len();
        self.scratch.clear();
        self.scratch.resize(n, 0.0);
        let c = &mut self.scratch;
        let d = &mut self.rhs;
        let mut denom = self.diag[0];
        if denom == 0.0 {
            return Err(GpmeError::numerical(Some(1), "singular tridiagonal system"));
        }
        c[0] = self.upper[0] / denom;
        d[0] /= denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i] * c[i - 1];
            if denom == 0.0 {
                return Err(GpmeError::numerical(
                    Some(i + 1),
                    "singular tridiagonal system",
                ));
            }
            c[i] = self.upper[i] / denom;
            d[i] = (d[i] - self.lower[i] * d[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(&self.rhs)
    }
}
