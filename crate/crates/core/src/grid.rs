//! Uniform vertex-centred mesh, the discrete field and the problem presets.
//!
//! Nodes are indexed `0..=n`; nodes `0` and `n` carry Dirichlet data and are
//! never unknowns, so a grid with `n` intervals has `n - 1` degrees of freedom.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::error::{GpmeError, Result};

/// Finest resolution used for reference solutions; every sweep resolution must divide it.
pub const REFERENCE_N: usize = 3200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    n: usize,
    x_left: f64,
    x_right: f64,
}

impl Grid1D {
    pub fn new(n: usize, x_left: f64, x_right: f64) -> Result<Self> {
        if n < 4 {
            return Err(GpmeError::Config(format!(
                "need at least 4 intervals, got {n}"
            )));
        }
        if !(x_right > x_left) || !x_left.is_finite() || !x_right.is_finite() {
            return Err(GpmeError::Config(format!(
                "invalid domain [{x_left}, {x_right}]"
            )));
        }
        Ok(Grid1D { n, x_left, x_right })
    }

    /// `n` intervals on `[0, 1]`.
    pub fn unit(n: usize) -> Result<Self> {
        Grid1D::new(n, 0.0, 1.0)
    }

    pub fn intervals(&self) -> usize {
        self.n
    }

    pub fn num_nodes(&self) -> usize {
        self.n + 1
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn dx(&self) -> f64 {
        (self.x_right - self.x_left) / self.n as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        // i / n is correctly rounded, so nested grids agree bit-for-bit at shared nodes
        self.x_left + (self.x_right - self.x_left) * (i as f64 / self.n as f64)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.x(i)).collect()
    }

    /// Interior (unknown) node indices.
    pub fn interior(&self) -> std::ops::Range<usize> {
        1..self.n
    }

    pub fn nearest_node(&self, x: f64) -> usize {
        let s = ((x - self.x_left) / self.dx()).round();
        s.clamp(0.0, self.n as f64) as usize
    }

    /// Index stride mapping this grid onto a finer nested grid on the same domain.
    pub fn stride_into(&self, fine: &Grid1D) -> Result<usize> {
        if self.x_left != fine.x_left || self.x_right != fine.x_right {
            return Err(GpmeError::Argument("grids cover different domains".into()));
        }
        if fine.n < self.n || !fine.n.is_multiple_of(self.n) {
            return Err(GpmeError::Argument(format!(
                "grid with {} intervals is not nested in grid with {} intervals",
                self.n, fine.n
            )));
        }
        Ok(fine.n / self.n)
    }

    pub fn same_as(&self, other: &Grid1D) -> bool {
        self == other
    }
}

/// Discrete unknowns on the nodes of a grid at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn new(values: Vec<f64>, time: f64) -> Self {
        Field { values, time }
    }

    pub fn constant(grid: &Grid1D, value: f64, time: f64) -> Self {
        Field {
            values: vec![value; grid.num_nodes()],
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(GpmeError::numerical(
                Some(i),
                format!("non-finite value {}", self.values[i]),
            )),
            None => Ok(()),
        }
    }

    /// Values at the nodes shared with a coarser nested grid.
    pub fn restrict(&self, fine: &Grid1D, coarse: &Grid1D) -> Result<Field> {
        let stride = coarse.stride_into(fine)?;
        if self.values.len() != fine.num_nodes() {
            return Err(GpmeError::Argument("field does not match fine grid".into()));
        }
        Ok(Field {
            values: self.values.iter().step_by(stride).copied().collect(),
            time: self.time,
        })
    }
}

/// Time-dependent Dirichlet data at one end of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryValue {
    Constant {
        value: f64,
    },
    /// `(3t)^(1/3)`, the inflow of the locking problem.
    CubeRootInflow,
}

impl BoundaryValue {
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            BoundaryValue::Constant { value } => value,
            BoundaryValue::CubeRootInflow => (3.0 * t.max(0.0)).cbrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum InitialPreset {
    /// `max(p_right, p_left (1 - x / x_front))`: steep ramp next to the left boundary.
    Front {
        p_left: f64,
        p_right: f64,
        x_front: f64,
    },
    /// Straight line between the two boundary values.
    Linear { p_left: f64, p_right: f64 },
    /// Constant background `h0` with the `(3t)^(1/3)` inflow on the left.
    ConstantTlp { h0: f64 },
}

impl InitialPreset {
    pub fn front() -> Self {
        InitialPreset::Front {
            p_left: 2.0,
            p_right: 0.1,
            x_front: 0.1,
        }
    }

    pub fn linear() -> Self {
        InitialPreset::Linear {
            p_left: 2.0,
            p_right: 0.1,
        }
    }

    pub fn tlp() -> Self {
        InitialPreset::ConstantTlp { h0: 1e-3 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialPreset::Front { .. } => "front",
            InitialPreset::Linear { .. } => "linear",
            InitialPreset::ConstantTlp { .. } => "tlp",
        }
    }

    /// Dirichlet data that belongs with this preset.
    pub fn boundary_values(&self) -> (BoundaryValue, BoundaryValue) {
        match *self {
            InitialPreset::Front {
                p_left, p_right, ..
            }
            | InitialPreset::Linear { p_left, p_right } => (
                BoundaryValue::Constant { value: p_left },
                BoundaryValue::Constant { value: p_right },
            ),
            InitialPreset::ConstantTlp { h0 } => (
                BoundaryValue::CubeRootInflow,
                BoundaryValue::Constant { value: h0 },
            ),
        }
    }

    /// Preset profile on a unit-normalised coordinate `s = (x - x_left) / (x_right - x_left)`.
    fn profile(&self, s: f64) -> f64 {
        match *self {
            InitialPreset::Front {
                p_left,
                p_right,
                x_front,
            } => (p_left * (1.0 - s / x_front)).max(p_right),
            InitialPreset::Linear { p_left, p_right } => p_left + (p_right - p_left) * s,
            InitialPreset::ConstantTlp { h0 } => h0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GpmeError::Config(msg));
        match *self {
            InitialPreset::Front {
                p_left,
                p_right,
                x_front,
            } => {
                if !(p_left > p_right && p_right >= 0.0) {
                    return bad(format!(
                        "front preset needs p_left > p_right >= 0, got {p_left}, {p_right}"
                    ));
                }
                if !(x_front > 0.0 && x_front <= 1.0) {
                    return bad(format!("front position must lie in (0, 1], got {x_front}"));
                }
            }
            InitialPreset::Linear { p_left, p_right } => {
                if !(p_left.is_finite() && p_right.is_finite()) {
                    return bad("linear preset needs finite end values".into());
                }
            }
            InitialPreset::ConstantTlp { h0 } => {
                if !(h0 > 0.0 && h0.is_finite()) {
                    return bad(format!(
                        "locking-problem background must be positive, got {h0}"
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSetup {
    pub grid: Grid1D,
    pub initial: InitialPreset,
    pub bc_left: BoundaryValue,
    pub bc_right: BoundaryValue,
    pub model: CoefficientModel,
}

impl ProblemSetup {
    /// Setup with the boundary data that belongs to `initial`.
    pub fn new(grid: Grid1D, initial: InitialPreset, model: CoefficientModel) -> Self {
        let (bc_left, bc_right) = initial.boundary_values();
        ProblemSetup {
            grid,
            initial,
            bc_left,
            bc_right,
            model,
        }
    }

    /// The locking problem: `p^3` diffusion into a `10^-3` background.
    pub fn tlp(n: usize) -> Result<Self> {
        Ok(ProblemSetup::new(
            Grid1D::unit(n)?,
            InitialPreset::tlp(),
            CoefficientModel::Pme { m: 3.0 },
        ))
    }

    /// Same problem on a different resolution.
    pub fn with_resolution(&self, n: usize) -> Result<Self> {
        Ok(ProblemSetup {
            grid: Grid1D::new(n, self.grid.x_left(), self.grid.x_right())?,
            ..*self
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.initial.validate()
    }
}

const BC_MATCH_TOL: f64 = 1e-12;

/// Initial field at `t = 0` for the configured preset.
pub fn build_initial(setup: &ProblemSetup) -> Result<Field> {
    setup.validate()?;
    let grid = &setup.grid;
    let width = grid.x_right() - grid.x_left();
    let values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| setup.initial.profile((x - grid.x_left()) / width))
        .collect();
    let n = grid.intervals();
    let checks: &[(usize, &BoundaryValue)] = match setup.initial {
        // the inflow starts at 0 against a positive background; only the right end must agree
        InitialPreset::ConstantTlp { .. } => &[(n, &setup.bc_right)],
        _ => &[(0, &setup.bc_left), (n, &setup.bc_right)],
    };
    for &(i, bc) in checks {
        let g = bc.at(0.0);
        if (values[i] - g).abs() > BC_MATCH_TOL {
            return Err(GpmeError::Config(format!(
                "initial profile {} at x = {} does not match boundary value {}",
                values[i],
                grid.x(i),
                g
            )));
        }
    }
    let mut field = Field::new(values, 0.0);
    apply_bc(&mut field, setup, 0.0);
    Ok(field)
}

/// Overwrite the two boundary entries with the Dirichlet data at time `t`.
#[inline]
pub fn apply_bc(field: &mut Field, setup: &ProblemSetup, t: f64) {
    apply_bc_values(&mut field.values, setup, t);
}

#[inline]
pub(crate) fn apply_bc_values(values: &mut [f64], setup: &ProblemSetup, t: f64) {
    let last = values.len() - 1;
    values[0] = setup.bc_left.at(t);
    values[last] = setup.bc_right.at(t);
}

/// Format a float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Snapshot CSV: header `x,p`, one row per node.
pub fn write_snapshot_csv<W: Write>(grid: &Grid1D, field: &Field, mut w: W) -> Result<()> {
    if field.len() != grid.num_nodes() {
        return Err(GpmeError::Argument("field does not match grid".into()));
    }
    writeln!(w, "x,p")?;
    for (i, p) in field.values.iter().enumerate() {
        writeln!(w, "{},{}", fmt17(grid.x(i)), fmt17(*p))?;
    }
    Ok(())
}
