//! Probe series, oscillation and front detection, the locking-problem exact
//! solution, fine-grid references, error norms and convergence orders.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GpmeError, Result};
use crate::flux::SpatialOperatorConfig;
use crate::grid::{fmt17, Field, Grid1D, ProblemSetup, REFERENCE_N};
use crate::simulation::{simulate, RecordOptions};
use crate::timestepping::{DtPower, DtRule, IntegratorConfig, TimeScheme};

/// Default oscillation noise floor.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Background value of the locking problem's exact solution (`eps = 1e-9`, so `p = 1e-3`).
pub const TLP_EPS: f64 = 1e-9;

/// `p(t)` at the grid node nearest to `x_probe`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub x_probe: f64,
    pub node: usize,
    pub samples: Vec<(f64, f64)>,
}

impl ProbeSeries {
    pub fn new(grid: &Grid1D, x_probe: f64) -> Self {
        ProbeSeries {
            x_probe,
            node: grid.nearest_node(x_probe),
            samples: Vec::new(),
        }
    }

    pub fn from_samples(x_probe: f64, node: usize, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(GpmeError::Argument(
                "probe times must be strictly increasing".into(),
            ));
        }
        Ok(ProbeSeries {
            x_probe,
            node,
            samples,
        })
    }

    pub fn record(&mut self, field: &Field) -> Result<()> {
        if let Some(&(t_last, _)) = self.samples.last() {
            if !(field.time > t_last) {
                return Err(GpmeError::Argument(format!(
                    "probe time {} does not advance past {}",
                    field.time, t_last
                )));
            }
        }
        self.samples.push((field.time, field.values[self.node]));
        Ok(())
    }

    /// Samples with `t0 < t <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> ProbeSeries {
        ProbeSeries {
            x_probe: self.x_probe,
            node: self.node,
            samples: self
                .samples
                .iter()
                .copied()
                .filter(|&(t, _)| t > t0 && t <= t1)
                .collect(),
        }
    }

    /// Time-series CSV: header `t,p`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,p")?;
        for (t, p) in &self.samples {
            writeln!(w, "{},{}", fmt17(*t), fmt17(*p))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub n_maxima: usize,
    pub n_minima: usize,
    /// Largest gap between a detected extremum and the next one of opposite kind.
    pub max_amplitude: f64,
    /// Mean spacing of consecutive minima; `None` with fewer than two minima.
    pub period_estimate: Option<f64>,
    pub minima_times: Vec<f64>,
    pub maxima_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Extremum {
    Max(f64, f64),
    Min(f64, f64),
}

/// Count strict local extrema that clear both neighbours by more than `noise_floor`.
pub fn detect_oscillations(series: &ProbeSeries, noise_floor: f64) -> Result<OscillationReport> {
    let s = &series.samples;
    if s.len() < 3 {
        return Err(GpmeError::Argument(format!(
            "oscillation detection needs at least 3 samples, got {}",
            s.len()
        )));
    }
    if !(noise_floor >= 0.0) {
        return Err(GpmeError::Argument(
            "noise floor must be nonnegative".into(),
        ));
    }
    let mut extrema = Vec::new();
    for w in s.windows(3) {
        let (prev, (t, p), next) = (w[0].1, w[1], w[2].1);
        if p - prev > noise_floor && p - next > noise_floor {
            extrema.push(Extremum::Max(t, p));
        } else if prev - p > noise_floor && next - p > noise_floor {
            extrema.push(Extremum::Min(t, p));
        }
    }
    let mut max_amplitude = 0.0_f64;
    for pair in extrema.windows(2) {
        match (pair[0], pair[1]) {
            (Extremum::Max(_, a), Extremum::Min(_, b))
            | (Extremum::Min(_, b), Extremum::Max(_, a)) => {
                max_amplitude = max_amplitude.max(a - b);
            }
            _ => {}
        }
    }
    let minima_times: Vec<f64> = extrema
        .iter()
        .filter_map(|e| match e {
            Extremum::Min(t, _) => Some(*t),
            _ => None,
        })
        .collect();
    let maxima_times: Vec<f64> = extrema
        .iter()
        .filter_map(|e| match e {
            Extremum::Max(t, _) => Some(*t),
            _ => None,
        })
        .collect();
    let period_estimate = if minima_times.len() >= 2 {
        Some(
            (minima_times[minima_times.len() - 1] - minima_times[0])
                / (minima_times.len() - 1) as f64,
        )
    } else {
        None
    };
    Ok(OscillationReport {
        n_maxima: maxima_times.len(),
        n_minima: minima_times.len(),
        max_amplitude,
        period_estimate,
        minima_times,
        maxima_times,
    })
}

/// Rightmost position where the profile drops through `threshold`, linearly
/// interpolated between the straddling nodes; `x_left` if no node exceeds it.
pub fn track_front(grid: &Grid1D, field: &Field, threshold: f64) -> f64 {
    let v = &field.values;
    match v.iter().rposition(|&p| p > threshold) {
        None => grid.x_left(),
        Some(i) if i + 1 == v.len() => grid.x(i),
        Some(i) => {
            let frac = (v[i] - threshold) / (v[i] - v[i + 1]);
            grid.x(i) + frac * grid.dx()
        }
    }
}

/// Front threshold between background and inflow values: `p_R + 0.05 (p_L - p_R)`.
pub fn default_front_threshold(p_left: f64, p_right: f64) -> f64 {
    p_right + 0.05 * (p_left - p_right)
}

/// Exact locking-problem solution `(3 (t - x))^(1/3)` behind the front `x = t`,
/// `eps^(1/3)` ahead of it.
pub fn tlp_exact(x: f64, t: f64, eps: f64) -> f64 {
    if x < t {
        (3.0 * (t - x)).cbrt()
    } else {
        eps.cbrt()
    }
}

pub fn tlp_exact_field(grid: &Grid1D, t: f64) -> Field {
    Field::new(
        grid.nodes()
            .iter()
            .map(|&x| tlp_exact(x, t, TLP_EPS))
            .collect(),
        t,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl ErrorNorms {
    pub fn get(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L1 => self.l1,
            NormKind::L2 => self.l2,
            NormKind::Linf => self.linf,
        }
    }
}

/// All three interior error norms of `coarse` against `reference` at shared nodes.
pub fn error_norms_all(
    coarse_grid: &Grid1D,
    coarse: &Field,
    reference_grid: &Grid1D,
    reference: &Field,
) -> Result<ErrorNorms> {
    let stride = coarse_grid.stride_into(reference_grid)?;
    if coarse.len() != coarse_grid.num_nodes() || reference.len() != reference_grid.num_nodes() {
        return Err(GpmeError::Argument(
            "field length does not match its grid".into(),
        ));
    }
    let dx = coarse_grid.dx();
    let (mut l1, mut l2, mut linf) = (0.0, 0.0, 0.0_f64);
    for i in coarse_grid.interior() {
        let e = (coarse.values[i] - reference.values[i * stride]).abs();
        l1 += e;
        l2 += e * e;
        linf = linf.max(e);
    }
    Ok(ErrorNorms {
        l1: dx * l1,
        l2: (dx * l2).sqrt(),
        linf,
    })
}

/// `l1 = dx sum |e|`, `l2 = sqrt(dx sum e^2)`, `linf = max |e|` over interior nodes.
pub fn error_norms(
    coarse_grid: &Grid1D,
    coarse: &Field,
    reference_grid: &Grid1D,
    reference: &Field,
    norm: NormKind,
) -> Result<f64> {
    Ok(error_norms_all(coarse_grid, coarse, reference_grid, reference)?.get(norm))
}

/// Least-squares slope of `log(error)` against `log(1/N)`.
pub fn fit_order(resolutions: &[usize], errors: &[f64]) -> Result<f64> {
    if resolutions.len() != errors.len() {
        return Err(GpmeError::Argument(
            "resolutions and errors differ in length".into(),
        ));
    }
    if resolutions.len() < 2 {
        return Err(GpmeError::Argument(
            "order fit needs at least two resolutions".into(),
        ));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(GpmeError::Argument(format!(
            "errors must be positive, got {e}"
        )));
    }
    let xs: Vec<f64> = resolutions.iter().map(|&n| -(n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(GpmeError::Argument(
            "resolutions must not all be equal".into(),
        ));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub resolutions: Vec<usize>,
    pub errors_l1: Vec<f64>,
    pub errors_l2: Vec<f64>,
    pub errors_linf: Vec<f64>,
    pub order_l1: Option<f64>,
    pub order_l2: Option<f64>,
    pub order_linf: Option<f64>,
}

impl ConvergenceReport {
    pub fn from_norms(
        label: impl Into<String>,
        resolutions: Vec<usize>,
        norms: &[ErrorNorms],
    ) -> Self {
        let l1: Vec<f64> = norms.iter().map(|e| e.l1).collect();
        let l2: Vec<f64> = norms.iter().map(|e| e.l2).collect();
        let linf: Vec<f64> = norms.iter().map(|e| e.linf).collect();
        let order = |errs: &[f64]| fit_order(&resolutions, errs).ok();
        ConvergenceReport {
            label: label.into(),
            order_l1: order(&l1),
            order_l2: order(&l2),
            order_linf: order(&linf),
            resolutions: resolutions.clone(),
            errors_l1: l1,
            errors_l2: l2,
            errors_linf: linf,
        }
    }

    /// CSV table `N,l1,l2,linf`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,l1,l2,linf")?;
        for (i, n) in self.resolutions.iter().enumerate() {
            writeln!(
                w,
                "{n},{},{},{}",
                fmt17(self.errors_l1[i]),
                fmt17(self.errors_l2[i]),
                fmt17(self.errors_linf[i])
            )?;
        }
        Ok(())
    }
}

/// Fine-grid reference problem: the configured setup re-gridded to `N = 3200`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub setup: ProblemSetup,
    pub op: SpatialOperatorConfig,
    pub integrator: IntegratorConfig,
}

impl ReferenceSpec {
    /// Arithmetic averaging with forward Euler on the reference grid, same
    /// preset, model and end time. The configured `dx^2` step rule is kept for
    /// explicit schemes; otherwise the model's default explicit rule is used, so
    /// a large implicit step never leaks into the reference.
    pub fn for_problem(setup: &ProblemSetup, integrator: &IntegratorConfig) -> Result<Self> {
        let dt_rule = match (integrator.scheme.is_explicit(), integrator.dt_rule.power) {
            (true, DtPower::DxSquared) => integrator.dt_rule,
            _ => DtRule::default_for(&setup.model),
        };
        Ok(ReferenceSpec {
            setup: setup.with_resolution(REFERENCE_N)?,
            op: SpatialOperatorConfig::arithmetic(),
            integrator: IntegratorConfig {
                scheme: TimeScheme::ForwardEuler,
                dt_rule,
                ..*integrator
            },
        })
    }

    pub fn content_hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedReference {
    spec: ReferenceSpec,
    time: f64,
    values: Vec<f64>,
}

/// Run the reference problem, memoised on disk under `cache_dir` by content hash.
pub fn reference_solution(spec: &ReferenceSpec, cache_dir: Option<&Path>) -> Result<Field> {
    let path = match cache_dir {
        Some(dir) => Some(dir.join(format!("reference-{}.json", spec.content_hash()?))),
        None => None,
    };
    if let Some(path) = &path {
        if let Ok(bytes) = fs::read(path) {
            if let Ok(cached) = serde_json::from_slice::<CachedReference>(&bytes) {
                if cached.spec == *spec && cached.values.len() == spec.setup.grid.num_nodes() {
                    return Ok(Field::new(cached.values, cached.time));
                }
            }
        }
    }
    let out = simulate(
        &spec.setup,
        &spec.op,
        &spec.integrator,
        &RecordOptions::quiet(),
    )
    .map_err(|e| match e {
        GpmeError::Numerical {
            step,
            node,
            time,
            message,
        } => GpmeError::Numerical {
            step,
            node,
            time,
            message: format!("{message} (reference grid; try a larger dt factor)"),
        },
        other => other,
    })?;
    if let Some(path) = &path {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let cached = CachedReference {
            spec: *spec,
            time: out.final_field.time,
            values: out.final_field.values.clone(),
        };
        // write-then-rename so concurrent readers never see a partial file
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(&cached)?)?;
        fs::rename(&tmp, path)?;
    }
    Ok(out.final_field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[(f64, f64)]) -> ProbeSeries {
        ProbeSeries::from_samples(0.12, 6, values.to_vec()).unwrap()
    }

    #[test]
    fn monotone_ramp_has_no_extrema() {
        let s = series(
            &(0..50)
                .map(|i| (i as f64, i as f64 * 0.1))
                .collect::<Vec<_>>(),
        );
        let r = detect_oscillations(&s, 0.0).unwrap();
        assert_eq!((r.n_maxima, r.n_minima, r.max_amplitude), (0, 0, 0.0));
        assert_eq!(r.period_estimate, None);
    }

    #[test]
    fn sine_extrema_and_period() {
        let n = 1000;
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = 2.0 * i as f64 / (n - 1) as f64;
                (t, (2.0 * std::f64::consts::PI * t).sin())
            })
            .collect();
        let r = detect_oscillations(&series(&samples), 1e-6).unwrap();
        assert_eq!((r.n_maxima, r.n_minima), (2, 2));
        assert!((r.period_estimate.unwrap() - 1.0).abs() < 5e-3);
        assert!((r.max_amplitude - 2.0).abs() < 1e-4);
        assert!((r.minima_times[0] - 0.75).abs() < 3e-3);
    }

    #[test]
    fn noise_floor_suppresses_small_wiggles() {
        let s = series(&[(0.0, 1.0), (1.0, 1.0 + 1e-12), (2.0, 1.0), (3.0, 1.5)]);
        assert_eq!(detect_oscillations(&s, NOISE_FLOOR).unwrap().n_maxima, 0);
        assert_eq!(detect_oscillations(&s, 0.0).unwrap().n_maxima, 1);
        assert!(detect_oscillations(&series(&[(0.0, 1.0), (1.0, 2.0)]), 0.0).is_err());
    }

    #[test]
    fn probe_times_must_increase() {
        assert!(ProbeSeries::from_samples(0.1, 1, vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
    }

    #[test]
    fn front_of_step_field() {
        let g = Grid1D::unit(20).unwrap();
        let f = Field::new(
            g.nodes()
                .iter()
                .map(|&x| if x <= 0.5 { 2.0 } else { 0.1 })
                .collect(),
            0.0,
        );
        let x = track_front(&g, &f, 0.2);
        assert!(x >= 0.5 && x < 0.5 + g.dx());
        let flat = Field::constant(&g, 1e-3, 0.0);
        assert_eq!(track_front(&g, &flat, 0.05), 0.0);
    }

    #[test]
    fn front_of_exact_locking_profile() {
        let g = Grid1D::unit(50).unwrap();
        let f = tlp_exact_field(&g, 0.5);
        let x = track_front(&g, &f, 0.05);
        assert!((x - 0.5).abs() <= g.dx(), "{x}");
    }

    #[test]
    fn exact_locking_solution() {
        assert!((tlp_exact(0.25, 0.5, TLP_EPS) - 0.75f64.cbrt()).abs() < 1e-15);
        assert!((tlp_exact(0.25, 0.5, TLP_EPS) - 0.90856).abs() < 1e-5);
        assert!((tlp_exact(0.8, 0.5, TLP_EPS) - 1e-3).abs() < 1e-15);
        for i in 1..=100 {
            let t = i as f64 * 0.0137;
            assert_eq!(tlp_exact(0.0, t, TLP_EPS), (3.0 * t).cbrt());
        }
    }

    #[test]
    fn norms_by_hand() {
        let coarse_grid = Grid1D::new(4, 0.0, 4.0).unwrap();
        let fine_grid = Grid1D::new(8, 0.0, 4.0).unwrap();
        let coarse = Field::new(vec![0.0, 3.0, 0.0, -4.0, 0.0], 0.0);
        let fine = Field::new(vec![0.0; 9], 0.0);
        let e = error_norms_all(&coarse_grid, &coarse, &fine_grid, &fine).unwrap();
        assert_eq!((e.l1, e.l2, e.linf), (7.0, 5.0, 4.0));

        let restricted = Field::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], 0.0);
        let fine = Field::new(vec![1.0, 9.0, 2.0, 9.0, 3.0, 9.0, 4.0, 9.0, 5.0], 0.0);
        let e = error_norms_all(&coarse_grid, &restricted, &fine_grid, &fine).unwrap();
        assert_eq!((e.l1, e.l2, e.linf), (0.0, 0.0, 0.0));

        let odd = Grid1D::new(6, 0.0, 4.0).unwrap();
        let odd_field = Field::new(vec![0.0; 7], 0.0);
        assert!(matches!(
            error_norms(&odd, &odd_field, &fine_grid, &fine, NormKind::L2),
            Err(GpmeError::Argument(_))
        ));
    }

    #[test]
    fn order_fits() {
        assert!((fit_order(&[100, 200], &[1e-2, 2.5e-3]).unwrap() - 2.0).abs() < 1e-12);
        assert!((fit_order(&[100, 200, 400], &[1e-2, 5e-3, 2.5e-3]).unwrap() - 1.0).abs() < 1e-12);
        assert!(fit_order(&[100], &[1e-2]).is_err());
        assert!(fit_order(&[100, 200], &[1e-2, 0.0]).is_err());
    }

    #[test]
    fn order_of_known_linear_harmonic_series() {
        let order = fit_order(
            &[100, 200, 400, 800],
            &[1.7810e-03, 5.0767e-04, 1.4199e-04, 3.8658e-05],
        )
        .unwrap();
        assert!((order - 1.8415).abs() < 5e-4, "{order}");
    }

    #[test]
    fn convergence_report_single_resolution_has_no_order() {
        let r = ConvergenceReport::from_norms(
            "x",
            vec![100],
            &[ErrorNorms {
                l1: 1.0,
                l2: 1.0,
                linf: 1.0,
            }],
        );
        assert_eq!(r.order_l2, None);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("N,l1,l2,linf\n100,"));
    }
}
