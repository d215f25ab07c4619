//! Command-line front end: `run`, `convergence` and `compare`.
//!
//! A run is described by a [`RunConfig`], read from an optional JSON file and
//! overridden field by field by command-line flags. Every subcommand writes
//! into `<outdir>/<run-id>/` and records the resolved configuration plus
//! content hashes in `meta.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::CoefficientModel;
use crate::diagnostics::{
    default_front_threshold, detect_oscillations, error_norms_all, reference_solution,
    tlp_exact_field, track_front, ConvergenceReport, ErrorNorms, OscillationReport, ReferenceSpec,
    NOISE_FLOOR,
};
use crate::error::{GpmeError, Result};
use crate::flux::{AveragingRule, MhmMode, MhmSwitch, SpatialOperatorConfig};
use crate::grid::{
    build_initial, fmt17, write_snapshot_csv, Field, Grid1D, InitialPreset, ProblemSetup,
    REFERENCE_N,
};
use crate::simulation::{simulate, RecordOptions, RunOutput};
use crate::timestepping::{DtPower, DtRule, IntegratorConfig, PicardSettings, TimeScheme};

/// Front threshold for the locking problem, whose background is `1e-3`.
pub const TLP_FRONT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pme,
    Superslow,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PresetKind {
    /// Steep ramp from 2.0 down to the 0.1 background at x = 0.1.
    Front,
    /// Straight line between the boundary values 2.0 and 0.1.
    Linear,
    /// Locking problem: constant 1e-3 with cube-root inflow at x = 0.
    Tlp,
}

/// Everything needed to reproduce one run. Unset optional fields take
/// model- and scheme-dependent defaults during [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    /// PME exponent (ignored for the other models).
    pub m: f64,
    pub preset: PresetKind,
    pub n: usize,
    pub averaging: AveragingRule,
    pub mhm: bool,
    pub mhm_mode: MhmMode,
    pub mhm_switch: MhmSwitch,
    pub scheme: TimeScheme,
    pub dt_factor: Option<f64>,
    pub dt_power: Option<DtPower>,
    pub t_end: Option<f64>,
    pub snapshots: Vec<f64>,
    pub probe: Option<f64>,
    pub record_every: usize,
    pub noise_floor: f64,
    pub front_threshold: Option<f64>,
    pub predictor: bool,
    pub allow_unstable: bool,
    pub picard_max_iters: usize,
    pub picard_tol: f64,
    pub outdir: PathBuf,
    pub run_id: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let picard = PicardSettings::default();
        RunConfig {
            model: ModelKind::Pme,
            m: 3.0,
            preset: PresetKind::Front,
            n: 50,
            averaging: AveragingRule::Harmonic,
            mhm: false,
            mhm_mode: MhmMode::Full,
            mhm_switch: MhmSwitch::Global,
            scheme: TimeScheme::ForwardEuler,
            dt_factor: None,
            dt_power: None,
            t_end: None,
            snapshots: Vec::new(),
            probe: None,
            record_every: 1,
            noise_floor: NOISE_FLOOR,
            front_threshold: None,
            predictor: true,
            allow_unstable: false,
            picard_max_iters: picard.max_iters,
            picard_tol: picard.tol,
            outdir: PathBuf::from("out"),
            run_id: None,
        }
    }
}

/// A validated configuration turned into library objects.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub setup: ProblemSetup,
    pub op: SpatialOperatorConfig,
    pub integrator: IntegratorConfig,
    pub front_threshold: f64,
    pub run_id: String,
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            GpmeError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| GpmeError::Config(format!("bad config {}: {e}", path.display())))
    }

    fn coefficient_model(&self) -> Result<CoefficientModel> {
        match self.model {
            ModelKind::Pme => {
                CoefficientModel::pme(self.m).map_err(|e| GpmeError::Config(e.to_string()))
            }
            ModelKind::Superslow => Ok(CoefficientModel::Superslow),
            ModelKind::Linear => Ok(CoefficientModel::Linear),
        }
    }

    pub fn operator(&self) -> SpatialOperatorConfig {
        SpatialOperatorConfig {
            averaging: self.averaging,
            mhm_enabled: self.mhm,
            mhm_mode: self.mhm_mode,
            mhm_switch: self.mhm_switch,
        }
    }

    /// Fill in defaults, validate, and build the problem objects.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let model = self.coefficient_model()?;
        let grid = Grid1D::unit(self.n).map_err(as_config)?;
        let setup = match self.preset {
            PresetKind::Front => ProblemSetup::new(grid, InitialPreset::front(), model),
            PresetKind::Linear => ProblemSetup::new(grid, InitialPreset::linear(), model),
            PresetKind::Tlp => ProblemSetup {
                model,
                ..ProblemSetup::tlp(self.n).map_err(as_config)?
            },
        };
        setup.validate().map_err(as_config)?;

        let op = self.operator();
        op.validate()?;

        let power = self.dt_power.unwrap_or(match self.scheme {
            TimeScheme::BackwardEuler => DtPower::Dx,
            _ => DtPower::DxSquared,
        });
        let factor = self.dt_factor.unwrap_or(match power {
            DtPower::Dx => 1.0,
            DtPower::DxSquared => DtRule::default_for(&model).factor,
        });
        let t_end = self.t_end.unwrap_or(match self.preset {
            PresetKind::Tlp => 0.7,
            _ => 0.5,
        });
        let integrator = IntegratorConfig {
            scheme: self.scheme,
            dt_rule: DtRule { factor, power },
            t_end,
            nonlinear_solver: PicardSettings {
                max_iters: self.picard_max_iters,
                tol: self.picard_tol,
            },
        };
        integrator.validate(&op)?;

        if let Some(&t) = self.snapshots.iter().find(|&&t| !(t >= 0.0 && t <= t_end)) {
            return Err(GpmeError::Config(format!(
                "snapshot time {t} outside [0, {t_end}]"
            )));
        }
        if let Some(x) = self.probe {
            if !(x >= setup.grid.x_left() && x <= setup.grid.x_right()) {
                return Err(GpmeError::Config(format!(
                    "probe position {x} outside the domain"
                )));
            }
        }
        if !(self.noise_floor >= 0.0) {
            return Err(GpmeError::Config("noise floor must be nonnegative".into()));
        }
        if self.record_every == 0 {
            return Err(GpmeError::Config("record_every must be at least 1".into()));
        }

        let front_threshold = match (self.front_threshold, self.preset) {
            (Some(t), _) => t,
            (None, PresetKind::Tlp) => TLP_FRONT_THRESHOLD,
            (None, _) => {
                let (left, right) = setup.initial.boundary_values();
                default_front_threshold(left.at(0.0), right.at(0.0))
            }
        };

        let mut config = self.clone();
        config.snapshots.sort_by(f64::total_cmp);
        config.snapshots.dedup();
        config.dt_factor = Some(factor);
        config.dt_power = Some(power);
        config.t_end = Some(t_end);
        config.front_threshold = Some(front_threshold);
        let run_id = self
            .run_id
            .clone()
            .unwrap_or_else(|| default_run_id(&config, &op));
        if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
            return Err(GpmeError::Config(format!("invalid run id {run_id:?}")));
        }
        config.run_id = Some(run_id.clone());

        Ok(ResolvedRun {
            config,
            setup,
            op,
            integrator,
            front_threshold,
            run_id,
        })
    }
}

fn as_config(e: GpmeError) -> GpmeError {
    match e {
        GpmeError::Config(_) => e,
        other => GpmeError::Config(other.to_string()),
    }
}

/// `front-pme3`, `tlp-pme3`, ...: the problem part of a run id.
fn problem_id(cfg: &RunConfig) -> String {
    let model = match cfg.model {
        ModelKind::Pme => format!("pme{}", cfg.m),
        ModelKind::Superslow => "superslow".into(),
        ModelKind::Linear => "linear".into(),
    };
    let preset = match cfg.preset {
        PresetKind::Front => "front",
        PresetKind::Linear => "linear",
        PresetKind::Tlp => "tlp",
    };
    format!("{preset}-{model}")
}

fn default_run_id(cfg: &RunConfig, op: &SpatialOperatorConfig) -> String {
    format!(
        "{}-n{}-{}-{}",
        problem_id(cfg),
        cfg.n,
        op.label(),
        cfg.scheme.label()
    )
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the resolved configuration, independent of where output goes.
pub fn config_hash(config: &RunConfig) -> Result<String> {
    let mut identity = config.clone();
    identity.outdir = PathBuf::new();
    identity.run_id = None;
    Ok(sha256_hex(&serde_json::to_vec(&identity)?))
}

/// Collects output files and their hashes for `meta.json`.
struct OutputDir {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutputDir {
    fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(OutputDir {
            dir,
            files: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn write_meta(&mut self, meta: serde_json::Value) -> Result<()> {
        let mut meta = meta;
        meta["files"] = serde_json::to_value(&self.files)?;
        let text = serde_json::to_string_pretty(&meta)? + "\n";
        fs::write(self.dir.join("meta.json"), text)?;
        Ok(())
    }
}

/// `snapshot_t0.08.csv` for `t = 0.08`.
pub fn snapshot_file_name(t: f64) -> String {
    format!("snapshot_t{t}.csv")
}

fn predictor_csv(out: &RunOutput, w: &mut Vec<u8>) -> Result<()> {
    writeln!(w, "t,min_effective_diffusion,n_violating_nodes")?;
    for row in &out.predictor {
        writeln!(
            w,
            "{},{},{}",
            fmt17(row.t),
            fmt17(row.min_effective_diffusion),
            row.n_violating_nodes
        )?;
    }
    Ok(())
}

/// Summary of one completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run: ResolvedRun,
    pub output: RunOutput,
    pub oscillations: Option<OscillationReport>,
    pub initial_front: f64,
    pub final_front: f64,
    pub dir: PathBuf,
}

fn execute(run: ResolvedRun, dir: PathBuf) -> Result<RunSummary> {
    let cfg = &run.config;
    let opts = RecordOptions {
        snapshot_times: cfg.snapshots.clone(),
        probe_x: cfg.probe,
        record_every: cfg.record_every,
        predictor: cfg.predictor,
        allow_unstable: cfg.allow_unstable,
    };
    let output = simulate(&run.setup, &run.op, &run.integrator, &opts)?;
    let mut files = OutputDir::create(dir.clone())?;

    let mut snapshot_fronts = BTreeMap::new();
    for (t, field) in cfg.snapshots.iter().zip(&output.snapshots) {
        let name = snapshot_file_name(*t);
        files.write_with(&name, |w| write_snapshot_csv(&run.setup.grid, field, w))?;
        snapshot_fronts.insert(
            name,
            track_front(&run.setup.grid, field, run.front_threshold),
        );
    }

    let mut oscillations = None;
    if let Some(probe) = &output.probe {
        files.write_with("probe.csv", |w| probe.write_csv(w))?;
        if probe.samples.len() >= 3 {
            let report = detect_oscillations(probe, cfg.noise_floor)?;
            files.write(
                "oscillations.json",
                (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
            )?;
            oscillations = Some(report);
        }
    }
    if cfg.predictor {
        files.write_with("predictor.csv", |w| predictor_csv(&output, w))?;
    }

    let final_front = track_front(&run.setup.grid, &output.final_field, run.front_threshold);
    let initial_front = {
        let initial = build_initial(&run.setup)?;
        track_front(&run.setup.grid, &initial, run.front_threshold)
    };
    let meta = serde_json::json!({
        "command": "run",
        "config": cfg,
        "config_hash": config_hash(cfg)?,
        "setup": run.setup,
        "operator": run.op,
        "integrator": run.integrator,
        "dt": output.dt,
        "steps": output.steps,
        "final_time": output.final_field.time,
        "max_stability_ratio": output.max_stability_ratio,
        "picard_iterations": output.picard_iterations,
        "front_threshold": run.front_threshold,
        "initial_front": initial_front,
        "final_front": final_front,
        "snapshot_fronts": snapshot_fronts,
    });
    files.write_meta(meta)?;
    Ok(RunSummary {
        run,
        output,
        oscillations,
        initial_front,
        final_front,
        dir,
    })
}

/// Run one configuration and write its output directory.
pub fn cmd_run(config: &RunConfig) -> Result<RunSummary> {
    let run = config.resolve()?;
    let dir = config.outdir.join(&run.run_id);
    execute(run, dir)
}

/// Per-scheme convergence table for one sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceOutcome {
    pub reference: String,
    pub reports: Vec<ConvergenceReport>,
}

/// Run `resolutions` for each operator and compare with the N = 3200 reference
/// (or the exact solution for the locking problem).
pub fn cmd_convergence(
    base: &RunConfig,
    resolutions: &[usize],
    operators: &[SpatialOperatorConfig],
    cache_dir: Option<&Path>,
) -> Result<ConvergenceOutcome> {
    if resolutions.is_empty() || operators.is_empty() {
        return Err(GpmeError::Config(
            "convergence needs at least one resolution and one scheme".into(),
        ));
    }
    if let Some(&n) = resolutions
        .iter()
        .find(|&&n| n == 0 || !REFERENCE_N.is_multiple_of(n) || n == REFERENCE_N)
    {
        return Err(GpmeError::Config(format!(
            "resolution {n} must be a proper divisor of {REFERENCE_N}"
        )));
    }
    let mut sorted = resolutions.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let resolved: Vec<Vec<ResolvedRun>> = operators
        .iter()
        .map(|op| {
            sorted
                .iter()
                .map(|&n| {
                    let mut cfg = base.clone();
                    cfg.n = n;
                    cfg.averaging = op.averaging;
                    cfg.mhm = op.mhm_enabled;
                    cfg.mhm_mode = op.mhm_mode;
                    cfg.mhm_switch = op.mhm_switch;
                    cfg.snapshots.clear();
                    cfg.probe = None;
                    cfg.predictor = false;
                    cfg.resolve()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let first = &resolved[0][0];
    let t_end = first.integrator.t_end;
    let (reference_label, reference_grid, reference): (String, Grid1D, Field) =
        if base.preset == PresetKind::Tlp {
            let grid = Grid1D::unit(REFERENCE_N)?;
            ("exact".into(), grid, tlp_exact_field(&grid, t_end))
        } else {
            let spec = ReferenceSpec::for_problem(&first.setup, &first.integrator)?;
            let field = reference_solution(&spec, cache_dir)?;
            (
                format!("arithmetic-fe-n{REFERENCE_N}-{}", spec.content_hash()?),
                spec.setup.grid,
                field,
            )
        };

    // independent runs; scoped threads keep the sweep deterministic
    let norms: Vec<Vec<Result<ErrorNorms>>> = std::thread::scope(|scope| {
        let handles: Vec<Vec<_>> = resolved
            .iter()
            .map(|runs| {
                runs.iter()
                    .map(|run| {
                        let reference = &reference;
                        let reference_grid = &reference_grid;
                        scope.spawn(move || {
                            let out = simulate(
                                &run.setup,
                                &run.op,
                                &run.integrator,
                                &RecordOptions::quiet(),
                            )?;
                            error_norms_all(
                                &run.setup.grid,
                                &out.final_field,
                                reference_grid,
                                reference,
                            )
                        })
                    })
                    .collect()
            })
            .collect();
        handles
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|h| h.join().expect("convergence worker panicked"))
                    .collect()
            })
            .collect()
    });

    let mut reports = Vec::new();
    for (op, row) in operators.iter().zip(norms) {
        let row: Vec<ErrorNorms> = row.into_iter().collect::<Result<_>>()?;
        reports.push(ConvergenceReport::from_norms(
            op.label(),
            sorted.clone(),
            &row,
        ));
    }
    Ok(ConvergenceOutcome {
        reference: reference_label,
        reports,
    })
}

fn write_convergence(base: &RunConfig, outcome: &ConvergenceOutcome) -> Result<PathBuf> {
    let run = base.resolve()?;
    let id = base
        .run_id
        .clone()
        .unwrap_or_else(|| format!("convergence-{}", problem_id(&run.config)));
    let dir = base.outdir.join(id);
    let mut files = OutputDir::create(dir.clone())?;
    for report in &outcome.reports {
        files.write_with(&format!("convergence_{}.csv", report.label), |w| {
            report.write_csv(w)
        })?;
    }
    files.write(
        "convergence.json",
        (serde_json::to_string_pretty(outcome)? + "\n").as_bytes(),
    )?;
    let mut cfg = run.config.clone();
    cfg.run_id = None;
    files.write_meta(serde_json::json!({
        "command": "convergence",
        "config": cfg,
        "config_hash": config_hash(&cfg)?,
        "reference": outcome.reference,
    }))?;
    Ok(dir)
}

/// Snapshot and probe overlays of several runs sharing grid and end time.
pub fn cmd_compare(
    configs: &[RunConfig],
    outdir: &Path,
    compare_id: &str,
) -> Result<Vec<RunSummary>> {
    if configs.is_empty() {
        return Err(GpmeError::Config(
            "compare needs at least one configuration".into(),
        ));
    }
    let runs: Vec<ResolvedRun> = configs
        .iter()
        .map(RunConfig::resolve)
        .collect::<Result<_>>()?;
    let first = &runs[0];
    for run in &runs[1..] {
        if !run.setup.grid.same_as(&first.setup.grid)
            || run.integrator.t_end != first.integrator.t_end
        {
            return Err(GpmeError::Argument(format!(
                "compare needs identical grids and end times; {} differs from {}",
                run.run_id, first.run_id
            )));
        }
        if run.config.snapshots != first.config.snapshots || run.config.probe != first.config.probe
        {
            return Err(GpmeError::Argument(
                "compare needs identical snapshot times and probe".into(),
            ));
        }
    }
    let mut labels: Vec<String> = Vec::new();
    for run in &runs {
        let label = format!("{}-{}", run.op.label(), run.config.scheme.label());
        if labels.contains(&label) {
            return Err(GpmeError::Argument(format!(
                "duplicate compare variant {label}"
            )));
        }
        labels.push(label);
    }

    let root = outdir.join(compare_id);
    let summaries: Vec<RunSummary> = runs
        .into_iter()
        .zip(&labels)
        .map(|(run, label)| execute(run, root.join(label)))
        .collect::<Result<_>>()?;

    let mut files = OutputDir::create(root.clone())?;
    let grid = summaries[0].run.setup.grid;
    for (k, t) in summaries[0].run.config.snapshots.iter().enumerate() {
        files.write_with(&format!("compare_{}", snapshot_file_name(*t)), |w| {
            writeln!(w, "x,{}", labels.join(","))?;
            for i in 0..grid.num_nodes() {
                write!(w, "{}", fmt17(grid.x(i)))?;
                for s in &summaries {
                    write!(w, ",{}", fmt17(s.output.snapshots[k].values[i]))?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;
    }
    if summaries[0].output.probe.is_some() {
        let probes: Vec<&[(f64, f64)]> = summaries
            .iter()
            .map(|s| {
                s.output
                    .probe
                    .as_ref()
                    .map(|p| p.samples.as_slice())
                    .unwrap_or(&[])
            })
            .collect();
        let shared_times = probes.iter().all(|p| {
            p.len() == probes[0].len() && p.iter().zip(probes[0]).all(|(a, b)| a.0 == b.0)
        });
        files.write_with("compare_probe.csv", |w| {
            if shared_times {
                writeln!(w, "t,{}", labels.join(","))?;
                for (j, &(t, _)) in probes[0].iter().enumerate() {
                    write!(w, "{}", fmt17(t))?;
                    for p in &probes {
                        write!(w, ",{}", fmt17(p[j].1))?;
                    }
                    writeln!(w)?;
                }
            } else {
                // different step sizes: one (t, p) column pair per variant, padded
                let header: Vec<String> = labels.iter().map(|l| format!("t_{l},p_{l}")).collect();
                writeln!(w, "{}", header.join(","))?;
                let rows = probes.iter().map(|p| p.len()).max().unwrap_or(0);
                for j in 0..rows {
                    let cells: Vec<String> = probes
                        .iter()
                        .map(|p| match p.get(j) {
                            Some(&(t, v)) => format!("{},{}", fmt17(t), fmt17(v)),
                            None => ",".into(),
                        })
                        .collect();
                    writeln!(w, "{}", cells.join(","))?;
                }
            }
            Ok(())
        })?;
    }
    let variants: Vec<serde_json::Value> = summaries
        .iter()
        .zip(&labels)
        .map(|(s, label)| {
            serde_json::json!({
                "label": label,
                "config_hash": config_hash(&s.run.config).unwrap_or_default(),
                "final_front": s.final_front,
                "oscillations": s.oscillations,
            })
        })
        .collect();
    files.write_meta(serde_json::json!({ "command": "compare", "variants": variants }))?;
    Ok(summaries)
}

#[derive(Debug, Parser)]
#[command(
    name = "gpme",
    version,
    about = "Finite-volume lab for the degenerate generalized porous medium equation p_t = (k(p) p_x)_x"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one configuration and write snapshots, probe, oscillation and predictor reports.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Error norms and fitted orders against the N = 3200 reference (exact solution for tlp).
    Convergence {
        #[command(flatten)]
        config: ConfigArgs,
        /// Resolutions; each must divide 3200.
        #[arg(long, value_delimiter = ',', default_values_t = [100usize, 200, 400, 800])]
        ns: Vec<usize>,
        /// Spatial schemes to sweep.
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [AvgArg::Arithmetic, AvgArg::Harmonic, AvgArg::Mhm])]
        schemes: Vec<AvgArg>,
        /// Reference cache directory (default: <outdir>/reference-cache).
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Recompute the reference instead of using the cache.
        #[arg(long)]
        no_cache: bool,
    },
    /// Overlay several averaging rules and/or time schemes on one grid.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Averaging variants to overlay.
        #[arg(long, value_enum, value_delimiter = ',')]
        avgs: Vec<AvgArg>,
        /// Time-integration variants to overlay.
        #[arg(long, value_enum, value_delimiter = ',')]
        schemes: Vec<SchemeArg>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AvgArg {
    Arithmetic,
    Harmonic,
    /// Harmonic averaging plus the MHM correction.
    Mhm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Fe,
    Be,
    Rk2,
}

impl From<SchemeArg> for TimeScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Fe => TimeScheme::ForwardEuler,
            SchemeArg::Be => TimeScheme::BackwardEuler,
            SchemeArg::Rk2 => TimeScheme::TvdRk2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PowerArg {
    /// dt = dx^2 / factor
    Dx2,
    /// dt = dx * factor
    Dx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MhmModeArg {
    Full,
    Term1,
    Term2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SwitchArg {
    Global,
    Local,
}

/// Flags shared by all subcommands; each overrides the JSON config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON file with a RunConfig; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// PME exponent m in k(p) = p^m.
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetKind>,
    /// Number of grid intervals.
    #[arg(long)]
    pub n: Option<usize>,
    /// Face averaging; `mhm` selects harmonic averaging with the MHM correction.
    #[arg(long, value_enum)]
    pub avg: Option<AvgArg>,
    /// Enable the MHM correction (requires harmonic averaging).
    #[arg(long)]
    pub mhm: bool,
    #[arg(long, value_enum)]
    pub mhm_mode: Option<MhmModeArg>,
    #[arg(long, value_enum)]
    pub mhm_switch: Option<SwitchArg>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// dt = dx^2 / factor (or dx * factor with --dt-power dx).
    #[arg(long)]
    pub dt_factor: Option<f64>,
    #[arg(long, value_enum)]
    pub dt_power: Option<PowerArg>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Snapshot time; repeat or comma-separate for several.
    #[arg(long = "snapshot", value_delimiter = ',')]
    pub snapshots: Vec<f64>,
    /// Probe position; the nearest node is sampled every step.
    #[arg(long)]
    pub probe: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub noise_floor: Option<f64>,
    #[arg(long)]
    pub front_threshold: Option<f64>,
    /// Skip the anti-diffusion predictor report.
    #[arg(long)]
    pub no_predictor: bool,
    /// Run explicit schemes even when the stability heuristic fails.
    #[arg(long)]
    pub allow_unstable: bool,
    #[arg(long)]
    pub picard_max_iters: Option<usize>,
    #[arg(long)]
    pub picard_tol: Option<f64>,
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
}

fn apply_avg(cfg: &mut RunConfig, avg: AvgArg) {
    match avg {
        AvgArg::Arithmetic => {
            cfg.averaging = AveragingRule::Arithmetic;
            cfg.mhm = false;
        }
        AvgArg::Harmonic => {
            cfg.averaging = AveragingRule::Harmonic;
            cfg.mhm = false;
        }
        AvgArg::Mhm => {
            cfg.averaging = AveragingRule::Harmonic;
            cfg.mhm = true;
        }
    }
}

impl ConfigArgs {
    /// Config file (or defaults) with every given flag applied on top.
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.preset {
            cfg.preset = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.avg {
            apply_avg(&mut cfg, v);
        }
        if self.mhm {
            cfg.mhm = true;
        }
        if let Some(v) = self.mhm_mode {
            cfg.mhm_mode = match v {
                MhmModeArg::Full => MhmMode::Full,
                MhmModeArg::Term1 => MhmMode::TermIOnly,
                MhmModeArg::Term2 => MhmMode::TermIIOnly,
            };
        }
        if let Some(v) = self.mhm_switch {
            cfg.mhm_switch = match v {
                SwitchArg::Global => MhmSwitch::Global,
                SwitchArg::Local => MhmSwitch::Local,
            };
        }
        if let Some(v) = self.scheme {
            cfg.scheme = v.into();
        }
        if let Some(v) = self.dt_factor {
            cfg.dt_factor = Some(v);
        }
        if let Some(v) = self.dt_power {
            cfg.dt_power = Some(match v {
                PowerArg::Dx2 => DtPower::DxSquared,
                PowerArg::Dx => DtPower::Dx,
            });
        }
        if let Some(v) = self.t_end {
            cfg.t_end = Some(v);
        }
        if !self.snapshots.is_empty() {
            cfg.snapshots = self.snapshots.clone();
        }
        if let Some(v) = self.probe {
            cfg.probe = Some(v);
        }
        if let Some(v) = self.record_every {
            cfg.record_every = v;
        }
        if let Some(v) = self.noise_floor {
            cfg.noise_floor = v;
        }
        if let Some(v) = self.front_threshold {
            cfg.front_threshold = Some(v);
        }
        if self.no_predictor {
            cfg.predictor = false;
        }
        if self.allow_unstable {
            cfg.allow_unstable = true;
        }
        if let Some(v) = self.picard_max_iters {
            cfg.picard_max_iters = v;
        }
        if let Some(v) = self.picard_tol {
            cfg.picard_tol = v;
        }
        if let Some(v) = &self.outdir {
            cfg.outdir = v.clone();
        }
        if let Some(v) = &self.run_id {
            cfg.run_id = Some(v.clone());
        }
        Ok(cfg)
    }
}

fn avg_operator(avg: AvgArg, base: &RunConfig) -> SpatialOperatorConfig {
    let mut cfg = base.clone();
    apply_avg(&mut cfg, avg);
    cfg.operator()
}

fn describe_run(s: &RunSummary) -> String {
    let mut line = format!(
        "{}: {} steps, dt = {:.4e}, t = {}, front {:.4} -> {:.4}",
        s.run.run_id,
        s.output.steps,
        s.output.dt,
        s.output.final_field.time,
        s.initial_front,
        s.final_front
    );
    if let Some(osc) = &s.oscillations {
        line.push_str(&format!(
            ", probe extrema {} min / {} max (amplitude {:.3e})",
            osc.n_minima, osc.n_maxima, osc.max_amplitude
        ));
    }
    if let Some(v) = s.output.predictor.iter().map(|r| r.n_violating_nodes).max() {
        line.push_str(&format!(", predictor max violating nodes {v}"));
    }
    line
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = config.to_config()?;
            let summary = cmd_run(&cfg)?;
            println!("{}", describe_run(&summary));
            println!("wrote {}", summary.dir.display());
        }
        Command::Convergence {
            config,
            ns,
            schemes,
            cache,
            no_cache,
        } => {
            let cfg = config.to_config()?;
            let operators: Vec<SpatialOperatorConfig> =
                schemes.iter().map(|&a| avg_operator(a, &cfg)).collect();
            let cache = cache.unwrap_or_else(|| cfg.outdir.join("reference-cache"));
            let outcome = cmd_convergence(
                &cfg,
                &ns,
                &operators,
                (!no_cache).then_some(cache.as_path()),
            )?;
            for r in &outcome.reports {
                let order = |o: Option<f64>| o.map_or("n/a".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{:<12} l2 {:?}  order l1 {} l2 {} linf {}",
                    r.label,
                    r.errors_l2
                        .iter()
                        .map(|e| format!("{e:.4e}"))
                        .collect::<Vec<_>>(),
                    order(r.order_l1),
                    order(r.order_l2),
                    order(r.order_linf)
                );
            }
            let dir = write_convergence(&cfg, &outcome)?;
            println!("wrote {}", dir.display());
        }
        Command::Compare {
            config,
            avgs,
            schemes,
        } => {
            let base = config.to_config()?;
            let avgs: Vec<Option<AvgArg>> = if avgs.is_empty() {
                vec![None]
            } else {
                avgs.into_iter().map(Some).collect()
            };
            let schemes: Vec<Option<SchemeArg>> = if schemes.is_empty() {
                vec![None]
            } else {
                schemes.into_iter().map(Some).collect()
            };
            let mut configs = Vec::new();
            for a in &avgs {
                for s in &schemes {
                    let mut cfg = base.clone();
                    if let Some(a) = a {
                        apply_avg(&mut cfg, *a);
                    }
                    if let Some(s) = s {
                        cfg.scheme = (*s).into();
                        // each scheme gets its own default step unless one was given
                        if config.dt_factor.is_none() {
                            cfg.dt_factor = None;
                        }
                    }
                    cfg.run_id = None;
                    configs.push(cfg);
                }
            }
            let compare_id = base
                .run_id
                .clone()
                .unwrap_or_else(|| format!("compare-{}-n{}", problem_id(&base), base.n));
            let summaries = cmd_compare(&configs, &base.outdir, &compare_id)?;
            for s in &summaries {
                println!("{}", describe_run(s));
            }
            println!("wrote {}", base.outdir.join(compare_id).display());
        }
    }
    Ok(())
}

/// Parse arguments, run, and map errors to exit codes (2 config, 3 numerical).
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_standard_setup() {
        let run = RunConfig::default().resolve().unwrap();
        assert_eq!(run.integrator.dt_rule, DtRule::dx_squared_over(16.0));
        assert_eq!(run.integrator.t_end, 0.5);
        assert_eq!(run.run_id, "front-pme3-n50-harmonic-fe");
        assert!((run.front_threshold - 0.195).abs() < 1e-15);
    }

    #[test]
    fn backward_euler_defaults_to_dt_equal_dx() {
        let cfg = RunConfig {
            scheme: TimeScheme::BackwardEuler,
            ..RunConfig::default()
        };
        let run = cfg.resolve().unwrap();
        assert_eq!(run.integrator.dt_rule, DtRule::dx_times(1.0));
    }

    #[test]
    fn invalid_combinations_are_config_errors() {
        let mhm_arith = RunConfig {
            averaging: AveragingRule::Arithmetic,
            mhm: true,
            ..RunConfig::default()
        };
        let mhm_be = RunConfig {
            mhm: true,
            scheme: TimeScheme::BackwardEuler,
            ..RunConfig::default()
        };
        let bad_m = RunConfig {
            m: 0.5,
            ..RunConfig::default()
        };
        let bad_snapshot = RunConfig {
            snapshots: vec![0.9],
            ..RunConfig::default()
        };
        for cfg in [mhm_arith, mhm_be, bad_m, bad_snapshot] {
            let err = cfg.resolve().unwrap_err();
            assert_eq!(err.exit_code(), 2, "{err}");
        }
    }

    #[test]
    fn convergence_resolutions_must_divide_reference() {
        let err = cmd_convergence(
            &RunConfig::default(),
            &[100, 300],
            &[SpatialOperatorConfig::harmonic()],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, GpmeError::Config(_)));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(
            &path,
            r#"{"m": 2.0, "n": 100, "averaging": "arithmetic", "probe": 0.12}"#,
        )
        .unwrap();
        let args = ConfigArgs {
            config: Some(path),
            n: Some(200),
            ..ConfigArgs::default()
        };
        let cfg = args.to_config().unwrap();
        assert_eq!(
            (cfg.m, cfg.n, cfg.averaging, cfg.probe),
            (2.0, 200, AveragingRule::Arithmetic, Some(0.12))
        );
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"mm": 2.0}"#).unwrap();
        assert!(matches!(
            RunConfig::from_json_file(&path),
            Err(GpmeError::Config(_))
        ));
    }

    #[test]
    fn config_hash_ignores_output_location() {
        let a = RunConfig::default().resolve().unwrap().config;
        let mut b = a.clone();
        b.outdir = PathBuf::from("elsewhere");
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.n = 100;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }

    #[test]
    fn snapshot_names() {
        assert_eq!(snapshot_file_name(0.08), "snapshot_t0.08.csv");
        assert_eq!(snapshot_file_name(0.5), "snapshot_t0.5.csv");
    }
}
