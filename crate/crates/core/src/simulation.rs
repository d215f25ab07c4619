//! Run driver: marches a problem to `t_end`, landing exactly on snapshot
//! times, and records the probe series, the predictor and the stability ratio.

use serde::Serialize;

use crate::diagnostics::ProbeSeries;
use crate::error::{GpmeError, Result};
use crate::flux::SpatialOperatorConfig;
use crate::grid::{apply_bc, build_initial, Field, ProblemSetup};
use crate::modeq::oscillation_predictor;
use crate::timestepping::{stability_guard, IntegratorConfig, Stepper, STABILITY_LIMIT};

#[derive(Debug, Clone, PartialEq)]
pub struct RecordOptions {
    pub snapshot_times: Vec<f64>,
    pub probe_x: Option<f64>,
    /// Record probe/predictor every this many steps (the last step is always recorded).
    pub record_every: usize,
    pub predictor: bool,
    /// Run explicit schemes even when the stability heuristic fails.
    pub allow_unstable: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        RecordOptions {
            snapshot_times: Vec::new(),
            probe_x: None,
            record_every: 1,
            predictor: false,
            allow_unstable: false,
        }
    }
}

impl RecordOptions {
    /// Final state only.
    pub fn quiet() -> Self {
        RecordOptions::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictorRow {
    pub t: f64,
    pub min_effective_diffusion: f64,
    pub n_violating_nodes: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_field: Field,
    pub snapshots: Vec<Field>,
    pub probe: Option<ProbeSeries>,
    pub predictor: Vec<PredictorRow>,
    pub steps: usize,
    pub dt: f64,
    pub max_stability_ratio: f64,
    pub picard_iterations: usize,
}

/// Integrate `setup` from its initial state to `integrator.t_end`.
pub fn simulate(
    setup: &ProblemSetup,
    op: &SpatialOperatorConfig,
    integrator: &IntegratorConfig,
    opts: &RecordOptions,
) -> Result<RunOutput> {
    integrator.validate(op)?;
    let field = build_initial(setup)?;
    simulate_from(field, setup, op, integrator, opts)
}

/// Integrate from an arbitrary starting field.
pub fn simulate_from(
    mut field: Field,
    setup: &ProblemSetup,
    op: &SpatialOperatorConfig,
    integrator: &IntegratorConfig,
    opts: &RecordOptions,
) -> Result<RunOutput> {
    integrator.validate(op)?;
    let dx = setup.grid.dx();
    let dt = integrator.dt_rule.dt(dx);
    let t_end = integrator.t_end;
    let mut stops: Vec<f64> = opts
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t > field.time && t <= t_end)
        .collect();
    for &t in &opts.snapshot_times {
        if !(t >= 0.0 && t <= t_end) {
            return Err(GpmeError::Config(format!(
                "snapshot time {t} outside [0, {t_end}]"
            )));
        }
    }
    stops.push(t_end);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let record_every = opts.record_every.max(1);
    let explicit = integrator.scheme.is_explicit();
    let mut snapshots: Vec<Field> = opts
        .snapshot_times
        .iter()
        .filter(|&&t| t == field.time)
        .map(|_| field.clone())
        .collect();
    let mut probe = opts.probe_x.map(|x| ProbeSeries::new(&setup.grid, x));
    let mut predictor = Vec::new();
    let mut max_ratio = 0.0_f64;

    let unstable = |ratio: f64, step: usize, time: f64| {
        GpmeError::Numerical {
        step: Some(step),
        node: None,
        time: Some(time),
        message: format!(
            "explicit step violates the stability heuristic (2 k_max dt / dx^2 = {ratio:.4}); use a larger dt factor"
        ),
    }
    };
    let observe = |field: &Field,
                   probe: &mut Option<ProbeSeries>,
                   predictor: &mut Vec<PredictorRow>,
                   step: usize|
     -> Result<()> {
        if let Some(p) = probe.as_mut() {
            p.record(field)?;
        }
        if opts.predictor {
            let r = oscillation_predictor(field, &setup.model, dt, dx)
                .map_err(|e| GpmeError::numerical(None, e.to_string()).at_step(step, field.time))?;
            predictor.push(PredictorRow {
                t: field.time,
                min_effective_diffusion: r.min_effective_diffusion,
                n_violating_nodes: r.violating_nodes.len(),
            });
        }
        Ok(())
    };

    let initial = stability_guard(&field, &setup.model, dt, dx);
    max_ratio = max_ratio.max(initial.ratio);
    if explicit && !initial.ok && !opts.allow_unstable {
        return Err(unstable(initial.ratio, 0, field.time));
    }
    observe(&field, &mut probe, &mut predictor, 0)?;

    let mut stepper = Stepper::new(setup, *op, integrator.nonlinear_solver);
    let mut steps = 0usize;
    let mut picard_iterations = 0usize;
    // times are `base + k dt` rather than a running sum, so long runs do not drift
    let mut base = field.time;
    let mut k = 0usize;
    for &stop in &stops {
        while field.time < stop {
            // avoid a sliver step when the remaining time is within round-off of dt
            let remaining = stop - field.time;
            let land = remaining <= dt * (1.0 + 1e-9);
            let target = if land {
                stop
            } else {
                base + (k + 1) as f64 * dt
            };
            let h = target - field.time;
            let t_before = field.time;
            let stats = stepper
                .step(integrator.scheme, &mut field, h)
                .map_err(|e| e.at_step(steps + 1, t_before))?;
            if explicit {
                // k_max of the states the step actually used, so no extra sweep is needed
                let ratio = 2.0 * stepper.last_k_max() * dt / (dx * dx);
                max_ratio = max_ratio.max(ratio);
                if ratio > STABILITY_LIMIT && !opts.allow_unstable {
                    return Err(unstable(ratio, steps + 1, t_before));
                }
            }
            if field.time != target {
                field.time = target;
                apply_bc(&mut field, setup, target);
            }
            if land {
                base = stop;
                k = 0;
            } else {
                k += 1;
            }
            steps += 1;
            picard_iterations += stats.iterations;
            let last = land && stop == t_end;
            if steps.is_multiple_of(record_every) || last {
                observe(&field, &mut probe, &mut predictor, steps)?;
            }
        }
        if opts.snapshot_times.contains(&stop) {
            snapshots.push(field.clone());
        }
    }

    Ok(RunOutput {
        final_field: field,
        snapshots,
        probe,
        predictor,
        steps,
        dt,
        max_stability_ratio: max_ratio,
        picard_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientModel;
    use crate::grid::{Grid1D, InitialPreset};
    use crate::timestepping::{DtRule, TimeScheme};

    #[test]
    fn lands_on_snapshot_and_end_times() {
        let setup = ProblemSetup::new(
            Grid1D::unit(20).unwrap(),
            InitialPreset::front(),
            CoefficientModel::Pme { m: 2.0 },
        );
        let integ = IntegratorConfig::new(
            TimeScheme::ForwardEuler,
            DtRule::dx_squared_over(8.0),
            0.013,
        );
        let opts = RecordOptions {
            snapshot_times: vec![0.0, 0.005],
            probe_x: Some(0.1),
            ..RecordOptions::default()
        };
        let out = simulate(&setup, &SpatialOperatorConfig::harmonic(), &integ, &opts).unwrap();
        assert_eq!(out.final_field.time, 0.013);
        assert_eq!(out.snapshots.len(), 2);
        assert_eq!(out.snapshots[0].time, 0.0);
        assert_eq!(out.snapshots[1].time, 0.005);
        let probe = out.probe.unwrap();
        assert_eq!(probe.samples.len(), out.steps + 1);
        assert!(probe.samples.windows(2).all(|w| w[1].0 > w[0].0));
        assert_eq!(probe.samples.last().unwrap().0, 0.013);
    }

    #[test]
    fn long_runs_take_the_exact_number_of_steps() {
        let setup = ProblemSetup::new(
            Grid1D::unit(100).unwrap(),
            InitialPreset::front(),
            CoefficientModel::Pme { m: 3.0 },
        );
        let integ =
            IntegratorConfig::new(TimeScheme::ForwardEuler, DtRule::dx_squared_over(16.0), 0.5);
        let opts = RecordOptions {
            snapshot_times: vec![0.08],
            ..RecordOptions::default()
        };
        let out = simulate(&setup, &SpatialOperatorConfig::arithmetic(), &integ, &opts).unwrap();
        assert_eq!(out.steps, 80_000);
        assert_eq!(out.snapshots[0].time, 0.08);
        assert_eq!(out.final_field.time, 0.5);
    }

    #[test]
    fn unstable_explicit_run_is_refused() {
        let setup = ProblemSetup::new(
            Grid1D::unit(20).unwrap(),
            InitialPreset::front(),
            CoefficientModel::Pme { m: 3.0 },
        );
        let integ =
            IntegratorConfig::new(TimeScheme::ForwardEuler, DtRule::dx_squared_over(2.0), 0.01);
        let err = simulate(
            &setup,
            &SpatialOperatorConfig::arithmetic(),
            &integ,
            &RecordOptions::quiet(),
        )
        .unwrap_err();
        assert!(matches!(err, GpmeError::Numerical { step: Some(0), .. }));
    }

    #[test]
    fn snapshot_outside_run_is_a_config_error() {
        let setup = ProblemSetup::tlp(20).unwrap();
        let integ = IntegratorConfig::new(
            TimeScheme::ForwardEuler,
            DtRule::dx_squared_over(16.0),
            0.01,
        );
        let opts = RecordOptions {
            snapshot_times: vec![0.5],
            ..RecordOptions::default()
        };
        assert!(matches!(
            simulate(&setup, &SpatialOperatorConfig::arithmetic(), &integ, &opts),
            Err(GpmeError::Config(_))
        ));
    }
}
