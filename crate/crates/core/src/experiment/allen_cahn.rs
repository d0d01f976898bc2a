//! Allen–Cahn run against a finite-difference reference and a 16-node
//! linear baseline.

use std::f64::consts::PI;

use super::{
    grid_errors, problem_or, record_failure, rng_for, sampling_policy, solve, streams, Comparison, ExperimentConfig,
    RunOutcome,
};
use crate::error::{Error, Result};
use crate::fitting::{fit_initial, project_coefficients};
use crate::metrics::rel_l2_error;
use crate::oracles::ac_reference;
use crate::params::{Architecture, NetSpec};
use crate::pde::{Domain, InitialCondition, PdeKind, PdeProblem, ReactionCoefficient};
use crate::sampling::{Measure, SampleSet};

pub(super) fn default_problem() -> Result<PdeProblem> {
    PdeProblem::new(
        PdeKind::AllenCahn { epsilon: 5e-2, reaction: ReactionCoefficient { base: 1.05, slope: 1.0 } },
        1,
        Domain::PeriodicBox { lo: vec![0.0], period: vec![2.0 * PI] },
    )
}

pub(super) fn run(cfg: &ExperimentConfig, out: &mut RunOutcome) -> Result<()> {
    let problem = problem_or(cfg, default_problem()?)?;
    let (epsilon, reaction) = match &problem.kind {
        PdeKind::AllenCahn { epsilon, reaction } => (*epsilon, reaction.clone()),
        _ => return Err(Error::Config("the Allen–Cahn run needs an Allen–Cahn problem".into())),
    };
    let (lo, period) = match &problem.domain {
        Domain::PeriodicBox { lo, period } => (lo[0], period[0]),
        Domain::UnboundedRd => return Err(Error::Config("the Allen–Cahn run needs a periodic domain".into())),
    };
    let initial = cfg.initial.clone().unwrap_or(InitialCondition::allen_cahn(period));
    let u0 = |x: &[f64]| initial.eval(x);
    let times = cfg.snapshot_times();
    let r = &cfg.reference;

    let reference =
        ac_reference(r.grid, lo, period, r.dt, epsilon, |t, x| reaction.at(t, x), |x| initial.eval(&[x]), &times)?;
    if r.convergence_check {
        let fine = ac_reference(
            2 * r.grid,
            lo,
            period,
            0.5 * r.dt,
            epsilon,
            |t, x| reaction.at(t, x),
            |x| initial.eval(&[x]),
            &times,
        )?;
        let restricted: Vec<Vec<f64>> = fine.u.iter().map(|u| u.iter().step_by(2).copied().collect()).collect();
        let change = rel_l2_error(&restricted, &reference.u)?;
        out.push("reference", "refinement_change", cfg.t_end, change);
        out.check(cfg, "reference_change_max", change, Comparison::Below);
    }

    let domain = Measure::uniform_box(vec![lo], vec![lo + period])?;
    let policy = sampling_policy(cfg)?;
    let (theta0, report) = fit_initial(&cfg.net, &u0, &domain, &cfg.fitting, &mut rng_for(cfg, streams::FIT))?;
    out.fits.push(("neural_galerkin".into(), report));
    let (record, err) =
        solve(cfg, &cfg.net, &problem, &policy, &cfg.integrator, &theta0, &mut rng_for(cfg, streams::SOLVE));
    record_failure(out, "neural_galerkin", &err);
    let ng = grid_errors(out, "neural_galerkin", &cfg.net, &record, &times, &reference.x, &reference.u)?;
    out.trajectories.push(("neural_galerkin".into(), cfg.net.clone(), record));

    if !cfg.baselines.enabled {
        return Ok(());
    }
    let b = &cfg.baselines;
    let linear = NetSpec::new(Architecture::ShallowPeriodicGaussian { period }, b.width, 1).frozen();
    let mut theta = vec![0.0; linear.param_count()?];
    for (i, node) in theta.chunks_exact_mut(3).enumerate() {
        node[1] = b.bandwidth;
        node[2] = lo + period * i as f64 / b.width as f64;
    }
    let grid_samples = SampleSet::from_points(&domain, reference.x.clone())?;
    project_coefficients(&linear, &mut theta, &u0, &grid_samples)?;
    let (record, err) =
        solve(cfg, &linear, &problem, &policy, &b.integrator, &theta, &mut rng_for(cfg, streams::BASELINE_SOLVE));
    record_failure(out, "linear_equidistant", &err);
    let e = grid_errors(out, "linear_equidistant", &linear, &record, &times, &reference.x, &reference.u)?;
    out.trajectories.push(("linear_equidistant".into(), linear, record));
    out.check(cfg, "baseline_factor_min", e / ng, Comparison::AtLeast);
    Ok(())
}
