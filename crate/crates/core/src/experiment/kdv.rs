//! Two-soliton KdV run against two frozen-feature linear baselines.

use super::{
    grid_errors, problem_or, record_failure, rng_for, sampling_policy, solve, streams, Comparison, ExperimentConfig,
    RunOutcome,
};
use crate::error::{Error, Result};
use crate::fitting::{fit_initial, project_coefficients};
use crate::params::NetSpec;
use crate::pde::{InitialCondition, PdeProblem, TwoSoliton};
use crate::sampling::{Measure, SampleSet};

pub(super) fn run(cfg: &ExperimentConfig, out: &mut RunOutcome) -> Result<()> {
    let period = cfg
        .net
        .architecture
        .period()
        .ok_or_else(|| Error::Config("the KdV run needs a periodic architecture".into()))?;
    let lo = cfg.sampling.lo[0];
    let problem = problem_or(cfg, PdeProblem::kdv(lo, period))?;
    let initial = cfg.initial.clone().unwrap_or(InitialCondition::TwoSoliton(TwoSoliton::default()));
    let solitons = match &initial {
        InitialCondition::TwoSoliton(s) => s.clone(),
        _ => return Err(Error::Config("the KdV run compares against the two-soliton solution".into())),
    };
    solitons.validate()?;
    let u0 = |x: &[f64]| solitons.eval(0.0, x[0]);
    let domain = Measure::uniform_box(vec![lo], vec![lo + period])?;
    let times = cfg.snapshot_times();
    let n_grid = cfg.metrics.grid;
    let grid: Vec<f64> = (0..n_grid).map(|j| lo + period * j as f64 / n_grid as f64).collect();
    let reference: Vec<Vec<f64>> = times.iter().map(|&t| grid.iter().map(|&x| solitons.eval(t, x)).collect()).collect();
    let policy = sampling_policy(cfg)?;

    let (theta0, report) = fit_initial(&cfg.net, &u0, &domain, &cfg.fitting, &mut rng_for(cfg, streams::FIT))?;
    out.fits.push(("neural_galerkin".into(), report));
    let (record, err) =
        solve(cfg, &cfg.net, &problem, &policy, &cfg.integrator, &theta0, &mut rng_for(cfg, streams::SOLVE));
    record_failure(out, "neural_galerkin", &err);
    let ng = grid_errors(out, "neural_galerkin", &cfg.net, &record, &times, &grid, &reference)?;
    out.trajectories.push(("neural_galerkin".into(), cfg.net.clone(), record));
    out.check(cfg, "ng_error_max", ng, Comparison::Below);

    if !cfg.baselines.enabled {
        return Ok(());
    }
    let b = &cfg.baselines;
    let linear = NetSpec::new(cfg.net.architecture.clone(), b.width, 1).frozen();
    let grid_samples = SampleSet::from_points(&domain, grid.clone())?;

    let mut equidistant = vec![0.0; linear.param_count()?];
    for (i, node) in equidistant.chunks_exact_mut(3).enumerate() {
        node[1] = b.bandwidth;
        node[2] = lo + period * i as f64 / b.width as f64;
    }
    project_coefficients(&linear, &mut equidistant, &u0, &grid_samples)?;

    let free = NetSpec { frozen_features: false, ..linear.clone() };
    let (mut fitted, report) =
        fit_initial(&free, &u0, &domain, &cfg.fitting, &mut rng_for(cfg, streams::BASELINE_FIT))?;
    out.fits.push(("linear_fitted".into(), report));
    project_coefficients(&linear, &mut fitted, &u0, &grid_samples)?;

    let mut worst_ratio = f64::INFINITY;
    for (name, theta) in [("linear_equidistant", equidistant), ("linear_fitted", fitted)] {
        let (record, err) =
            solve(cfg, &linear, &problem, &policy, &b.integrator, &theta, &mut rng_for(cfg, streams::BASELINE_SOLVE));
        record_failure(out, name, &err);
        let e = grid_errors(out, name, &linear, &record, &times, &grid, &reference)?;
        out.trajectories.push((name.into(), linear.clone(), record));
        worst_ratio = worst_ratio.min(e / ng);
    }
    out.check(cfg, "baseline_factor_min", worst_ratio, Comparison::AtLeast);
    Ok(())
}
