//! A user-specified problem and initial condition, with residual diagnostics
//! in place of an oracle.

use super::{
    inflate, record_failure, rng_for, sampling_policy, solve, streams, theta_at, Comparison, ExperimentConfig,
    RunOutcome,
};
use crate::assembly::{assemble, solve_theta_dot};
use crate::error::{Error, Result};
use crate::fitting::fit_initial;
use crate::metrics::residual_on;
use crate::pde::{Domain, InitialCondition};
use crate::rng::stream;
use crate::sampling::{draw, Measure};

pub(super) fn run(cfg: &ExperimentConfig, out: &mut RunOutcome) -> Result<()> {
    let problem = cfg.problem.clone().ok_or_else(|| Error::Config("custom run needs [problem]".into()))?;
    let initial = cfg.initial.clone().ok_or_else(|| Error::Config("custom run needs [initial]".into()))?;
    problem.validate()?;
    if problem.dim != cfg.net.dim {
        return Err(Error::Config("problem dimension must match net.dim".into()));
    }
    let fit_measure = match (&problem.domain, &initial) {
        (Domain::PeriodicBox { lo, period }, _) => {
            Measure::uniform_box(lo.clone(), lo.iter().zip(period).map(|(a, p)| a + p).collect())?
        }
        (Domain::UnboundedRd, InitialCondition::Packets(p)) => inflate(&p.law(&vec![0.0; p.dim])?, cfg.fit_spread)?,
        (Domain::UnboundedRd, _) => Measure::uniform_box(cfg.sampling.lo.clone(), cfg.sampling.hi.clone())?,
    };
    let u0 = |x: &[f64]| initial.eval(x);
    let (theta0, report) = fit_initial(&cfg.net, &u0, &fit_measure, &cfg.fitting, &mut rng_for(cfg, streams::FIT))?;
    out.fits.push(("neural_galerkin".into(), report));
    let policy = sampling_policy(cfg)?;
    let (record, err) =
        solve(cfg, &cfg.net, &problem, &policy, &cfg.integrator, &theta0, &mut rng_for(cfg, streams::SOLVE));
    record_failure(out, "neural_galerkin", &err);

    for (k, t) in cfg.snapshot_times().into_iter().enumerate() {
        let Some(theta) = theta_at(&record, k) else { break };
        let mut rng = stream(cfg.seed, (streams::METRICS << 32) | k as u64);
        let measure = policy.measure_at(&cfg.net, theta)?;
        let samples = draw(&measure, policy.n, &mut rng)?;
        let sys = assemble(&cfg.net, theta, &problem, t, &samples, None, policy.regularization)?;
        let eta = solve_theta_dot(&sys)?;
        let probe = draw(&measure, cfg.metrics.residual_samples, &mut rng)?;
        out.push("neural_galerkin", "residual", t, residual_on(&cfg.net, theta, &eta, &problem, t, &probe)?);
        let energy = residual_on(&cfg.net, theta, &vec![0.0; eta.len()], &problem, t, &probe)?;
        out.push("neural_galerkin", "rhs_energy", t, energy);
    }
    let worst = out.value("neural_galerkin", "residual").into_iter().fold(0.0, |m, (_, r)| f64::max(m, r));
    out.check(cfg, "residual_max", worst, Comparison::AtMost);
    out.trajectories.push(("neural_galerkin".into(), cfg.net.clone(), record));
    Ok(())
}
