//! High-dimensional advection: adaptive against static sampling, and the
//! forward–backward round trip.

use super::{
    blend, inflate, problem_or, record_failure, rng_for, sampling_policy, solve, static_policy, streams, theta_at,
    Comparison, ExperimentConfig, RunOutcome,
};
use crate::assembly::{assemble, solve_theta_dot};
use crate::error::{Error, Result};
use crate::fitting::fit_initial;
use crate::integrators::{SamplingPolicy, TrajectoryRecord};
use crate::metrics::{rel_l2_error_sampled, residual_on};
use crate::params::NetSpec;
use crate::pde::{Domain, GaussianPackets, InitialCondition, PdeKind, PdeProblem, Velocity};
use crate::rng::{stream, Rng};
use crate::sampling::draw;

struct Setting {
    problem: PdeProblem,
    velocity: Velocity,
    packets: GaussianPackets,
}

fn setting(cfg: &ExperimentConfig, velocity: Velocity, packets: GaussianPackets) -> Result<Setting> {
    let d = cfg.net.dim;
    let problem = problem_or(cfg, PdeProblem::new(PdeKind::Advection { velocity }, d, Domain::UnboundedRd)?)?;
    let velocity = match &problem.kind {
        PdeKind::Advection { velocity } => velocity.clone(),
        _ => return Err(Error::Config("the advection runs need an advection problem".into())),
    };
    let packets = match &cfg.initial {
        None => packets,
        Some(InitialCondition::Packets(p)) => p.clone(),
        Some(_) => return Err(Error::Config("the advection runs need Gaussian packets as initial condition".into())),
    };
    if packets.dim != d {
        return Err(Error::Config("initial packets must match net.dim".into()));
    }
    Ok(Setting { problem, velocity, packets })
}

/// Per-axis affine map `x ↦ x f_k(t) + (f_k(t) - 1)` carrying initial points
/// along the characteristics of the space-time field.
fn space_time_factors(velocity: &Velocity, t: f64) -> Result<Vec<f64>> {
    match velocity {
        Velocity::SpaceTime { scale, frequency, shift } => Ok(scale
            .iter()
            .zip(frequency)
            .map(|(s, v)| {
                let om = v * std::f64::consts::PI;
                (s / 10.0 * ((1.0 - (om * t).cos()) / om + shift * t)).exp()
            })
            .collect()),
        Velocity::TimeOnly { .. } => Err(Error::ProblemMismatch("expected a space-time velocity".into())),
    }
}

/// The exact solution at time `t` as transported packets.
fn transported(packets: &GaussianPackets, velocity: &Velocity, t: f64) -> Result<GaussianPackets> {
    let mut p = packets.clone();
    match velocity {
        Velocity::TimeOnly { .. } => {
            let s = velocity.displacement(t)?;
            for mu in &mut p.means {
                mu.iter_mut().zip(&s).for_each(|(m, s)| *m += s);
            }
        }
        Velocity::SpaceTime { .. } => {
            let f = space_time_factors(velocity, t)?;
            for (mu, var) in p.means.iter_mut().zip(&mut p.variances) {
                for k in 0..f.len() {
                    mu[k] = (mu[k] + 1.0) * f[k] - 1.0;
                    var[k] *= f[k] * f[k];
                }
            }
        }
    }
    Ok(p)
}

/// Squared relative error of `U(θ)` against `exact`, estimated with samples
/// from an even blend of the exact law and the network's own mixture.
fn sampled_error(spec: &NetSpec, theta: &[f64], exact: &GaussianPackets, n: usize, rng: &mut Rng) -> Result<f64> {
    let law = exact.law(&vec![0.0; exact.dim])?;
    let proposal = match spec.as_mixture(theta, 2.0) {
        Ok(own) => blend(&law, &own)?,
        Err(_) => law,
    };
    let samples = draw(&proposal, n, rng)?;
    spec.value(theta, samples.point(0))?;
    let values: Vec<(f64, f64, f64)> = samples
        .iter()
        .zip(&samples.log_density)
        .map(|(x, l)| (exact.eval(x), spec.value_unchecked(theta, x), (-l).exp()))
        .collect();
    let e = rel_l2_error_sampled(&values)?;
    Ok(if e.is_finite() { e } else { f64::INFINITY })
}

fn fit(cfg: &ExperimentConfig, s: &Setting, out: &mut RunOutcome) -> Result<Vec<f64>> {
    let measure = inflate(&s.packets.law(&vec![0.0; s.packets.dim])?, cfg.fit_spread)?;
    let u0 = |x: &[f64]| s.packets.eval(x);
    let (theta0, report) = fit_initial(&cfg.net, &u0, &measure, &cfg.fitting, &mut rng_for(cfg, streams::FIT))?;
    out.fits.push(("neural_galerkin".into(), report));
    Ok(theta0)
}

/// Error series of a forward run; returns the per-snapshot errors.
fn forward_errors(
    cfg: &ExperimentConfig,
    s: &Setting,
    series: &str,
    record: &TrajectoryRecord,
    salt: u64,
    out: &mut RunOutcome,
) -> Result<Vec<f64>> {
    let mut errs = Vec::new();
    for (k, t) in cfg.snapshot_times().into_iter().enumerate() {
        let e = match theta_at(record, k) {
            Some(theta) => {
                let exact = transported(&s.packets, &s.velocity, t)?;
                let mut rng = stream(cfg.seed, metrics_stream(salt, k));
                sampled_error(&cfg.net, theta, &exact, cfg.metrics.samples, &mut rng)?
            }
            None => f64::INFINITY,
        };
        out.push(series, "rel_l2", t, e);
        errs.push(e);
    }
    Ok(errs)
}

fn metrics_stream(salt: u64, k: usize) -> u64 {
    (streams::METRICS << 32) | (salt << 20) | k as u64
}

pub(super) fn run_time_only(cfg: &ExperimentConfig, out: &mut RunOutcome) -> Result<()> {
    let d = cfg.net.dim;
    let s = setting(cfg, Velocity::time_only(d), GaussianPackets::advection_time_only(d))?;
    let theta0 = fit(cfg, &s, out)?;
    let policy = sampling_policy(cfg)?;
    let (record, err) =
        solve(cfg, &cfg.net, &s.problem, &policy, &cfg.integrator, &theta0, &mut rng_for(cfg, streams::SOLVE));
    record_failure(out, "adaptive", &err);
    let errs = forward_errors(cfg, &s, "adaptive", &record, 0, out)?;
    out.trajectories.push(("adaptive".into(), cfg.net.clone(), record));
    out.check(cfg, "adaptive_error_max", errs.iter().copied().fold(0.0, f64::max), Comparison::Below);

    if cfg.baselines.enabled {
        let policy = static_policy(cfg)?;
        let (record, err) = solve(
            cfg,
            &cfg.net,
            &s.problem,
            &policy,
            &cfg.baselines.integrator,
            &theta0,
            &mut rng_for(cfg, streams::BASELINE_SOLVE),
        );
        record_failure(out, "static", &err);
        let errs = forward_errors(cfg, &s, "static", &record, 1, out)?;
        out.trajectories.push(("static".into(), cfg.net.clone(), record));
        out.check(cfg, "static_error_min", *errs.last().expect("snapshots"), Comparison::Above);
    }
    Ok(())
}

/// `J` and `J / (½ E f²)` at `θ`, with θ̇ estimated by the run's own
/// sampling and both quantities measured on the network's mixture.
fn residuals(
    cfg: &ExperimentConfig,
    problem: &PdeProblem,
    policy: &SamplingPolicy,
    theta: &[f64],
    t: f64,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    let spec = &cfg.net;
    let measure = policy.measure_at(spec, theta)?;
    let samples = draw(&measure, policy.n, rng)?;
    let sys = assemble(spec, theta, problem, t, &samples, policy.reweight.as_ref(), policy.regularization)?;
    let eta = solve_theta_dot(&sys)?;
    let probe = match spec.as_mixture(theta, cfg.metrics.residual_kappa) {
        Ok(m) => m,
        Err(_) => return Ok((f64::INFINITY, f64::INFINITY)),
    };
    let samples = draw(&probe, cfg.metrics.residual_samples, rng)?;
    let j = residual_on(spec, theta, &eta, problem, t, &samples)?;
    let energy = residual_on(spec, theta, &vec![0.0; eta.len()], problem, t, &samples)?;
    let j = if j.is_finite() { j } else { f64::INFINITY };
    Ok((j, j / energy))
}

/// Residual series of both legs; returns the largest `J` and relative residual.
#[allow(clippy::too_many_arguments)]
fn leg_residuals(
    cfg: &ExperimentConfig,
    series: &str,
    problem: &PdeProblem,
    policy: &SamplingPolicy,
    record: &TrajectoryRecord,
    backward: bool,
    salt: u64,
    out: &mut RunOutcome,
) -> Result<(f64, f64)> {
    let (mut j_max, mut rel_max) = (0.0f64, 0.0f64);
    let times = cfg.snapshot_times();
    for (k, &tau) in times.iter().enumerate() {
        let clock = if backward { cfg.t_end + tau } else { tau };
        let (j, rel) = match theta_at(record, k) {
            Some(theta) => {
                let mut rng = stream(cfg.seed, metrics_stream(salt, k));
                residuals(cfg, problem, policy, theta, tau, &mut rng).unwrap_or((f64::INFINITY, f64::INFINITY))
            }
            None => (f64::INFINITY, f64::INFINITY),
        };
        out.push(series, "residual", clock, j);
        out.push(series, "relative_residual", clock, rel);
        j_max = j_max.max(j);
        rel_max = rel_max.max(rel);
    }
    Ok((j_max, rel_max))
}

/// Round-trip error and residual maxima of one sampling policy.
fn round_trip(
    cfg: &ExperimentConfig,
    s: &Setting,
    series: &str,
    policy: &SamplingPolicy,
    controller: &crate::integrators::StepController,
    theta0: &[f64],
    ids: (u64, u64, u64),
    out: &mut RunOutcome,
) -> Result<(f64, f64, f64)> {
    let (forward, err) = solve(cfg, &cfg.net, &s.problem, policy, controller, theta0, &mut rng_for(cfg, ids.0));
    record_failure(out, series, &err);
    forward_errors(cfg, s, series, &forward, ids.2, out)?;
    let (j_fwd, rel_fwd) = leg_residuals(cfg, series, &s.problem, policy, &forward, false, ids.2 + 10, out)?;
    let reversed = s.problem.reversed(cfg.t_end);
    let completed = err.is_none();
    let (backward, err) = if completed {
        solve(cfg, &cfg.net, &reversed, policy, controller, forward.final_theta(), &mut rng_for(cfg, ids.1))
    } else {
        (TrajectoryRecord::default(), None)
    };
    record_failure(out, &format!("{series}_backward"), &err);
    let (j_bwd, rel_bwd) = leg_residuals(cfg, series, &reversed, policy, &backward, true, ids.2 + 20, out)?;
    let n_snap = cfg.snapshot_times().len();
    let roundtrip = match theta_at(&backward, n_snap - 1) {
        Some(theta) => {
            let mut rng = stream(cfg.seed, metrics_stream(ids.2 + 30, 0));
            sampled_error(&cfg.net, theta, &s.packets, cfg.metrics.samples, &mut rng)?
        }
        None => f64::INFINITY,
    };
    out.push(series, "roundtrip_rel_l2", 2.0 * cfg.t_end, roundtrip);
    out.trajectories.push((format!("{series}_forward"), cfg.net.clone(), forward));
    out.trajectories.push((format!("{series}_backward"), cfg.net.clone(), backward));
    Ok((roundtrip, j_fwd.max(j_bwd), rel_fwd.max(rel_bwd)))
}

pub(super) fn run_space_time(cfg: &ExperimentConfig, out: &mut RunOutcome) -> Result<()> {
    let d = cfg.net.dim;
    let s = setting(cfg, Velocity::space_time(d), GaussianPackets::advection_space_time(d))?;
    if !matches!(s.velocity, Velocity::SpaceTime { .. }) {
        return Err(Error::Config("the forward–backward run needs a space-time velocity".into()));
    }
    let theta0 = fit(cfg, &s, out)?;
    let policy = sampling_policy(cfg)?;
    let (roundtrip, j_adaptive, rel_adaptive) = round_trip(
        cfg,
        &s,
        "adaptive",
        &policy,
        &cfg.integrator,
        &theta0,
        (streams::SOLVE, streams::BACKWARD, 0),
        out,
    )?;
    out.check(cfg, "roundtrip_error_max", roundtrip, Comparison::Below);
    out.check(cfg, "adaptive_relative_residual_max", rel_adaptive, Comparison::Below);

    if cfg.baselines.enabled {
        let policy = static_policy(cfg)?;
        let (_, j_static, _) = round_trip(
            cfg,
            &s,
            "static",
            &policy,
            &cfg.baselines.integrator,
            &theta0,
            (streams::BASELINE_SOLVE, streams::BASELINE_BACKWARD, 100),
            out,
        )?;
        out.check(cfg, "static_residual_factor_min", j_static / j_adaptive, Comparison::AtLeast);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_time_transport_solves_the_equation() {
        // Finite-difference check of ∂_t u = -a · ∇u for the transported packets.
        let d = 3;
        let v = Velocity::space_time(d);
        let p = GaussianPackets::advection_space_time(d);
        let u = |t: f64, x: &[f64]| transported(&p, &v, t).unwrap().eval(x);
        let (t, h) = (0.4, 1e-5);
        let x = [2.0, 2.1, 1.7];
        let ut = (u(t + h, &x) - u(t - h, &x)) / (2.0 * h);
        let mut a = vec![0.0; d];
        v.at(t, &x, &mut a);
        let mut adv = 0.0;
        for k in 0..d {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            adv += a[k] * (u(t, &xp) - u(t, &xm)) / (2.0 * h);
        }
        assert!((ut + adv).abs() < 1e-4 * ut.abs().max(1.0), "{ut} {adv}");
    }
}
