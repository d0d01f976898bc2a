//! Interacting particles in harmonic and aharmonic traps.

use super::{
    inflate, problem_or, record_failure, rng_for, sampling_policy, solve, static_policy, streams, theta_at,
    AcceptanceRow, Comparison, ExperimentConfig, RunOutcome,
};
use crate::error::{Error, Result};
use crate::fitting::fit_initial;
use crate::integrators::TrajectoryRecord;
use crate::metrics::{density_stats, gaussian_entropy, max_excess_kurtosis, mixture_moments};
use crate::oracles::{euler_maruyama, fp_moment_odes};
use crate::pde::{Domain, ForceSpec, GaussianPackets, InitialCondition, PdeKind, PdeProblem, TrapCenter, TrapKind};
use crate::rng::stream;

struct Setting {
    problem: PdeProblem,
    force: ForceSpec,
    packets: GaussianPackets,
}

fn setting(cfg: &ExperimentConfig, trap: TrapKind, alpha: f64) -> Result<Setting> {
    let d = cfg.net.dim;
    let force = ForceSpec { trap, center: TrapCenter::oscillating(), alpha, diffusion: 1e-2 };
    let problem = problem_or(cfg, PdeProblem::new(PdeKind::FokkerPlanck { force }, d, Domain::UnboundedRd)?)?;
    let force = match &problem.kind {
        PdeKind::FokkerPlanck { force } => force.clone(),
        _ => return Err(Error::Config("the particle runs need a Fokker–Planck problem".into())),
    };
    let packets = match &cfg.initial {
        None => GaussianPackets::particle_initial(d, 0.1),
        Some(InitialCondition::Packets(p)) if p.means.len() == 1 && p.dim == d => p.clone(),
        Some(_) => return Err(Error::Config("the particle runs need a single Gaussian packet of net.dim axes".into())),
    };
    Ok(Setting { problem, force, packets })
}

/// Per-snapshot network moments, or `None` once the run has stopped.
struct Moments {
    mean: Vec<f64>,
    cov: Vec<f64>,
}

fn moments(record: &TrajectoryRecord, cfg: &ExperimentConfig, k: usize) -> Option<Moments> {
    let theta = theta_at(record, k)?;
    let (mean, cov) = mixture_moments(&cfg.net, theta).ok()?;
    mean.iter().chain(&cov).all(|v| v.is_finite()).then_some(Moments { mean, cov })
}

fn relative_norm(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn fit_and_solve(cfg: &ExperimentConfig, s: &Setting, out: &mut RunOutcome) -> Result<TrajectoryRecord> {
    let measure = inflate(&s.packets.law(&vec![0.0; s.packets.dim])?, cfg.fit_spread)?;
    let u0 = |x: &[f64]| s.packets.eval(x);
    let (theta0, report) = fit_initial(&cfg.net, &u0, &measure, &cfg.fitting, &mut rng_for(cfg, streams::FIT))?;
    out.fits.push(("neural_galerkin".into(), report));
    let policy = sampling_policy(cfg)?;
    let (record, err) =
        solve(cfg, &cfg.net, &s.problem, &policy, &cfg.integrator, &theta0, &mut rng_for(cfg, streams::SOLVE));
    record_failure(out, "adaptive", &err);
    if cfg.baselines.enabled {
        let policy = static_policy(cfg)?;
        let (baseline, err) = solve(
            cfg,
            &cfg.net,
            &s.problem,
            &policy,
            &cfg.baselines.integrator,
            &theta0,
            &mut rng_for(cfg, streams::BASELINE_SOLVE),
        );
        record_failure(out, "static", &err);
        out.trajectories.push(("static".into(), cfg.net.clone(), baseline));
    }
    Ok(record)
}

fn push_vector(out: &mut RunOutcome, series: &str, prefix: &str, t: f64, v: &[f64]) {
    for (i, x) in v.iter().enumerate() {
        out.push(series, &format!("{prefix}_{i}"), t, *x);
    }
}

/// Entropy estimate at snapshot `k` as `(E_n, SE)`, plus the kurtosis of the draws.
fn entropy(cfg: &ExperimentConfig, theta: &[f64], k: usize) -> Result<(f64, f64, f64)> {
    let mut rng = stream(cfg.seed, (streams::METRICS << 32) | k as u64);
    let stats = density_stats(&cfg.net, theta, cfg.metrics.entropy_samples, &mut rng)?;
    Ok((stats.entropy, stats.entropy_se, max_excess_kurtosis(&stats.samples, cfg.net.dim)))
}

pub(super) fn run_harmonic(cfg: &ExperimentConfig, out: &mut RunOutcome) -> Result<()> {
    let d = cfg.net.dim;
    let s = setting(cfg, TrapKind::Harmonic, 0.25)?;
    if s.force.trap != TrapKind::Harmonic {
        return Err(Error::Config("the moment oracle needs a harmonic trap".into()));
    }
    let times = cfg.snapshot_times();
    let cov0: Vec<f64> =
        (0..d * d).map(|ij| if ij / d == ij % d { s.packets.variances[0][ij % d] } else { 0.0 }).collect();
    let oracle =
        fp_moment_odes(d, s.force.alpha, &s.force.center, s.force.diffusion, &s.packets.means[0], &cov0, &times)?;
    let record = fit_and_solve(cfg, &s, out)?;

    let (mut mean_max, mut cov_max, mut z_max) = (0.0f64, 0.0f64, 0.0f64);
    for (k, &t) in times.iter().enumerate() {
        let (om, oc) = (&oracle.means[k], &oracle.covs[k]);
        push_vector(out, "oracle", "mean", t, om);
        let oracle_diag: Vec<f64> = (0..d).map(|i| oc[i * d + i]).collect();
        push_vector(out, "oracle", "var", t, &oracle_diag);
        let h_oracle = gaussian_entropy(oc, d)?;
        out.push("oracle", "entropy", t, h_oracle);
        let (mean_err, cov_err, z) = match (moments(&record, cfg, k), theta_at(&record, k)) {
            (Some(m), Some(theta)) => {
                push_vector(out, "adaptive", "mean", t, &m.mean);
                let diag: Vec<f64> = (0..d).map(|i| m.cov[i * d + i]).collect();
                push_vector(out, "adaptive", "var", t, &diag);
                let cov_err = (0..d).map(|i| (diag[i] - oracle_diag[i]).abs() / oracle_diag[i]).fold(0.0, f64::max);
                let (e, se, kurt) = entropy(cfg, theta, k)?;
                out.push("adaptive", "entropy", t, e);
                out.push("adaptive", "entropy_se", t, se);
                out.push("adaptive", "excess_kurtosis", t, kurt);
                (relative_norm(&m.mean, om), cov_err, (e - h_oracle).abs() / se)
            }
            _ => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
        };
        out.push("adaptive", "mean_rel_error", t, mean_err);
        out.push("adaptive", "cov_diag_rel_error", t, cov_err);
        out.push("adaptive", "entropy_z", t, z);
        mean_max = mean_max.max(mean_err);
        cov_max = cov_max.max(cov_err);
        z_max = z_max.max(z);
    }
    out.check(cfg, "mean_error_max", mean_max, Comparison::Below);
    out.check(cfg, "cov_diag_error_max", cov_max, Comparison::Below);
    out.check(cfg, "entropy_se_max", z_max, Comparison::AtMost);

    if let Some(pos) = out.trajectories.iter().position(|(name, _, _)| name == "static") {
        let (_, _, baseline) = out.trajectories[pos].clone();
        let mut static_max = 0.0f64;
        for (k, &t) in times.iter().enumerate() {
            let err = match moments(&baseline, cfg, k) {
                Some(m) => {
                    push_vector(out, "static", "mean", t, &m.mean);
                    relative_norm(&m.mean, &oracle.means[k])
                }
                None => f64::INFINITY,
            };
            out.push("static", "mean_rel_error", t, err);
            static_max = static_max.max(err);
        }
        out.check(cfg, "static_factor_min", static_max / mean_max, Comparison::AtLeast);
    }
    out.trajectories.insert(0, ("adaptive".into(), cfg.net.clone(), record));
    Ok(())
}

pub(super) fn run_aharmonic(cfg: &ExperimentConfig, out: &mut RunOutcome) -> Result<()> {
    let d = cfg.net.dim;
    let s = setting(cfg, TrapKind::Aharmonic, -0.5)?;
    let times = cfg.snapshot_times();
    let law = s.packets.law(&vec![0.0; d])?;
    let ensemble = euler_maruyama(
        &s.force,
        d,
        cfg.reference.paths,
        cfg.reference.dt,
        &times,
        &law,
        crate::rng::fork_seed(&mut rng_for(cfg, streams::REFERENCE)),
    )?;
    let record = fit_and_solve(cfg, &s, out)?;
    let get = |key: &str| {
        cfg.acceptance.get(key).copied().ok_or_else(|| Error::Config(format!("acceptance table needs `{key}`")))
    };
    let (mean_tol, cov_tol, multiple) = (get("mean_error_max")?, get("cov_diag_error_max")?, get("se_multiple")?);

    let (mut mean_score, mut cov_score, mut z_max) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for (k, &t) in times.iter().enumerate() {
        let (em, ec) = (&ensemble.means[k], &ensemble.covs[k]);
        let ediag: Vec<f64> = (0..d).map(|i| ec[i * d + i]).collect();
        push_vector(out, "particles", "mean", t, em);
        push_vector(out, "particles", "var", t, &ediag);
        let h_bound = gaussian_entropy(ec, d)?;
        out.push("particles", "gaussian_entropy_bound", t, h_bound);
        let (ms, cs, z) = match (moments(&record, cfg, k), theta_at(&record, k)) {
            (Some(m), Some(theta)) => {
                push_vector(out, "adaptive", "mean", t, &m.mean);
                let mut ms = 0.0f64;
                let mut cs = 0.0f64;
                for i in 0..d {
                    let rel = (m.mean[i] - em[i]).abs() / em[i].abs();
                    let tol = mean_tol.max(multiple * ensemble.mean_se[k][i] / em[i].abs());
                    out.push("adaptive", &format!("mean_rel_error_{i}"), t, rel);
                    ms = ms.max(rel / tol);
                    let var = m.cov[i * d + i];
                    let rel = (var - ediag[i]).abs() / ediag[i];
                    let tol = cov_tol.max(multiple * ensemble.var_se[k][i] / ediag[i]);
                    out.push("adaptive", &format!("var_rel_error_{i}"), t, rel);
                    cs = cs.max(rel / tol);
                }
                let (e, se, kurt) = entropy(cfg, theta, k)?;
                out.push("adaptive", "entropy", t, e);
                out.push("adaptive", "entropy_se", t, se);
                out.push("adaptive", "excess_kurtosis", t, kurt);
                (ms, cs, (e - h_bound) / se)
            }
            _ => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
        };
        out.push("adaptive", "mean_error_score", t, ms);
        out.push("adaptive", "cov_diag_error_score", t, cs);
        out.push("adaptive", "entropy_excess_z", t, z);
        mean_score = mean_score.max(ms);
        cov_score = cov_score.max(cs);
        z_max = z_max.max(z);
    }
    for (criterion, value) in [("mean_error_score", mean_score), ("cov_diag_error_score", cov_score)] {
        out.acceptance.push(AcceptanceRow {
            criterion: criterion.into(),
            value,
            comparison: Comparison::AtMost,
            threshold: 1.0,
            passed: value <= 1.0,
        });
    }
    out.check(cfg, "entropy_se_max", z_max, Comparison::AtMost);

    if let Some(pos) = out.trajectories.iter().position(|(name, _, _)| name == "static") {
        let (_, _, baseline) = out.trajectories[pos].clone();
        for (k, &t) in times.iter().enumerate() {
            let err = moments(&baseline, cfg, k).map_or(f64::INFINITY, |m| relative_norm(&m.mean, &ensemble.means[k]));
            out.push("static", "mean_rel_error", t, err);
        }
    }
    out.trajectories.insert(0, ("adaptive".into(), cfg.net.clone(), record));
    Ok(())
}
