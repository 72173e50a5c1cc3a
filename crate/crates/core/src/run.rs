//! Ensemble drivers behind the command-line subcommands and their artifacts.
//!
//! Every pair and every single chain draws from its own stream keyed by the
//! scenario seed and its index, and results are gathered in index order, so
//! outputs do not depend on the number of worker threads.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{CouplingMode, CouplingOutcome};
use crate::error::{Error, Result};
use crate::geometry::{unit_vector, Patches, Vector};
use crate::rng::{stream, Purpose};
use crate::scenario::{Model, Scenario, SCHEMA_VERSION};
use crate::stats::{fit_tail_slope, log_grid, survival_curve, RateFit, SurvivalCurve, TauSample};
use crate::transport::{Clock, InitialLaw};
use crate::validation::{
    hitting_density_check, involution_check, lambda_check, marginal_check, merge_permanence, single_chain_states,
    stationarity, DensityCheck, InvolutionCheck, LambdaCheck, MarginalCheck, PermanenceCheck, StationarityCheck,
    P_THRESHOLD,
};

/// Per-pair result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRecord<const N: usize> {
    pub tau: TauSample,
    /// `[(x, v) primary, (x, v) stationary]` at the probe time.
    pub probe: Option<[(Vector<N>, Vector<N>); 2]>,
    pub joint_events: u64,
    pub lambda_attempts: u64,
    pub lambda_successes: u64,
    pub primary_collisions: u64,
    pub stationary_collisions: u64,
}

/// Simulates pair `index` up to merging or `t_max`, recording both chains at
/// `probe` on the way.
pub fn simulate_pair<const N: usize>(
    model: &Model<N>,
    seed: u64,
    index: u64,
    t_max: f64,
    probe: Option<f64>,
) -> Result<PairRecord<N>> {
    let c = &model.coupler;
    let mut rng = stream(seed, Purpose::Pair, index);
    let mut s = c.new_pair(&model.initial, &mut rng)?;
    let mut probed = None;
    if let Some(tp) = probe {
        let t = Clock::new(tp);
        loop {
            let ep = c.transport.schedule_next(&mut s.primary)?;
            let es = c.transport.schedule_next(&mut s.stationary)?;
            if ep.time > t && es.time > t {
                break;
            }
            c.coupled_step(&mut s, &mut rng)?;
        }
        probed = Some([(s.primary.position_at(&t), s.primary.v), (s.stationary.position_at(&t), s.stationary.v)]);
    }
    let tau = match c.run_until_coupled(&mut s, t_max, &mut rng)? {
        CouplingOutcome::Merged(t) => TauSample { time: t, censored: false },
        CouplingOutcome::Censored(t) => TauSample { time: t, censored: true },
    };
    Ok(PairRecord {
        tau,
        probe: probed,
        joint_events: s.joint_events,
        lambda_attempts: s.lambda_attempts,
        lambda_successes: s.lambda_successes,
        primary_collisions: s.primary.collisions,
        stationary_collisions: s.stationary.collisions,
    })
}

/// Runs `f` over `0..n` in parallel and returns results in index order; the
/// error of the smallest failing index is reported with that index.
pub fn par_indexed<T: Send, F: Fn(u64) -> Result<T> + Sync + Send>(n: u64, f: F) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = (0..n).into_par_iter().map(&f).collect();
    let mut out = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        out.push(r.map_err(|e| Error::Pair { index: i as u64, source: Box::new(e) })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub dimension: usize,
    pub mode: &'static str,
    pub seed: u64,
    pub n_pairs: u64,
    pub n_merged: u64,
    pub censor_fraction: f64,
    pub t_max: f64,
    pub fit_window: [f64; 2],
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    pub merge_time: Option<MergeTimeStats>,
    pub lambda: LambdaStats,
    pub marginal: Option<MarginalCheck>,
    pub marginal_error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergeTimeStats {
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaStats {
    pub attempts: u64,
    pub successes: u64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub schema_version: u32,
    pub joint_events_mean: f64,
    pub joint_events_max: u64,
    pub collision_rate_primary: f64,
    pub collision_rate_stationary: f64,
    pub patches: PatchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatchReport {
    WholeBoundary,
    Caps {
        f_center: Vec<f64>,
        f_half_angle: f64,
        r_center: Vec<f64>,
        r_half_angle: f64,
        d0: f64,
        pairs_checked: usize,
    },
}

impl PatchReport {
    pub fn new<const N: usize>(p: &Patches<N>) -> Self {
        match p {
            Patches::WholeBoundary => PatchReport::WholeBoundary,
            Patches::Caps { f, r, d0, pairs_checked } => PatchReport::Caps {
                f_center: f.center.x.iter().copied().collect(),
                f_half_angle: f.half_angle,
                r_center: r.center.x.iter().copied().collect(),
                r_half_angle: r.half_angle,
                d0: *d0,
                pairs_checked: *pairs_checked,
            },
        }
    }
}

/// Result of a `couple` run.
#[derive(Debug, Clone)]
pub struct CoupleOutput<const N: usize> {
    pub records: Vec<PairRecord<N>>,
    pub curve: SurvivalCurve,
    pub summary: Summary,
    pub diagnostics: Diagnostics,
}

fn mode_name<const N: usize>(mode: &CouplingMode<N>) -> &'static str {
    match mode {
        CouplingMode::Convex => "convex",
        CouplingMode::Patch(_) => "patch",
    }
}

/// Simulates the pair ensemble and derives the survival curve, rate fit,
/// marginal-fidelity tests and diagnostics.
pub fn run_couple<const N: usize>(scenario: &Scenario, model: &Model<N>) -> Result<CoupleOutput<N>> {
    let seed = scenario.seed;
    let n = scenario.n_pairs;
    let probe_n = scenario.marginal_samples.min(n);
    let probe = (scenario.probe_time <= scenario.t_max).then_some(scenario.probe_time);
    let records = par_indexed(n, |i| {
        simulate_pair(model, seed, i, scenario.t_max, if i < probe_n { probe } else { None })
    })?;

    let taus: Vec<TauSample> = records.iter().map(|r| r.tau).collect();
    let grid = log_grid(scenario.grid.t_min, scenario.t_max, scenario.grid.per_decade);
    let curve = survival_curve(&taus, &grid)?;
    let (t_lo, t_hi) = scenario.fit_window();
    let (fit, fit_error) = match fit_tail_slope(&curve, t_lo, t_hi) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let mut merged: Vec<f64> = taus.iter().filter(|t| !t.censored).map(|t| t.time).collect();
    merged.sort_by(f64::total_cmp);
    let merge_time = (!merged.is_empty()).then(|| {
        let q = |p: f64| merged[((merged.len() - 1) as f64 * p).round() as usize];
        MergeTimeStats {
            mean: merged.iter().sum::<f64>() / merged.len() as f64,
            median: q(0.5),
            p90: q(0.9),
            max: merged[merged.len() - 1],
        }
    });
    let attempts: u64 = records.iter().map(|r| r.lambda_attempts).sum();
    let successes: u64 = records.iter().map(|r| r.lambda_successes).sum();
    let lambda = LambdaStats {
        attempts,
        successes,
        success_rate: if attempts > 0 { successes as f64 / attempts as f64 } else { 0.0 },
    };

    let (marginal, marginal_error) = match probe {
        Some(tp) => {
            let m = marginal_fidelity(model, &records, tp, probe_n as usize, seed);
            match m {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e.to_string())),
            }
        }
        None => (None, Some("probe time exceeds t_max".into())),
    };

    let span: f64 = taus.iter().map(|t| t.time).sum();
    let diagnostics = Diagnostics {
        schema_version: SCHEMA_VERSION,
        joint_events_mean: records.iter().map(|r| r.joint_events as f64).sum::<f64>() / n as f64,
        joint_events_max: records.iter().map(|r| r.joint_events).max().unwrap_or(0),
        collision_rate_primary: records.iter().map(|r| r.primary_collisions as f64).sum::<f64>() / span,
        collision_rate_stationary: records.iter().map(|r| r.stationary_collisions as f64).sum::<f64>() / span,
        patches: match &model.coupler.mode {
            CouplingMode::Convex => PatchReport::WholeBoundary,
            CouplingMode::Patch(p) => PatchReport::new(p),
        },
    };
    let n_merged = merged.len() as u64;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        dimension: N,
        mode: mode_name(&model.coupler.mode),
        seed,
        n_pairs: n,
        n_merged,
        censor_fraction: curve.censor_fraction,
        t_max: scenario.t_max,
        fit_window: [t_lo, t_hi],
        fit,
        fit_error,
        merge_time,
        lambda,
        marginal,
        marginal_error,
    };
    Ok(CoupleOutput { records, curve, summary, diagnostics })
}

fn marginal_fidelity<const N: usize>(
    model: &Model<N>,
    records: &[PairRecord<N>],
    probe_time: f64,
    m: usize,
    seed: u64,
) -> Result<MarginalCheck> {
    let tr = &model.coupler.transport;
    let probes: Vec<[(Vector<N>, Vector<N>); 2]> = records.iter().take(m).filter_map(|r| r.probe).collect();
    let primary: Vec<_> = probes.iter().map(|p| p[0]).collect();
    let stationary: Vec<_> = probes.iter().map(|p| p[1]).collect();
    let primary_ref = single_chain_states(tr, &model.initial, m, probe_time, seed, Purpose::PrimaryEnsemble)?;
    let stationary_ref =
        single_chain_states(tr, &InitialLaw::equilibrium(), m, probe_time, seed, Purpose::StationaryEnsemble)?;
    marginal_check(&tr.domain, probe_time, &primary, &stationary, &primary_ref, &stationary_ref)
}

pub fn write_survival_csv(path: &Path, curve: &SurvivalCurve) -> Result<()> {
    let mut out = String::from("t,survival,ci_lo,ci_hi\n");
    for i in 0..curve.times.len() {
        out.push_str(&format!("{},{},{},{}\n", curve.times[i], curve.survival[i], curve.ci_lo[i], curve.ci_hi[i]));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn write_couple_outputs<const N: usize>(dir: &Path, out: &CoupleOutput<N>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_survival_csv(&dir.join("survival.csv"), &out.curve)?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    write_json(&dir.join("diagnostics.json"), &out.diagnostics)
}

/// Times at which `simulate` tests stationarity.
pub const STATIONARITY_TIMES: [f64; 3] = [1.0, 5.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub particles: u64,
    pub seed: u64,
    pub checks: Vec<StationarityCheck>,
    pub passed: bool,
}

/// Single-chain ensemble from the scenario's initial law, tested against
/// equilibrium at [`STATIONARITY_TIMES`].
pub fn run_simulate<const N: usize>(scenario: &Scenario, model: &Model<N>) -> Result<SimulateReport> {
    let checks = stationarity(
        &model.coupler.transport,
        &model.initial,
        scenario.n_pairs as usize,
        &STATIONARITY_TIMES,
        scenario.seed,
    )?;
    let passed = checks.iter().all(|c| c.position_p > P_THRESHOLD && c.speed_p > P_THRESHOLD);
    Ok(SimulateReport { schema_version: SCHEMA_VERSION, particles: scenario.n_pairs, seed: scenario.seed, checks, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateReport {
    pub schema_version: u32,
    pub seed: u64,
    pub stationarity: Vec<StationarityCheck>,
    pub hitting_density: Option<DensityCheck>,
    pub lambda: LambdaCheck,
    pub marginal: MarginalCheck,
    pub permanence: PermanenceCheck,
    pub involution: InvolutionCheck,
    pub passed: bool,
}

/// Property suite on the scenario's domain and wall law. Ensemble sizes are
/// `n_pairs` (at least 1000) for the statistical checks.
pub fn run_validate<const N: usize>(
    scenario: &Scenario,
    model: &Model<N>,
    hitting: Option<&dyn Fn(u64) -> Result<DensityCheck>>,
) -> Result<ValidateReport> {
    let seed = scenario.seed;
    let n = scenario.n_pairs.max(1000);
    let c = &model.coupler;
    let tr = &c.transport;
    let eq = InitialLaw::equilibrium();
    let stat = stationarity(tr, &eq, n as usize, &STATIONARITY_TIMES, seed)?;
    let hitting_density = hitting.map(|f| f(seed)).transpose()?;

    let x0 = tr.domain.outermost(&unit_vector::<N>(0))?;
    let mut rng = stream(seed, Purpose::Validation, 0x1a);
    let (xt0, vt0) = loop {
        let x = tr.domain.sample_uniform(&mut rng);
        let v = crate::geometry::random_direction::<N, _>(&mut rng) * c.config.speed_threshold.max(1.0);
        let hit = tr.domain.hit_from_interior(&x, &v)?;
        if hit.time <= tr.domain.diameter() {
            break (x, v);
        }
    };
    let lambda = lambda_check(c, &x0, &xt0, &vt0, n as usize, seed)?;

    let probe = scenario.probe_time;
    let records = par_indexed(n, |i| simulate_pair(model, seed, i, probe, Some(probe)))?;
    let marginal = marginal_fidelity(model, &records, probe, n as usize, seed)?;
    let permanence = merge_permanence(c, &model.initial, (n as usize).min(10_000), 100, scenario.t_max, seed)?;
    let involution = involution_check(&tr.domain, 10_000, seed)?;

    let passed = stat.iter().all(|s| s.position_p > P_THRESHOLD && s.speed_p > P_THRESHOLD)
        && hitting_density.as_ref().is_none_or(|h| h.p_value > P_THRESHOLD)
        && lambda.r_p > P_THRESHOLD
        && lambda.r_tilde_p > P_THRESHOLD
        && marginal.min_p() > P_THRESHOLD
        && permanence.divergences == 0
        && involution.specular_norm_err < 1e-12
        && involution.specular_involution_err < 1e-12
        && involution.angle_roundtrip_err < 1e-10;
    Ok(ValidateReport {
        schema_version: SCHEMA_VERSION,
        seed,
        stationarity: stat,
        hitting_density,
        lambda,
        marginal,
        permanence,
        involution,
        passed,
    })
}

/// Hitting-density check from the boundary point on the positive first axis,
/// for planar scenarios.
pub fn planar_hitting_check(model: &Model<2>, samples: usize, seed: u64) -> Result<DensityCheck> {
    let tr = &model.coupler.transport;
    let x = tr.domain.outermost(&unit_vector::<2>(0))?;
    hitting_density_check(&tr.domain, &tr.wall, &x, samples, 12, 12, seed)
}
