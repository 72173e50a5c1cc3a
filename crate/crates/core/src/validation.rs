//! Statistical property checks of the simulator: stationarity of the
//! equilibrium, the law of diffuse flights, maximal-coupling marginals,
//! marginal fidelity of coupled chains and permanence of merges.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{hitting_density, Coupler};
use crate::error::{Error, Result};
use crate::geometry::{random_direction, specular_reflect, BoundaryPoint, Domain, Shape, Vector};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};
use crate::rng::{stream, Purpose};
use crate::stats::{chi2_test, ks_test, ks_two_sample};
use crate::transport::{FreeTransport, InitialLaw};
use crate::velocity_law::{sample_theta, vartheta, vartheta_inverse, VelocityLaw};

/// p-values below this fail a check.
pub const P_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityCheck {
    pub t: f64,
    pub position_p: f64,
    pub speed_p: f64,
}

/// Fractions of the domain volume in a `bins x bins` grid over the first two
/// coordinates of the bounding box.
pub fn position_cell_fractions<const N: usize>(domain: &Domain<N>, bins: usize, seed: u64) -> Vec<f64> {
    let (lo, hi) = domain.bounds();
    let mut counts = vec![0.0; bins * bins];
    if N == 2 {
        let sub = 64;
        let steps = bins * sub;
        for i in 0..steps {
            for j in 0..steps {
                let mut x = Vector::<N>::zeros();
                x[0] = lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / steps as f64;
                x[1] = lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / steps as f64;
                if domain.contains(&x) {
                    counts[(i / sub) * bins + j / sub] += 1.0;
                }
            }
        }
    } else {
        let mut rng = stream(seed, Purpose::Validation, 0xce11);
        for _ in 0..2_000_000 {
            let x = domain.sample_uniform(&mut rng);
            counts[position_cell(&lo, &hi, &x, bins)] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

fn position_cell<const N: usize>(lo: &Vector<N>, hi: &Vector<N>, x: &Vector<N>, bins: usize) -> usize {
    let b = |k: usize| (((x[k] - lo[k]) / (hi[k] - lo[k]) * bins as f64) as usize).min(bins - 1);
    b(0) * bins + b(1)
}

/// Evolves `n` independent particles from `initial` and tests positions
/// (chi-square on a 10 x 10 grid) and speeds (KS) against equilibrium at
/// each of `times` (increasing).
pub fn stationarity<const N: usize>(
    transport: &FreeTransport<N>,
    initial: &InitialLaw<N>,
    n: usize,
    times: &[f64],
    seed: u64,
) -> Result<Vec<StationarityCheck>> {
    let bins = 10;
    let snapshots: Vec<Vec<(Vector<N>, Vector<N>)>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Purpose::PrimaryEnsemble, i);
            let mut s = transport.initial_state(initial, &mut rng)?;
            times.iter().map(|t| transport.state_at(&mut s, *t, &mut rng)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let fractions = position_cell_fractions(&transport.domain, bins, seed);
    let expected: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let (lo, hi) = transport.domain.bounds();
    let mut out = Vec::new();
    for (k, t) in times.iter().enumerate() {
        let mut observed = vec![0.0; bins * bins];
        let mut speeds = Vec::with_capacity(n);
        for snap in &snapshots {
            let (x, v) = snap[k];
            observed[position_cell(&lo, &hi, &x, bins)] += 1.0;
            speeds.push(v.norm());
        }
        let (obs, exp): (Vec<f64>, Vec<f64>) =
            observed.iter().zip(&expected).filter(|(_, e)| **e > 0.0).map(|(o, e)| (*o, *e)).unzip();
        let position_p = chi2_test(&obs, &exp, 0)?.p_value;
        let speed_p = ks_test(&speeds, |s| transport.wall.speed_cdf(s))?.p_value;
        out.push(StationarityCheck { t: *t, position_p, speed_p });
    }
    Ok(out)
}

/// One diffuse flight from `x`: `(zeta, q)`.
pub fn sample_flight<const N: usize, R: Rng + ?Sized>(
    domain: &Domain<N>,
    wall: &VelocityLaw<N>,
    x: &BoundaryPoint<N>,
    rng: &mut R,
) -> Result<(f64, BoundaryPoint<N>)> {
    let (r, theta) = wall.sample_upsilon(rng);
    let hit = domain.hit_from_boundary(x, &(vartheta(x, &theta) * r))?;
    Ok((hit.time, hit.point))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCheck {
    pub samples: usize,
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// Boundary components of a planar domain parametrised by the polar angle
/// around its centre.
fn planar_components(domain: &Domain<2>) -> Vec<Box<dyn Fn(f64) -> Result<Vector<2>> + '_>> {
    let dir = |a: f64| Vector::<2>::new(a.cos(), a.sin());
    match domain.shape() {
        Shape::Annulus { center, inner, outer } => {
            let (c, ri, ro) = (*center, *inner, *outer);
            vec![Box::new(move |a| Ok(c + dir(a) * ri)), Box::new(move |a| Ok(c + dir(a) * ro))]
        }
        _ => vec![Box::new(move |a| domain.outermost(&dir(a)).map(|b| b.x))],
    }
}

/// Chi-square test of sampled diffuse flights from `x` against the hitting
/// density, binned in flight time (log-spaced edges plus two open bins) and
/// in polar angle of the hit point.
pub fn hitting_density_check(
    domain: &Domain<2>,
    wall: &VelocityLaw<2>,
    x: &BoundaryPoint<2>,
    samples: usize,
    tau_bins: usize,
    angle_bins: usize,
    seed: u64,
) -> Result<DensityCheck> {
    if tau_bins < 3 || angle_bins < 1 {
        return Err(Error::InvalidConfig("need at least 3 flight-time bins".into()));
    }
    let d = domain.diameter();
    let (t_lo, t_hi) = (0.05 * d, 20.0 * d);
    let inner = tau_bins - 2;
    let mut edges = vec![0.0];
    edges.extend((0..=inner).map(|k| t_lo * (t_hi / t_lo).powf(k as f64 / inner as f64)));
    edges.push(f64::INFINITY);
    let c = domain.center();
    let angle_of = |z: &Vector<2>| (z[1] - c[1]).atan2(z[0] - c[0]);
    let abin = |a: f64| {
        let u = (a + std::f64::consts::PI) / std::f64::consts::TAU;
        ((u * angle_bins as f64) as usize).min(angle_bins - 1)
    };
    let tbin = |t: f64| (edges.partition_point(|e| *e <= t) - 1).min(tau_bins - 1);

    let chunk = 4096;
    let counts: Vec<Vec<f64>> = (0..samples.div_ceil(chunk) as u64)
        .into_par_iter()
        .map(|ci| {
            let mut rng = stream(seed, Purpose::Validation, ci);
            let mut local = vec![0.0; tau_bins * angle_bins];
            let m = chunk.min(samples - ci as usize * chunk);
            for _ in 0..m {
                let (t, q) = sample_flight(domain, wall, x, &mut rng)?;
                local[tbin(t) * angle_bins + abin(angle_of(&q.x))] += 1.0;
            }
            Ok(local)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut observed = vec![0.0; tau_bins * angle_bins];
    for local in &counts {
        for (o, l) in observed.iter_mut().zip(local) {
            *o += l;
        }
    }

    let tol = Tolerance { abs: 1e-12, rel: 1e-8, max_intervals: 2000 };
    let h = 1e-6;
    let comps = planar_components(domain);
    let mut expected = vec![0.0; tau_bins * angle_bins];
    for comp in &comps {
        for j in 0..angle_bins {
            let a0 = -std::f64::consts::PI + std::f64::consts::TAU * j as f64 / angle_bins as f64;
            let a1 = a0 + std::f64::consts::TAU / angle_bins as f64;
            for i in 0..tau_bins {
                let (e0, e1) = (edges[i], edges[i + 1]);
                let mut err = None;
                let mass = integrate(
                    |a| {
                        let (z, zp, zm) = match (comp(a), comp(a + h), comp(a - h)) {
                            (Ok(z), Ok(p), Ok(m)) => (z, p, m),
                            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
                                err.get_or_insert(e);
                                return 0.0;
                            }
                        };
                        let jac = (zp - zm).norm() / (2.0 * h);
                        let bp = domain.boundary_point(&z);
                        let f = |t: f64| hitting_density(domain, wall, x, t, &bp);
                        let inner = if e1.is_infinite() {
                            integrate_to_infinity(f, e0, tol)
                        } else {
                            integrate(f, e0, e1, tol)
                        };
                        match inner {
                            Ok(v) => v * jac,
                            Err(e) => {
                                err.get_or_insert(e);
                                0.0
                            }
                        }
                    },
                    a0,
                    a1,
                    tol,
                )?;
                if let Some(e) = err {
                    return Err(e);
                }
                expected[i * angle_bins + j] += mass * samples as f64;
            }
        }
    }
    let (obs, exp): (Vec<f64>, Vec<f64>) =
        observed.iter().zip(&expected).filter(|(_, e)| **e > 0.0).map(|(o, e)| (*o, *e)).unzip();
    let total_exp: f64 = exp.iter().sum();
    let scale = samples as f64 / total_exp;
    let exp: Vec<f64> = exp.iter().map(|e| e * scale).collect();
    let r = chi2_test(&obs, &exp, 0)?;
    Ok(DensityCheck { samples, statistic: r.statistic, dof: r.dof, p_value: r.p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaCheck {
    pub draws: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub r_p: f64,
    pub r_tilde_p: f64,
}

/// Repeated maximal-coupling draws for a fixed configuration; tests both
/// speed marginals against the emitted-speed law.
pub fn lambda_check<const N: usize>(
    coupler: &Coupler<N>,
    x0: &BoundaryPoint<N>,
    xt0: &Vector<N>,
    vt0: &Vector<N>,
    draws: usize,
    seed: u64,
) -> Result<LambdaCheck> {
    let chunk = 4096;
    let parts: Vec<Vec<(bool, f64, f64)>> = (0..draws.div_ceil(chunk) as u64)
        .into_par_iter()
        .map(|ci| {
            let mut rng = stream(seed, Purpose::Validation, 0x1a_0000 + ci);
            let m = chunk.min(draws - ci as usize * chunk);
            (0..m)
                .map(|_| coupler.maximal_coupling_draw(&mut rng, x0, xt0, vt0).map(|a| (a.success, a.r, a.r_tilde)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<(bool, f64, f64)> = parts.into_iter().flatten().collect();
    let successes = all.iter().filter(|a| a.0).count();
    let wall = &coupler.transport.wall;
    let r: Vec<f64> = all.iter().map(|a| a.1).collect();
    let rt: Vec<f64> = all.iter().map(|a| a.2).collect();
    Ok(LambdaCheck {
        draws,
        successes,
        success_rate: successes as f64 / draws as f64,
        r_p: ks_test(&r, |s| wall.h_r_cdf(s))?.p_value,
        r_tilde_p: ks_test(&rt, |s| wall.h_r_cdf(s))?.p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalCheck {
    pub probe_time: f64,
    pub samples: usize,
    pub primary_speed_p: f64,
    pub primary_radius_p: f64,
    pub stationary_speed_p: f64,
    pub stationary_radius_p: f64,
}

impl MarginalCheck {
    pub fn min_p(&self) -> f64 {
        self.primary_speed_p.min(self.primary_radius_p).min(self.stationary_speed_p).min(self.stationary_radius_p)
    }
}

/// States of `n` independent single chains from `law` at time `t`.
pub fn single_chain_states<const N: usize>(
    transport: &FreeTransport<N>,
    law: &InitialLaw<N>,
    n: usize,
    t: f64,
    seed: u64,
    purpose: Purpose,
) -> Result<Vec<(Vector<N>, Vector<N>)>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, purpose, i);
            let mut s = transport.initial_state(law, &mut rng)?;
            transport.state_at(&mut s, t, &mut rng)
        })
        .collect()
}

/// Two-sample KS of speed and distance from the centre between coupled
/// marginals and independent single-chain ensembles.
pub fn marginal_check<const N: usize>(
    domain: &Domain<N>,
    probe_time: f64,
    primary: &[(Vector<N>, Vector<N>)],
    stationary: &[(Vector<N>, Vector<N>)],
    primary_ref: &[(Vector<N>, Vector<N>)],
    stationary_ref: &[(Vector<N>, Vector<N>)],
) -> Result<MarginalCheck> {
    let c = domain.center();
    let speed = |s: &[(Vector<N>, Vector<N>)]| s.iter().map(|p| p.1.norm()).collect::<Vec<_>>();
    let radius = |s: &[(Vector<N>, Vector<N>)]| s.iter().map(|p| (p.0 - c).norm()).collect::<Vec<_>>();
    Ok(MarginalCheck {
        probe_time,
        samples: primary.len(),
        primary_speed_p: ks_two_sample(&speed(primary), &speed(primary_ref))?.p_value,
        primary_radius_p: ks_two_sample(&radius(primary), &radius(primary_ref))?.p_value,
        stationary_speed_p: ks_two_sample(&speed(stationary), &speed(stationary_ref))?.p_value,
        stationary_radius_p: ks_two_sample(&radius(stationary), &radius(stationary_ref))?.p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermanenceCheck {
    pub pairs: usize,
    pub merged: usize,
    pub extra_events: u64,
    pub divergences: usize,
}

/// Runs pairs in index order until `merged_target` of them merge before
/// `t_max` (or `100 * merged_target` pairs were tried), continuing each merged
/// pair for `extra_events` joint events and counting pairs whose chains ever
/// differ afterwards.
pub fn merge_permanence<const N: usize>(
    coupler: &Coupler<N>,
    initial: &InitialLaw<N>,
    merged_target: usize,
    extra_events: u64,
    t_max: f64,
    seed: u64,
) -> Result<PermanenceCheck> {
    let run = |i: u64| -> Result<(bool, bool)> {
        let mut rng = stream(seed, Purpose::Pair, i);
        let mut s = coupler.new_pair(initial, &mut rng)?;
        coupler.run_until_coupled(&mut s, t_max, &mut rng)?;
        if !s.merged {
            return Ok((false, false));
        }
        let mut diverged = !s.chains_identical();
        for _ in 0..extra_events {
            coupler.coupled_step(&mut s, &mut rng)?;
            diverged |= !s.chains_identical() || s.z.is_some();
        }
        Ok((true, diverged))
    };
    let cap = 100 * merged_target as u64;
    let mut results: Vec<(bool, bool)> = Vec::new();
    let mut merged = 0;
    while merged < merged_target && (results.len() as u64) < cap {
        let start = results.len() as u64;
        let end = (start + (merged_target - merged).max(64) as u64).min(cap);
        let batch = (start..end).into_par_iter().map(run).collect::<Result<Vec<_>>>()?;
        for r in batch {
            if merged < merged_target {
                merged += r.0 as usize;
                results.push(r);
            }
        }
    }
    Ok(PermanenceCheck {
        pairs: results.len(),
        merged,
        extra_events,
        divergences: results.iter().filter(|r| r.1).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvolutionCheck {
    pub samples: usize,
    pub specular_norm_err: f64,
    pub specular_involution_err: f64,
    pub angle_roundtrip_err: f64,
}

/// Specular reflection is an isometric involution and the angle map inverts
/// the frame map, on random boundary points and velocities.
pub fn involution_check<const N: usize>(domain: &Domain<N>, samples: usize, seed: u64) -> Result<InvolutionCheck> {
    let mut rng = stream(seed, Purpose::Validation, 0x1f0);
    let (mut e_norm, mut e_inv, mut e_ang) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let bp = domain.outermost(&random_direction::<N, _>(&mut rng))?;
        let v = random_direction::<N, _>(&mut rng) * (0.1 + 3.0 * rng.random::<f64>());
        let w = specular_reflect(&bp, &v);
        e_norm = e_norm.max((w.norm() - v.norm()).abs() / v.norm());
        e_inv = e_inv.max((specular_reflect(&bp, &w) - v).norm());
        let theta = sample_theta::<N, _>(&mut rng);
        let u = vartheta(&bp, &theta);
        let back = vartheta(&bp, &vartheta_inverse(&bp, &u)?);
        e_ang = e_ang.max((back - u).norm());
    }
    Ok(InvolutionCheck {
        samples,
        specular_norm_err: e_norm,
        specular_involution_err: e_inv,
        angle_roundtrip_err: e_ang,
    })
}
