//! Moment constants `E[r(diam / |V|)]` for the initial law, the equilibrium
//! and the emitted-speed law, with a small-speed divergence test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};
use crate::transport::VelocityInit;
use crate::velocity_law::VelocityLaw;

/// Number of decades below the reference speed examined for divergence.
pub const DECADES: usize = 60;
/// Decade-to-decade ratio at or above which the integral is declared divergent.
pub const DIVERGENCE_RATIO: f64 = 1.0 - 1e-6;

/// Rate function `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateFunction {
    /// `(1 + t)^d`.
    PowerLaw { d: f64 },
    /// `(1 + t)^p / (1 + log^2(1 + t))`.
    LogCorrected { power: f64 },
}

impl RateFunction {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            RateFunction::PowerLaw { d } => {
                if d == 0.0 {
                    1.0
                } else {
                    (1.0 + t).powf(d)
                }
            }
            RateFunction::LogCorrected { power } => {
                let l = t.ln_1p();
                (1.0 + t).powf(power) / (1.0 + l * l)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConstants {
    pub initial: f64,
    pub equilibrium: f64,
    pub emission: f64,
    /// Largest of the three.
    pub c0: f64,
}

/// `∫ r(scale / s) g(s) ds` over `support` for a speed density `g`.
///
/// Speeds below `min(1, hi)` are integrated decade by decade; if the last
/// decades stop shrinking the integral is reported divergent, otherwise the
/// remaining tail is summed as a geometric series.
pub fn speed_moment<G: Fn(f64) -> f64>(
    rate: &RateFunction,
    scale: f64,
    density: G,
    support: (f64, f64),
) -> Result<f64> {
    let tol = Tolerance::default();
    let f = |s: f64| if s <= 0.0 { 0.0 } else { rate.value(scale / s) * density(s) };
    let (lo, hi) = support;
    let split = hi.min(1.0).max(lo);
    let mut total = if hi.is_infinite() {
        integrate_to_infinity(f, split, tol)?
    } else {
        integrate(f, split, hi, tol)?
    };
    let mut last = (0.0, 0.0);
    for k in 0..=DECADES {
        let b = split * 10f64.powi(-(k as i32));
        if b <= lo {
            return Ok(total);
        }
        let a = (b / 10.0).max(lo);
        let piece = integrate(f, a, b, tol)?;
        if !piece.is_finite() {
            return Err(Error::MomentDiverges(format!("non-finite integrand near speed {a:e}")));
        }
        total += piece;
        last = (last.1, piece);
    }
    let (prev, cur) = last;
    if prev <= 0.0 || cur <= 0.0 {
        return Ok(total);
    }
    let ratio = cur / prev;
    if ratio >= DIVERGENCE_RATIO {
        return Err(Error::MomentDiverges(format!(
            "decade contributions near zero speed do not decay (ratio {ratio:.6})"
        )));
    }
    Ok(total + cur * ratio / (1.0 - ratio))
}

/// The three moments and their maximum for a domain of the given diameter.
pub fn moment_c0<const N: usize>(
    rate: &RateFunction,
    initial: &VelocityInit<N>,
    wall: &VelocityLaw<N>,
    diameter: f64,
) -> Result<MomentConstants> {
    let law_moment = |law: &VelocityLaw<N>| {
        speed_moment(rate, diameter, |s| law.speed_density(s), law.speed_support())
    };
    let equilibrium = law_moment(wall)?;
    let initial = match initial {
        VelocityInit::Law(law) => law_moment(law)?,
        VelocityInit::Point(v) => rate.value(diameter / v.norm()),
        VelocityInit::Equilibrium => equilibrium,
    };
    let emission = speed_moment(rate, diameter, |s| wall.h_r(s), wall.speed_support())?;
    Ok(MomentConstants { initial, equilibrium, emission, c0: initial.max(equilibrium).max(emission) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity_law::LawKind;
    use nalgebra::Vector2;
    use std::f64::consts::PI;

    fn power(d: f64) -> RateFunction {
        RateFunction::PowerLaw { d }
    }

    #[test]
    fn constant_rate_gives_masses() {
        let m = VelocityLaw::<2>::maxwellian(1.0).unwrap();
        let c = moment_c0(&power(0.0), &VelocityInit::Equilibrium, &m, 2.0).unwrap();
        for v in [c.initial, c.equilibrium, c.emission, c.c0] {
            assert!((v - 1.0).abs() < 1e-9, "{c:?}");
        }
    }

    #[test]
    fn linear_rate_closed_forms() {
        // Speed density s e^{-s^2/2}: E[1 + 2/S] = 1 + 2 sqrt(pi/2).
        // Emitted density s^2 e^{-s^2/2} / sqrt(pi/2): E[1 + 2/S] = 1 + 2 sqrt(2/pi).
        let m = VelocityLaw::<2>::maxwellian(1.0).unwrap();
        let c = moment_c0(&power(1.0), &VelocityInit::Equilibrium, &m, 2.0).unwrap();
        let eq = 1.0 + 2.0 * (PI / 2.0).sqrt();
        let em = 1.0 + 2.0 * (2.0 / PI).sqrt();
        assert!((c.equilibrium - eq).abs() < 1e-8 * eq, "{c:?}");
        assert!((c.emission - em).abs() < 1e-8 * em, "{c:?}");
        assert_eq!(c.c0, c.equilibrium);
    }

    #[test]
    fn divergence_gate() {
        let m = VelocityLaw::<2>::maxwellian(1.0).unwrap();
        for d in [0.5, 1.0, 1.9] {
            let c = moment_c0(&power(d), &VelocityInit::Equilibrium, &m, 2.0).unwrap();
            assert!(c.c0.is_finite());
        }
        assert!(matches!(
            moment_c0(&power(2.0), &VelocityInit::Equilibrium, &m, 2.0),
            Err(Error::MomentDiverges(_))
        ));
        let m3 = VelocityLaw::<3>::maxwellian(1.0).unwrap();
        assert!(moment_c0(&power(2.5), &VelocityInit::Equilibrium, &m3, 2.0).is_ok());
        assert!(moment_c0(&power(3.0), &VelocityInit::Equilibrium, &m3, 2.0).is_err());
    }

    #[test]
    fn near_critical_exponent_matches_closed_form() {
        // d = 1.9 with diameter 1: ∫ (1 + 1/s)^1.9 s e^{-s^2/2} ds, checked
        // against a substitution s = u^{10} that removes the singularity.
        let m = VelocityLaw::<2>::maxwellian(1.0).unwrap();
        let got = moment_c0(&power(1.9), &VelocityInit::Equilibrium, &m, 1.0).unwrap().equilibrium;
        let g = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let s = u.powi(10);
            (s + 1.0).powf(1.9) * s.powf(-0.9) * (-s * s / 2.0).exp() * 10.0 * u.powi(9)
        };
        let want = integrate(g, 0.0, 1.0, Tolerance::default()).unwrap()
            + integrate_to_infinity(|s| (1.0 + 1.0 / s).powf(1.9) * s * (-s * s / 2.0).exp(), 1.0, Tolerance::default())
                .unwrap();
        assert!((got - want).abs() < 1e-6 * want, "{got} {want}");
    }

    #[test]
    fn initial_law_variants() {
        let m = VelocityLaw::<2>::maxwellian(1.0).unwrap();
        let c = moment_c0(&power(1.0), &VelocityInit::Point(Vector2::new(0.5, 0.0)), &m, 2.0).unwrap();
        assert!((c.initial - 5.0).abs() < 1e-12);
        assert_eq!(c.c0, 5.0);
        // Speed uniform on [0, 1]: E[(1 + 2/S)^d] diverges for d >= 1.
        let tp = VelocityLaw::<2>::new(LawKind::TruncatedPower { alpha: 1.0 }).unwrap();
        let c = moment_c0(&power(0.5), &VelocityInit::Law(tp.clone()), &m, 2.0).unwrap();
        assert!(c.initial > c.equilibrium);
        assert!(moment_c0(&power(1.0), &VelocityInit::Law(tp), &m, 2.0).is_err());
    }

    #[test]
    fn log_corrected_is_finite_at_critical_power() {
        let m = VelocityLaw::<2>::maxwellian(1.0).unwrap();
        let r = RateFunction::LogCorrected { power: 2.0 };
        assert!(moment_c0(&r, &VelocityInit::Equilibrium, &m, 2.0).unwrap().c0.is_finite());
    }
}
