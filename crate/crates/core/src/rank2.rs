//! Closed-form solutions for the dihedral families `I2(g)`, `g = 3, 4, 6`.
//!
//! With a unit start `x0 = e^{i theta0}`, `theta0 in (0, pi/g)`, the radius
//! is `r(t) = sqrt(1 - 2nt)` and `cos(g theta(t)) = P2(t) / r(t)^g`.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::flow::{self, FlowError, FlowOptions, Variant};
use crate::weyl::{build_root_system, Family, Multiplicities, RootSystem, WeylError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Rank2Error {
    #[error("closed forms exist only for g in {{3, 4, 6}}, got {0}")]
    UnsupportedG(u32),
    #[error("g = {0} requires equal multiplicities")]
    UnequalMultiplicities(u32),
    #[error("initial angle {0} outside (0, pi/g)")]
    AngleOutOfRange(f64),
    #[error("time {t} outside [0, {t_max}]")]
    OutOfDomain { t: f64, t_max: f64 },
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    TowardZero,
    Stationary,
    TowardWall,
}

/// Angle of the minimal submanifold in the chamber `(0, pi/g)`.
pub fn minimal_angle(g: u32, m1: u32, m2: u32) -> Result<f64, Rank2Error> {
    match g {
        3 | 6 => Ok(PI / (2.0 * g as f64)),
        4 => Ok(0.25 * ((m2 as f64 - m1 as f64) / (m2 as f64 + m1 as f64)).acos()),
        _ => Err(Rank2Error::UnsupportedG(g)),
    }
}

pub fn dimension(g: u32, m1: u32, m2: u32) -> u32 {
    if g.is_multiple_of(2) {
        g / 2 * (m1 + m2)
    } else {
        g * m1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rank2Solution {
    pub g: u32,
    pub m1: u32,
    pub m2: u32,
    pub theta0: f64,
    pub n: u32,
    #[serde(rename = "T")]
    pub t_max: f64,
    pub branch: Branch,
}

impl Rank2Solution {
    pub fn new(g: u32, m1: u32, m2: u32, theta0: f64) -> Result<Self, Rank2Error> {
        if !matches!(g, 3 | 4 | 6) {
            return Err(Rank2Error::UnsupportedG(g));
        }
        if g != 4 && m1 != m2 {
            return Err(Rank2Error::UnequalMultiplicities(g));
        }
        if !(theta0 > 0.0 && theta0 < PI / g as f64) {
            return Err(Rank2Error::AngleOutOfRange(theta0));
        }
        let th_g = minimal_angle(g, m1, m2)?;
        let branch = if (theta0 - th_g).abs() <= 1e-14 {
            Branch::Stationary
        } else if theta0 < th_g {
            Branch::TowardZero
        } else {
            Branch::TowardWall
        };
        let mut sol = Self {
            g,
            m1,
            m2,
            theta0,
            n: dimension(g, m1, m2),
            t_max: 0.0,
            branch,
        };
        sol.t_max = sol.compute_maximal_time();
        Ok(sol)
    }

    fn d(&self) -> f64 {
        (self.m2 as f64 - self.m1 as f64) / (self.m1 + self.m2) as f64
    }

    fn compute_maximal_time(&self) -> f64 {
        let n2 = 2.0 * self.n as f64;
        if self.branch == Branch::Stationary {
            return 1.0 / n2;
        }
        let c0 = (self.g as f64 * self.theta0).cos();
        let (m1, m2) = (self.m1 as f64, self.m2 as f64);
        match self.g {
            4 => {
                let d = self.d();
                let u2 = match self.branch {
                    Branch::TowardZero => (m1 + m2) / (2.0 * m1) * (c0 - d),
                    _ => (m1 + m2) / (2.0 * m2) * (d - c0),
                };
                (1.0 - u2.max(0.0).sqrt()) / n2
            }
            g => (1.0 - c0.abs().powf(2.0 / g as f64)) / n2,
        }
    }

    /// Collapse time of the unit start.
    pub fn maximal_time(&self) -> f64 {
        self.t_max
    }

    /// Limit angle at the collapse time.
    pub fn limit_angle(&self) -> Option<f64> {
        match self.branch {
            Branch::TowardZero => Some(0.0),
            Branch::TowardWall => Some(PI / self.g as f64),
            Branch::Stationary => None,
        }
    }

    /// `cos(g theta(t)) * r(t)^g`, i.e. `P2` along the flow.
    pub fn p2(&self, t: f64) -> f64 {
        let c0 = (self.g as f64 * self.theta0).cos();
        if self.g == 4 {
            c0 - 8.0 * (self.m2 as f64 - self.m1 as f64) * (t - self.n as f64 * t * t)
        } else {
            c0
        }
    }

    /// `(theta(t), r(t))` for `0 <= t <= T`.
    pub fn theta_of_t(&self, t: f64) -> Result<(f64, f64), Rank2Error> {
        if !(0.0..=self.t_max).contains(&t) {
            return Err(Rank2Error::OutOfDomain { t, t_max: self.t_max });
        }
        let r2 = 1.0 - 2.0 * self.n as f64 * t;
        let r = r2.sqrt();
        if self.branch == Branch::Stationary {
            return Ok((self.theta0, r));
        }
        let arg = self.p2(t) / r2.powf(self.g as f64 / 2.0);
        if arg.abs() > 1.0 + 1e-12 || !arg.is_finite() {
            return Err(Rank2Error::OutOfDomain { t, t_max: self.t_max });
        }
        Ok((arg.clamp(-1.0, 1.0).acos() / self.g as f64, r))
    }
}

pub fn root_system(g: u32, m1: u32, m2: u32) -> Result<RootSystem, Rank2Error> {
    let m = if m1 == m2 { Multiplicities::Uniform(m1) } else { Multiplicities::Two { m1, m2 } };
    Ok(build_root_system(Family::I2(g as usize), m)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct Orbit {
    /// Open interval of initial angles on this orbit.
    pub start_range: (f64, f64),
    pub limit_angle: f64,
    /// `(t, theta)` along one representative spherical flow line.
    pub samples: Vec<(f64, f64)>,
    #[serde(rename = "T")]
    pub t_collapse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhasePortrait {
    pub g: u32,
    pub m1: u32,
    pub m2: u32,
    /// Angle of the stationary point.
    pub p0: f64,
    pub orbits: Vec<Orbit>,
}

/// The three orbits of the flow on the unit circle arc of the chamber.
pub fn spherical_phase_portrait(g: u32, m1: u32, m2: u32) -> Result<PhasePortrait, Rank2Error> {
    let th_g = minimal_angle(g, m1, m2)?;
    let rs = root_system(g, m1, m2)?;
    let mut orbits = Vec::new();
    for (range, limit, start) in [
        ((0.0, th_g), 0.0, th_g - 1e-6),
        ((th_g, PI / g as f64), PI / g as f64, th_g + 1e-6),
    ] {
        let x0 = DVector::from_vec(vec![start.cos(), start.sin()]);
        let traj = flow::integrate(&rs, &x0, Variant::Spherical, &FlowOptions::default())?;
        let samples = traj.samples.iter().map(|s| (s.t, s.x[1].atan2(s.x[0]))).collect();
        let t_collapse = traj.collapse.as_ref().map(|c| c.t_collapse).unwrap_or(f64::NAN);
        orbits.push(Orbit {
            start_range: range,
            limit_angle: limit,
            samples,
            t_collapse,
        });
    }
    Ok(PhasePortrait {
        g,
        m1,
        m2,
        p0: th_g,
        orbits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::mcv_euclidean;

    #[test]
    fn minimal_angles() {
        assert_eq!(minimal_angle(3, 1, 1).unwrap(), PI / 6.0);
        assert!((minimal_angle(4, 2, 2).unwrap() - PI / 8.0).abs() < 1e-15);
        let th = minimal_angle(4, 1, 3).unwrap();
        assert!((th - PI / 12.0).abs() < 1e-15);
        let rs = root_system(4, 1, 3).unwrap();
        let x = DVector::from_vec(vec![th.cos(), th.sin()]);
        let res = mcv_euclidean(&rs, &x).unwrap() + &x * rs.n() as f64;
        assert!(res.norm() < 1e-12);
        assert!(minimal_angle(5, 1, 1).is_err());
    }

    #[test]
    fn stationary_branch() {
        let s = Rank2Solution::new(3, 1, 1, PI / 6.0).unwrap();
        assert_eq!(s.branch, Branch::Stationary);
        assert_eq!(s.maximal_time(), 1.0 / 6.0);
        let (th, r) = s.theta_of_t(0.1).unwrap();
        assert_eq!(th, PI / 6.0);
        assert!((r - (1.0f64 - 0.6).sqrt()).abs() < 1e-15);
        let th4 = minimal_angle(4, 1, 2).unwrap();
        let s = Rank2Solution::new(4, 1, 2, th4).unwrap();
        assert_eq!(s.maximal_time(), 1.0 / 12.0);
    }

    #[test]
    fn g3_time_and_limits() {
        let s = Rank2Solution::new(3, 1, 1, PI / 12.0).unwrap();
        assert!((s.maximal_time() - (1.0 - (PI / 4.0).cos().powf(2.0 / 3.0)) / 6.0).abs() < 1e-16);
        assert_eq!(s.limit_angle(), Some(0.0));
        let (th, _) = s.theta_of_t(0.0).unwrap();
        assert!((th - PI / 12.0).abs() < 1e-15);
        let (th, _) = s.theta_of_t(s.maximal_time()).unwrap();
        assert!(th < 1e-6);
        let s = Rank2Solution::new(3, 1, 1, 0.25 * PI).unwrap();
        assert_eq!(s.limit_angle(), Some(PI / 3.0));
        assert!(matches!(s.theta_of_t(1.0), Err(Rank2Error::OutOfDomain { .. })));
    }

    #[test]
    fn g4_branches_hit_the_walls() {
        let (m1, m2) = (1, 2);
        let th4 = minimal_angle(4, m1, m2).unwrap();
        for th0 in [0.2 * th4, 0.9 * th4, th4 + 0.1 * (PI / 4.0 - th4), th4 + 0.9 * (PI / 4.0 - th4)] {
            let s = Rank2Solution::new(4, m1, m2, th0).unwrap();
            let t = s.maximal_time();
            let u2 = 1.0 - 2.0 * s.n as f64 * t;
            let c = s.p2(t) / (u2 * u2);
            let want = if th0 < th4 { 1.0 } else { -1.0 };
            assert!((c - want).abs() < 1e-12, "{th0}: {c}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(Rank2Solution::new(5, 1, 1, 0.1).unwrap_err(), Rank2Error::UnsupportedG(5));
        assert_eq!(Rank2Solution::new(6, 1, 2, 0.1).unwrap_err(), Rank2Error::UnequalMultiplicities(6));
        assert!(matches!(Rank2Solution::new(3, 1, 1, 1.2), Err(Rank2Error::AngleOutOfRange(_))));
    }

    #[test]
    fn g6_matches_numeric_flow() {
        let s = Rank2Solution::new(6, 1, 1, PI / 18.0).unwrap();
        let rs = root_system(6, 1, 1).unwrap();
        let x0 = DVector::from_vec(vec![s.theta0.cos(), s.theta0.sin()]);
        let traj = flow::integrate(&rs, &x0, Variant::Euclidean, &FlowOptions::default()).unwrap();
        let t = s.maximal_time() / 2.0;
        let x = traj.at(t).unwrap();
        let (th, r) = s.theta_of_t(t).unwrap();
        assert!((x[1].atan2(x[0]) - th).abs() < 1e-8);
        assert!((x.norm() - r).abs() < 1e-8);
    }

    #[test]
    fn portrait_orbits() {
        let p = spherical_phase_portrait(4, 1, 2).unwrap();
        assert_eq!(p.p0, minimal_angle(4, 1, 2).unwrap());
        assert_eq!(p.orbits.len(), 2);
        let end0 = p.orbits[0].samples.last().unwrap().1;
        let end1 = p.orbits[1].samples.last().unwrap().1;
        assert!(end0.abs() < 1e-6, "end gap {end0}");
        assert!((end1 - PI / 4.0).abs() < 1e-6);
    }
}
