//! The flow in Weyl-invariant polynomial coordinates.
//!
//! Generators per family:
//! - `A_k`: elementary symmetric `sigma_1..sigma_{k+1}` of the coordinates;
//! - `B_k`: elementary symmetric `s_1..s_k` of the squares;
//! - `D_k`: `s_1..s_k` of the squares and the product `q = x_1 ... x_k`
//!   (`q^2 = s_k`; `q` fixes the sign of the last coordinate);
//! - `I2(g)`: `P1 = |x|^2`, `P2 = Re((x1 + i x2)^g)`.
//!
//! Along the Euclidean flow each coordinate satisfies `y_r' = c_r + a_r y_j`
//! with `j < r`, so the solution is polynomial in `t`.  On the sphere a
//! degree-`s` coordinate gains the term `s n y_r` and the solution is a sum
//! of exponentials.

use nalgebra::DVector;
use num_traits::{Num, One, Signed, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use crate::poly::{complex_roots, discriminant, q_from_f64, q_int, q_to_f64, smallest_root, QPoly, Q};
use crate::rank2;
use crate::weyl::{stratum_of, ChamberPoint, Family, Multiplicities, RootSystem, WeylError};

/// Roots closer than this (relative to the point's norm) are merged.
pub const ROOT_CLUSTER_TOL: f64 = 1e-7;
pub use crate::flow::ORIGIN_TOL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantError {
    #[error("no closed invariant recursion for {0}")]
    UnsupportedFamily(String),
    #[error("invariant values are not in the image of the closed chamber: {0}")]
    NotInImage(String),
    #[error("recovered point lies on the chamber boundary (roots {0:?} vanish)")]
    MultipleRootAtBoundary(Vec<usize>),
    #[error("wrong number of invariant coordinates: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },
    #[error(transparent)]
    Weyl(#[from] WeylError),
}

fn elementary_symmetric<T: Num + Clone>(x: &[T]) -> Vec<T> {
    let mut e = vec![T::zero(); x.len() + 1];
    e[0] = T::one();
    for v in x {
        for r in (1..e.len()).rev() {
            e[r] = e[r].clone() + e[r - 1].clone() * v.clone();
        }
    }
    e.remove(0);
    e
}

/// Invariant coordinates in any numeric field (exact for rational input).
pub fn eval_invariants_generic<T: Num + Clone>(family: Family, x: &[T]) -> Vec<T> {
    match family {
        Family::A(_) => elementary_symmetric(x),
        Family::B(_) => {
            let sq: Vec<T> = x.iter().map(|v| v.clone() * v.clone()).collect();
            elementary_symmetric(&sq)
        }
        Family::D(_) => {
            let sq: Vec<T> = x.iter().map(|v| v.clone() * v.clone()).collect();
            let mut s = elementary_symmetric(&sq);
            s.push(x.iter().fold(T::one(), |a, v| a * v.clone()));
            s
        }
        Family::I2(g) => {
            let (a, b) = (x[0].clone(), x[1].clone());
            let p1 = a.clone() * a.clone() + b.clone() * b.clone();
            let (mut re, mut im) = (T::one(), T::zero());
            for _ in 0..g {
                let nre = re.clone() * a.clone() - im.clone() * b.clone();
                im = re * b.clone() + im * a.clone();
                re = nre;
            }
            vec![p1, re]
        }
    }
}

pub fn eval_invariants(rs: &RootSystem, x: &DVector<f64>) -> Vec<f64> {
    eval_invariants_generic(rs.family(), x.as_slice())
}

/// Polynomial degree of each invariant coordinate.
pub fn invariant_degrees(family: Family) -> Vec<u32> {
    match family {
        Family::A(k) => (1..=k as u32 + 1).collect(),
        Family::B(k) => (1..=k as u32).map(|r| 2 * r).collect(),
        Family::D(k) => (1..=k as u32).map(|r| 2 * r).chain([k as u32]).collect(),
        Family::I2(g) => vec![2, g as u32],
    }
}

/// One row `y_r' = constant + sum coef * y_j` of the invariant vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionRow {
    pub constant: Q,
    pub terms: Vec<(usize, Q)>,
}

/// The triangular polynomial vector field `eta` in invariant coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Recursion {
    pub family: Family,
    pub n: u32,
    pub degrees: Vec<u32>,
    pub rows: Vec<RecursionRow>,
}

impl Recursion {
    /// `eta(y)` in floating point.
    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| q_to_f64(&r.constant) + r.terms.iter().map(|(j, c)| q_to_f64(c) * y[*j]).sum::<f64>())
            .collect()
    }
}

fn row(constant: Q, terms: Vec<(usize, Q)>) -> RecursionRow {
    RecursionRow {
        constant,
        terms: terms.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
    }
}

/// Builds the exact invariant vector field.
pub fn exact_recursion(rs: &RootSystem) -> Result<Recursion, InvariantError> {
    let fam = rs.family();
    let (m1, m2) = match rs.multiplicities() {
        Multiplicities::Uniform(m) => (m as i64, m as i64),
        Multiplicities::Two { m1, m2 } => (m1 as i64, m2 as i64),
    };
    let n = rs.n() as i64;
    // contribution coef * y_{idx}, where idx = -1 denotes the constant 1
    let lower = |idx: i64, coef: i64| -> RecursionRow {
        if idx < -1 {
            row(Q::zero(), vec![])
        } else if idx == -1 {
            row(q_int(coef), vec![])
        } else {
            row(Q::zero(), vec![(idx as usize, q_int(coef))])
        }
    };
    let rows = match fam {
        Family::A(k) => {
            let k = k as i64;
            (1..=k + 1)
                .map(|r| {
                    // sigma_r' = (m/2)(k-r+3)(k-r+2) sigma_{r-2}
                    let c = m1 * (k - r + 3) * (k - r + 2);
                    let mut rw = lower(r - 3, c);
                    rw.constant /= q_int(2);
                    for t in rw.terms.iter_mut() {
                        t.1 /= q_int(2);
                    }
                    rw
                })
                .collect()
        }
        Family::B(k) => {
            let k = k as i64;
            (1..=k).map(|j| lower(j - 2, -2 * (k - j + 1) * (m2 + m1 * (k - j)))).collect()
        }
        Family::D(k) => {
            let k = k as i64;
            let mut rows: Vec<RecursionRow> = (1..=k).map(|r| lower(r - 2, -2 * m1 * (k - r + 1) * (k - r))).collect();
            rows.push(row(Q::zero(), vec![]));
            rows
        }
        Family::I2(g) => match g {
            3 | 6 => vec![row(q_int(-2 * n), vec![]), row(Q::zero(), vec![])],
            4 => vec![row(q_int(-2 * n), vec![]), row(Q::zero(), vec![(0, q_int(-8 * (m2 - m1)))])],
            _ => return Err(InvariantError::UnsupportedFamily(fam.to_string())),
        },
    };
    Ok(Recursion {
        family: fam,
        n: rs.n(),
        degrees: invariant_degrees(fam),
        rows,
    })
}

/// `c1 e^{s n t} + sum_i coef_i e^{rate_i t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSum {
    pub s: u32,
    pub c1: Q,
    pub h: Vec<(i64, Q)>,
}

impl ExpSum {
    pub fn eval(&self, n: u32, t: f64) -> f64 {
        q_to_f64(&self.c1) * ((self.s as f64) * n as f64 * t).exp()
            + self.h.iter().map(|(r, c)| q_to_f64(c) * (*r as f64 * t).exp()).sum::<f64>()
    }

    /// The part `h(t)` without the free mode.
    pub fn h_at(&self, t: f64) -> f64 {
        self.h.iter().map(|(r, c)| q_to_f64(c) * (*r as f64 * t).exp()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coordinates {
    Polynomial(Vec<QPoly>),
    Exponential(Vec<ExpSum>),
}

/// Exact invariant coordinates along the flow as functions of `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantTrajectory {
    pub family: Family,
    pub n: u32,
    pub degrees: Vec<u32>,
    pub coords: Coordinates,
    /// Whether the initial point was given exactly (as rationals).
    pub exact: bool,
}

impl InvariantTrajectory {
    pub fn is_spherical(&self) -> bool {
        matches!(self.coords, Coordinates::Exponential(_))
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        match &self.coords {
            Coordinates::Polynomial(ps) => {
                // evaluate exactly, then round once
                let tq = q_from_f64(t);
                ps.iter().map(|p| q_to_f64(&p.eval(&tq))).collect()
            }
            Coordinates::Exponential(es) => es.iter().map(|e| e.eval(self.n, t)).collect(),
        }
    }

    /// Exact values of the Euclidean coordinates at a rational time.
    pub fn eval_exact(&self, t: &Q) -> Option<Vec<Q>> {
        match &self.coords {
            Coordinates::Polynomial(ps) => Some(ps.iter().map(|p| p.eval(t)).collect()),
            Coordinates::Exponential(_) => None,
        }
    }

    fn fmt_q(&self, v: &Q) -> Value {
        if self.exact {
            if v.denom().is_one() {
                Value::String(v.numer().to_string())
            } else {
                Value::String(format!("{}/{}", v.numer(), v.denom()))
            }
        } else {
            json!(q_to_f64(v))
        }
    }

    pub fn to_json_value(&self) -> Value {
        let coords: Vec<Value> = match &self.coords {
            Coordinates::Polynomial(ps) => ps
                .iter()
                .map(|p| Value::Array(p.coeffs().iter().map(|c| self.fmt_q(c)).collect()))
                .collect(),
            Coordinates::Exponential(es) => es
                .iter()
                .map(|e| {
                    json!({
                        "c1": self.fmt_q(&e.c1),
                        "h": e.h.iter().map(|(r, c)| json!({"rate": r, "coef": self.fmt_q(c)})).collect::<Vec<_>>(),
                        "s": e.s,
                    })
                })
                .collect(),
        };
        json!({
            "family": self.family.to_string(),
            "n": self.n,
            "spherical": self.is_spherical(),
            "exact": self.exact,
            "degrees": self.degrees,
            "coordinates": coords,
        })
    }
}

/// Integrates the recursion from exact initial values.
pub fn exact_trajectory_from(rec: &Recursion, y0: &[Q], spherical: bool, exact: bool) -> Result<InvariantTrajectory, InvariantError> {
    if y0.len() != rec.rows.len() {
        return Err(InvariantError::Arity {
            expected: rec.rows.len(),
            got: y0.len(),
        });
    }
    let coords = if !spherical {
        let mut ps: Vec<QPoly> = Vec::with_capacity(y0.len());
        for (r, rw) in rec.rows.iter().enumerate() {
            // y_r(t) = y_r(0) + int_0^t (c + sum a_j y_j)
            let mut integrand = QPoly::new(vec![rw.constant.clone()]);
            for (j, a) in &rw.terms {
                integrand = integrand.sub(&ps[*j].scale(&-a.clone()));
            }
            let mut c = vec![y0[r].clone()];
            c.extend(integrand.coeffs().iter().enumerate().map(|(i, v)| v / q_int(i as i64 + 1)));
            ps.push(QPoly::new(c));
        }
        Coordinates::Polynomial(ps)
    } else {
        let n = rec.n as i64;
        let mut es: Vec<ExpSum> = Vec::with_capacity(y0.len());
        for (r, rw) in rec.rows.iter().enumerate() {
            let s = rec.degrees[r];
            let lam = s as i64 * n;
            // forcing terms sum_i b_i e^{rate_i t}
            let mut forcing: Vec<(i64, Q)> = Vec::new();
            let mut push = |rate: i64, c: Q| {
                if c.is_zero() {
                    return;
                }
                if let Some(e) = forcing.iter_mut().find(|e| e.0 == rate) {
                    e.1 += c;
                } else {
                    forcing.push((rate, c));
                }
            };
            push(0, rw.constant.clone());
            for (j, a) in &rw.terms {
                let e = &es[*j];
                push(e.s as i64 * n, a * &e.c1);
                for (rate, c) in &e.h {
                    push(*rate, a * c);
                }
            }
            // particular solution b e^{rate t} / (rate - lam)
            let h: Vec<(i64, Q)> = forcing
                .into_iter()
                .map(|(rate, b)| {
                    assert_ne!(rate, lam, "resonant forcing");
                    (rate, b / q_int(rate - lam))
                })
                .filter(|(_, c)| !c.is_zero())
                .collect();
            let hsum = h.iter().fold(Q::zero(), |acc, (_, c)| acc + c);
            es.push(ExpSum {
                s,
                c1: &y0[r] - hsum,
                h,
            });
        }
        Coordinates::Exponential(es)
    };
    Ok(InvariantTrajectory {
        family: rec.family,
        n: rec.n,
        degrees: rec.degrees.clone(),
        coords,
        exact,
    })
}

/// Exact invariant trajectory from a floating initial point.
pub fn exact_trajectory(rs: &RootSystem, x0: &DVector<f64>, spherical: bool) -> Result<InvariantTrajectory, InvariantError> {
    rs.check_dim(x0)?;
    let xq: Vec<Q> = x0.iter().map(|v| q_from_f64(*v)).collect();
    exact_trajectory_rational(rs, &xq, spherical, false)
}

/// Exact invariant trajectory from rational coordinates.
pub fn exact_trajectory_rational(rs: &RootSystem, x0: &[Q], spherical: bool, exact: bool) -> Result<InvariantTrajectory, InvariantError> {
    let rec = exact_recursion(rs)?;
    let y0 = eval_invariants_generic(rs.family(), x0);
    exact_trajectory_from(&rec, &y0, spherical, exact)
}

fn cluster_real_roots(mut roots: Vec<nalgebra::Complex<f64>>, tol: f64, im_tol: f64) -> Result<Vec<f64>, InvariantError> {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re));
    let mut out: Vec<f64> = Vec::with_capacity(roots.len());
    let mut i = 0;
    while i < roots.len() {
        let mut j = i + 1;
        while j < roots.len() && (roots[j] - roots[j - 1]).norm() <= tol {
            j += 1;
        }
        let cnt = (j - i) as f64;
        let re = roots[i..j].iter().map(|z| z.re).sum::<f64>() / cnt;
        let im = roots[i..j].iter().map(|z| z.im).sum::<f64>() / cnt;
        if j - i == 1 && roots[i].im.abs() > im_tol || im.abs() > im_tol {
            return Err(InvariantError::NotInImage(format!("complex root {:e}{:+e}i", roots[i].re, roots[i].im)));
        }
        for _ in i..j {
            out.push(re);
        }
        i = j;
    }
    Ok(out)
}

/// Monic polynomial `prod (z - r_i)` from elementary symmetric values, lowest first.
fn monic_from_elementary(e: &[f64]) -> Vec<f64> {
    let d = e.len();
    let mut c = vec![0.0; d + 1];
    c[d] = 1.0;
    for (r, v) in e.iter().enumerate() {
        let sign = if (r + 1) % 2 == 0 { 1.0 } else { -1.0 };
        c[d - r - 1] = sign * v;
    }
    c
}

/// Inverts the invariant map on the closed chamber.
///
/// Points on the boundary are returned with their stratum.
pub fn recover_point(rs: &RootSystem, y: &[f64]) -> Result<ChamberPoint, InvariantError> {
    let fam = rs.family();
    let expected = invariant_degrees(fam).len();
    if y.len() != expected {
        return Err(InvariantError::Arity { expected, got: y.len() });
    }
    let coords: Vec<f64> = match fam {
        Family::A(_) => {
            let nsq = y[0] * y[0] - 2.0 * y[1];
            if nsq < 0.0 || y[0].abs() > 1e-9 * nsq.sqrt().max(f64::MIN_POSITIVE) {
                return Err(InvariantError::NotInImage(format!("sum {:e}, squared norm {nsq:e}", y[0])));
            }
            let scale = nsq.sqrt();
            if scale == 0.0 {
                vec![0.0; y.len()]
            } else {
                let roots = complex_roots(&monic_from_elementary(y));
                cluster_real_roots(roots, ROOT_CLUSTER_TOL * scale, 1e-9 * scale)?
            }
        }
        Family::B(_) | Family::D(_) => {
            let k = match fam {
                Family::B(k) | Family::D(k) => k,
                _ => unreachable!(),
            };
            if y[0] < 0.0 {
                return Err(InvariantError::NotInImage(format!("squared norm {:e}", y[0])));
            }
            let scale2 = y[0];
            if scale2 == 0.0 {
                vec![0.0; k]
            } else {
                let scale = scale2.sqrt();
                let roots = complex_roots(&monic_from_elementary(&y[..k]));
                // a root cluster of squares at distance d corresponds to
                // coordinates at distance about d / scale
                let sq = cluster_real_roots(roots, ROOT_CLUSTER_TOL * scale2, 1e-9 * scale2)?;
                let mut sq: Vec<f64> = sq
                    .into_iter()
                    .map(|v| {
                        if v < -1e-9 * scale2 {
                            Err(InvariantError::NotInImage(format!("negative square {v:e}")))
                        } else if v.abs() <= (ROOT_CLUSTER_TOL * scale).powi(2) {
                            Ok(0.0)
                        } else {
                            Ok(v.max(0.0))
                        }
                    })
                    .collect::<Result<_, _>>()?;
                sq.sort_by(|a, b| b.total_cmp(a));
                let mut x: Vec<f64> = sq.iter().map(|v| -v.sqrt()).collect();
                if let Family::D(_) = fam {
                    let q = y[k];
                    let head: f64 = x[..k - 1].iter().product();
                    if x[k - 1] != 0.0 && q.abs() > 1e-12 * scale.powi(k as i32) {
                        let sign = (q / head).signum();
                        x[k - 1] = sign * x[k - 1].abs();
                    }
                }
                x
            }
        }
        Family::I2(g) => {
            if y[0] < 0.0 {
                return Err(InvariantError::NotInImage(format!("squared norm {:e}", y[0])));
            }
            let r = y[0].sqrt();
            if r == 0.0 {
                vec![0.0, 0.0]
            } else {
                let c = y[1] / r.powi(g as i32);
                if c.abs() > 1.0 + 1e-12 {
                    return Err(InvariantError::NotInImage(format!("|P2| / P1^(g/2) = {} > 1", c.abs())));
                }
                let th = c.clamp(-1.0, 1.0).acos() / g as f64;
                vec![r * th.cos(), r * th.sin()]
            }
        }
    };
    let x = DVector::from_vec(coords);
    let scale = x.norm();
    let tol = (ROOT_CLUSTER_TOL * 10.0 * scale).max(f64::MIN_POSITIVE);
    let s = stratum_of(rs, &x, tol)?;
    Ok(ChamberPoint { coords: x, stratum: s.vanishing })
}

/// Like [`recover_point`] but rejects boundary points.
pub fn recover_interior_point(rs: &RootSystem, y: &[f64]) -> Result<ChamberPoint, InvariantError> {
    let p = recover_point(rs, y)?;
    if p.stratum.is_empty() {
        Ok(p)
    } else {
        Err(InvariantError::MultipleRootAtBoundary(p.stratum))
    }
}

/// The W-discriminant (proportional to `prod <x, alpha>^2`) in invariant coordinates.
pub fn chamber_discriminant(family: Family, y: &[Q]) -> Q {
    let poly_of = |e: &[Q]| -> QPoly {
        let d = e.len();
        let mut c = vec![Q::zero(); d + 1];
        c[d] = Q::one();
        for (r, v) in e.iter().enumerate() {
            c[d - r - 1] = if (r + 1) % 2 == 0 { v.clone() } else { -v.clone() };
        }
        QPoly::new(c)
    };
    match family {
        Family::A(_) => discriminant(&poly_of(y)),
        Family::B(k) => discriminant(&poly_of(&y[..k])) * &y[k - 1],
        Family::D(k) => discriminant(&poly_of(&y[..k])),
        Family::I2(g) => {
            let mut p = Q::one();
            for _ in 0..g / 2 {
                p *= &y[0];
            }
            // P1^{g/2} squared, times P1 for odd g
            let mut v = &p * &p;
            if g % 2 == 1 {
                v *= &y[0];
            }
            v - &y[1] * &y[1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactCollapse {
    pub t_collapse: f64,
    /// Bracket of the exact collapse time.
    pub bracket: (f64, f64),
    pub x_limit: ChamberPoint,
    /// The discriminant polynomial in `t` whose first root is the collapse time.
    pub discriminant: Option<QPoly>,
}

/// First time at which the invariant curve meets the chamber boundary.
pub fn exact_collapse_time(rs: &RootSystem, x0: &DVector<f64>) -> Result<ExactCollapse, InvariantError> {
    let xq: Vec<Q> = x0.iter().map(|v| q_from_f64(*v)).collect();
    exact_collapse_time_rational(rs, &xq)
}

pub fn exact_collapse_time_rational(rs: &RootSystem, x0: &[Q]) -> Result<ExactCollapse, InvariantError> {
    let fam = rs.family();
    let x0f = DVector::from_iterator(x0.len(), x0.iter().map(q_to_f64));
    let s0 = stratum_of(rs, &x0f, crate::weyl::default_zero_tol(&x0f))?;
    if !s0.vanishing.is_empty() {
        return Err(InvariantError::MultipleRootAtBoundary(s0.vanishing));
    }
    let traj = exact_trajectory_rational(rs, x0, false, true)?;
    let r0sq = x0.iter().fold(Q::zero(), |a, v| a + v * v);
    let t_max = &r0sq / q_int(2 * rs.n() as i64);
    if let Family::I2(g @ (3 | 4 | 6)) = fam {
        let (m1, m2) = match rs.multiplicities() {
            Multiplicities::Uniform(m) => (m, m),
            Multiplicities::Two { m1, m2 } => (m1, m2),
        };
        let r0 = q_to_f64(&r0sq).sqrt();
        let th0 = x0f[1].atan2(x0f[0]);
        let sol = rank2::Rank2Solution::new(g as u32, m1, m2, th0).map_err(|e| InvariantError::NotInImage(e.to_string()))?;
        let t = sol.maximal_time() * r0 * r0;
        let y = traj.eval(t);
        let x_limit = limit_from(rs, &y, r0)?;
        return Ok(ExactCollapse {
            t_collapse: t,
            bracket: (t, t),
            x_limit,
            discriminant: None,
        });
    }
    let deg = rs.num_roots();
    let nodes: Vec<Q> = (0..=deg).map(|i| &t_max * q_int(i as i64) / q_int(deg as i64)).collect();
    let vals: Vec<Q> = nodes
        .iter()
        .map(|t| chamber_discriminant(fam, &traj.eval_exact(t).expect("euclidean")))
        .collect();
    let disc = QPoly::interpolate(&nodes, &vals);
    let (lo, hi) = smallest_root(&disc, &Q::zero(), &t_max, 80)
        .ok_or_else(|| InvariantError::NotInImage("discriminant has no root before the radial bound".into()))?;
    let mid = (&lo + &hi) / q_int(2);
    let y: Vec<f64> = traj.eval_exact(&mid).expect("euclidean").iter().map(q_to_f64).collect();
    let x_limit = limit_from(rs, &y, q_to_f64(&r0sq).sqrt())?;
    Ok(ExactCollapse {
        t_collapse: q_to_f64(&mid),
        bracket: (q_to_f64(&lo), q_to_f64(&hi)),
        x_limit,
        discriminant: Some(disc),
    })
}

fn limit_from(rs: &RootSystem, y: &[f64], r0: f64) -> Result<ChamberPoint, InvariantError> {
    let p = recover_point(rs, y)?;
    if p.coords.norm() <= ORIGIN_TOL * r0 {
        let z = DVector::zeros(rs.dim());
        return Ok(ChamberPoint {
            coords: z,
            stratum: (0..rs.num_roots()).collect(),
        });
    }
    Ok(p)
}

/// Sign of a rational as `-1`, `0` or `1`.
pub fn q_sign(v: &Q) -> i32 {
    if v.is_positive() {
        1
    } else if v.is_negative() {
        -1
    } else {
        0
    }
}
