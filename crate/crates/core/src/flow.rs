//! Mean curvature flow on the Weyl chamber.
//!
//! A point `x` of the chamber determines the isoparametric submanifold
//! through it; its mean curvature vector in the normal slice is
//! `H(x) = -sum m_a a / <x, a>`.  The Euclidean flow is `x' = H(x)`, the
//! flow in the unit sphere is `x' = H(x) + n x`, and on a boundary stratum
//! the sum runs over the roots not vanishing there.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::ode::{self, OdeError, OdeOptions, OdeSystem, Solution, Termination};
use crate::weyl::{default_zero_tol, project_onto_walls, stratum_of, wall_gaps, ChamberPoint, RootSystem, WeylError};

/// Relative wall gap at which a trajectory is declared collapsed.
pub const COLLAPSE_GAP: f64 = 1e-7;
/// Limits closer than this to the origin (relative to `|x0|`) are reported
/// as the origin.  Starts within about `1e-12` of the minimal ray cannot be
/// told apart from it: the deviation grows like `|x|^-4` toward the origin.
pub const ORIGIN_TOL: f64 = 1e-3;
/// Step cap factor: `h <= STEP_CAP * gap / |field|` near the walls.
pub const STEP_CAP: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("point touches the wall of root {root} (gap {gap:e})")]
    WallContact { root: usize, gap: f64 },
    #[error("point is not on the unit sphere (norm {0})")]
    NotOnSphere(f64),
    #[error("trajectory ended at t = {0} without collapsing")]
    NotCollapsed(f64),
    #[error("negative scale factor requires refolding into the chamber")]
    AntipodalScale,
    #[error("scale factor must be nonzero and finite")]
    ZeroScale,
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error("integrator: {0}")]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Euclidean,
    Spherical,
    /// Flow on the stratum where the listed roots vanish.
    Focal(Vec<usize>),
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Euclidean => "euclidean",
            Variant::Spherical => "spherical",
            Variant::Focal(_) => "focal",
        }
    }
}

fn check_gaps(rs: &RootSystem, x: &DVector<f64>, active: &[usize], tol: f64) -> Result<(), FlowError> {
    for &i in active {
        let g = x.dot(rs.root(i));
        if g > -tol {
            return Err(FlowError::WallContact { root: i, gap: g });
        }
    }
    Ok(())
}

fn all_roots(rs: &RootSystem) -> Vec<usize> {
    (0..rs.num_roots()).collect()
}

fn field_sum(rs: &RootSystem, x: &DVector<f64>, active: &[usize]) -> DVector<f64> {
    let mut h = DVector::zeros(x.len());
    for &i in active {
        let a = rs.root(i);
        h.axpy(-(rs.mults()[i] as f64) / x.dot(a), a, 1.0);
    }
    h
}

/// Euclidean mean curvature vector `-sum m_a a / <x, a>`.
pub fn mcv_euclidean(rs: &RootSystem, x: &DVector<f64>) -> Result<DVector<f64>, FlowError> {
    rs.check_dim(x)?;
    let active = all_roots(rs);
    check_gaps(rs, x, &active, default_zero_tol(x))?;
    Ok(field_sum(rs, x, &active))
}

/// Mean curvature vector of the submanifold in the unit sphere, `H(x) + n x`.
pub fn mcv_spherical(rs: &RootSystem, x: &DVector<f64>) -> Result<DVector<f64>, FlowError> {
    let norm = x.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(FlowError::NotOnSphere(norm));
    }
    Ok(mcv_euclidean(rs, x)? + x * rs.n() as f64)
}

/// Mean curvature vector on the stratum where the roots of `stratum` vanish.
pub fn mcv_focal(rs: &RootSystem, x: &DVector<f64>, stratum: &[usize]) -> Result<DVector<f64>, FlowError> {
    rs.check_dim(x)?;
    let active = complement(rs, stratum);
    check_gaps(rs, x, &active, default_zero_tol(x))?;
    Ok(field_sum(rs, x, &active))
}

/// `Q(x) = sum m_a / <x, a>^2`, a bound for `|II|^2`.
pub fn second_fundamental_bound(rs: &RootSystem, x: &DVector<f64>) -> Result<f64, FlowError> {
    rs.check_dim(x)?;
    check_gaps(rs, x, &all_roots(rs), default_zero_tol(x))?;
    Ok(q_value(rs, x, &all_roots(rs)))
}

fn q_value(rs: &RootSystem, x: &DVector<f64>, active: &[usize]) -> f64 {
    active
        .iter()
        .map(|&i| rs.mults()[i] as f64 / x.dot(rs.root(i)).powi(2))
        .sum()
}

fn complement(rs: &RootSystem, idx: &[usize]) -> Vec<usize> {
    (0..rs.num_roots()).filter(|i| !idx.contains(i)).collect()
}

/// The chamber vector field as an [`OdeSystem`].
pub struct FlowSystem<'a> {
    pub rs: &'a RootSystem,
    pub active: Vec<usize>,
    pub n_effective: f64,
    pub spherical: bool,
    /// Radial-law check: `(|x0|^2, budget per unit (1 + t))`.
    pub radial: Option<(f64, f64)>,
    /// Stop once the smallest active gap drops below this value.
    pub stop_gap: f64,
}

impl FlowSystem<'_> {
    fn min_gap(&self, y: &[f64]) -> f64 {
        let x = DVector::from_column_slice(y);
        self.active
            .iter()
            .map(|&i| x.dot(self.rs.root(i)).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

impl OdeSystem for FlowSystem<'_> {
    fn dim(&self) -> usize {
        self.rs.dim()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> bool {
        let mut acc = vec![0.0; y.len()];
        for &i in &self.active {
            let a = self.rs.root(i);
            let g: f64 = a.iter().zip(y).map(|(p, q)| p * q).sum();
            if g >= 0.0 {
                return false;
            }
            let c = -(self.rs.mults()[i] as f64) / g;
            for (s, ai) in acc.iter_mut().zip(a.iter()) {
                *s += c * ai;
            }
        }
        if self.spherical {
            for (s, yi) in acc.iter_mut().zip(y) {
                *s += self.n_effective * yi;
            }
        }
        dy.copy_from_slice(&acc);
        true
    }

    fn max_step(&self, _t: f64, y: &[f64], dy: &[f64]) -> f64 {
        let speed = dy.iter().map(|v| v * v).sum::<f64>().sqrt();
        if speed == 0.0 {
            return f64::INFINITY;
        }
        STEP_CAP * self.min_gap(y) / speed
    }

    fn accept(&self, t: f64, y: &[f64]) -> bool {
        match self.radial {
            Some((r0sq, budget)) => {
                let nsq: f64 = y.iter().map(|v| v * v).sum();
                (nsq - (r0sq - 2.0 * self.n_effective * t)).abs() <= budget * (1.0 + t.abs())
            }
            None => true,
        }
    }

    fn should_stop(&self, _t: f64, y: &[f64]) -> bool {
        self.min_gap(y) < self.stop_gap
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    /// Per-step relative error tolerance.
    pub tol: f64,
    pub t_end: Option<f64>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { tol: 1e-11, t_end: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub norm_sq: f64,
    pub min_wall_gap: f64,
    pub radial_residual: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CollapseReport {
    #[serde(rename = "T")]
    pub t_collapse: f64,
    pub x_limit: Vec<f64>,
    pub active_walls: Vec<usize>,
    pub fiber_dim: u32,
    pub rate_estimate: f64,
    #[serde(rename = "typeI_estimate")]
    pub type_i_estimate: f64,
    pub top_stratum: bool,
    /// Set when the limit is neither the origin nor on a single wall, where
    /// the extrapolation order is not known.
    pub heuristic_extrapolation: bool,
}

impl CollapseReport {
    pub fn limit_point(&self) -> ChamberPoint {
        ChamberPoint {
            coords: DVector::from_vec(self.x_limit.clone()),
            stratum: self.active_walls.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub variant: Variant,
    pub x0: DVector<f64>,
    pub n_effective: u32,
    /// Roots entering the vector field.
    pub active: Vec<usize>,
    pub samples: Vec<Sample>,
    pub termination: Termination,
    pub collapse: Option<CollapseReport>,
    solution: Solution,
}

impl Trajectory {
    pub fn t_last(&self) -> f64 {
        self.solution.t_last()
    }

    /// Dense-output state at time `t`.
    pub fn at(&self, t: f64) -> Option<DVector<f64>> {
        self.solution.at(t).map(DVector::from_vec)
    }

    pub fn radial_law(&self, t: f64) -> f64 {
        match self.variant {
            Variant::Spherical => self.x0.norm_squared(),
            _ => self.x0.norm_squared() - 2.0 * self.n_effective as f64 * t,
        }
    }
}

fn build_samples(rs: &RootSystem, sol: &Solution, active: &[usize], x0: &DVector<f64>, variant: &Variant, n_eff: f64) -> Vec<Sample> {
    sol.ts
        .iter()
        .zip(&sol.ys)
        .map(|(&t, y)| {
            let x = DVector::from_column_slice(y);
            let norm_sq = x.norm_squared();
            let law = match variant {
                Variant::Spherical => x0.norm_squared(),
                _ => x0.norm_squared() - 2.0 * n_eff * t,
            };
            let min_wall_gap = active
                .iter()
                .map(|&i| x.dot(rs.root(i)).abs())
                .fold(f64::INFINITY, f64::min);
            Sample {
                t,
                x,
                norm_sq,
                min_wall_gap,
                radial_residual: (norm_sq - law).abs(),
            }
        })
        .collect()
}

/// Integrates the chosen flow from `x0` until `t_end` or collapse.
pub fn integrate(rs: &RootSystem, x0: &DVector<f64>, variant: Variant, opts: &FlowOptions) -> Result<Trajectory, FlowError> {
    rs.check_dim(x0)?;
    let mut x = rs.project_to_span(x0);
    let (active, spherical) = match &variant {
        Variant::Euclidean => (all_roots(rs), false),
        Variant::Spherical => {
            let norm = x.norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(FlowError::NotOnSphere(norm));
            }
            x /= norm;
            (all_roots(rs), true)
        }
        Variant::Focal(stratum) => {
            if let Some(&bad) = stratum.iter().find(|&&i| i >= rs.num_roots()) {
                return Err(WeylError::RootIndex(bad).into());
            }
            x = project_onto_walls(rs, &x, stratum);
            (complement(rs, stratum), false)
        }
    };
    let tol0 = default_zero_tol(&x);
    stratum_of(rs, &x, tol0)?;
    check_gaps(rs, &x, &active, tol0)?;
    let n_eff: u32 = active.iter().map(|&i| rs.mults()[i]).sum();
    let r0sq = x.norm_squared();
    let scale = r0sq.sqrt();
    let sys = FlowSystem {
        rs,
        active: active.clone(),
        n_effective: n_eff as f64,
        spherical,
        radial: if spherical { None } else { Some((r0sq, 10.0 * opts.tol * r0sq.max(1.0))) },
        stop_gap: COLLAPSE_GAP * scale,
    };
    let t_end = opts.t_end.unwrap_or(if spherical {
        1e6
    } else {
        // the flow cannot outlive |x0|^2 / 2n
        1.01 * r0sq / (2.0 * n_eff as f64)
    });
    let o = OdeOptions {
        rtol: opts.tol,
        atol: opts.tol * scale * 1e-2,
        ..Default::default()
    };
    let sol = ode::integrate(&sys, 0.0, x.as_slice(), t_end, &o)?;
    let samples = build_samples(rs, &sol, &active, &x, &variant, n_eff as f64);
    let mut traj = Trajectory {
        variant,
        x0: x,
        n_effective: n_eff,
        active,
        samples,
        termination: sol.termination,
        collapse: None,
        solution: sol,
    };
    if traj.termination != Termination::Finished {
        traj.collapse = Some(detect_collapse(rs, &traj)?);
    }
    Ok(traj)
}

/// Extrapolates the collapse time, limit point and blow-up rates.
pub fn detect_collapse(rs: &RootSystem, traj: &Trajectory) -> Result<CollapseReport, FlowError> {
    if traj.termination == Termination::Finished {
        return Err(FlowError::NotCollapsed(traj.t_last()));
    }
    let last = traj.samples.last().expect("nonempty trajectory");
    let x = &last.x;
    let t = last.t;
    let gaps = wall_gaps(rs, x);
    let min_gap = last.min_wall_gap;
    let vanishing: Vec<usize> = traj
        .active
        .iter()
        .copied()
        .filter(|&i| gaps[i].abs() <= 1e3 * min_gap)
        .collect();
    let focal: Vec<usize> = match &traj.variant {
        Variant::Focal(s) => s.clone(),
        _ => Vec::new(),
    };
    let mut walls = vanishing.clone();
    walls.extend(&focal);
    let x_limit = project_onto_walls(rs, x, &walls);
    let scale = traj.x0.norm();
    let at_origin = x_limit.norm() <= ORIGIN_TOL * scale;
    let vanishing = if at_origin { traj.active.clone() } else { vanishing };
    let walls = if at_origin { (0..rs.num_roots()).collect() } else { walls };
    let n_eff = traj.n_effective as f64;
    let t_collapse = if at_origin && !matches!(traj.variant, Variant::Spherical) {
        t + x.norm_squared() / (2.0 * n_eff)
    } else {
        let sys_field = {
            let mut dy = vec![0.0; x.len()];
            let sys = FlowSystem {
                rs,
                active: traj.active.clone(),
                n_effective: n_eff,
                spherical: matches!(traj.variant, Variant::Spherical),
                radial: None,
                stop_gap: 0.0,
            };
            sys.rhs(t, x.as_slice(), &mut dy);
            DVector::from_vec(dy)
        };
        let i = *vanishing
            .iter()
            .min_by(|&&a, &&b| gaps[a].abs().total_cmp(&gaps[b].abs()))
            .expect("at least one vanishing root");
        let g = gaps[i];
        let dg = sys_field.dot(rs.root(i));
        // g^2 vanishes linearly in t
        t - g / (2.0 * dg)
    };
    let x_limit = if at_origin { DVector::zeros(x.len()) } else { x_limit };
    let fiber_dim: u32 = vanishing.iter().map(|&i| rs.mults()[i]).sum();
    let mut active_walls = walls.clone();
    active_walls.sort_unstable();
    let (rate, type_i) = fit_rates(rs, traj, t_collapse, &x_limit);
    Ok(CollapseReport {
        t_collapse,
        x_limit: x_limit.iter().copied().collect(),
        active_walls,
        fiber_dim,
        rate_estimate: rate,
        type_i_estimate: type_i,
        top_stratum: vanishing.len() == 1,
        heuristic_extrapolation: vanishing.len() > 1 && !at_origin,
    })
}

/// Least-squares intercepts of `|x - x(T)|^2 / (T - t)` and `Q(x)(T - t)`
/// against `sqrt(T - t)` over `T - t in [1e-5, 1e-2] T`.
fn fit_rates(rs: &RootSystem, traj: &Trajectory, t_collapse: f64, x_limit: &DVector<f64>) -> (f64, f64) {
    const N: usize = 40;
    let t_first = traj.samples[0].t;
    let mut rows = Vec::new();
    for j in 0..N {
        let frac = 10f64.powf(-5.0 + 3.0 * j as f64 / (N - 1) as f64);
        let dt = frac * t_collapse;
        let t = t_collapse - dt;
        if t < t_first || t > traj.t_last() {
            continue;
        }
        if let Some(x) = traj.at(t) {
            let rate = (&x - x_limit).norm_squared() / dt;
            let q = q_value(rs, &x, &traj.active) * dt;
            rows.push(((dt / t_collapse).sqrt(), rate, q));
        }
    }
    if rows.len() < 3 {
        return (f64::NAN, f64::NAN);
    }
    let a = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i].0.powi(j as i32));
    let svd = a.svd(true, true);
    let fit = |b: DVector<f64>| svd.solve(&b, 1e-14).map(|c| c[0]).unwrap_or(f64::NAN);
    (
        fit(DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1))),
        fit(DVector::from_iterator(rows.len(), rows.iter().map(|r| r.2))),
    )
}

/// The solution `t -> r x(t / r^2)`.
///
/// Negative `r` maps into the opposite chamber; with `refold` the result is
/// brought back by the Weyl element folding `r x0` into the chamber.
pub fn scale_solution(rs: &RootSystem, traj: &Trajectory, r: f64, refold: bool) -> Result<Trajectory, FlowError> {
    if r == 0.0 || !r.is_finite() {
        return Err(FlowError::ZeroScale);
    }
    if r < 0.0 && !refold {
        return Err(FlowError::AntipodalScale);
    }
    let word = if r < 0.0 { rs.fold_word(&(&traj.x0 * r)).1 } else { Vec::new() };
    let lin = |v: &[f64]| -> Vec<f64> {
        let y = DVector::from_column_slice(v) * r;
        rs.apply_word(&word, &y).iter().copied().collect()
    };
    let r2 = r * r;
    let sol = &traj.solution;
    let solution = Solution {
        ts: sol.ts.iter().map(|t| t * r2).collect(),
        ys: sol.ys.iter().map(|y| lin(y)).collect(),
        segments: sol.segments.iter().map(|s| s.mapped(r2, lin)).collect(),
        termination: sol.termination,
        rejected: sol.rejected,
    };
    let x0 = DVector::from_vec(lin(traj.x0.as_slice()));
    let perm = |i: usize| -> usize {
        let img = DVector::from_vec(lin(rs.root(i).as_slice())) / r.abs();
        (0..rs.num_roots())
            .find(|&j| (&img - rs.root(j)).norm() < 1e-9 || (&img + rs.root(j)).norm() < 1e-9)
            .unwrap_or(i)
    };
    let variant = match &traj.variant {
        Variant::Focal(s) => Variant::Focal(s.iter().map(|&i| perm(i)).collect()),
        v => v.clone(),
    };
    let mut active: Vec<usize> = traj.active.iter().map(|&i| perm(i)).collect();
    active.sort_unstable();
    let samples = build_samples(rs, &solution, &active, &x0, &variant, traj.n_effective as f64);
    let collapse = traj.collapse.as_ref().map(|c| {
        let mut walls: Vec<usize> = c.active_walls.iter().map(|&i| perm(i)).collect();
        walls.sort_unstable();
        CollapseReport {
            t_collapse: c.t_collapse * r2,
            x_limit: lin(&c.x_limit),
            active_walls: walls,
            ..c.clone()
        }
    });
    Ok(Trajectory {
        variant,
        x0,
        n_effective: traj.n_effective,
        active,
        samples,
        termination: traj.termination,
        collapse,
        solution,
    })
}
