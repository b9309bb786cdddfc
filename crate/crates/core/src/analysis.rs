//! Checks and constructions built on the flows: the minimal point, singularity
//! classification, separation of trajectories, the Euclidean/spherical
//! correspondence and the spherical portrait of `A3`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::flow::{self, CollapseReport, FlowError, FlowOptions, FlowSystem, Trajectory, Variant};
use crate::ode::{self, OdeOptions, OdeSystem};
use crate::weyl::{canonical_chamber_center, stratum_of, Family, RootSystem, WeylError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("separatrix shooting toward vertex {0} did not reach the minimal point")]
    ShootingFailed(usize),
    #[error("operation requires {0}")]
    Unsupported(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Weyl(#[from] WeylError),
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimalPoint {
    pub direction: Vec<f64>,
    /// `|H(p0) + n p0|`.
    pub residual: f64,
    pub iterations: usize,
}

impl MinimalPoint {
    pub fn point(&self) -> DVector<f64> {
        DVector::from_vec(self.direction.clone())
    }
}

/// Newton's method for `sum m a / <x, a> = n x` over a set of roots.
///
/// This is the critical point of the strictly convex function
/// `-sum m log(-<x, a>) + n |x|^2 / 2` on the cone `<x, a> < 0`, so damped
/// Newton with backtracking converges from any admissible start.  The
/// component orthogonal to the span of the roots is driven to zero.
pub fn minimal_point_of(roots: &[(DVector<f64>, u32)], start: &DVector<f64>) -> Result<MinimalPoint, AnalysisError> {
    let dim = start.len();
    let n: f64 = roots.iter().map(|r| r.1 as f64).sum();
    let psi = |x: &DVector<f64>| -> Option<f64> {
        let mut v = 0.5 * n * x.norm_squared();
        for (a, m) in roots {
            let g = x.dot(a);
            if g >= 0.0 {
                return None;
            }
            v -= *m as f64 * (-g).ln();
        }
        Some(v)
    };
    let grad_hess = |x: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let mut g = x * n;
        let mut h = DMatrix::identity(dim, dim) * n;
        for (a, m) in roots {
            let ga = x.dot(a);
            g.axpy(-(*m as f64) / ga, a, 1.0);
            h += a * a.transpose() * (*m as f64 / (ga * ga));
        }
        (g, h)
    };
    let mut x = start.clone();
    let mut f = psi(&x).ok_or(AnalysisError::NoConvergence {
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    const MAX_IT: usize = 200;
    for it in 0..MAX_IT {
        let (g, h) = grad_hess(&x);
        let gn = g.norm();
        if gn <= 1e-14 * n {
            return Ok(MinimalPoint {
                direction: x.iter().copied().collect(),
                residual: gn,
                iterations: it,
            });
        }
        let step = h.cholesky().map(|c| c.solve(&-&g)).unwrap_or_else(|| -&g);
        let slope = g.dot(&step);
        // the objective is self-concordant: once the Newton decrement is
        // small, full steps converge quadratically; stop once they no longer
        // reduce the gradient
        if -slope < 1e-2 {
            let cand = &x + &step;
            if let Some(fc) = psi(&cand) {
                if grad_hess(&cand).0.norm() < gn {
                    x = cand;
                    f = fc;
                    continue;
                }
            }
            return Ok(MinimalPoint {
                direction: x.iter().copied().collect(),
                residual: gn,
                iterations: it,
            });
        }
        let mut lam = 1.0;
        loop {
            let cand = &x + &step * lam;
            match psi(&cand) {
                Some(fc) if fc <= f + 1e-4 * lam * slope => {
                    x = cand;
                    f = fc;
                    break;
                }
                _ => lam *= 0.5,
            }
            if lam < 1e-30 {
                return Err(AnalysisError::NoConvergence { iterations: it, residual: gn });
            }
        }
    }
    let (g, _) = grad_hess(&x);
    Err(AnalysisError::NoConvergence {
        iterations: MAX_IT,
        residual: g.norm(),
    })
}

/// The unique point of the open chamber on the unit sphere whose
/// isoparametric submanifold is minimal.
pub fn find_minimal_point(rs: &RootSystem) -> Result<MinimalPoint, AnalysisError> {
    find_minimal_point_from(rs, &canonical_chamber_center(rs).coords)
}

pub fn find_minimal_point_from(rs: &RootSystem, start: &DVector<f64>) -> Result<MinimalPoint, AnalysisError> {
    let roots = rs.sub_roots(&(0..rs.num_roots()).collect::<Vec<_>>());
    let mut mp = minimal_point_of(&roots, &rs.project_to_span(start))?;
    let x = mp.point();
    mp.residual = (flow::mcv_euclidean(rs, &x)? + &x * rs.n() as f64).norm();
    Ok(mp)
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub fiber_dim: u32,
    pub top_stratum: bool,
    #[serde(rename = "typeI")]
    pub type_i: bool,
    /// Coxeter type of the roots vanishing at the limit.
    pub fiber_type: String,
    pub limit_is_origin: bool,
    pub rate_target: f64,
    pub rate_ok: bool,
    #[serde(rename = "typeI_ok")]
    pub type_i_ok: bool,
}

/// Relative tolerance for the rate checks.
pub const RATE_TOL: f64 = 0.05;

pub fn classify_singularity(rs: &RootSystem, report: &CollapseReport) -> Classification {
    let simple: Vec<usize> = rs
        .simple_roots()
        .iter()
        .copied()
        .filter(|i| report.active_walls.contains(i))
        .collect();
    let target = 2.0 * report.fiber_dim as f64;
    let origin = report.x_limit.iter().all(|v| *v == 0.0);
    Classification {
        fiber_dim: report.fiber_dim,
        top_stratum: report.top_stratum,
        type_i: true,
        fiber_type: rs.parabolic_type(&simple),
        limit_is_origin: origin,
        rate_target: target,
        rate_ok: (report.rate_estimate - target).abs() <= RATE_TOL * target,
        type_i_ok: !report.top_stratum || (report.type_i_estimate - 0.5).abs() <= RATE_TOL * 0.5,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairVerdict {
    pub i: usize,
    pub j: usize,
    pub initial: f64,
    /// Euclidean: most negative change of the squared separation between
    /// consecutive grid times.  Spherical: smallest slope of its logarithm.
    pub worst: f64,
    pub limit_distance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationTable {
    pub variant: String,
    pub pairs: Vec<PairVerdict>,
}

impl SeparationTable {
    pub fn all_pass(&self) -> bool {
        self.pairs.iter().all(|p| p.pass)
    }
}

/// Tolerances of [`separation_check`].
#[derive(Debug, Clone, Copy)]
pub struct SeparationTolerances {
    pub decrease: f64,
    pub slope: f64,
    pub limit: f64,
}

impl Default for SeparationTolerances {
    fn default() -> Self {
        Self {
            decrease: 1e-9,
            slope: 0.01,
            limit: 1e-6,
        }
    }
}

/// Pairwise separation of flows started on a common sphere.
///
/// Euclidean pairs must separate monotonically and collapse to distinct
/// limits; spherical pairs must separate at least like `e^{2nt}` over the
/// first half of their common lifetime.
pub fn separation_check(rs: &RootSystem, starts: &[DVector<f64>], variant: Variant, tol: &SeparationTolerances) -> Result<SeparationTable, AnalysisError> {
    let opts = FlowOptions::default();
    let trajs: Vec<Trajectory> = starts
        .par_iter()
        .map(|x| flow::integrate(rs, x, variant.clone(), &opts))
        .collect::<Result<_, _>>()?;
    let n = rs.n() as f64;
    let mut pairs = Vec::new();
    for i in 0..trajs.len() {
        for j in (i + 1)..trajs.len() {
            let (a, b) = (&trajs[i], &trajs[j]);
            let initial = (&a.x0 - &b.x0).norm_squared();
            if initial <= 1e-24 {
                pairs.push(PairVerdict {
                    i,
                    j,
                    initial,
                    worst: 0.0,
                    limit_distance: None,
                    pass: true,
                });
                continue;
            }
            let t_common = a.t_last().min(b.t_last());
            let spherical = matches!(variant, Variant::Spherical);
            let t_span = if spherical { 0.5 * t_common } else { t_common };
            const GRID: usize = 400;
            let seps: Vec<(f64, f64)> = (0..=GRID)
                .map(|k| {
                    let t = if k == GRID { t_span } else { t_span * k as f64 / GRID as f64 };
                    let d = a.at(t).expect("inside a") - b.at(t).expect("inside b");
                    (t, d.norm_squared())
                })
                .collect();
            let (worst, pass_sep) = if spherical {
                let w = seps
                    .windows(2)
                    .map(|w| (w[1].1.ln() - w[0].1.ln()) / (w[1].0 - w[0].0))
                    .fold(f64::INFINITY, f64::min);
                (w, w >= 2.0 * n - tol.slope)
            } else {
                let w = seps.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::INFINITY, f64::min);
                (w, w >= -tol.decrease)
            };
            let limit_distance = match (&a.collapse, &b.collapse) {
                (Some(ca), Some(cb)) if !spherical => Some(
                    ca.x_limit
                        .iter()
                        .zip(&cb.x_limit)
                        .map(|(p, q)| (p - q).powi(2))
                        .sum::<f64>()
                        .sqrt(),
                ),
                _ => None,
            };
            let pass_lim = limit_distance.is_none_or(|d| d > tol.limit);
            pairs.push(PairVerdict {
                i,
                j,
                initial,
                worst,
                limit_distance,
                pass: pass_sep && pass_lim,
            });
        }
    }
    Ok(SeparationTable {
        variant: variant.name().into(),
        pairs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Correspondence {
    /// Sup-norm deviation of the mapped spherical solution up to `0.9 T_y`.
    pub max_deviation: f64,
    /// Euclidean collapse time.
    pub t_euclidean: f64,
    /// Spherical collapse time.
    pub t_spherical: f64,
    /// `T_sph + log(1 - 2n T_euc) / (2n)`.
    pub time_residual: f64,
}

/// Compares the Euclidean flow with the rescaled, reparametrized spherical flow.
pub fn correspondence_check(rs: &RootSystem, x0: &DVector<f64>) -> Result<Correspondence, AnalysisError> {
    let opts = FlowOptions::default();
    let (euc, sph) = rayon::join(
        || flow::integrate(rs, x0, Variant::Euclidean, &opts),
        || flow::integrate(rs, x0, Variant::Spherical, &opts),
    );
    let (euc, sph) = (euc?, sph?);
    let n = rs.n() as f64;
    let t_euc = euc.collapse.as_ref().map(|c| c.t_collapse).unwrap_or(euc.t_last());
    let t_sph = sph.collapse.as_ref().map(|c| c.t_collapse).unwrap_or(sph.t_last());
    let mut dev: f64 = 0.0;
    const GRID: usize = 500;
    for k in 0..=GRID {
        let t = 0.9 * t_euc * k as f64 / GRID as f64;
        let u = 1.0 - 2.0 * n * t;
        let s = -u.ln() / (2.0 * n);
        let (Some(y), Some(x)) = (euc.at(t), sph.at(s)) else { continue };
        let d = (y - x * u.sqrt()).amax();
        dev = dev.max(d);
    }
    Ok(Correspondence {
        max_deviation: dev,
        t_euclidean: t_euc,
        t_spherical: t_sph,
        time_residual: t_sph + (1.0 - 2.0 * n * t_euc).ln() / (2.0 * n),
    })
}

/// Unit vertices of the spherical chamber simplex; vertex `i` is the point
/// where every simple root except the `i`-th vanishes.
pub fn chamber_vertices(rs: &RootSystem) -> Vec<DVector<f64>> {
    let simple = rs.simple_roots();
    let r = simple.len();
    let gram = DMatrix::from_fn(r, r, |i, j| rs.root(simple[i]).dot(rs.root(simple[j])));
    let inv = gram.try_inverse().expect("simple roots are independent");
    (0..r)
        .map(|i| {
            let mut v = DVector::zeros(rs.dim());
            for (j, &s) in simple.iter().enumerate() {
                v -= rs.root(s) * inv[(j, i)];
            }
            v.normalize()
        })
        .collect()
}

/// Upper bound `(1/n) log(D / |x0 - p0|)` for the spherical collapse time,
/// with `D` the chord diameter of the chamber simplex.
pub fn spherical_time_bound(rs: &RootSystem, x0: &DVector<f64>, p0: &DVector<f64>) -> f64 {
    let mut pts = chamber_vertices(rs);
    pts.push(p0.clone());
    let mut diam: f64 = 0.0;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            diam = diam.max((&pts[i] - &pts[j]).norm());
        }
    }
    (diam / (x0 - p0).norm()).ln() / rs.n() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    D1,
    D2,
    D3,
    Unclassified,
}

impl Region {
    pub fn label(&self) -> &'static str {
        match self {
            Region::D1 => "D1",
            Region::D2 => "D2",
            Region::D3 => "D3",
            Region::Unclassified => "none",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Separatrix {
    /// Index (1..=3) of the vertex it ends at.
    pub vertex: usize,
    /// Points from the vertex end to the minimal point.
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PortraitStart {
    pub x0: Vec<f64>,
    /// Gnomonic chart coordinates about the minimal point.
    pub chart: (f64, f64),
    pub region: Region,
    pub predicted_wall: Option<usize>,
    pub observed_wall: Option<usize>,
    #[serde(rename = "T")]
    pub t_collapse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct A3Portrait {
    pub m: u32,
    pub p0: Vec<f64>,
    /// Vertices `p1, p2, p3`; `p3` carries the `A1xA1` fiber.
    pub vertices: Vec<Vec<f64>>,
    pub vertex_fibers: Vec<String>,
    /// Interior angles of the chamber triangle at `p1, p2, p3`.
    pub angles: Vec<f64>,
    /// Wall (root index) bounding region `D_k`, for `k = 1, 2, 3`.
    pub region_walls: Vec<usize>,
    pub separatrices: Vec<Separatrix>,
    pub starts: Vec<PortraitStart>,
    /// Orthonormal basis of the tangent plane at `p0` used by the chart.
    pub chart_basis: (Vec<f64>, Vec<f64>),
}

impl A3Portrait {
    fn chart(&self) -> Chart {
        Chart {
            p0: DVector::from_column_slice(&self.p0),
            e1: DVector::from_column_slice(&self.chart_basis.0),
            e2: DVector::from_column_slice(&self.chart_basis.1),
        }
    }

    /// Gnomonic chart coordinates of a point of the sphere about `p0`.
    pub fn to_chart(&self, x: &[f64]) -> (f64, f64) {
        self.chart().map(&DVector::from_column_slice(x))
    }

    /// Boundary of region `D_k` (`k = 1, 2, 3`) in chart coordinates.
    pub fn region_polygon(&self, k: usize) -> Vec<(f64, f64)> {
        let chart = self.chart();
        region_polygon(&chart, &self.separatrices, k - 1)
    }

    /// Fraction of starts whose observed limit wall is the predicted one.
    pub fn agreement(&self) -> f64 {
        let ok = self
            .starts
            .iter()
            .filter(|s| s.predicted_wall.is_some() && s.predicted_wall == s.observed_wall)
            .count();
        ok as f64 / self.starts.len().max(1) as f64
    }
}

/// Backward spherical flow stopped near a target point.
struct Shooting<'a> {
    inner: FlowSystem<'a>,
    target: DVector<f64>,
    radius: f64,
}

impl OdeSystem for Shooting<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> bool {
        self.inner.rhs(t, y, dy)
    }
    fn max_step(&self, t: f64, y: &[f64], dy: &[f64]) -> f64 {
        self.inner.max_step(t, y, dy)
    }
    fn should_stop(&self, _t: f64, y: &[f64]) -> bool {
        (DVector::from_column_slice(y) - &self.target).norm() < self.radius
    }
}

/// Gnomonic chart of the unit sphere of a 3-dimensional root space about `p0`.
struct Chart {
    p0: DVector<f64>,
    e1: DVector<f64>,
    e2: DVector<f64>,
}

impl Chart {
    fn new(rs: &RootSystem, p0: &DVector<f64>) -> Self {
        let simple = rs.simple_roots();
        let mut basis: Vec<DVector<f64>> = vec![p0.clone()];
        for &s in simple {
            let mut v = rs.root(s).clone();
            for b in &basis {
                let c = v.dot(b);
                v -= b * c;
            }
            if v.norm() > 1e-8 {
                basis.push(v.normalize());
            }
        }
        Self {
            p0: p0.clone(),
            e1: basis[1].clone(),
            e2: basis[2].clone(),
        }
    }

    fn map(&self, x: &DVector<f64>) -> (f64, f64) {
        let y = x / x.dot(&self.p0);
        (y.dot(&self.e1), y.dot(&self.e2))
    }
}

fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn angle_at(v: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let ta = (a - v * a.dot(v)).normalize();
    let tb = (b - v * b.dot(v)).normalize();
    ta.dot(&tb).clamp(-1.0, 1.0).acos()
}

/// The stratified spherical portrait of `A3` with multiplicity `m`.
pub fn a3_portrait(m: u32, samples: usize, seed: u64) -> Result<A3Portrait, AnalysisError> {
    let rs = crate::weyl::build_root_system(Family::A(3), crate::weyl::Multiplicities::Uniform(m))?;
    let simple = rs.simple_roots().to_vec();
    let p0 = find_minimal_point(&rs)?.point();
    let verts = chamber_vertices(&rs);
    // vertex_i is nonvanishing only on simple root i; label so that p_k has
    // nonvanishing root simple[(k + 1) % 3] and p3 is the A1xA1 vertex
    let order = [2usize, 0, 1];
    let p: Vec<DVector<f64>> = order.iter().map(|&i| verts[i].clone()).collect();
    let region_walls: Vec<usize> = order.iter().map(|&i| simple[i]).collect();
    let fibers: Vec<String> = order
        .iter()
        .map(|&i| {
            let van: Vec<usize> = simple.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &s)| s).collect();
            rs.parabolic_type(&van)
        })
        .collect();
    let angles = vec![
        angle_at(&p[0], &p[1], &p[2]),
        angle_at(&p[1], &p[0], &p[2]),
        angle_at(&p[2], &p[0], &p[1]),
    ];

    let n = rs.n() as f64;
    let separatrices: Vec<Separatrix> = (0..3)
        .into_par_iter()
        .map(|k| -> Result<Separatrix, AnalysisError> {
            let v = &p[k];
            let st = stratum_of(&rs, v, 1e-12)?;
            let sub = rs.sub_roots(&st.vanishing);
            let start = {
                let mut s = canonical_chamber_center(&rs).coords;
                // project the center onto the span of the vanishing roots
                let mut basis: Vec<DVector<f64>> = Vec::new();
                for (a, _) in &sub {
                    let mut w = a.clone();
                    for b in &basis {
                        let c = w.dot(b);
                        w -= b * c;
                    }
                    if w.norm() > 1e-10 {
                        basis.push(w.normalize());
                    }
                }
                let proj = basis.iter().fold(DVector::zeros(rs.dim()), |acc, b| acc + b * s.dot(b));
                s = proj;
                s
            };
            let q = minimal_point_of(&sub, &start)?.point().normalize();
            let x_start = (v + &q * 1e-4).normalize();
            let sys = Shooting {
                inner: FlowSystem {
                    rs: &rs,
                    active: (0..rs.num_roots()).collect(),
                    n_effective: n,
                    spherical: true,
                    radial: None,
                    stop_gap: 0.0,
                },
                target: p0.clone(),
                radius: 1e-6,
            };
            let o = OdeOptions {
                rtol: 1e-11,
                atol: 1e-13,
                ..Default::default()
            };
            let sol = ode::integrate(&sys, 0.0, x_start.as_slice(), -1e3, &o).map_err(FlowError::from)?;
            let end = DVector::from_column_slice(sol.y_last());
            if (end - &p0).norm() >= 1e-6 {
                return Err(AnalysisError::ShootingFailed(k + 1));
            }
            let mut points: Vec<Vec<f64>> = vec![v.iter().copied().collect()];
            points.extend(sol.ys.iter().cloned());
            points.push(p0.iter().copied().collect());
            Ok(Separatrix { vertex: k + 1, points })
        })
        .collect::<Result<_, _>>()?;

    let chart = Chart::new(&rs, &p0);
    let polygons: Vec<Vec<(f64, f64)>> = (0..3).map(|k| region_polygon(&chart, &separatrices, k)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<DVector<f64>> = (0..samples).map(|_| rs.random_unit_chamber_point(&mut rng)).collect();
    let starts: Vec<PortraitStart> = xs
        .par_iter()
        .map(|x| -> Result<PortraitStart, AnalysisError> {
            let c = chart.map(x);
            let k = (0..3).find(|&k| point_in_polygon(c, &polygons[k]));
            let region = match k {
                Some(0) => Region::D1,
                Some(1) => Region::D2,
                Some(2) => Region::D3,
                _ => Region::Unclassified,
            };
            let traj = flow::integrate(&rs, x, Variant::Spherical, &FlowOptions::default())?;
            let (observed, t) = match &traj.collapse {
                Some(c) => (
                    if c.top_stratum { c.active_walls.first().copied() } else { None },
                    c.t_collapse,
                ),
                None => (None, f64::NAN),
            };
            Ok(PortraitStart {
                x0: x.iter().copied().collect(),
                chart: c,
                region,
                predicted_wall: k.map(|k| region_walls[k]),
                observed_wall: observed,
                t_collapse: t,
            })
        })
        .collect::<Result<_, _>>()?;

    Ok(A3Portrait {
        m,
        p0: p0.iter().copied().collect(),
        vertices: p.iter().map(|v| v.iter().copied().collect()).collect(),
        vertex_fibers: fibers,
        angles,
        region_walls,
        separatrices,
        starts,
        chart_basis: (chart.e1.iter().copied().collect(), chart.e2.iter().copied().collect()),
    })
}

/// Region `D_k` is bounded by the separatrices to the two other vertices and
/// the wall joining them.
fn region_polygon(chart: &Chart, separatrices: &[Separatrix], k: usize) -> Vec<(f64, f64)> {
    let to_chart = |pts: &[Vec<f64>]| -> Vec<(f64, f64)> { pts.iter().map(|x| chart.map(&DVector::from_column_slice(x))).collect() };
    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
    let mut poly = to_chart(&separatrices[i].points);
    poly.reverse();
    poly.extend(to_chart(&separatrices[j].points));
    poly
}
