//! Root systems with multiplicities and Weyl chamber bookkeeping.
//!
//! Every root system is stored with unit-length positive roots that are
//! sign-normalized to be *negative* on the chamber: a point `x` lies in the
//! open chamber iff `<x, alpha> < 0` for every positive root.  Type `A_k` is
//! represented in `R^{k+1}` on the hyperplane `sum x_i = 0`; the other
//! families live in `R^k` (`R^2` for the dihedral case).

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative zero tolerance for stratum membership, scaled by `||x||`.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeylError {
    #[error("unsupported parameters for family {family}: {reason}")]
    UnsupportedFamilyParams { family: String, reason: String },
    #[error("multiplicities must be positive integers")]
    NonpositiveMultiplicity,
    #[error("point lies outside the closed chamber (largest gap {gap:e} exceeds tolerance {tol:e})")]
    OutsideChamber { gap: f64, tol: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("root index {0} out of range")]
    RootIndex(usize),
    #[error("invalid root-system spec: {0}")]
    InvalidSpec(String),
}

/// Coxeter family together with its rank parameter (`k`, or `g` for `I2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    A(usize),
    B(usize),
    D(usize),
    I2(usize),
}

impl Family {
    pub fn letter(&self) -> &'static str {
        match self {
            Family::A(_) => "A",
            Family::B(_) => "B",
            Family::D(_) => "D",
            Family::I2(_) => "I2",
        }
    }

    /// Rank of the reflection group (2 for dihedral groups).
    pub fn rank(&self) -> usize {
        match *self {
            Family::A(k) | Family::B(k) | Family::D(k) => k,
            Family::I2(_) => 2,
        }
    }

    /// Dimension of the coordinate space the roots are written in.
    pub fn coord_dim(&self) -> usize {
        match *self {
            Family::A(k) => k + 1,
            Family::B(k) | Family::D(k) => k,
            Family::I2(_) => 2,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Family::A(k) => write!(f, "A{k}"),
            Family::B(k) => write!(f, "B{k}"),
            Family::D(k) => write!(f, "D{k}"),
            Family::I2(g) => write!(f, "I2({g})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Multiplicities {
    Uniform(u32),
    /// `m1` on the orbit of `(e_i +- e_j)/sqrt2` (B) or even-indexed lines
    /// (dihedral); `m2` on `e_i` (B) or odd-indexed lines (dihedral).
    Two { m1: u32, m2: u32 },
}

impl Multiplicities {
    fn pair(&self) -> (u32, u32) {
        match *self {
            Multiplicities::Uniform(m) => (m, m),
            Multiplicities::Two { m1, m2 } => (m1, m2),
        }
    }
}

/// JSON form of a root-system description.
///
/// Serialization order is fixed (`family`, `k`, `g`, `m`, `m1`, `m2`) and
/// absent fields are skipped, so a canonical document re-serializes to the
/// same bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootSystemSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<u32>,
}

impl RootSystemSpec {
    pub fn from_json(text: &str) -> Result<Self, WeylError> {
        serde_json::from_str(text).map_err(|e| WeylError::InvalidSpec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serialization is infallible")
    }

    pub fn family(&self) -> Result<Family, WeylError> {
        let need = |v: Option<u32>, name: &str| {
            v.map(|x| x as usize).ok_or_else(|| {
                WeylError::InvalidSpec(format!("family {} requires field \"{name}\"", self.family))
            })
        };
        let fam = match self.family.as_str() {
            "A" => Family::A(need(self.k, "k")?),
            "B" => Family::B(need(self.k, "k")?),
            "D" => Family::D(need(self.k, "k")?),
            "I2" => Family::I2(need(self.g, "g")?),
            other => return Err(WeylError::InvalidSpec(format!("unknown family {other:?}"))),
        };
        match fam {
            Family::I2(_) if self.k.is_some() => {
                Err(WeylError::InvalidSpec("family I2 takes \"g\", not \"k\"".into()))
            }
            Family::A(_) | Family::B(_) | Family::D(_) if self.g.is_some() => Err(
                WeylError::InvalidSpec(format!("family {} takes \"k\", not \"g\"", self.family)),
            ),
            _ => Ok(fam),
        }
    }

    pub fn multiplicities(&self) -> Result<Multiplicities, WeylError> {
        match (self.m, self.m1, self.m2) {
            (Some(m), None, None) => Ok(Multiplicities::Uniform(m)),
            (None, Some(m1), Some(m2)) => Ok(Multiplicities::Two { m1, m2 }),
            _ => Err(WeylError::InvalidSpec(
                "give either \"m\" or both \"m1\" and \"m2\"".into(),
            )),
        }
    }

    pub fn build(&self) -> Result<RootSystem, WeylError> {
        build_root_system(self.family()?, self.multiplicities()?)
    }
}

/// Positive roots with multiplicities for one isoparametric family.
#[derive(Debug, Clone)]
pub struct RootSystem {
    family: Family,
    multiplicities: Multiplicities,
    roots: Vec<DVector<f64>>,
    mults: Vec<u32>,
    simple: Vec<usize>,
    n: u32,
    center: DVector<f64>,
}

fn unit(dim: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[i] = 1.0;
    v
}

fn params_error(family: Family, reason: impl Into<String>) -> WeylError {
    WeylError::UnsupportedFamilyParams {
        family: family.to_string(),
        reason: reason.into(),
    }
}

/// Builds a sign-normalized root system with multiplicities.
pub fn build_root_system(family: Family, mults: Multiplicities) -> Result<RootSystem, WeylError> {
    let (m1, m2) = mults.pair();
    if m1 == 0 || m2 == 0 {
        return Err(WeylError::NonpositiveMultiplicity);
    }
    let two_valued = matches!(mults, Multiplicities::Two { .. });
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut roots = Vec::new();
    let mut mm = Vec::new();
    let mut simple = Vec::new();
    match family {
        Family::A(k) => {
            if k < 1 {
                return Err(params_error(family, "rank must be at least 1"));
            }
            if two_valued {
                return Err(params_error(family, "type A carries a single multiplicity"));
            }
            let d = k + 1;
            for i in 0..d {
                for j in (i + 1)..d {
                    if j == i + 1 {
                        simple.push(roots.len());
                    }
                    roots.push((unit(d, i) - unit(d, j)) * s);
                    mm.push(m1);
                }
            }
        }
        Family::B(k) => {
            if k < 2 {
                return Err(params_error(family, "rank must be at least 2"));
            }
            for i in 0..k {
                for j in (i + 1)..k {
                    if j == i + 1 {
                        simple.push(roots.len());
                    }
                    roots.push((unit(k, i) - unit(k, j)) * s);
                    mm.push(m1);
                    roots.push((unit(k, i) + unit(k, j)) * s);
                    mm.push(m1);
                }
            }
            for i in 0..k {
                if i == k - 1 {
                    simple.push(roots.len());
                }
                roots.push(unit(k, i));
                mm.push(m2);
            }
        }
        Family::D(k) => {
            if k < 4 {
                return Err(params_error(family, "rank must be at least 4"));
            }
            if two_valued {
                return Err(params_error(family, "type D carries a single multiplicity"));
            }
            for i in 0..k {
                for j in (i + 1)..k {
                    if j == i + 1 {
                        simple.push(roots.len());
                    }
                    roots.push((unit(k, i) - unit(k, j)) * s);
                    mm.push(m1);
                    if i == k - 2 && j == k - 1 {
                        simple.push(roots.len());
                    }
                    roots.push((unit(k, i) + unit(k, j)) * s);
                    mm.push(m1);
                }
            }
        }
        Family::I2(g) => {
            if g < 2 {
                return Err(params_error(family, "dihedral order g must be at least 2"));
            }
            if two_valued && (g % 2 == 1 || g == 6) {
                return Err(params_error(
                    family,
                    "odd g and g = 6 carry a single multiplicity",
                ));
            }
            // Root k is normal to the wall line at angle k*pi/g.
            let c = DVector::from_vec(vec![(PI / (2.0 * g as f64)).cos(), (PI / (2.0 * g as f64)).sin()]);
            for j in 0..g {
                let phi = j as f64 * PI / g as f64 + PI / 2.0;
                let mut a = DVector::from_vec(vec![phi.cos(), phi.sin()]);
                if a.dot(&c) > 0.0 {
                    a = -a;
                }
                roots.push(a);
                mm.push(if j % 2 == 0 { m1 } else { m2 });
            }
            simple = vec![0, 1];
        }
    }
    let n = mm.iter().sum();
    let mut rs = RootSystem {
        family,
        multiplicities: mults,
        roots,
        mults: mm,
        simple,
        n,
        center: DVector::zeros(family.coord_dim()),
    };
    rs.center = rs.compute_center();
    for a in rs.roots.iter_mut() {
        if a.dot(&rs.center) > 0.0 {
            *a = -a.clone();
        }
    }
    Ok(rs)
}

impl RootSystem {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn multiplicities(&self) -> Multiplicities {
        self.multiplicities
    }

    pub fn rank(&self) -> usize {
        self.family.rank()
    }

    pub fn dim(&self) -> usize {
        self.family.coord_dim()
    }

    pub fn roots(&self) -> &[DVector<f64>] {
        &self.roots
    }

    pub fn root(&self, i: usize) -> &DVector<f64> {
        &self.roots[i]
    }

    pub fn mults(&self) -> &[u32] {
        &self.mults
    }

    pub fn num_roots(&self) -> usize {
        self.roots.len()
    }

    /// Indices of the simple roots (walls of the chamber).
    pub fn simple_roots(&self) -> &[usize] {
        &self.simple
    }

    /// Dimension `n = sum of multiplicities` of the isoparametric submanifold.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Whether the dihedral group is a Weyl group (g in {2, 3, 4, 6}).
    pub fn is_crystallographic(&self) -> bool {
        match self.family {
            Family::I2(g) => matches!(g, 2 | 3 | 4 | 6),
            _ => true,
        }
    }

    pub fn spec(&self) -> RootSystemSpec {
        let (k, g) = match self.family {
            Family::A(k) | Family::B(k) | Family::D(k) => (Some(k as u32), None),
            Family::I2(g) => (None, Some(g as u32)),
        };
        let (m, m1, m2) = match self.multiplicities {
            Multiplicities::Uniform(m) => (Some(m), None, None),
            Multiplicities::Two { m1, m2 } => (None, Some(m1), Some(m2)),
        };
        RootSystemSpec {
            family: self.family.letter().to_string(),
            k,
            g,
            m,
            m1,
            m2,
        }
    }

    /// Unit point equidistant from all simple walls.
    ///
    /// Solves `<x, alpha_s> = -1` on the simple roots with `x` in their span;
    /// the non-simple gaps are then at least as large, so the normalized
    /// solution maximizes the minimum gap over the unit sphere.
    fn compute_center(&self) -> DVector<f64> {
        let r = self.simple.len();
        let gram = DMatrix::from_fn(r, r, |i, j| self.roots[self.simple[i]].dot(&self.roots[self.simple[j]]));
        let lambda = gram
            .lu()
            .solve(&DVector::from_element(r, 1.0))
            .expect("simple roots are linearly independent");
        let mut x = DVector::zeros(self.dim());
        for (l, &i) in lambda.iter().zip(&self.simple) {
            x -= &self.roots[i] * *l;
        }
        let norm = x.norm();
        x / norm
    }

    pub fn check_dim(&self, x: &DVector<f64>) -> Result<(), WeylError> {
        if x.len() != self.dim() {
            return Err(WeylError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Projects onto the linear span of the roots (the `sum = 0` plane for `A_k`).
    pub fn project_to_span(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.family {
            Family::A(_) => {
                let mean = x.sum() / x.len() as f64;
                x.map(|v| v - mean)
            }
            _ => x.clone(),
        }
    }

    /// Maps a point into the closed chamber by reflecting across violated walls.
    pub fn fold_into_chamber(&self, x: &DVector<f64>) -> DVector<f64> {
        self.fold_word(x).0
    }

    /// Folds `x` into the closed chamber, returning the reflections applied
    /// (first applied first).
    pub fn fold_word(&self, x: &DVector<f64>) -> (DVector<f64>, Vec<usize>) {
        let mut y = x.clone();
        let mut word = Vec::new();
        for _ in 0..10_000 {
            let worst = self
                .roots
                .iter()
                .enumerate()
                .map(|(i, a)| (i, y.dot(a)))
                .filter(|&(_, g)| g > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                Some((i, _)) => {
                    y = reflect_vec(&self.roots[i], &y);
                    word.push(i);
                }
                None => break,
            }
        }
        (y, word)
    }

    /// Applies the reflections of `word` in order.
    pub fn apply_word(&self, word: &[usize], x: &DVector<f64>) -> DVector<f64> {
        word.iter().fold(x.clone(), |y, &i| reflect_vec(&self.roots[i], &y))
    }

    /// Uniformly distributed unit point of the open chamber.
    pub fn random_unit_chamber_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        loop {
            let raw = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = self.project_to_span(&raw);
            let norm = y.norm();
            if norm < 1e-6 {
                continue;
            }
            let y = self.fold_into_chamber(&(y / norm));
            if wall_gaps(self, &y).iter().all(|&g| g < 0.0) {
                return y;
            }
        }
    }

    /// Sub-root-system formed by the given positive roots, as roots of the
    /// linear span they generate.
    pub fn sub_roots(&self, indices: &[usize]) -> Vec<(DVector<f64>, u32)> {
        indices
            .iter()
            .map(|&i| (self.roots[i].clone(), self.mults[i]))
            .collect()
    }

    /// Coxeter type of the parabolic subgroup generated by the listed simple
    /// roots, e.g. `"A2"` or `"A1xA1"`; `"trivial"` for the empty set.
    pub fn parabolic_type(&self, simple_indices: &[usize]) -> String {
        let nodes: Vec<usize> = simple_indices.to_vec();
        if nodes.is_empty() {
            return "trivial".into();
        }
        let mut seen = vec![false; nodes.len()];
        let mut parts = Vec::new();
        for start in 0..nodes.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut head = 0;
            while head < comp.len() {
                let a = comp[head];
                head += 1;
                for b in 0..nodes.len() {
                    if !seen[b] && self.roots[nodes[a]].dot(&self.roots[nodes[b]]).abs() > 1e-12 {
                        seen[b] = true;
                        comp.push(b);
                    }
                }
            }
            parts.push(self.component_type(&comp.iter().map(|&c| nodes[c]).collect::<Vec<_>>()));
        }
        parts.sort();
        parts.join("x")
    }

    fn component_type(&self, comp: &[usize]) -> String {
        let r = comp.len();
        if r == 1 {
            return "A1".into();
        }
        // Edge labels from angles between simple roots: cos(pi/label) = -<a,b>.
        let mut labels = Vec::new();
        let mut degree = vec![0usize; r];
        for i in 0..r {
            for j in (i + 1)..r {
                let c = -self.roots[comp[i]].dot(&self.roots[comp[j]]);
                if c.abs() > 1e-12 {
                    let label = (PI / c.clamp(-1.0, 1.0).acos()).round() as usize;
                    labels.push(label);
                    degree[i] += 1;
                    degree[j] += 1;
                }
            }
        }
        if r == 2 {
            return match labels[0] {
                3 => "A2".into(),
                4 => "B2".into(),
                6 => "G2".into(),
                g => format!("I2({g})"),
            };
        }
        if degree.iter().any(|&d| d >= 3) {
            return format!("D{r}");
        }
        if labels.contains(&4) {
            return format!("B{r}");
        }
        format!("A{r}")
    }
}

/// A point of the closed chamber with its vanishing-root set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamberPoint {
    pub coords: DVector<f64>,
    pub stratum: Vec<usize>,
}

impl ChamberPoint {
    /// Wraps `coords` after checking it lies in the closed chamber
    /// (default relative zero tolerance).
    pub fn new(rs: &RootSystem, coords: DVector<f64>) -> Result<Self, WeylError> {
        rs.check_dim(&coords)?;
        let s = stratum_of(rs, &coords, default_zero_tol(&coords))?;
        Ok(Self {
            coords,
            stratum: s.vanishing,
        })
    }

    pub fn is_interior(&self) -> bool {
        self.stratum.is_empty()
    }
}

/// Default absolute zero tolerance at `x`.
pub fn default_zero_tol(x: &DVector<f64>) -> f64 {
    DEFAULT_ZERO_TOL * x.norm()
}

/// The basepoint maximizing the minimum wall distance on the unit sphere.
pub fn canonical_chamber_center(rs: &RootSystem) -> ChamberPoint {
    ChamberPoint {
        coords: rs.center.clone(),
        stratum: Vec::new(),
    }
}

/// Inner products `<x, alpha_i>` in root order.
pub fn wall_gaps(rs: &RootSystem, x: &DVector<f64>) -> Vec<f64> {
    rs.roots.iter().map(|a| x.dot(a)).collect()
}

/// Stratum bookkeeping for a point of the closed chamber.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stratum {
    /// Roots with `|<x, alpha>| <= tol`.
    pub vanishing: Vec<usize>,
    /// The complementary roots (`Delta+(sigma)`).
    pub active: Vec<usize>,
    /// Sum of multiplicities over active roots.
    pub n_sigma: u32,
    /// Sum of multiplicities over vanishing roots.
    pub fiber_dim: u32,
}

pub fn stratum_of(rs: &RootSystem, x: &DVector<f64>, tol: f64) -> Result<Stratum, WeylError> {
    rs.check_dim(x)?;
    let gaps = wall_gaps(rs, x);
    let worst = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if worst > tol {
        return Err(WeylError::OutsideChamber { gap: worst, tol });
    }
    let mut s = Stratum {
        vanishing: Vec::new(),
        active: Vec::new(),
        n_sigma: 0,
        fiber_dim: 0,
    };
    for (i, g) in gaps.iter().enumerate() {
        if g.abs() <= tol {
            s.vanishing.push(i);
            s.fiber_dim += rs.mults[i];
        } else {
            s.active.push(i);
            s.n_sigma += rs.mults[i];
        }
    }
    Ok(s)
}

fn reflect_vec(alpha: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    x - alpha * (2.0 * x.dot(alpha))
}

/// Reflection `x - 2<x, alpha> alpha` across the wall of root `root_index`.
pub fn reflect(rs: &RootSystem, root_index: usize, x: &DVector<f64>) -> Result<DVector<f64>, WeylError> {
    rs.check_dim(x)?;
    let a = rs.roots.get(root_index).ok_or(WeylError::RootIndex(root_index))?;
    Ok(reflect_vec(a, x))
}

/// Indices of the roots whose walls contain `x` among the given candidates.
pub fn vanishing_simple(rs: &RootSystem, vanishing: &[usize]) -> Vec<usize> {
    let set: BTreeSet<usize> = vanishing.iter().copied().collect();
    rs.simple.iter().copied().filter(|i| set.contains(i)).collect()
}

/// Orthogonal projection of `x` onto the common zero set of the given roots.
pub fn project_onto_walls(rs: &RootSystem, x: &DVector<f64>, walls: &[usize]) -> DVector<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for &i in walls {
        let mut v = rs.roots[i].clone();
        for b in &basis {
            let c = v.dot(b);
            v -= b * c;
        }
        let norm = v.norm();
        if norm > 1e-10 {
            basis.push(v / norm);
        }
    }
    let mut y = x.clone();
    for b in &basis {
        let c = y.dot(b);
        y -= b * c;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn b2() -> RootSystem {
        build_root_system(Family::B(2), Multiplicities::Two { m1: 1, m2: 1 }).unwrap()
    }

    #[test]
    fn b2_counts() {
        let rs = b2();
        assert_eq!(rs.num_roots(), 4);
        assert_eq!(rs.n(), 4);
    }

    #[test]
    fn a1_chamber_and_center() {
        let rs = build_root_system(Family::A(1), Multiplicities::Uniform(1)).unwrap();
        assert_eq!(rs.num_roots(), 1);
        assert_eq!(rs.n(), 1);
        let c = canonical_chamber_center(&rs).coords;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c[0] + s).abs() < 1e-15 && (c[1] - s).abs() < 1e-15);
    }

    #[test]
    fn d4_has_twelve_roots() {
        let rs = build_root_system(Family::D(4), Multiplicities::Uniform(1)).unwrap();
        // 2 * C(4,2) roots (e_i +- e_j)/sqrt2
        assert_eq!(rs.num_roots(), 2 * 6);
        assert_eq!(rs.n(), 12);
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(
            build_root_system(Family::D(3), Multiplicities::Uniform(1)),
            Err(WeylError::UnsupportedFamilyParams { .. })
        ));
        assert_eq!(
            build_root_system(Family::B(2), Multiplicities::Two { m1: 0, m2: 1 }).unwrap_err(),
            WeylError::NonpositiveMultiplicity
        );
        assert!(build_root_system(Family::I2(3), Multiplicities::Two { m1: 1, m2: 2 }).is_err());
        assert!(build_root_system(Family::I2(6), Multiplicities::Two { m1: 1, m2: 2 }).is_err());
        assert!(build_root_system(Family::A(2), Multiplicities::Two { m1: 1, m2: 2 }).is_err());
        assert!(build_root_system(Family::I2(4), Multiplicities::Two { m1: 1, m2: 2 }).is_ok());
    }

    #[test]
    fn closed_form_dimension_counts() {
        for k in 1..=8usize {
            let a = build_root_system(Family::A(k), Multiplicities::Uniform(3)).unwrap();
            assert_eq!(a.n() as usize, k * (k + 1) / 2 * 3);
            if k >= 2 {
                let b = build_root_system(Family::B(k), Multiplicities::Two { m1: 2, m2: 5 }).unwrap();
                assert_eq!(b.n() as usize, k * 5 + k * (k - 1) * 2);
            }
            if k >= 4 {
                let d = build_root_system(Family::D(k), Multiplicities::Uniform(2)).unwrap();
                assert_eq!(d.n() as usize, k * (k - 1) * 2);
            }
        }
        for g in 2..=12usize {
            let u = build_root_system(Family::I2(g), Multiplicities::Uniform(2)).unwrap();
            assert_eq!(u.n() as usize, 2 * g);
            if g % 2 == 0 && g != 6 {
                let t = build_root_system(Family::I2(g), Multiplicities::Two { m1: 1, m2: 3 }).unwrap();
                assert_eq!(t.n() as usize, g / 2 * 4);
            }
        }
    }

    #[test]
    fn roots_unit_nonparallel_and_negative_at_center() {
        let systems = [
            build_root_system(Family::A(3), Multiplicities::Uniform(1)).unwrap(),
            build_root_system(Family::B(3), Multiplicities::Two { m1: 1, m2: 2 }).unwrap(),
            build_root_system(Family::D(5), Multiplicities::Uniform(1)).unwrap(),
            build_root_system(Family::I2(5), Multiplicities::Uniform(1)).unwrap(),
            build_root_system(Family::I2(4), Multiplicities::Two { m1: 1, m2: 2 }).unwrap(),
        ];
        for rs in &systems {
            let c = canonical_chamber_center(rs).coords;
            assert!((c.norm() - 1.0).abs() < 1e-14);
            for (i, a) in rs.roots().iter().enumerate() {
                assert!((a.norm() - 1.0).abs() < 1e-14);
                assert!(a.dot(&c) < 0.0, "{} root {i}", rs.family());
                for b in &rs.roots()[i + 1..] {
                    assert!(a.dot(b).abs() < 1.0 - 1e-12);
                }
                if let Family::A(_) = rs.family() {
                    assert!(a.sum().abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn i2_center_is_bisector() {
        // maximize min(sin t, sin(pi/3 - t)) on (0, pi/3): t = pi/6
        let rs = build_root_system(Family::I2(3), Multiplicities::Uniform(1)).unwrap();
        let c = canonical_chamber_center(&rs).coords;
        assert!((c[1].atan2(c[0]) - PI / 6.0).abs() < 1e-14);
        // walls are the lines theta = 0 and theta = pi/g
        let on_axis = DVector::from_vec(vec![1.0, 0.0]);
        let s = stratum_of(&rs, &on_axis, 1e-12).unwrap();
        assert_eq!(s.vanishing, vec![0]);
    }

    #[test]
    fn b2_center_bisects_cone() {
        // chamber x1 < x2 < 0 is the cone between angles pi and 5pi/4
        let rs = b2();
        let c = canonical_chamber_center(&rs).coords;
        let ang = c[1].atan2(c[0]).rem_euclid(2.0 * PI);
        assert!((ang - 9.0 * PI / 8.0).abs() < 1e-14);
    }

    #[test]
    fn gaps_and_strata() {
        let rs = b2();
        // on the wall e2 = 0 with x1 < 0
        let x = DVector::from_vec(vec![-1.0, 0.0]);
        let gaps = wall_gaps(&rs, &x);
        assert_eq!(gaps.iter().filter(|g| **g == 0.0).count(), 1);
        let s = stratum_of(&rs, &x, 1e-12).unwrap();
        assert_eq!(s.fiber_dim, 1);
        assert_eq!(s.n_sigma, 3);

        let a2 = build_root_system(Family::A(2), Multiplicities::Uniform(1)).unwrap();
        let c = canonical_chamber_center(&a2).coords;
        let g = wall_gaps(&a2, &c);
        // equal on the two walls; the third root is their sum
        let simple: Vec<f64> = a2.simple_roots().iter().map(|&i| g[i]).collect();
        assert!((simple[0] - simple[1]).abs() < 1e-15);
        assert!((g[1] - 2.0 * g[0]).abs() < 1e-15);

        let origin = DVector::zeros(3);
        let s = stratum_of(&a2, &origin, 0.0).unwrap();
        assert_eq!(s.vanishing.len(), 3);
        assert_eq!(s.fiber_dim, a2.n());

        let interior = stratum_of(&a2, &c, default_zero_tol(&c)).unwrap();
        assert!(interior.vanishing.is_empty());
        assert_eq!(interior.fiber_dim, 0);

        let outside = -c.clone();
        assert!(matches!(stratum_of(&a2, &outside, 1e-9), Err(WeylError::OutsideChamber { .. })));
    }

    #[test]
    fn i2_4_boundary_multiplicity() {
        let rs = build_root_system(Family::I2(4), Multiplicities::Two { m1: 2, m2: 5 }).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let s = stratum_of(&rs, &x, 1e-12).unwrap();
        assert_eq!(s.fiber_dim, 2);
        let y = DVector::from_vec(vec![(PI / 4.0).cos(), (PI / 4.0).sin()]);
        let s = stratum_of(&rs, &y, 1e-12).unwrap();
        assert_eq!(s.fiber_dim, 5);
    }

    #[test]
    fn reflection_of_center_flips_one_gap() {
        for rs in [
            b2(),
            build_root_system(Family::A(3), Multiplicities::Uniform(1)).unwrap(),
            build_root_system(Family::I2(6), Multiplicities::Uniform(1)).unwrap(),
        ] {
            let c = canonical_chamber_center(&rs).coords;
            for &i in rs.simple_roots() {
                let y = reflect(&rs, i, &c).unwrap();
                let pos = wall_gaps(&rs, &y).iter().filter(|g| **g > 0.0).count();
                assert_eq!(pos, 1);
                let back = reflect(&rs, i, &y).unwrap();
                assert!((back - &c).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn reflections_permute_roots_up_to_sign() {
        for rs in [
            b2(),
            build_root_system(Family::A(3), Multiplicities::Uniform(1)).unwrap(),
            build_root_system(Family::D(4), Multiplicities::Uniform(1)).unwrap(),
            build_root_system(Family::I2(5), Multiplicities::Uniform(1)).unwrap(),
        ] {
            for i in 0..rs.num_roots() {
                for (j, b) in rs.roots().iter().enumerate() {
                    let img = reflect(&rs, i, b).unwrap();
                    let hit = rs.roots().iter().enumerate().find(|(_, c)| {
                        (&img - *c).norm() < 1e-12 || (&img + *c).norm() < 1e-12
                    });
                    let (l, _) = hit.unwrap_or_else(|| panic!("{} root {j} not mapped", rs.family()));
                    assert_eq!(rs.mults()[l], rs.mults()[j]);
                }
            }
        }
    }

    #[test]
    fn folding_lands_in_chamber() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rs = build_root_system(Family::D(5), Multiplicities::Uniform(1)).unwrap();
        for _ in 0..50 {
            let x = rs.random_unit_chamber_point(&mut rng);
            assert!(wall_gaps(&rs, &x).iter().all(|g| *g < 0.0));
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spec_json_roundtrip_is_bit_exact() {
        for text in [
            r#"{"family":"B","k":3,"m1":1,"m2":2}"#,
            r#"{"family":"I2","g":4,"m1":1,"m2":2}"#,
            r#"{"family":"A","k":2,"m":1}"#,
        ] {
            let spec = RootSystemSpec::from_json(text).unwrap();
            assert_eq!(spec.to_json(), text);
            assert_eq!(spec.build().unwrap().spec().to_json(), text);
        }
        assert!(RootSystemSpec::from_json(r#"{"family":"A","k":2}"#).unwrap().build().is_err());
        assert!(RootSystemSpec::from_json(r#"{"family":"A","k":2,"m":1,"x":3}"#).is_err());
        assert!(RootSystemSpec::from_json(r#"{"family":"E","k":6,"m":1}"#).unwrap().build().is_err());
    }

    #[test]
    fn parabolic_types() {
        let a3 = build_root_system(Family::A(3), Multiplicities::Uniform(1)).unwrap();
        let s = a3.simple_roots().to_vec();
        assert_eq!(a3.parabolic_type(&[s[0], s[1]]), "A2");
        assert_eq!(a3.parabolic_type(&[s[0], s[2]]), "A1xA1");
        assert_eq!(a3.parabolic_type(&s), "A3");
        let b3 = build_root_system(Family::B(3), Multiplicities::Uniform(1)).unwrap();
        assert_eq!(b3.parabolic_type(b3.simple_roots()), "B3");
        let d4 = build_root_system(Family::D(4), Multiplicities::Uniform(1)).unwrap();
        assert_eq!(d4.parabolic_type(d4.simple_roots()), "D4");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn reflect_is_isometric_involution(
                fam in 0usize..4, i in 0usize..64,
                v in proptest::collection::vec(-3.0f64..3.0, 5)
            ) {
                let rs = match fam {
                    0 => build_root_system(Family::A(3), Multiplicities::Uniform(1)).unwrap(),
                    1 => build_root_system(Family::B(4), Multiplicities::Uniform(1)).unwrap(),
                    2 => build_root_system(Family::D(5), Multiplicities::Uniform(1)).unwrap(),
                    _ => build_root_system(Family::I2(7), Multiplicities::Uniform(1)).unwrap(),
                };
                let x = DVector::from_iterator(rs.dim(), v.into_iter().take(rs.dim()));
                let i = i % rs.num_roots();
                let y = reflect(&rs, i, &x).unwrap();
                prop_assert!((y.norm() - x.norm()).abs() < 1e-12);
                let z = reflect(&rs, i, &y).unwrap();
                prop_assert!((z - &x).norm() < 1e-12);
            }

            #[test]
            fn stratum_monotone_in_tol(t in 0.0f64..1.0, tol1 in 0.0f64..0.5, extra in 0.0f64..0.5) {
                let rs = build_root_system(Family::I2(4), Multiplicities::Two { m1: 1, m2: 2 }).unwrap();
                let th = t * PI / 4.0;
                let x = DVector::from_vec(vec![th.cos(), th.sin()]);
                let a = stratum_of(&rs, &x, tol1).unwrap();
                let b = stratum_of(&rs, &x, tol1 + extra).unwrap();
                prop_assert!(a.vanishing.iter().all(|i| b.vanishing.contains(i)));
            }
        }
    }
}
