//! Univariate polynomials: exact rational arithmetic for root location in
//! `t`, and floating companion-matrix rooting for point recovery.

use nalgebra::{Complex, DMatrix};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Q = BigRational;

pub fn q_int(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

/// Exact value of a finite float.
pub fn q_from_f64(v: f64) -> Q {
    Q::from_float(v).expect("finite float")
}

pub fn q_to_f64(v: &Q) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Dense polynomial with rational coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QPoly {
    c: Vec<Q>,
}

impl QPoly {
    pub fn new(mut c: Vec<Q>) -> Self {
        while c.last().is_some_and(|v| v.is_zero()) {
            c.pop();
        }
        Self { c }
    }

    pub fn zero() -> Self {
        Self { c: Vec::new() }
    }

    pub fn coeffs(&self) -> &[Q] {
        &self.c
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    /// Degree, with `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.c.len().checked_sub(1)
    }

    pub fn lead(&self) -> Q {
        self.c.last().cloned().unwrap_or_else(Q::zero)
    }

    pub fn eval(&self, t: &Q) -> Q {
        let mut acc = Q::zero();
        for c in self.c.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.c
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * q_int(i as i64))
                .collect(),
        )
    }

    pub fn scale(&self, s: &Q) -> Self {
        Self::new(self.c.iter().map(|c| c * s).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.c.len().max(other.c.len());
        let z = Q::zero();
        Self::new(
            (0..n)
                .map(|i| self.c.get(i).unwrap_or(&z) - other.c.get(i).unwrap_or(&z))
                .collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut c = vec![Q::zero(); self.c.len() + other.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in other.c.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Self::new(c)
    }

    pub fn monic(&self) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        let l = self.lead();
        Self::new(self.c.iter().map(|c| c / &l).collect())
    }

    /// Quotient and remainder; panics on a zero divisor.
    pub fn div_rem(&self, d: &Self) -> (Self, Self) {
        let dd = d.degree().expect("division by the zero polynomial");
        let mut r = self.c.clone();
        let Some(nd) = self.degree() else {
            return (Self::zero(), Self::zero());
        };
        if nd < dd {
            return (Self::zero(), self.clone());
        }
        let mut q = vec![Q::zero(); nd - dd + 1];
        let lead = d.lead();
        for k in (0..=nd - dd).rev() {
            let coef = &r[k + dd] / &lead;
            if !coef.is_zero() {
                for (j, dc) in d.c.iter().enumerate() {
                    r[k + j] -= &coef * dc;
                }
            }
            q[k] = coef;
        }
        r.truncate(dd);
        (Self::new(q), Self::new(r))
    }

    pub fn gcd(&self, other: &Self) -> Self {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let r = a.div_rem(&b).1;
            a = b;
            b = r.monic();
        }
        a.monic()
    }

    /// Product of the distinct irreducible factors.
    pub fn square_free(&self) -> Self {
        let g = self.gcd(&self.derivative());
        if g.degree().unwrap_or(0) == 0 {
            return self.monic();
        }
        self.div_rem(&g).0.monic()
    }

    /// Newton interpolation through `(x_i, y_i)` with distinct nodes.
    pub fn interpolate(xs: &[Q], ys: &[Q]) -> Self {
        let n = xs.len();
        let mut dd = ys.to_vec();
        for j in 1..n {
            for i in (j..n).rev() {
                dd[i] = (&dd[i] - &dd[i - 1]) / (&xs[i] - &xs[i - j]);
            }
        }
        let mut p = Self::new(vec![dd[n - 1].clone()]);
        for i in (0..n - 1).rev() {
            p = p.mul(&Self::new(vec![-xs[i].clone(), Q::one()]));
            p = Self::new({
                let mut c = p.c.clone();
                if c.is_empty() {
                    c.push(Q::zero());
                }
                c[0] += &dd[i];
                c
            });
        }
        p
    }

    /// Sturm sequence of the polynomial.
    pub fn sturm_chain(&self) -> Vec<Self> {
        let mut chain = vec![self.clone(), self.derivative()];
        loop {
            let k = chain.len();
            if chain[k - 1].is_zero() {
                chain.pop();
                break;
            }
            let r = chain[k - 2].div_rem(&chain[k - 1]).1;
            if r.is_zero() {
                break;
            }
            // rescale to keep coefficient sizes down; sign must stay negated
            let l = r.lead().abs();
            chain.push(r.scale(&(-Q::one() / l)));
        }
        chain
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.c.iter().map(q_to_f64).collect()
    }
}

fn sign_changes(chain: &[QPoly], t: &Q) -> usize {
    let mut count = 0;
    let mut prev = 0i8;
    for p in chain {
        let v = p.eval(t);
        let s = if v.is_positive() {
            1
        } else if v.is_negative() {
            -1
        } else {
            0
        };
        if s != 0 {
            if prev != 0 && s != prev {
                count += 1;
            }
            prev = s;
        }
    }
    count
}

/// Number of distinct real roots in `(a, b]` of a square-free polynomial.
pub fn count_roots(chain: &[QPoly], a: &Q, b: &Q) -> usize {
    sign_changes(chain, a).saturating_sub(sign_changes(chain, b))
}

/// Smallest real root in `(a, b]`, as a bracket of width at most `2^-iters (b - a)`.
pub fn smallest_root(p: &QPoly, a: &Q, b: &Q, iters: usize) -> Option<(Q, Q)> {
    let sf = p.square_free();
    if sf.degree().unwrap_or(0) == 0 {
        return None;
    }
    let chain = sf.sturm_chain();
    if count_roots(&chain, a, b) == 0 {
        return None;
    }
    let (mut lo, mut hi) = (a.clone(), b.clone());
    let two = q_int(2);
    // isolate: shrink until a single root remains in (lo, hi]
    while count_roots(&chain, &lo, &hi) > 1 {
        let mid = (&lo + &hi) / &two;
        if count_roots(&chain, &lo, &mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if sf.eval(&hi).is_zero() {
        return Some((hi.clone(), hi));
    }
    // a simple root isolated in (lo, hi] is a sign change of sf
    let s_hi = sf.eval(&hi).is_positive();
    for _ in 0..iters {
        let mid = (&lo + &hi) / &two;
        let v = sf.eval(&mid);
        if v.is_zero() {
            return Some((mid.clone(), mid));
        }
        if v.is_positive() != s_hi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo, hi))
}

/// Determinant by fraction-exact Gaussian elimination.
pub fn det(mut m: Vec<Vec<Q>>) -> Q {
    let n = m.len();
    let mut d = Q::one();
    for col in 0..n {
        let Some(piv) = (col..n).find(|&r| !m[r][col].is_zero()) else {
            return Q::zero();
        };
        if piv != col {
            m.swap(piv, col);
            d = -d;
        }
        let p = m[col][col].clone();
        d *= &p;
        for r in (col + 1)..n {
            if m[r][col].is_zero() {
                continue;
            }
            let f = &m[r][col] / &p;
            for c in col..n {
                let v = &f * &m[col][c];
                m[r][c] -= v;
            }
        }
    }
    d
}

/// Resultant of two polynomials via the Sylvester determinant.
pub fn resultant(p: &QPoly, q: &QPoly) -> Q {
    let (Some(dp), Some(dq)) = (p.degree(), q.degree()) else {
        return Q::zero();
    };
    let n = dp + dq;
    if n == 0 {
        return Q::one();
    }
    let mut m = vec![vec![Q::zero(); n]; n];
    // rows hold coefficients from the highest degree down
    for r in 0..dq {
        for (j, c) in p.coeffs().iter().rev().enumerate() {
            m[r][r + j] = c.clone();
        }
    }
    for r in 0..dp {
        for (j, c) in q.coeffs().iter().rev().enumerate() {
            m[dq + r][r + j] = c.clone();
        }
    }
    det(m)
}

/// Discriminant `(-1)^{d(d-1)/2} Res(p, p') / lc(p)`.
pub fn discriminant(p: &QPoly) -> Q {
    let d = p.degree().unwrap_or(0);
    if d < 1 {
        return Q::zero();
    }
    let r = resultant(p, &p.derivative()) / p.lead();
    if (d * (d - 1) / 2) % 2 == 1 {
        -r
    } else {
        r
    }
}

/// Horner evaluation of a real polynomial (lowest degree first) at a complex point.
pub fn eval_complex(c: &[f64], z: Complex<f64>) -> (Complex<f64>, Complex<f64>) {
    let mut p = Complex::new(0.0, 0.0);
    let mut dp = Complex::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// All complex roots of a real polynomial (lowest degree first, nonzero
/// leading coefficient), from companion-matrix eigenvalues polished by Newton.
pub fn complex_roots(c: &[f64]) -> Vec<Complex<f64>> {
    let d = c.len() - 1;
    if d == 0 {
        return Vec::new();
    }
    let lead = c[d];
    // rescale z = rho w so the roots are of unit size
    let rho = (0..d)
        .map(|i| (c[i] / lead).abs().powf(1.0 / (d - i) as f64))
        .fold(0.0, f64::max);
    if rho == 0.0 {
        return vec![Complex::new(0.0, 0.0); d];
    }
    let mut comp = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        comp[(i, d - 1)] = -c[i] / lead / rho.powi((d - i) as i32);
    }
    let eig = comp.complex_eigenvalues();
    eig.iter()
        .map(|&w| {
            let z0 = w * rho;
            let mut z = z0;
            for _ in 0..3 {
                let (p, dp) = eval_complex(c, z);
                if dp.norm() == 0.0 {
                    break;
                }
                let step = p / dp;
                let cand = z - step;
                // Newton stalls at clustered roots; keep the better iterate
                if eval_complex(c, cand).0.norm() < p.norm() {
                    z = cand;
                } else {
                    break;
                }
            }
            z
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(v: &[i64]) -> QPoly {
        QPoly::new(v.iter().map(|&x| q_int(x)).collect())
    }

    #[test]
    fn arithmetic_and_division() {
        let p = qp(&[-1, 0, 1]); // t^2 - 1
        let d = qp(&[-1, 1]);
        let (q, r) = p.div_rem(&d);
        assert_eq!(q, qp(&[1, 1]));
        assert!(r.is_zero());
        assert_eq!(p.derivative(), qp(&[0, 2]));
        assert_eq!(p.eval(&q_int(3)), q_int(8));
    }

    #[test]
    fn square_free_part() {
        // (t - 1)^3 (t + 2)
        let p = qp(&[-1, 1]).mul(&qp(&[-1, 1])).mul(&qp(&[-1, 1])).mul(&qp(&[2, 1]));
        assert_eq!(p.square_free(), qp(&[-2, 1, 1]));
    }

    #[test]
    fn interpolation_recovers_polynomial() {
        let p = qp(&[3, -1, 0, 2, 5]);
        let xs: Vec<Q> = (0..5).map(q_int).collect();
        let ys: Vec<Q> = xs.iter().map(|x| p.eval(x)).collect();
        assert_eq!(QPoly::interpolate(&xs, &ys), p);
    }

    #[test]
    fn sturm_counts() {
        // (t - 1)(t - 2)(t - 3)
        let p = qp(&[-6, 11, -6, 1]);
        let ch = p.sturm_chain();
        assert_eq!(count_roots(&ch, &q_int(0), &q_int(10)), 3);
        assert_eq!(count_roots(&ch, &q_int(1), &q_int(2)), 1);
        assert_eq!(count_roots(&ch, &q_from_f64(1.5), &q_from_f64(2.5)), 1);
        let (lo, hi) = smallest_root(&p, &q_from_f64(1.5), &q_int(10), 60).unwrap();
        assert!((q_to_f64(&lo) - 2.0).abs() < 1e-15 && (q_to_f64(&hi) - 2.0).abs() < 1e-15);
        assert!(smallest_root(&p, &q_from_f64(3.5), &q_int(10), 10).is_none());
    }

    #[test]
    fn smallest_root_of_irrational() {
        // t^2 - 2 on (0, 2]
        let (lo, hi) = smallest_root(&qp(&[-2, 0, 1]), &q_int(0), &q_int(2), 70).unwrap();
        let r = std::f64::consts::SQRT_2;
        assert!(q_to_f64(&lo) <= r + 1e-16 && q_to_f64(&hi) >= r - 1e-16);
        assert!(q_to_f64(&(hi - lo)) < 1e-20);
    }

    #[test]
    fn discriminants() {
        // z^2 + b z + c: b^2 - 4c
        assert_eq!(discriminant(&qp(&[3, 5, 1])), q_int(25 - 12));
        // z^3 + p z + q: -4p^3 - 27q^2
        assert_eq!(discriminant(&qp(&[2, -3, 0, 1])), q_int(-4 * -27 - 27 * 4));
        assert!(discriminant(&qp(&[-1, 3, -3, 1])).is_zero());
    }

    #[test]
    fn companion_roots() {
        let c = [-6.0, 11.0, -6.0, 1.0];
        let mut r: Vec<f64> = complex_roots(&c).iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-13);
        }
        let z = complex_roots(&[1.0, 0.0, 1.0]);
        assert!(z.iter().all(|v| (v.im.abs() - 1.0).abs() < 1e-14 && v.re.abs() < 1e-14));
    }
}
