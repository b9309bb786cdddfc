//! Dormand-Prince 5(4) with continuous extension of order 4.
//!
//! The right-hand side may refuse a state (domain violation), in which case
//! the step is rejected and retried with a smaller step.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("right-hand side undefined at the initial state")]
    BadInitialState,
    #[error("maximum number of steps ({0}) exceeded")]
    TooManySteps(usize),
    #[error("non-finite values encountered at t = {0}")]
    NonFinite(f64),
}

pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Writes `y'` into `dy`; returns `false` when `y` lies outside the domain.
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> bool;

    /// Upper bound on the step length at `(t, y)` with derivative `dy`.
    fn max_step(&self, _t: f64, _y: &[f64], _dy: &[f64]) -> f64 {
        f64::INFINITY
    }

    /// Extra acceptance test applied to a proposed step end point.
    fn accept(&self, _t: f64, _y: &[f64]) -> bool {
        true
    }

    /// Stops the integration after an accepted step.
    fn should_stop(&self, _t: f64, _y: &[f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: Option<f64>,
    pub max_steps: usize,
    /// Relative step size below which the integration gives up.
    pub min_rel_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h0: None,
            max_steps: 2_000_000,
            min_rel_step: 1e-15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Finished,
    Stopped,
    StepUnderflow,
}

/// Dense-output polynomial over one accepted step.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }

    /// Segment of the solution `t -> L(y(t / time_scale))` for a linear map `L`.
    pub fn mapped(&self, time_scale: f64, lin: impl Fn(&[f64]) -> Vec<f64>) -> DenseSegment {
        DenseSegment {
            t0: self.t0 * time_scale,
            h: self.h * time_scale,
            rcont: [
                lin(&self.rcont[0]),
                lin(&self.rcont[1]),
                lin(&self.rcont[2]),
                lin(&self.rcont[3]),
                lin(&self.rcont[4]),
            ],
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        let (a, b) = if self.h > 0.0 { (self.t0, self.t1()) } else { (self.t1(), self.t0) };
        t >= a && t <= b
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub ts: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub segments: Vec<DenseSegment>,
    pub termination: Termination,
    pub rejected: usize,
}

impl Solution {
    /// Interpolated state at `t` inside the integrated range.
    pub fn at(&self, t: f64) -> Option<Vec<f64>> {
        if self.ts.first() == Some(&t) {
            return Some(self.ys[0].clone());
        }
        if self.ts.last() == Some(&t) {
            return Some(self.y_last().to_vec());
        }
        if self.segments.is_empty() {
            return None;
        }
        let forward = self.segments[0].h > 0.0;
        let idx = self.segments.partition_point(|s| if forward { s.t1() < t } else { s.t1() > t });
        let seg = self.segments.get(idx)?;
        if !seg.contains(t) {
            return None;
        }
        let mut out = vec![0.0; self.ys[0].len()];
        seg.eval(t, &mut out);
        Some(out)
    }

    pub fn t_last(&self) -> f64 {
        *self.ts.last().expect("solution has at least the initial point")
    }

    pub fn y_last(&self) -> &[f64] {
        self.ys.last().expect("solution has at least the initial point")
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn err_norm(y: &[f64], ynew: &[f64], err: &[f64], o: &OdeOptions) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        let sc = o.atol + o.rtol * y[i].abs().max(ynew[i].abs());
        s += (err[i] / sc).powi(2);
    }
    (s / y.len() as f64).sqrt()
}

fn initial_step<S: OdeSystem>(sys: &S, t0: f64, y0: &[f64], f0: &[f64], dir: f64, o: &OdeOptions) -> f64 {
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|v| o.atol + o.rtol * v.abs()).collect();
    let d0 = (y0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(sys.max_step(t0, y0, f0));
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + dir * h * f).collect();
    let mut f1 = vec![0.0; n];
    if !sys.rhs(t0 + dir * h, &y1, &mut f1) {
        return h * 0.01;
    }
    let d2 = (f1.iter().zip(f0).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() / n as f64).sqrt() / h;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h).min(h1).min(sys.max_step(t0, y0, f0))
}

/// Integrates from `t0` to `t_end` (either direction).
pub fn integrate<S: OdeSystem>(sys: &S, t0: f64, y0: &[f64], t_end: f64, o: &OdeOptions) -> Result<Solution, OdeError> {
    let n = sys.dim();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    if !sys.rhs(t, &y, &mut k1) {
        return Err(OdeError::BadInitialState);
    }
    let mut sol = Solution {
        ts: vec![t0],
        ys: vec![y.clone()],
        segments: Vec::new(),
        termination: Termination::Finished,
        rejected: 0,
    };
    if t0 == t_end {
        return Ok(sol);
    }
    let mut h = o.h0.unwrap_or_else(|| initial_step(sys, t0, &y, &k1, dir, o)).abs();
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut errv = vec![0.0; n];
    let mut last_rejected = false;
    let mut steps = 0usize;
    loop {
        if steps >= o.max_steps {
            return Err(OdeError::TooManySteps(o.max_steps));
        }
        let remaining = (t_end - t).abs();
        h = h.min(sys.max_step(t, &y, &k1)).min(remaining);
        if h <= o.min_rel_step * t.abs().max(f64::MIN_POSITIVE) {
            sol.termination = Termination::StepUnderflow;
            return Ok(sol);
        }
        let hs = dir * h;
        steps += 1;
        let stage = |coef: &[(f64, &Vec<f64>)], out: &mut Vec<f64>, y: &[f64]| {
            for i in 0..n {
                let mut s = 0.0;
                for (c, k) in coef {
                    s += c * k[i];
                }
                out[i] = y[i] + hs * s;
            }
        };
        let mut ok = true;
        stage(&[(A21, &k1)], &mut ytmp, &y);
        ok &= sys.rhs(t + C2 * hs, &ytmp, &mut k2);
        if ok {
            stage(&[(A31, &k1), (A32, &k2)], &mut ytmp, &y);
            ok &= sys.rhs(t + C3 * hs, &ytmp, &mut k3);
        }
        if ok {
            stage(&[(A41, &k1), (A42, &k2), (A43, &k3)], &mut ytmp, &y);
            ok &= sys.rhs(t + C4 * hs, &ytmp, &mut k4);
        }
        if ok {
            stage(&[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], &mut ytmp, &y);
            ok &= sys.rhs(t + C5 * hs, &ytmp, &mut k5);
        }
        if ok {
            stage(&[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], &mut ytmp, &y);
            ok &= sys.rhs(t + hs, &ytmp, &mut k6);
        }
        if ok {
            stage(&[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)], &mut ynew, &y);
            ok &= sys.rhs(t + hs, &ynew, &mut k7);
        }
        if !ok {
            sol.rejected += 1;
            last_rejected = true;
            h *= 0.25;
            continue;
        }
        for i in 0..n {
            errv[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err = err_norm(&y, &ynew, &errv, o);
        if !err.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite(t));
        }
        if err <= 1.0 && sys.accept(t + hs, &ynew) {
            let mut rcont = [y.clone(), vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = hs * k1[i] - ydiff;
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - hs * k7[i] - bspl;
                rcont[4][i] = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            sol.segments.push(DenseSegment { t0: t, h: hs, rcont });
            // land exactly on t_end
            t = if h == remaining { t_end } else { t + hs };
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            sol.ts.push(t);
            sol.ys.push(y.clone());
            if t == t_end {
                sol.termination = Termination::Finished;
                return Ok(sol);
            }
            if sys.should_stop(t, &y) {
                sol.termination = Termination::Stopped;
                return Ok(sol);
            }
            let mut fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h *= fac;
        } else {
            sol.rejected += 1;
            last_rejected = true;
            let fac = if err.is_finite() && err > 1.0 { (0.9 * err.powf(-0.2)).max(0.2) } else { 0.5 };
            h *= fac;
        }
    }
}
