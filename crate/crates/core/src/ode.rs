//! Time grids and an adaptive Dormand–Prince 5(4) integrator with dense
//! output, for complex state vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::C64;

/// Strictly increasing sample times starting at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

/// Grid points closer than this (relative to `max(1, |t|)`) are identified.
const GRID_MATCH: f64 = 1e-12;

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&0.0) {
            return Err(Error::InvalidArgument(
                "time grid must start at t = 0".into(),
            ));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "time grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("non-finite grid time".into()));
        }
        Ok(Self { times })
    }

    /// `n + 1` evenly spaced points on `[0, t_max]`.
    pub fn uniform(t_max: f64, n: usize) -> Result<Self> {
        if n == 0 || !(t_max > 0.0) {
            return Self::new(vec![0.0]);
        }
        Self::new((0..=n).map(|k| t_max * k as f64 / n as f64).collect())
    }

    /// Grid made of 0 and the given (non-negative, any order) times.
    pub fn from_points<I: IntoIterator<Item = f64>>(points: I) -> Result<Self> {
        let mut ts: Vec<f64> = points.into_iter().collect();
        if let Some(t) = ts.iter().find(|t| !(**t >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "grid times must be non-negative, got {t}"
            )));
        }
        ts.push(0.0);
        ts.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::with_capacity(ts.len());
        for t in ts {
            match out.last() {
                Some(&last) if (t - last).abs() <= GRID_MATCH * last.abs().max(1.0) => {}
                _ => out.push(t),
            }
        }
        Self::new(out)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = GRID_MATCH * t.abs().max(1.0);
        let idx = self.times.partition_point(|&s| s < t - tol);
        (idx < self.times.len() && (self.times[idx] - t).abs() <= tol).then_some(idx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
    /// Smallest admissible step, relative to `max(1, |t|)`.
    pub min_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            atol: 1e-12,
            rtol: 1e-12,
            max_steps: 2_000_000,
            min_step: 1e-14,
        }
    }
}

// Dormand–Prince 5(4) tableau.
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

// Continuous extension (Hairer & Wanner, DOPRI5).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates `dy/dt = f(t, y)` from `t = 0` and returns the state at every
/// requested output time (non-decreasing, all `≥ 0`).
pub fn integrate<F>(mut f: F, y0: &[C64], t_out: &[f64], opts: &OdeOptions) -> Result<Vec<Vec<C64>>>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    if t_out.windows(2).any(|w| w[1] < w[0]) || t_out.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument(
            "output times must be non-negative and non-decreasing".into(),
        ));
    }
    let n = y0.len();
    let mut out = Vec::with_capacity(t_out.len());
    let mut next = 0;
    while next < t_out.len() && t_out[next] == 0.0 {
        out.push(y0.to_vec());
        next += 1;
    }
    let t_end = match t_out.last() {
        Some(&t) if next < t_out.len() => t,
        _ => return Ok(out),
    };

    let mut y = y0.to_vec();
    let mut k1 = vec![C64::default(); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut k5 = k1.clone();
    let mut k6 = k1.clone();
    let mut k7 = k1.clone();
    let mut ytmp = k1.clone();
    let mut ynew = k1.clone();

    let mut t = 0.0;
    f(t, &y, &mut k1);
    let mut h = initial_step(&mut f, &y, &k1, t_end, opts);
    let mut steps = 0usize;
    let mut rejected_last = false;

    while next < t_out.len() {
        if steps >= opts.max_steps {
            return Err(Error::IntegratorFailure {
                t,
                reason: format!("exceeded {} steps", opts.max_steps),
            });
        }
        let h_min = opts.min_step * t.abs().max(1.0);
        if h < h_min {
            return Err(Error::IntegratorFailure {
                t,
                reason: format!("step size {h:e} underflow"),
            });
        }
        if t + h > t_end {
            h = t_end - t;
        }
        steps += 1;

        for i in 0..n {
            ytmp[i] = y[i] + k1[i] * (h * A21);
        }
        f(t + C2 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        f(t + C3 * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        f(t + C4 * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        f(t + C5 * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i]
                + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        f(t + h, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i]
                + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        f(t + h, &ynew, &mut k7);

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                * h;
            let sk = opts.atol + opts.rtol * y[i].norm().max(ynew[i].norm());
            err_sq += (e.norm() / sk).powi(2);
        }
        let err = if n == 0 { 0.0 } else { (err_sq / n as f64).sqrt() };
        if !err.is_finite() {
            h *= 0.2;
            rejected_last = true;
            continue;
        }

        if err <= 1.0 {
            let t_new = if t + h >= t_end { t_end } else { t + h };
            while next < t_out.len() && t_out[next] <= t_new {
                let theta = if h > 0.0 { (t_out[next] - t) / h } else { 1.0 };
                out.push(dense(theta, h, &y, &ynew, [&k1, &k3, &k4, &k5, &k6, &k7]));
                next += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            h *= fac;
            rejected_last = false;
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            rejected_last = true;
        }
    }
    Ok(out)
}

fn dense(theta: f64, h: f64, y: &[C64], ynew: &[C64], k: [&Vec<C64>; 6]) -> Vec<C64> {
    let [k1, k3, k4, k5, k6, k7] = k;
    if theta >= 1.0 {
        return ynew.to_vec();
    }
    let theta1 = 1.0 - theta;
    (0..y.len())
        .map(|i| {
            let ydiff = ynew[i] - y[i];
            let bspl = k1[i] * h - ydiff;
            let r4 = ydiff - k7[i] * h - bspl;
            let r5 = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7)
                * h;
            y[i] + (ydiff + (bspl + (r4 + r5 * theta1) * theta) * theta1) * theta
        })
        .collect()
}

fn initial_step<F>(f: &mut F, y: &[C64], f0: &[C64], t_end: f64, opts: &OdeOptions) -> f64
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len().max(1) as f64;
    let scaled = |v: &[C64]| {
        (v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi.norm() / (opts.atol + opts.rtol * yi.norm())).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = scaled(y);
    let d1 = scaled(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(t_end);
    let y1: Vec<C64> = y.iter().zip(f0).map(|(yi, fi)| yi + fi * h0).collect();
    let mut f1 = vec![C64::default(); y.len()];
    f(h0, &y1, &mut f1);
    let diff: Vec<C64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_end)
}
