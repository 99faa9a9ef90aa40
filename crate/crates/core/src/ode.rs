//! Adaptive Dormand–Prince 5(4) integration with dense output, and
//! trapezoid quadrature for smooth periodic integrands.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state or derivative at t = {t}")]
    NonFinite { t: f64 },
    #[error("exceeded {steps} steps at t = {t}")]
    TooManySteps { t: f64, steps: usize },
    #[error("quadrature did not converge with {nodes} nodes (last change {change:e})")]
    QuadratureNotConverged { nodes: usize, change: f64 },
    #[error("non-finite integrand at t = {t}")]
    NonFiniteIntegrand { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_step: f64::INFINITY,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            abs_tol: tol,
            rel_tol: tol,
            ..Default::default()
        }
    }
}

const MAX_STEPS: usize = 2_000_000;

// Dormand–Prince tableau.
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
// Dense output (Hairer & Wanner, continuous extension of order 4).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone)]
struct DenseStep {
    t0: f64,
    h: f64,
    // rcont1..rcont5, each `dim` long
    coeffs: Vec<f64>,
}

/// A solution with dense output over `[min(t0,t1), max(t0,t1)]`.
///
/// Samples are stored in increasing time order regardless of integration
/// direction.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    steps: Vec<DenseStep>,
    start: f64,
    end: f64,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    /// Time the integration started from.
    pub fn start_time(&self) -> f64 {
        self.start
    }

    /// Time the integration ended at.
    pub fn end_time(&self) -> f64 {
        self.end
    }

    /// State at the end of the integration (at `t1`).
    pub fn final_state(&self) -> &[f64] {
        if self.end >= self.start {
            self.state(self.times.len() - 1)
        } else {
            self.state(0)
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Dense evaluation; `t` is clamped to the covered range. Sample times
    /// return the stored state exactly.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.times.len();
        let lo = self.times[0];
        let hi = self.times[n - 1];
        let t = t.clamp(lo, hi);
        let idx = self.times.partition_point(|&s| s < t);
        if idx < n && self.times[idx] == t {
            out.copy_from_slice(self.state(idx));
            return;
        }
        // t lies strictly inside interval [idx-1, idx]
        let step = &self.steps[idx - 1];
        let theta = (t - step.t0) / step.h;
        let theta1 = 1.0 - theta;
        let d = self.dim;
        let c = &step.coeffs;
        for i in 0..d {
            out[i] = c[i]
                + theta
                    * (c[d + i]
                        + theta1 * (c[2 * d + i] + theta * (c[3 * d + i] + theta1 * c[4 * d + i])));
        }
    }

    /// Samples `count` equispaced points on `[start, end]` inclusive.
    pub fn sample(&self, count: usize) -> Vec<(f64, Vec<f64>)> {
        let (a, b) = (self.times[0], self.times[self.times.len() - 1]);
        (0..count)
            .map(|k| {
                let t = if count == 1 {
                    a
                } else {
                    a + (b - a) * k as f64 / (count - 1) as f64
                };
                (t, self.eval(t))
            })
            .collect()
    }
}

fn rms_norm(v: &[f64], scale: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(scale).map(|(x, s)| (x / s).powi(2)).sum();
    (s / v.len().max(1) as f64).sqrt()
}

struct Outcome {
    state: Vec<f64>,
    trajectory: Option<Trajectory>,
}

fn run<F>(
    mut field: F,
    t0: f64,
    x0: &[f64],
    t1: f64,
    opts: &OdeOptions,
    record: bool,
) -> Result<Outcome, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x0.len();
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t: t0 });
    }
    let mut times = vec![t0];
    let mut states = x0.to_vec();
    let mut steps: Vec<DenseStep> = Vec::new();
    if t1 == t0 || n == 0 {
        return Ok(Outcome {
            state: x0.to_vec(),
            trajectory: record.then(|| Trajectory {
                dim: n,
                times,
                states,
                steps,
                start: t0,
                end: t1,
            }),
        });
    }

    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut y = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut scale = vec![0.0; n];

    field(t, &y, &mut k1);
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t });
    }

    // initial step (Hairer's heuristic)
    for i in 0..n {
        scale[i] = opts.abs_tol + opts.rel_tol * y[i].abs();
    }
    let d0 = rms_norm(&y, &scale);
    let d1 = rms_norm(&k1, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    for i in 0..n {
        tmp[i] = y[i] + dir * h0 * k1[i];
    }
    field(t + dir * h0, &tmp, &mut k2);
    for i in 0..n {
        err[i] = (k2[i] - k1[i]) / h0;
    }
    let d2 = rms_norm(&err, &scale);
    let dmax = d1.max(d2);
    let h1 = if !dmax.is_finite() || dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(0.2)
    };
    let mut h = (100.0 * h0).min(h1).min(span).min(opts.max_step);
    let mut last_rejected = false;
    let mut count = 0usize;

    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 0.0 {
            break;
        }
        count += 1;
        if count > MAX_STEPS {
            return Err(OdeError::TooManySteps { t, steps: MAX_STEPS });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { t, h });
        }
        let mut last = false;
        if h >= remaining || remaining - h < 1e-12 * remaining.max(1.0) {
            h = remaining;
            last = true;
        }
        let hs = dir * h;

        for i in 0..n {
            tmp[i] = y[i] + hs * A21 * k1[i];
        }
        field(t + C2 * hs, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        field(t + C3 * hs, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        field(t + C4 * hs, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        field(t + C5 * hs, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i]
                + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + hs };
        field(t_new, &tmp, &mut k6);
        for i in 0..n {
            y1[i] = y[i]
                + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        field(t_new, &y1, &mut k7);
        for i in 0..n {
            err[i] = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            scale[i] = opts.abs_tol + opts.rel_tol * y[i].abs().max(y1[i].abs());
        }
        let e = rms_norm(&err, &scale);
        if !e.is_finite() || y1.iter().chain(&k7).any(|v| !v.is_finite()) {
            // shrink hard; a genuinely non-finite solution ends in underflow
            if h < 1e-10 * span {
                return Err(OdeError::NonFinite { t });
            }
            h *= 0.1;
            last_rejected = true;
            continue;
        }

        if e <= 1.0 {
            if record {
                let mut coeffs = vec![0.0; 5 * n];
                for i in 0..n {
                    let ydiff = y1[i] - y[i];
                    let bspl = hs * k1[i] - ydiff;
                    coeffs[i] = y[i];
                    coeffs[n + i] = ydiff;
                    coeffs[2 * n + i] = bspl;
                    coeffs[3 * n + i] = ydiff - hs * k7[i] - bspl;
                    coeffs[4 * n + i] = hs
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                steps.push(DenseStep { t0: t, h: hs, coeffs });
                times.push(t_new);
                states.extend_from_slice(&y1);
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            let mut fac = 0.9 * e.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = (h * fac).min(opts.max_step);
            if last {
                break;
            }
        } else {
            let fac = (0.9 * e.powf(-0.2)).max(0.2);
            h *= fac;
            last_rejected = true;
        }
    }

    let trajectory = record.then(|| {
        if dir < 0.0 {
            times.reverse();
            let rev: Vec<f64> = states.chunks(n).rev().flatten().copied().collect();
            states = rev;
            steps.reverse();
        }
        Trajectory {
            dim: n,
            times,
            states,
            steps,
            start: t0,
            end: t1,
        }
    });
    Ok(Outcome {
        state: y,
        trajectory,
    })
}

/// Integrates `x' = field(t, x)` from `t0` to `t1` (either direction) and
/// keeps dense output.
pub fn integrate<F>(
    field: F,
    t0: f64,
    x0: &[f64],
    t1: f64,
    opts: &OdeOptions,
) -> Result<Trajectory, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let out = run(field, t0, x0, t1, opts, true)?;
    Ok(out.trajectory.expect("recorded"))
}

/// Like [`integrate`] but returns only the end state.
pub fn propagate<F>(
    field: F,
    t0: f64,
    x0: &[f64],
    t1: f64,
    opts: &OdeOptions,
) -> Result<Vec<f64>, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    Ok(run(field, t0, x0, t1, opts, false)?.state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub nodes: usize,
}

const QUAD_TOL: f64 = 1e-10;
const QUAD_MAX_NODES: usize = 1 << 20;

/// Composite trapezoid rule for a `p`-periodic integrand over one period,
/// doubling the node count until two successive refinements agree.
pub fn periodic_quadrature<F>(mut f: F, p: f64) -> Result<Quadrature, OdeError>
where
    F: FnMut(f64) -> f64,
{
    let mut eval = |t: f64| -> Result<f64, OdeError> {
        let v = f(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(OdeError::NonFiniteIntegrand { t })
        }
    };
    let mut nodes = 16usize;
    let mut sum = 0.0;
    for k in 0..nodes {
        sum += eval(p * k as f64 / nodes as f64)?;
    }
    let mut value = sum * p / nodes as f64;
    let mut agreed = 0;
    let mut change = f64::INFINITY;
    while nodes < QUAD_MAX_NODES {
        let fine = 2 * nodes;
        for k in (1..fine).step_by(2) {
            sum += eval(p * k as f64 / fine as f64)?;
        }
        let next = sum * p / fine as f64;
        change = (next - value).abs();
        value = next;
        nodes = fine;
        if change < QUAD_TOL * value.abs().max(1.0) {
            agreed += 1;
            // two agreements guard against aliasing of a single harmonic
            if agreed == 2 {
                return Ok(Quadrature { value, nodes });
            }
        } else {
            agreed = 0;
        }
    }
    Err(OdeError::QuadratureNotConverged { nodes, change })
}
