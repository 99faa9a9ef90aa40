//! Damped pendulum-like equations `x'' + λx' + g(x) = μ + e(t)` with bounded
//! `g` and zero-mean `e`.

use std::f64::consts::TAU;

use crate::expr::{ExprError, Expression};
use crate::scalar::{line_samples, Orientation};
use crate::sim::{self, check_vars, eval_t};
use crate::{AnalysisError, Result, Tolerances};

const SLOPE_SAMPLES: usize = 10_000;
const BOUND_SAMPLES: usize = 2_000;
const MEAN_TOL: f64 = 1e-9;
const STRICT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PendulumProblem {
    lambda: f64,
    g: Expression,
    bound: f64,
    limits: (f64, f64),
    mu: f64,
    e: Expression,
    period: f64,
    bounds_hold: bool,
    warnings: Vec<String>,
    tol: Tolerances,
}

impl PendulumProblem {
    /// `g` is an expression in `x` with declared `sup|g| ≤ bound` and limits
    /// `(g(-∞), g(+∞))`; `e` is an expression in `t` with zero mean.
    pub fn new(
        lambda: f64,
        g: Expression,
        bound: f64,
        limits: (f64, f64),
        mu: f64,
        e: Expression,
        period: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(AnalysisError::InvalidProblem(format!("damping must be positive, got {lambda}")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(AnalysisError::InvalidProblem(format!("period must be positive, got {period}")));
        }
        if !(limits.0.is_finite() && limits.1.is_finite() && limits.0 <= limits.1) || !bound.is_finite() || !mu.is_finite() {
            return Err(AnalysisError::InvalidProblem(format!(
                "need finite limits g(-inf) <= g(+inf), bound and mu; got {limits:?}, {bound}, {mu}"
            )));
        }
        check_vars(&g, &["x"], "g")?;
        check_vars(&e, &["t"], "e")?;
        let mean = sim::quadrature(|t| eval_t(&e, t), period)? / period;
        if mean.abs() > MEAN_TOL {
            return Err(AnalysisError::InvalidProblem(format!(
                "forcing e(t) must have zero mean, its mean is {mean:.3e}; move the mean into mu"
            )));
        }
        let mut problem = PendulumProblem {
            lambda,
            g,
            bound,
            limits,
            mu,
            e,
            period,
            bounds_hold: true,
            warnings: Vec::new(),
            tol: Tolerances::default(),
        };
        problem.check_bounds()?;
        Ok(problem)
    }

    pub fn parse(lambda: f64, g: &str, bound: f64, limits: (f64, f64), mu: f64, e: &str, period: f64) -> Result<Self> {
        let g = Expression::parse(g, &["x"])?;
        let e = Expression::parse(e, &["t"])?;
        Self::new(lambda, g, bound, limits, mu, e, period)
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        PendulumProblem { mu, ..self.clone() }
    }

    fn check_bounds(&mut self) -> Result<()> {
        let (lo, hi) = self.limits;
        let mut bound_ok = true;
        let mut between_ok = true;
        for x in line_samples(BOUND_SAMPLES) {
            let gx = self.g_at(x)?;
            if bound_ok && gx.abs() > self.bound {
                bound_ok = false;
                self.warnings.push(format!("|g({x})| = {} exceeds the bound {}", gx.abs(), self.bound));
            }
            if between_ok && !(lo < gx && gx < hi) {
                between_ok = false;
                self.warnings.push(format!("g({x}) = {gx} is not strictly between {lo} and {hi}"));
            }
        }
        self.bounds_hold = bound_ok;
        if !between_ok {
            self.warnings.push("limits are not strict bounds of g".into());
        }
        Ok(())
    }

    fn g_at(&self, x: f64) -> Result<f64, ExprError> {
        if self.g.variables().is_empty() {
            self.g.eval(&[])
        } else {
            self.g.eval(&[x])
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn omega(&self) -> f64 {
        TAU / self.period
    }

    pub fn limits(&self) -> (f64, f64) {
        self.limits
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn g(&self) -> &Expression {
        &self.g
    }

    pub fn e(&self) -> &Expression {
        &self.e
    }

    /// `|g| ≤ M` held at every sample.
    pub fn bounds_hold(&self) -> bool {
        self.bounds_hold
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// Field of `(x, v, ∫g(x), ∫x)`.
    fn field(&self) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<(), ExprError> + '_ {
        move |t, s, ds| {
            let gx = self.g_at(s[0])?;
            ds[0] = s[1];
            ds[1] = -self.lambda * s[1] - gx + self.mu + eval_t(&self.e, t)?;
            ds[2] = gx;
            ds[3] = s[0];
            Ok(())
        }
    }

    fn shoot(&self, y: [f64; 2], tol: f64) -> Result<[f64; 4]> {
        let opts = Tolerances { ode: tol, ..self.tol }.ode_options();
        let end = sim::propagate(self.field(), 0.0, &[y[0], y[1], 0.0, 0.0], self.period, &opts)?;
        if end.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::Unbounded(1));
        }
        Ok([end[0], end[1], end[2], end[3]])
    }

    /// One period of the first-order form from `(x0, v0)`.
    pub fn poincare(&self, y: [f64; 2]) -> Result<[f64; 2]> {
        let s = self.shoot(y, self.tol.ode)?;
        Ok([s[0], s[1]])
    }
}

#[derive(Debug, Clone)]
pub struct SlopeCheck {
    /// Largest sampled `|g'|`; a lower bound of the supremum.
    pub sup_estimate: f64,
    pub argmax: f64,
    /// `λ²/4 + ω²`.
    pub bound: f64,
    /// Sampled, not proven, when true.
    pub holds: bool,
}

/// Estimates `sup|g'|` on a logarithmic grid refined at sign changes of
/// `g''`, and compares it with `λ²/4 + ω²`.
pub fn check_slope_bound(problem: &PendulumProblem) -> Result<SlopeCheck> {
    slope_check(&problem.g, problem.lambda, problem.period)
}

/// [`check_slope_bound`] for a bare `g(x)`, damping and period.
pub fn slope_check(g: &Expression, lambda: f64, period: f64) -> Result<SlopeCheck> {
    let bound = lambda * lambda / 4.0 + (TAU / period).powi(2);
    let (g1, g2) = if g.variables().is_empty() {
        (Expression::constant(0.0, &[]), Expression::constant(0.0, &[]))
    } else {
        let g1 = g.differentiate("x")?;
        let g2 = g1.differentiate("x")?;
        (g1, g2)
    };
    let at = |e: &Expression, x: f64| if e.variables().is_empty() { e.eval(&[]) } else { e.eval(&[x]) };
    let xs = line_samples(SLOPE_SAMPLES);
    let mut best = (0.0f64, 0.0f64);
    let mut consider = |x: f64, v: f64| {
        if v.abs() > best.0 || (v.is_nan() && !best.0.is_nan()) {
            best = (v.abs(), x);
        }
    };
    let mut prev: Option<(f64, f64)> = None;
    for &x in &xs {
        consider(x, at(&g1, x)?);
        let s = at(&g2, x)?;
        if let Some((xp, sp)) = prev {
            if sp.is_finite() && s.is_finite() && sp * s < 0.0 {
                let (mut a, mut b, mut fa) = (xp, x, sp);
                for _ in 0..100 {
                    let m = 0.5 * (a + b);
                    let fm = at(&g2, m)?;
                    if fm == 0.0 || (b - a) <= 1e-15 * (1.0 + m.abs()) {
                        a = m;
                        b = m;
                        break;
                    }
                    if (fm < 0.0) == (fa < 0.0) {
                        a = m;
                        fa = fm;
                    } else {
                        b = m;
                    }
                }
                let c = 0.5 * (a + b);
                consider(c, at(&g1, c)?);
            }
        }
        prev = Some((x, s));
    }
    let (sup_estimate, argmax) = best;
    Ok(SlopeCheck {
        sup_estimate,
        argmax,
        bound,
        holds: sup_estimate < bound - 1e-9,
    })
}

#[derive(Debug, Clone)]
pub struct PendulumVerdict {
    pub exists: bool,
    /// `(g(-∞), g(+∞))`.
    pub interval: (f64, f64),
    pub mu: f64,
    pub slope: SlopeCheck,
    /// Direction of the unbounded drift when no periodic solution exists.
    pub drift: Option<Orientation>,
}

impl PendulumVerdict {
    pub fn conclusion(&self) -> &'static str {
        if self.exists {
            "periodic solutions exist and lie on a continuous curve"
        } else {
            "no periodic solution; all solutions are unbounded as t -> +inf and t -> -inf"
        }
    }
}

fn drift(problem: &PendulumProblem) -> Option<Orientation> {
    let (lo, hi) = problem.limits;
    if problem.mu >= hi {
        Some(Orientation::Increasing)
    } else if problem.mu <= lo {
        Some(Orientation::Decreasing)
    } else {
        None
    }
}

pub fn pendulum_verdict(problem: &PendulumProblem) -> Result<PendulumVerdict> {
    let slope = check_slope_bound(problem)?;
    if !slope.holds {
        return Err(AnalysisError::Hypothesis(format!(
            "slope condition fails: sup|g'| >= {:.6} at x = {:.6}, bound lambda^2/4 + omega^2 = {:.6}",
            slope.sup_estimate, slope.argmax, slope.bound
        )));
    }
    if !problem.bounds_hold {
        return Err(AnalysisError::Hypothesis(format!(
            "g is not bounded by {}: {}",
            problem.bound,
            problem.warnings.first().map(String::as_str).unwrap_or("")
        )));
    }
    let drift = drift(problem);
    Ok(PendulumVerdict {
        exists: drift.is_none(),
        interval: problem.limits,
        mu: problem.mu,
        slope,
        drift,
    })
}

#[derive(Debug, Clone)]
pub struct PendulumRun {
    /// `(x(kp), x'(kp))` for `k = 0..=m`.
    pub states: Vec<[f64; 2]>,
    /// `V = x' + λx` at each state.
    pub v: Vec<f64>,
    /// `V(x((k+1)p)) - V(x(kp))`.
    pub gains: Vec<f64>,
    /// `∫ g(x)` over each period.
    pub g_integrals: Vec<f64>,
    /// Set when the interval condition fails; `V` is then checked to move
    /// strictly in this direction.
    pub drift: Option<Orientation>,
    pub monotone: bool,
}

impl PendulumRun {
    pub fn min_gain(&self) -> f64 {
        self.gains.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Iterates the period map `m` times from `y0`. `m = 0` gives an empty run.
pub fn poincare_2d(problem: &PendulumProblem, y0: [f64; 2], m: usize) -> Result<PendulumRun> {
    let drift = drift(problem);
    let lam = problem.lambda;
    let vf = |y: [f64; 2]| y[1] + lam * y[0];
    let mut run = PendulumRun {
        states: Vec::new(),
        v: Vec::new(),
        gains: Vec::new(),
        g_integrals: Vec::new(),
        drift,
        monotone: true,
    };
    if m == 0 {
        return Ok(run);
    }
    let mut y = y0;
    run.states.push(y);
    run.v.push(vf(y));
    for k in 1..=m {
        let s = problem.shoot(y, problem.tol.ode).map_err(|e| match e {
            AnalysisError::Unbounded(_) => AnalysisError::Unbounded(k),
            e => e,
        })?;
        let next = [s[0], s[1]];
        let (v0, v1) = (vf(y), vf(next));
        let gain = v1 - v0;
        if let Some(o) = drift {
            let signed = o.sign() * gain;
            if signed < -STRICT_TOL * (1.0 + v0.abs()) {
                return Err(AnalysisError::Inconsistency(format!(
                    "V = x' + lambda x moved against the drift at period {k}: {v0} -> {v1}"
                )));
            }
            if signed <= 0.0 {
                run.monotone = false;
            }
        }
        run.states.push(next);
        run.v.push(v1);
        run.gains.push(gain);
        run.g_integrals.push(s[2]);
        y = next;
    }
    Ok(run)
}

#[derive(Debug, Clone)]
pub struct PendulumOrbit {
    pub x0: f64,
    pub v0: f64,
    /// `|P(y) - y|` on re-integration.
    pub closure: f64,
    /// `|μp - ∫g(x)|`.
    pub identity_defect: f64,
    /// `(1/p) ∫ x`.
    pub average: f64,
    pub iterations: usize,
    /// `(t, x(t))` on `[0, p]`.
    pub samples: Vec<(f64, f64)>,
}

const NEWTON_MAX: usize = 50;
const NEWTON_TOL: f64 = 1e-11;
const FD_STEP: f64 = 1e-6;

/// Fixed point of the period map by damped Newton with a finite-difference
/// Jacobian, started at `guess`.
pub fn find_periodic_2d(problem: &PendulumProblem, guess: [f64; 2]) -> Result<PendulumOrbit> {
    let verdict = pendulum_verdict(problem)?;
    if !verdict.exists {
        return Err(AnalysisError::Precondition(format!(
            "mu = {} is outside ({}, {}), no periodic solution exists",
            problem.mu, problem.limits.0, problem.limits.1
        )));
    }
    let tol = problem.tol.ode.min(1e-12);
    let residual = |y: [f64; 2]| -> Result<[f64; 2]> {
        let s = problem.shoot(y, tol)?;
        Ok([s[0] - y[0], s[1] - y[1]])
    };
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);
    let mut y = guess;
    let mut r = residual(y)?;
    let mut iterations = 0;
    while norm(r) > NEWTON_TOL {
        if iterations == NEWTON_MAX {
            return Err(AnalysisError::NoConvergence(format!(
                "Newton on the period map stalled at residual {:.3e} after {NEWTON_MAX} iterations",
                norm(r)
            )));
        }
        iterations += 1;
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut yp = y;
            let h = FD_STEP * (1.0 + y[j].abs());
            yp[j] += h;
            let rp = residual(yp)?;
            jac[0][j] = (rp[0] - r[0]) / h;
            jac[1][j] = (rp[1] - r[1]) / h;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(AnalysisError::NoConvergence("singular Jacobian of the period map".into()));
        }
        let dy = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut step = 1.0;
        loop {
            let trial = [y[0] + step * dy[0], y[1] + step * dy[1]];
            let rt = residual(trial);
            if let Ok(rt) = rt {
                if norm(rt) < norm(r) || step < 1e-4 {
                    y = trial;
                    r = rt;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-4 {
                return Err(AnalysisError::NoConvergence(format!(
                    "damped Newton failed to decrease the residual {:.3e}",
                    norm(r)
                )));
            }
        }
    }
    let opts = Tolerances { ode: tol, ..problem.tol }.ode_options();
    let traj = sim::integrate(problem.field(), 0.0, &[y[0], y[1], 0.0, 0.0], problem.period, &opts)?;
    let end = traj.final_state();
    let closure = (end[0] - y[0]).hypot(end[1] - y[1]);
    let p = problem.period;
    Ok(PendulumOrbit {
        x0: y[0],
        v0: y[1],
        closure,
        identity_defect: (problem.mu * p - end[2]).abs(),
        average: end[3] / p,
        iterations,
        samples: traj.sample(256).into_iter().map(|(t, s)| (t, s[0])).collect(),
    })
}
