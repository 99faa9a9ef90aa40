//! Scalar first-order equations `x' + a(t) x + g(x) = f(t)` with
//! `∫₀ᵖ a = 0`: integrating factor, the Landesman-Lazer interval, verdicts,
//! the Poincaré map and its fixed point.

use std::fmt;

use crate::expr::{ExprError, Expression};
use crate::ode::{OdeOptions, Trajectory};
use crate::sim::{self, eval_t};
use crate::{AnalysisError, Result, Tolerances};

/// Largest `|∫₀ᵖ a|` accepted as resonant.
pub const RESONANCE_TOL: f64 = 1e-9;
const FACTOR_TOL: f64 = 1e-13;
const SAMPLE_COUNT: usize = 1000;

/// `μ(t) = exp(∫₀ᵗ a)` on one period.
#[derive(Debug, Clone)]
pub struct IntegratingFactor {
    period: f64,
    // state: (∫a, ∫μ)
    traj: Trajectory,
    /// `∫₀ᵖ a`.
    pub a_integral: f64,
    /// `∫₀ᵖ μ`.
    pub mu_integral: f64,
}

impl IntegratingFactor {
    pub fn new(a: &Expression, period: f64) -> Result<Self> {
        sim::check_vars(a, &["t"], "a(t)")?;
        let traj = sim::integrate(
            |t, s, ds| {
                ds[0] = eval_t(a, t)?;
                ds[1] = s[0].exp();
                Ok(())
            },
            0.0,
            &[0.0, 0.0],
            period,
            &OdeOptions::with_tol(FACTOR_TOL),
        )?;
        let end = traj.final_state();
        let (a_integral, mu_integral) = (end[0], end[1]);
        if a_integral.abs() > RESONANCE_TOL {
            let stability = if a_integral > 0.0 { "attracts all solutions" } else { "repels" };
            return Err(AnalysisError::Hypothesis(format!(
                "not resonant: ∫a = {a_integral:.6e} ≠ 0, so μ(p) = {:.6e} ≠ 1; for the linear equation \
                 the unique periodic solution {stability}",
                a_integral.exp()
            )));
        }
        Ok(IntegratingFactor {
            period,
            traj,
            a_integral,
            mu_integral,
        })
    }

    /// `μ(t)`, extended periodically.
    pub fn mu(&self, t: f64) -> f64 {
        let mut buf = [0.0; 2];
        self.traj.eval_into(t.rem_euclid(self.period), &mut buf);
        buf[0].exp()
    }

    pub fn period(&self) -> f64 {
        self.period
    }
}

#[derive(Debug, Clone)]
pub struct ScalarProblem {
    a: Expression,
    f: Expression,
    g: Expression,
    g_prime: Expression,
    limits: (f64, f64),
    period: f64,
    increasing: bool,
    factor: IntegratingFactor,
    bounds_hold: bool,
    warnings: Vec<String>,
    tol: Tolerances,
}

/// Sample points for global checks on the real line: 0 and `±10^u`,
/// `u` evenly spaced in `[-3, 6]`.
pub(crate) fn line_samples(count: usize) -> Vec<f64> {
    let half = count / 2;
    let mut xs = vec![0.0];
    for k in 0..half {
        let u = -3.0 + 9.0 * k as f64 / (half - 1).max(1) as f64;
        let x = 10f64.powf(u);
        xs.push(x);
        xs.push(-x);
    }
    xs.sort_by(f64::total_cmp);
    xs
}

impl ScalarProblem {
    /// `a`, `f` are expressions in `t`, `g` in `x`; `limits` are the declared
    /// `(g(-∞), g(+∞))`; `increasing` declares `g` strictly increasing.
    pub fn new(
        a: Expression,
        f: Expression,
        g: Expression,
        limits: (f64, f64),
        period: f64,
        increasing: bool,
    ) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(AnalysisError::InvalidProblem(format!("period must be positive, got {period}")));
        }
        if !(limits.0.is_finite() && limits.1.is_finite() && limits.0 <= limits.1) {
            return Err(AnalysisError::InvalidProblem(format!(
                "limits must satisfy g(-inf) <= g(+inf), got {limits:?}"
            )));
        }
        sim::check_vars(&f, &["t"], "f(t)")?;
        sim::check_vars(&g, &["x"], "g(x)")?;
        let g_prime = g.differentiate("x")?;
        let factor = IntegratingFactor::new(&a, period)?;
        let mut problem = ScalarProblem {
            a,
            f,
            g,
            g_prime,
            limits,
            period,
            increasing,
            factor,
            bounds_hold: true,
            warnings: Vec::new(),
            tol: Tolerances::default(),
        };
        problem.check_samples()?;
        Ok(problem)
    }

    pub fn parse(a: &str, f: &str, g: &str, limits: (f64, f64), period: f64, increasing: bool) -> Result<Self> {
        Self::new(
            Expression::parse(a, &["t"])?,
            Expression::parse(f, &["t"])?,
            Expression::parse(g, &["x"])?,
            limits,
            period,
            increasing,
        )
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    fn check_samples(&mut self) -> Result<()> {
        let (lo, hi) = self.limits;
        let xs = line_samples(SAMPLE_COUNT);
        let mut prev: Option<f64> = None;
        for &x in &xs {
            let gx = self.g_at(x)?;
            if !(lo < gx && gx < hi) && self.bounds_hold {
                self.bounds_hold = false;
                self.warnings.push(format!(
                    "g({x}) = {gx} is not strictly between the declared limits {lo} and {hi}"
                ));
            }
            if self.increasing {
                let d = self.g_prime.eval(&[x])?;
                let rising = prev.is_none_or(|p| gx > p);
                if d < 0.0 || !rising {
                    return Err(AnalysisError::InvalidProblem(format!(
                        "g is declared strictly increasing but g'({x}) = {d}"
                    )));
                }
            }
            prev = Some(gx);
        }
        for (x, limit) in [(-1e6, lo), (1e6, hi)] {
            let gx = self.g_at(x)?;
            if (gx - limit).abs() > 0.01 {
                self.warnings
                    .push(format!("g({x:e}) = {gx} differs from the declared limit {limit} by more than 0.01"));
            }
        }
        Ok(())
    }

    fn g_at(&self, x: f64) -> Result<f64, ExprError> {
        match self.g.variables().len() {
            0 => self.g.eval(&[]),
            _ => self.g.eval(&[x]),
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn limits(&self) -> (f64, f64) {
        self.limits
    }

    pub fn declared_increasing(&self) -> bool {
        self.increasing
    }

    /// Whether sampled `g` lies strictly between its declared limits.
    pub fn bounds_hold(&self) -> bool {
        self.bounds_hold
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn integrating_factor(&self) -> &IntegratingFactor {
        &self.factor
    }

    pub fn a(&self) -> &Expression {
        &self.a
    }

    pub fn f(&self) -> &Expression {
        &self.f
    }

    pub fn g(&self) -> &Expression {
        &self.g
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    fn require_bounds(&self) -> Result<()> {
        if self.bounds_hold {
            Ok(())
        } else {
            Err(AnalysisError::Hypothesis(format!(
                "g does not lie strictly between its limits: {}",
                self.warnings.first().map(String::as_str).unwrap_or("")
            )))
        }
    }

    /// `∫₀ᵖ μ h` for an expression `h(t)`.
    pub fn weighted_integral(&self, h: &Expression) -> Result<f64> {
        let end = sim::propagate(
            |t, s, ds| {
                ds[0] = eval_t(&self.a, t)?;
                ds[1] = s[0].exp() * eval_t(h, t)?;
                Ok(())
            },
            0.0,
            &[0.0, 0.0],
            self.period,
            &OdeOptions::with_tol(FACTOR_TOL),
        )?;
        Ok(end[1])
    }

    /// Closed-form solution `x(t) = μ(t)⁻¹ (x0 + ∫₀ᵗ μ (f - g))` for constant
    /// `g`.
    pub fn closed_form_linear(&self, x0: f64, t: f64) -> Result<f64> {
        let c = self.g.as_constant().ok_or_else(|| {
            AnalysisError::Precondition("closed form needs a constant nonlinearity".into())
        })?;
        let end = sim::propagate(
            |s, y, dy| {
                dy[0] = eval_t(&self.a, s)?;
                dy[1] = y[0].exp() * (eval_t(&self.f, s)? - c);
                Ok(())
            },
            0.0,
            &[0.0, 0.0],
            t,
            &OdeOptions::with_tol(FACTOR_TOL),
        )?;
        Ok((-end[0]).exp() * (x0 + end[1]))
    }

    // One period from x0 in the variables L = ∫a, d = μx - x0, plus ∫x and
    // ∫μ g(x). Integrating d = μx - x0 keeps the displacement accurate for
    // large |x0|.
    fn shoot(&self, x0: f64, record: bool) -> Result<Shot> {
        let opts = self.tol.ode_options();
        let field = |t: f64, s: &[f64], ds: &mut [f64]| -> Result<(), ExprError> {
            let a = eval_t(&self.a, t)?;
            let mu = s[0].exp();
            let x = (x0 + s[1]) / mu;
            let gx = self.g_at(x)?;
            ds[0] = a;
            ds[1] = mu * (eval_t(&self.f, t)? - gx);
            ds[2] = x;
            ds[3] = mu * gx;
            Ok(())
        };
        let s0 = [0.0; 4];
        let (end, traj) = if record {
            let traj = sim::integrate(field, 0.0, &s0, self.period, &opts)?;
            (traj.final_state().to_vec(), Some(traj))
        } else {
            (sim::propagate(field, 0.0, &s0, self.period, &opts)?, None)
        };
        let inv = (-end[0]).exp();
        let displacement = x0 * (inv - 1.0) + end[1] * inv;
        Ok(Shot {
            displacement,
            x_integral: end[2],
            g_weighted: end[3],
            traj,
        })
    }

    /// `x(p; x0) - x0`.
    pub fn displacement(&self, x0: f64) -> Result<f64> {
        Ok(self.shoot(x0, false)?.displacement)
    }
}

struct Shot {
    displacement: f64,
    x_integral: f64,
    g_weighted: f64,
    traj: Option<Trajectory>,
}

/// `μ(t)` and `∫₀ᵖ μ` for a resonant coefficient `a`.
pub fn integrating_factor(a: &Expression, period: f64) -> Result<IntegratingFactor> {
    IntegratingFactor::new(a, period)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandesmanLazer {
    /// `g(-∞) ∫μ`.
    pub lower: f64,
    /// `g(+∞) ∫μ`.
    pub upper: f64,
    /// `∫μ f`.
    pub value: f64,
    pub satisfied: bool,
    pub mu_integral: f64,
    /// Width of the band around each endpoint treated as the endpoint.
    pub strictness: f64,
}

pub fn landesman_lazer_interval(problem: &ScalarProblem) -> Result<LandesmanLazer> {
    let mu_integral = problem.factor.mu_integral;
    let lower = problem.limits.0 * mu_integral;
    let upper = problem.limits.1 * mu_integral;
    let value = problem.weighted_integral(&problem.f)?;
    let strictness = 1e-10 * lower.abs().max(upper.abs()).max(value.abs()).max(1.0);
    Ok(LandesmanLazer {
        lower,
        upper,
        value,
        satisfied: lower + strictness < value && value < upper - strictness,
        mu_integral,
        strictness,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarVerdictKind {
    UniqueAttractingPeriodic,
    /// A periodic solution exists; with `g` not known to be increasing
    /// nothing is claimed about the other solutions.
    PeriodicExistsOnly,
    AllUnbounded,
}

impl fmt::Display for ScalarVerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalarVerdictKind::UniqueAttractingPeriodic => "UniqueAttractingPeriodic",
            ScalarVerdictKind::PeriodicExistsOnly => "PeriodicExistsOnly",
            ScalarVerdictKind::AllUnbounded => "AllUnbounded",
        })
    }
}

/// Direction in which the Poincaré iterates move when the interval
/// condition fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `∫μf ≥ g(+∞)∫μ`: `x(mp)` increases.
    Increasing,
    /// `∫μf ≤ g(-∞)∫μ`: `x(mp)` decreases.
    Decreasing,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Increasing => 1.0,
            Orientation::Decreasing => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarVerdict {
    pub kind: ScalarVerdictKind,
    pub interval: LandesmanLazer,
    /// Per-period margin `|∫μf - g(±∞)∫μ|` when unbounded.
    pub alpha: Option<f64>,
    pub orientation: Option<Orientation>,
    /// The value sits on an endpoint of the interval (margin 0).
    pub boundary: bool,
}

pub fn scalar_verdict(problem: &ScalarProblem) -> Result<ScalarVerdict> {
    problem.require_bounds()?;
    let interval = landesman_lazer_interval(problem)?;
    if interval.satisfied {
        let kind = if problem.increasing {
            ScalarVerdictKind::UniqueAttractingPeriodic
        } else {
            ScalarVerdictKind::PeriodicExistsOnly
        };
        return Ok(ScalarVerdict {
            kind,
            interval,
            alpha: None,
            orientation: None,
            boundary: false,
        });
    }
    let (mut alpha, orientation) = if interval.value >= interval.upper - interval.strictness {
        (interval.value - interval.upper, Orientation::Increasing)
    } else {
        (interval.lower - interval.value, Orientation::Decreasing)
    };
    let boundary = alpha.abs() <= interval.strictness;
    if boundary {
        alpha = 0.0;
    }
    Ok(ScalarVerdict {
        kind: ScalarVerdictKind::AllUnbounded,
        interval,
        alpha: Some(alpha),
        orientation: Some(orientation),
        boundary,
    })
}

/// `x(p; x0)`.
pub fn poincare_map(problem: &ScalarProblem, x0: f64) -> Result<f64> {
    Ok(x0 + problem.displacement(x0)?)
}

#[derive(Debug, Clone)]
pub struct ScalarOrbit {
    pub x0: f64,
    /// `|x(p) - x(0)|` on re-integration.
    pub closure: f64,
    /// Half-width of the trapping interval `(-A, A)`.
    pub trap: f64,
    /// `(1/p) ∫₀ᵖ x`.
    pub average: f64,
    /// `∫₀ᵖ g(x(t)) μ(t) dt`.
    pub g_weighted: f64,
    /// Samples `(t, x(t))` on `[0, p]`.
    pub samples: Vec<(f64, f64)>,
}

pub const TRAP_LIMIT: f64 = 1e6;
pub const ORBIT_SAMPLES: usize = 256;

/// Fixed point of the Poincaré map. Fails with a precondition error when the
/// verdict is `AllUnbounded`.
pub fn find_periodic(problem: &ScalarProblem) -> Result<ScalarOrbit> {
    if problem.bounds_hold {
        let v = scalar_verdict(problem)?;
        if v.kind == ScalarVerdictKind::AllUnbounded {
            return Err(AnalysisError::Precondition(format!(
                "no periodic solution: the interval condition fails ({} not in ({}, {}))",
                v.interval.value, v.interval.lower, v.interval.upper
            )));
        }
    }
    search_fixed_point(problem)
}

/// Trapping interval search and bisection without consulting the verdict.
/// Fails with `NoConvergence` when no `A ≤ 10⁶` has `x(p, A) < A` and
/// `x(p, -A) > -A`.
pub fn search_fixed_point(problem: &ScalarProblem) -> Result<ScalarOrbit> {
    let mut a = 1.0;
    let (lo, hi) = loop {
        let d_hi = problem.displacement(a)?;
        let d_lo = problem.displacement(-a)?;
        if d_hi < 0.0 && d_lo > 0.0 {
            break (-a, a);
        }
        if d_hi == 0.0 {
            break (a, a);
        }
        if d_lo == 0.0 {
            break (-a, -a);
        }
        a *= 2.0;
        if a > TRAP_LIMIT {
            return Err(AnalysisError::NoConvergence(format!(
                "no trapping interval (-A, A) with A up to {TRAP_LIMIT:e}: x(p, A) - A = {d_hi:.6e}, \
                 x(p, -A) + A = {d_lo:.6e}"
            )));
        }
    };
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        let d = problem.displacement(mid)?;
        if d == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if d > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if mid == lo && mid == hi {
            break;
        }
    }
    let x0 = 0.5 * (lo + hi);
    orbit_from(problem, x0, a)
}

fn orbit_from(problem: &ScalarProblem, x0: f64, trap: f64) -> Result<ScalarOrbit> {
    let shot = problem.shoot(x0, true)?;
    let traj = shot.traj.expect("recorded");
    let mut buf = [0.0; 4];
    let samples = sim::grid(problem.period, ORBIT_SAMPLES)
        .map(|t| {
            traj.eval_into(t, &mut buf);
            (t, (x0 + buf[1]) * (-buf[0]).exp())
        })
        .collect();
    Ok(ScalarOrbit {
        x0,
        closure: shot.displacement.abs(),
        trap,
        average: shot.x_integral / problem.period,
        g_weighted: shot.g_weighted,
        samples,
    })
}

/// Iterates `x(kp)`, `k = 1..=m`, of the Poincaré map.
pub fn poincare_iterates(problem: &ScalarProblem, x0: f64, m: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(m);
    let mut x = x0;
    for k in 1..=m {
        x += problem.displacement(x)?;
        if !x.is_finite() {
            return Err(AnalysisError::Unbounded(k));
        }
        out.push(x);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct UnboundedWitness {
    pub x0: f64,
    /// `x(kp)` for `k = 1..=m`.
    pub iterates: Vec<f64>,
    pub alpha: f64,
    pub orientation: Orientation,
    /// `±(x(kp) - x0) > kα` for every `k` when `α > 0`; strict monotonicity
    /// when `α = 0`.
    pub holds: bool,
    /// First `k` where the check fails.
    pub first_violation: Option<usize>,
}

pub fn unbounded_witness(problem: &ScalarProblem, x0: f64, m: usize) -> Result<UnboundedWitness> {
    let v = scalar_verdict(problem)?;
    let (Some(alpha), Some(orientation)) = (v.alpha, v.orientation) else {
        return Err(AnalysisError::Precondition(format!(
            "witness needs an AllUnbounded verdict, got {}",
            v.kind
        )));
    };
    let iterates = poincare_iterates(problem, x0, m)?;
    let s = orientation.sign();
    let mut first_violation = None;
    let mut prev = x0;
    for (i, &x) in iterates.iter().enumerate() {
        let k = (i + 1) as f64;
        let ok = if alpha > 0.0 {
            let slack = 1e-8 * (1.0 + x.abs());
            s * (x - x0) > k * alpha - slack
        } else {
            s * (x - prev) > 0.0
        };
        if !ok && first_violation.is_none() {
            first_violation = Some(i + 1);
        }
        prev = x;
    }
    Ok(UnboundedWitness {
        x0,
        iterates,
        alpha,
        orientation,
        holds: first_violation.is_none(),
        first_violation,
    })
}
