//! Curves of periodic orbits parameterized by their average.
//!
//! For each average `ξ` the orbit `x = ξ + X(t)`, `∫X = 0`, and the mean
//! forcing `μ` are found together by trigonometric collocation:
//!
//! * first order: `x' + a(t) x + g(x) = μ + e(t)`
//! * second order: `x'' + λx' + g(x) = μ + e(t)`

use std::f64::consts::{PI, TAU};

use crate::expr::Expression;
use crate::pendulum::{slope_check, SlopeCheck};
use crate::sim::{self, check_vars, eval_t};
use crate::smatrix::{self, DenseMatrix};
use crate::{AnalysisError, Result, Tolerances};

pub const DEFAULT_NODES: usize = 64;
pub const MAX_NODES: usize = 1024;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const NEWTON_MAX: usize = 50;
/// Largest allowed sup-norm gap between adjacent orbits of a traced curve.
pub const CONTINUITY_GAP: f64 = 0.5;
const MEAN_TOL: f64 = 1e-9;
const TAIL_TOL: f64 = 1e-12;
const BRIDGE_DEPTH: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveOrder {
    First,
    Second,
}

#[derive(Debug, Clone)]
pub struct CurveProblem {
    order: CurveOrder,
    lambda: f64,
    a: Option<Expression>,
    g: Expression,
    g1: Expression,
    e: Expression,
    period: f64,
    slope: Option<SlopeCheck>,
    tol: Tolerances,
}

impl CurveProblem {
    /// `x' + a(t) x + g(x) = μ + e(t)`; `a = None` means `a ≡ 0`.
    pub fn first_order(a: Option<Expression>, g: Expression, e: Expression, period: f64) -> Result<Self> {
        if let Some(a) = &a {
            check_vars(a, &["t"], "a")?;
        }
        Self::build(CurveOrder::First, 0.0, a, g, e, period)
    }

    /// `x'' + λx' + g(x) = μ + e(t)`. Fails with a hypothesis error when the
    /// sampled `sup|g'|` reaches `λ²/4 + ω²`.
    pub fn second_order(lambda: f64, g: Expression, e: Expression, period: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(AnalysisError::InvalidProblem(format!("damping must be positive, got {lambda}")));
        }
        let mut p = Self::build(CurveOrder::Second, lambda, None, g, e, period)?;
        let slope = slope_check(&p.g, lambda, period)?;
        if !slope.holds {
            return Err(AnalysisError::Hypothesis(format!(
                "slope condition fails: sup|g'| >= {:.6} at x = {:.6}, bound {:.6}",
                slope.sup_estimate, slope.argmax, slope.bound
            )));
        }
        p.slope = Some(slope);
        Ok(p)
    }

    pub fn parse_first_order(a: Option<&str>, g: &str, e: &str, period: f64) -> Result<Self> {
        let a = a.map(|s| Expression::parse(s, &["t"])).transpose()?;
        Self::first_order(a, Expression::parse(g, &["x"])?, Expression::parse(e, &["t"])?, period)
    }

    pub fn parse_second_order(lambda: f64, g: &str, e: &str, period: f64) -> Result<Self> {
        Self::second_order(lambda, Expression::parse(g, &["x"])?, Expression::parse(e, &["t"])?, period)
    }

    fn build(order: CurveOrder, lambda: f64, a: Option<Expression>, g: Expression, e: Expression, period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(AnalysisError::InvalidProblem(format!("period must be positive, got {period}")));
        }
        check_vars(&g, &["x"], "g")?;
        check_vars(&e, &["t"], "e")?;
        let mean = sim::quadrature(|t| eval_t(&e, t), period)? / period;
        if mean.abs() > MEAN_TOL {
            return Err(AnalysisError::InvalidProblem(format!(
                "forcing e(t) must have zero mean, its mean is {mean:.3e}"
            )));
        }
        let g1 = if g.variables().is_empty() {
            Expression::constant(0.0, &[])
        } else {
            g.differentiate("x")?
        };
        Ok(CurveProblem {
            order,
            lambda,
            a,
            g,
            g1,
            e,
            period,
            slope: None,
            tol: Tolerances::default(),
        })
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn order(&self) -> CurveOrder {
        self.order
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn slope(&self) -> Option<&SlopeCheck> {
        self.slope.as_ref()
    }

    fn a_at(&self, t: f64) -> Result<f64> {
        Ok(match &self.a {
            Some(a) => eval_t(a, t)?,
            None => 0.0,
        })
    }

    fn has_zero_a(&self) -> bool {
        self.a.as_ref().is_none_or(|a| a.as_constant() == Some(0.0))
    }
}

/// Periodic grid of `n` nodes with spectral differentiation matrices.
struct Grid {
    n: usize,
    d1: DenseMatrix,
    d2: DenseMatrix,
    a: Vec<f64>,
    e: Vec<f64>,
}

impl Grid {
    fn new(problem: &CurveProblem, n: usize) -> Result<Self> {
        let p = problem.period;
        let h = TAU / n as f64;
        let w = TAU / p;
        let d1 = DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                let k = i as f64 - j as f64;
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                w * 0.5 * sign / (0.5 * k * h).tan()
            }
        });
        let d2 = DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                w * w * (-PI * PI / (3.0 * h * h) - 1.0 / 6.0)
            } else {
                let k = i as f64 - j as f64;
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                -w * w * sign * 0.5 / (0.5 * k * h).sin().powi(2)
            }
        });
        let t: Vec<f64> = (0..n).map(|j| p * j as f64 / n as f64).collect();
        let a = t.iter().map(|&t| problem.a_at(t)).collect::<Result<Vec<_>>>()?;
        let e = t.iter().map(|&t| eval_t(&problem.e, t).map_err(AnalysisError::from)).collect::<Result<Vec<_>>>()?;
        Ok(Grid { n, d1, d2, a, e })
    }

    fn residual(&self, problem: &CurveProblem, xi: f64, x: &[f64], mu: f64) -> Result<Vec<f64>> {
        let n = self.n;
        let dx = self.d1.mul_vec(x);
        let mut r = vec![0.0; n + 1];
        match problem.order {
            CurveOrder::First => {
                for j in 0..n {
                    let g = eval_t(&problem.g, xi + x[j])?;
                    r[j] = dx[j] + self.a[j] * (xi + x[j]) + g - mu - self.e[j];
                }
            }
            CurveOrder::Second => {
                let ddx = self.d2.mul_vec(x);
                for j in 0..n {
                    let g = eval_t(&problem.g, xi + x[j])?;
                    r[j] = ddx[j] + problem.lambda * dx[j] + g - mu - self.e[j];
                }
            }
        }
        r[n] = x.iter().sum::<f64>() / n as f64;
        Ok(r)
    }

    fn jacobian(&self, problem: &CurveProblem, xi: f64, x: &[f64]) -> Result<DenseMatrix> {
        let n = self.n;
        let mut jac = DenseMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] = match problem.order {
                    CurveOrder::First => self.d1[(i, j)],
                    CurveOrder::Second => self.d2[(i, j)] + problem.lambda * self.d1[(i, j)],
                };
            }
            jac[(i, i)] += eval_t(&problem.g1, xi + x[i])? + self.a[i];
            jac[(i, n)] = -1.0;
            jac[(n, i)] = 1.0 / n as f64;
        }
        Ok(jac)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// A periodic orbit `x(t) = ξ + X(t)` with its mean forcing `μ`.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub order: CurveOrder,
    pub xi: f64,
    pub mu: f64,
    pub period: f64,
    /// `X` at the nodes `t_j = j p / N`.
    pub nodes: Vec<f64>,
    /// Cosine coefficients of `X`, harmonics `0..=N/2`.
    pub cos: Vec<f64>,
    /// Sine coefficients of `X`, harmonics `0..=N/2`.
    pub sin: Vec<f64>,
    /// Largest collocation residual.
    pub residual: f64,
    pub iterations: usize,
}

impl Orbit {
    fn new(order: CurveOrder, xi: f64, mu: f64, period: f64, nodes: Vec<f64>, residual: f64, iterations: usize) -> Self {
        let n = nodes.len();
        let half = n / 2;
        let mut cos = vec![0.0; half + 1];
        let mut sin = vec![0.0; half + 1];
        for k in 0..=half {
            let (mut c, mut s) = (0.0, 0.0);
            for (j, x) in nodes.iter().enumerate() {
                let arg = TAU * ((k * j) % n) as f64 / n as f64;
                c += x * arg.cos();
                s += x * arg.sin();
            }
            let scale = if k == 0 || 2 * k == n { 1.0 } else { 2.0 } / n as f64;
            cos[k] = c * scale;
            sin[k] = if 2 * k == n { 0.0 } else { s * scale };
        }
        sin[0] = 0.0;
        Orbit {
            order,
            xi,
            mu,
            period,
            nodes,
            cos,
            sin,
            residual,
            iterations,
        }
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n()).map(|j| self.period * j as f64 / self.n() as f64).collect()
    }

    /// `(1/p) ∫ X`.
    pub fn mean(&self) -> f64 {
        self.cos[0]
    }

    /// `X(t)` from the trigonometric interpolant.
    pub fn oscillation(&self, t: f64) -> f64 {
        let w = TAU / self.period;
        (0..self.cos.len())
            .map(|k| {
                let (s, c) = (k as f64 * w * t).sin_cos();
                self.cos[k] * c + self.sin[k] * s
            })
            .sum()
    }

    /// `X'(t)`.
    pub fn derivative(&self, t: f64) -> f64 {
        let w = TAU / self.period;
        (1..self.cos.len())
            .map(|k| {
                let kw = k as f64 * w;
                let (s, c) = (kw * t).sin_cos();
                kw * (self.sin[k] * c - self.cos[k] * s)
            })
            .sum()
    }

    /// `x(t) = ξ + X(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        self.xi + self.oscillation(t)
    }

    /// `max |X|` at the nodes.
    pub fn sup_oscillation(&self) -> f64 {
        max_abs(&self.nodes)
    }

    /// `(t, x(t))` at `count + 1` equispaced times on `[0, p]`.
    pub fn sample(&self, count: usize) -> Vec<(f64, f64)> {
        sim::grid(self.period, count).map(|t| (t, self.eval(t))).collect()
    }

    /// Sup-norm distance between two orbits, sampled at 512 times.
    pub fn distance(&self, other: &Orbit) -> f64 {
        sim::grid(self.period, 512)
            .map(|t| (self.eval(t) - other.eval(t)).abs())
            .fold(0.0, f64::max)
    }

    /// Largest coefficient magnitude among the top quarter of harmonics.
    pub fn tail(&self) -> f64 {
        let half = self.cos.len() - 1;
        (half * 3 / 4..=half)
            .map(|k| self.cos[k].hypot(self.sin[k]))
            .fold(0.0, f64::max)
    }

    fn resolved(&self) -> bool {
        self.tail() <= TAIL_TOL * (1.0 + self.sup_oscillation())
    }

    /// Node values of the interpolant on a grid of `n` nodes.
    fn resample(&self, n: usize) -> Vec<f64> {
        if n == self.n() {
            return self.nodes.clone();
        }
        (0..n).map(|j| self.oscillation(self.period * j as f64 / n as f64)).collect()
    }
}

/// Damped Newton for the collocation equations on `n` nodes. Without a
/// guess it starts from `X = 0` and `μ = g(ξ) + ξ·mean(a)`.
pub fn collocate(problem: &CurveProblem, xi: f64, n: usize, guess: Option<(&[f64], f64)>) -> Result<Orbit> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(AnalysisError::InvalidProblem(format!("node count must be even and at least 4, got {n}")));
    }
    if !xi.is_finite() {
        return Err(AnalysisError::InvalidProblem(format!("average must be finite, got {xi}")));
    }
    let grid = Grid::new(problem, n)?;
    let (mut x, mut mu) = match guess {
        Some((g, mu)) if g.len() == n => (g.to_vec(), mu),
        Some((g, _)) => {
            return Err(AnalysisError::InvalidProblem(format!("guess has {} nodes, expected {n}", g.len())));
        }
        None => {
            let mean_a = grid.a.iter().sum::<f64>() / n as f64;
            (vec![0.0; n], eval_t(&problem.g, xi)? + xi * mean_a)
        }
    };
    let mut r = grid.residual(problem, xi, &x, mu)?;
    let mut rn = max_abs(&r);
    let mut iterations = 0;
    while !(rn <= RESIDUAL_TOL) {
        if iterations == NEWTON_MAX || !rn.is_finite() {
            return Err(AnalysisError::NoConvergence(format!(
                "collocation at xi = {xi} with {n} nodes: residual {rn:.3e} after {iterations} Newton steps"
            )));
        }
        iterations += 1;
        let jac = grid.jacobian(problem, xi, &x)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dy = smatrix::solve(&jac, &neg)?;
        let mut step = 1.0;
        loop {
            let xt: Vec<f64> = x.iter().zip(&dy).map(|(a, d)| a + step * d).collect();
            let mt = mu + step * dy[n];
            let rt = grid.residual(problem, xi, &xt, mt)?;
            let rtn = max_abs(&rt);
            if rtn < rn {
                x = xt;
                mu = mt;
                r = rt;
                rn = rtn;
                break;
            }
            step *= 0.5;
            if step < 1e-6 {
                return Err(AnalysisError::NoConvergence(format!(
                    "collocation at xi = {xi} with {n} nodes stalled at residual {rn:.3e}"
                )));
            }
        }
    }
    Ok(Orbit::new(problem.order, xi, mu, problem.period, x, rn, iterations))
}

/// Orbit with average `ξ`, doubling the node count from the warm start's
/// (or [`DEFAULT_NODES`]) until the spectrum is resolved.
pub fn solve_orbit_at_xi(problem: &CurveProblem, xi: f64, warm: Option<&Orbit>) -> Result<Orbit> {
    let mut n = warm.map_or(DEFAULT_NODES, Orbit::n);
    let mut guess = warm.map(|w| (w.resample(n), w.mu));
    loop {
        let orbit = collocate(problem, xi, n, guess.as_ref().map(|(g, mu)| (g.as_slice(), *mu)))?;
        if orbit.resolved() {
            return Ok(orbit);
        }
        if 2 * n > MAX_NODES {
            return Err(AnalysisError::NoConvergence(format!(
                "orbit at xi = {xi} unresolved with {n} nodes: spectral tail {:.3e}",
                orbit.tail()
            )));
        }
        n *= 2;
        guess = Some((orbit.resample(n), orbit.mu));
    }
}

#[derive(Debug, Clone)]
pub struct OrbitNorms {
    pub x_l2: f64,
    pub dx_l2: f64,
    pub e_l2: f64,
    /// `‖X‖ ≤ (p/2π)‖X'‖ + 1e-8`.
    pub wirtinger: bool,
    /// `‖X'‖ ≤ ‖e‖ + 1e-8`; only for first-order problems with `a ≡ 0`.
    pub energy: Option<bool>,
}

pub fn orbit_norms(problem: &CurveProblem, orbit: &Orbit) -> Result<OrbitNorms> {
    let n = orbit.n();
    let p = orbit.period;
    let grid = Grid::new(problem, n)?;
    let dx = grid.d1.mul_vec(&orbit.nodes);
    let l2 = |v: &[f64]| (p / n as f64 * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let (x_l2, dx_l2) = (l2(&orbit.nodes), l2(&dx));
    let e_l2 = sim::quadrature(|t| eval_t(&problem.e, t).map(|v| v * v), p)?.sqrt();
    let energy = (problem.order == CurveOrder::First && problem.has_zero_a()).then_some(dx_l2 <= e_l2 + 1e-8);
    Ok(OrbitNorms {
        x_l2,
        dx_l2,
        e_l2,
        wirtinger: x_l2 <= p / TAU * dx_l2 + 1e-8,
        energy,
    })
}

#[derive(Debug, Clone)]
pub struct ShootingCheck {
    /// `|x(p) - x(0)|` (plus `|x'(p) - x'(0)|` for second order).
    pub closure: f64,
    /// Largest gap between the integrated solution and the orbit.
    pub deviation: f64,
}

/// Integrates the equation from the orbit's initial value over one period.
pub fn shooting_check(problem: &CurveProblem, orbit: &Orbit) -> Result<ShootingCheck> {
    let mu = orbit.mu;
    let opts = Tolerances { ode: 1e-12, ..problem.tol }.ode_options();
    let p = problem.period;
    let x0 = orbit.eval(0.0);
    let traj = match problem.order {
        CurveOrder::First => sim::integrate(
            |t, s, ds| {
                let a = match &problem.a {
                    Some(a) => eval_t(a, t)?,
                    None => 0.0,
                };
                ds[0] = -a * s[0] - eval_t(&problem.g, s[0])? + mu + eval_t(&problem.e, t)?;
                Ok(())
            },
            0.0,
            &[x0],
            p,
            &opts,
        )?,
        CurveOrder::Second => sim::integrate(
            |t, s, ds| {
                ds[0] = s[1];
                ds[1] = -problem.lambda * s[1] - eval_t(&problem.g, s[0])? + mu + eval_t(&problem.e, t)?;
                Ok(())
            },
            0.0,
            &[x0, orbit.derivative(0.0)],
            p,
            &opts,
        )?,
    };
    let end = traj.final_state();
    let mut closure = (end[0] - x0).abs();
    if problem.order == CurveOrder::Second {
        closure += (end[1] - orbit.derivative(0.0)).abs();
    }
    let deviation = traj
        .sample(128)
        .into_iter()
        .map(|(t, s)| (s[0] - orbit.eval(t)).abs())
        .fold(0.0, f64::max);
    Ok(ShootingCheck { closure, deviation })
}

#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub xi: f64,
    pub mu: f64,
    pub orbit: Orbit,
    /// Added between grid points to keep adjacent orbits close.
    pub inserted: bool,
}

#[derive(Debug, Clone)]
pub struct SolutionCurve {
    pub points: Vec<CurvePoint>,
    /// Grid averages where no orbit was found, with the reason.
    pub failures: Vec<(f64, String)>,
}

impl SolutionCurve {
    /// Largest sup-norm distance between adjacent orbits.
    pub fn max_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].orbit.distance(&w[1].orbit))
            .fold(0.0, f64::max)
    }

    pub fn grid_points(&self) -> impl Iterator<Item = &CurvePoint> {
        self.points.iter().filter(|p| !p.inserted)
    }
}

/// Marches the sorted grid of averages with warm starts. Where adjacent
/// orbits are [`CONTINUITY_GAP`] or more apart, midpoints are inserted.
pub fn trace_curve(problem: &CurveProblem, grid: &[f64]) -> Result<SolutionCurve> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(AnalysisError::InvalidProblem("grid of averages must be strictly increasing".into()));
    }
    let mut curve = SolutionCurve {
        points: Vec::new(),
        failures: Vec::new(),
    };
    let mut last: Option<Orbit> = None;
    for &xi in grid {
        let solved = match &last {
            Some(w) => solve_orbit_at_xi(problem, xi, Some(w)).or_else(|_| solve_orbit_at_xi(problem, xi, None)),
            None => solve_orbit_at_xi(problem, xi, None),
        };
        let orbit = match solved {
            Ok(o) => o,
            Err(e) => {
                curve.failures.push((xi, e.to_string()));
                last = None;
                continue;
            }
        };
        match &last {
            Some(prev) => bridge(problem, prev, orbit.clone(), false, BRIDGE_DEPTH, &mut curve)?,
            None => curve.points.push(point(orbit.clone(), false)),
        }
        last = Some(orbit);
    }
    Ok(curve)
}

fn point(orbit: Orbit, inserted: bool) -> CurvePoint {
    CurvePoint {
        xi: orbit.xi,
        mu: orbit.mu,
        orbit,
        inserted,
    }
}

fn bridge(problem: &CurveProblem, left: &Orbit, right: Orbit, inserted: bool, depth: usize, curve: &mut SolutionCurve) -> Result<()> {
    if depth == 0 || left.distance(&right) < CONTINUITY_GAP {
        curve.points.push(point(right, inserted));
        return Ok(());
    }
    let xi = 0.5 * (left.xi + right.xi);
    match solve_orbit_at_xi(problem, xi, Some(left)) {
        Ok(mid) => {
            bridge(problem, left, mid.clone(), true, depth - 1, curve)?;
            bridge(problem, &mid, right, inserted, depth - 1, curve)
        }
        Err(e) => {
            curve.failures.push((xi, e.to_string()));
            curve.points.push(point(right, inserted));
            Ok(())
        }
    }
}

/// The curve presented as the average versus the mean forcing.
#[derive(Debug, Clone)]
pub struct AverageTable {
    /// `(μ, ξ)` at the grid points.
    pub rows: Vec<(f64, f64)>,
    /// `μ` strictly increases along the table.
    pub increasing: bool,
}

pub fn average_table(curve: &SolutionCurve) -> AverageTable {
    let rows: Vec<(f64, f64)> = curve.grid_points().map(|p| (p.mu, p.xi)).collect();
    let increasing = rows.windows(2).all(|w| w[0].0 < w[1].0);
    AverageTable { rows, increasing }
}

/// `lo, lo + step, ...` up to `hi` inclusive (within a small rounding margin).
pub fn xi_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(AnalysisError::InvalidProblem(format!("bad grid {lo}:{hi}:{step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| lo + step * k as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{find_periodic, ScalarProblem};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn atan_problem() -> CurveProblem {
        CurveProblem::parse_first_order(Some("sin(t)"), "(2/pi)*atan(x)", "sin(t)", TAU).unwrap()
    }

    #[test]
    fn differentiation_matrices_are_exact_on_trig_polynomials() {
        let p = CurveProblem::parse_first_order(None, "x", "sin(2*pi*t/3)", 3.0).unwrap();
        let grid = Grid::new(&p, 16).unwrap();
        let w = TAU / 3.0;
        let times: Vec<f64> = (0..16).map(|j| 3.0 * j as f64 / 16.0).collect();
        let f: Vec<f64> = times.iter().map(|t| (3.0 * w * t).sin() + (w * t).cos()).collect();
        let df = grid.d1.mul_vec(&f);
        let ddf = grid.d2.mul_vec(&f);
        for (j, t) in times.iter().enumerate() {
            let d = 3.0 * w * (3.0 * w * t).cos() - w * (w * t).sin();
            let dd = -9.0 * w * w * (3.0 * w * t).sin() - w * w * (w * t).cos();
            assert!((df[j] - d).abs() < 1e-12 && (ddf[j] - dd).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_closed_form() {
        let p = CurveProblem::parse_first_order(None, "x", "sin(t)", TAU).unwrap();
        for xi in [-5.0, -1.5, 0.0, 2.25, 5.0] {
            let o = solve_orbit_at_xi(&p, xi, None).unwrap();
            assert!((o.mu - xi).abs() < 1e-9);
            for (t, x) in o.sample(64) {
                assert!((x - xi - (t.sin() - t.cos()) / 2.0).abs() < 1e-9);
            }
            let norms = orbit_norms(&p, &o).unwrap();
            assert!(norms.wirtinger && norms.energy == Some(true));
        }
    }

    #[test]
    fn trivial_problem() {
        let p = CurveProblem::parse_first_order(None, "0", "0", TAU).unwrap();
        let o = solve_orbit_at_xi(&p, 3.0, None).unwrap();
        assert!(o.mu == 0.0 && o.sup_oscillation() == 0.0);
        let c = trace_curve(&p, &[1.0]).unwrap();
        assert_eq!(c.points.len(), 1);
    }

    #[test]
    fn orbit_invariants_on_nonlinear_problems() {
        let p = CurveProblem::parse_first_order(None, "(2/pi)*atan(x)", "sin(t) + 0.5*cos(2*t)", TAU).unwrap();
        for xi in [-3.0, 0.0, 0.7, 10.0] {
            let o = solve_orbit_at_xi(&p, xi, None).unwrap();
            assert!(o.mean().abs() <= 1e-10 && o.residual <= RESIDUAL_TOL);
            let norms = orbit_norms(&p, &o).unwrap();
            assert!(norms.wirtinger && norms.energy == Some(true));
            assert!(shooting_check(&p, &o).unwrap().closure < 1e-7);
        }
    }

    #[test]
    fn node_doubling_and_uniqueness() {
        let p = atan_problem();
        let mut rng = StdRng::seed_from_u64(17);
        for xi in [-2.0, 0.5, 6.0] {
            let a = collocate(&p, xi, 64, None).unwrap();
            let b = collocate(&p, xi, 128, None).unwrap();
            assert!((a.mu - b.mu).abs() < 1e-9 && a.distance(&b) < 1e-9);
            for _ in 0..5 {
                let amp: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let guess: Vec<f64> = a
                    .times()
                    .iter()
                    .map(|t| amp[0] * t.cos() + amp[1] * t.sin() + amp[2] * (2.0 * t).cos() + amp[3] * (3.0 * t).sin())
                    .collect();
                let c = collocate(&p, xi, 64, Some((&guess, rng.gen_range(-1.0..1.0)))).unwrap();
                assert!((c.mu - a.mu).abs() < 1e-7 && c.distance(&a) < 1e-7);
            }
        }
    }

    #[test]
    fn agrees_with_scalar_shooting() {
        let p = atan_problem();
        let o = solve_orbit_at_xi(&p, 0.0, None).unwrap();
        let s = ScalarProblem::parse("sin(t)", &format!("{} + sin(t)", o.mu), "(2/pi)*atan(x)", (-1.0, 1.0), TAU, true).unwrap();
        let orb = find_periodic(&s).unwrap();
        assert!(orb.average.abs() < 1e-6);
        assert!((orb.x0 - o.eval(0.0)).abs() < 1e-6);
    }

    #[test]
    fn traced_curve_is_continuous() {
        let p = atan_problem();
        let grid = xi_grid(-6.0, 6.0, 1.0).unwrap();
        assert_eq!(grid.len(), 13);
        let c = trace_curve(&p, &grid).unwrap();
        assert!(c.failures.is_empty());
        assert!(c.max_gap() < CONTINUITY_GAP);
        assert!(c.points.len() > grid.len());
        let t = average_table(&c);
        assert_eq!(t.rows.len(), 13);
        assert!(t.increasing && t.rows.iter().all(|r| r.0.abs() < 1.0));
        assert!(trace_curve(&p, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn second_order() {
        let p = CurveProblem::parse_second_order(1.0, "(2/pi)*atan(x)", "sin(t)", TAU).unwrap();
        let o = solve_orbit_at_xi(&p, 0.8, None).unwrap();
        assert!(o.mean().abs() < 1e-10);
        let s = shooting_check(&p, &o).unwrap();
        assert!(s.closure < 1e-7 && s.deviation < 1e-7);
        assert!(orbit_norms(&p, &o).unwrap().wirtinger);
        let steep = CurveProblem::parse_second_order(1.0, "tanh(10*x)", "sin(t)", TAU);
        assert!(steep.unwrap_err().is_hypothesis_failure());
    }

    #[test]
    fn second_order_matches_period_map_fixed_point() {
        use crate::pendulum::{find_periodic_2d, PendulumProblem};
        let curve = CurveProblem::parse_second_order(1.0, "(2/pi)*atan(x)", "sin(t)", TAU).unwrap();
        for mu in [0.4, -0.7] {
            let pend = PendulumProblem::parse(1.0, "(2/pi)*atan(x)", 1.0, (-1.0, 1.0), mu, "sin(t)", TAU).unwrap();
            let fixed = find_periodic_2d(&pend, [0.0, 0.0]).unwrap();
            let o = solve_orbit_at_xi(&curve, fixed.average, None).unwrap();
            assert!((o.mu - mu).abs() < 1e-6);
            for (t, x) in &fixed.samples {
                assert!((o.eval(*t) - x).abs() < 1e-6);
            }
        }
    }
}
