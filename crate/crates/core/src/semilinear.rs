//! Semilinear systems `x' + A(t) x + f(x) = g(t)` whose linear part is at
//! resonance: the necessary condition for periodic solutions and the
//! instability run along the adjoint functional.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::expr::{ExprError, Expression};
use crate::linear::{self, PeriodicSystem, PositiveAdjoint};
use crate::scalar::Orientation;
use crate::sim::{self, eval_t};
use crate::smatrix::{self, DenseMatrix};
use crate::{AnalysisError, Result, Tolerances};

const BOUND_SAMPLES: usize = 10_000;
const BOUND_RADIUS: f64 = 1e3;
const STRICT_TOL: f64 = 1e-9;

pub fn state_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

#[derive(Debug, Clone)]
pub struct SystemProblem {
    /// Linear part with forcing `g`, stored canonically (`M = -A`).
    linear: PeriodicSystem,
    f: Vec<Expression>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    bounds_hold: bool,
    warnings: Vec<String>,
    tol: Tolerances,
}

impl SystemProblem {
    /// `a` is the row-major `A(t)`, `f` the nonlinearity over `x1..xn`,
    /// `alpha < f < beta` its declared bounds and `g` the forcing.
    pub fn new(
        period: f64,
        a: Vec<Expression>,
        f: Vec<Expression>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        g: Vec<Expression>,
    ) -> Result<Self> {
        Self::with_tolerances(period, a, f, alpha, beta, g, Tolerances::default())
    }

    pub fn with_tolerances(
        period: f64,
        a: Vec<Expression>,
        f: Vec<Expression>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        g: Vec<Expression>,
        tol: Tolerances,
    ) -> Result<Self> {
        let linear = PeriodicSystem::from_damped(period, a, g)?;
        let n = linear.dim();
        if f.len() != n || alpha.len() != n || beta.len() != n {
            return Err(AnalysisError::InvalidProblem(format!(
                "dimension mismatch: n = {n}, f has {}, alpha {}, beta {}",
                f.len(),
                alpha.len(),
                beta.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| !(alpha[i] < beta[i])) {
            return Err(AnalysisError::InvalidProblem(format!(
                "bounds need alpha < beta, component {} has {} and {}",
                i + 1,
                alpha[i],
                beta[i]
            )));
        }
        let names = state_names(n);
        for e in &f {
            if e.variables() != names.as_slice() {
                return Err(AnalysisError::InvalidProblem(format!(
                    "nonlinearity must be declared over {names:?}, got {:?}",
                    e.variables()
                )));
            }
        }
        let mut problem = SystemProblem {
            linear,
            f,
            alpha,
            beta,
            bounds_hold: true,
            warnings: Vec::new(),
            tol,
        };
        problem.check_bounds()?;
        problem.check_resonance()?;
        Ok(problem)
    }

    pub fn parse(
        period: f64,
        a: &[&[&str]],
        f: &[&str],
        alpha: Vec<f64>,
        beta: Vec<f64>,
        g: &[&str],
    ) -> Result<Self> {
        let n = f.len();
        let names = state_names(n);
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut ae = Vec::new();
        for row in a {
            for s in *row {
                ae.push(Expression::parse(s, &["t"])?);
            }
        }
        let fe = f.iter().map(|s| Expression::parse(s, &vars)).collect::<Result<Vec<_>, _>>()?;
        let ge = g.iter().map(|s| Expression::parse(s, &["t"])).collect::<Result<Vec<_>, _>>()?;
        Self::new(period, ae, fe, alpha, beta, ge)
    }

    // f sampled on points of [-R, R]^n: uniform points plus rays at
    // logarithmically spread radii.
    fn check_bounds(&mut self) -> Result<()> {
        let n = self.dim();
        let mut rng = StdRng::seed_from_u64(0x5eed);
        let mut x = vec![0.0; n];
        for k in 0..BOUND_SAMPLES {
            if k % 2 == 0 {
                x.iter_mut().for_each(|v| *v = rng.gen_range(-BOUND_RADIUS..=BOUND_RADIUS));
            } else {
                let r = 10f64.powf(rng.gen_range(-3.0..=3.0));
                x.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..=1.0));
                let norm = smatrix::norm2(&x).max(1e-300);
                let scale = r / norm;
                x.iter_mut().for_each(|v| *v = (*v * scale).clamp(-BOUND_RADIUS, BOUND_RADIUS));
            }
            for i in 0..n {
                let fi = self.f[i].eval(&x)?;
                if !(self.alpha[i] < fi && fi < self.beta[i]) {
                    self.bounds_hold = false;
                    self.warnings.push(format!(
                        "f{}({x:?}) = {fi} is not strictly between {} and {}",
                        i + 1,
                        self.alpha[i],
                        self.beta[i]
                    ));
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    fn check_resonance(&self) -> Result<()> {
        let opts = self.tol.ode_options();
        let n = self.dim();
        let p = self.linear.period();
        let xp = linear::fundamental_matrix(&self.linear, p, &opts)?;
        let zp = linear::adjoint_fundamental(&self.linear, p, &opts)?;
        let has_one = |m: &DenseMatrix| -> Result<bool> {
            Ok(smatrix::eigenvalues_with(m, self.tol.rank)?.cluster_at_one().is_some())
        };
        let (rx, rz) = (has_one(&xp)?, has_one(&zp)?);
        if rx != rz {
            return Err(AnalysisError::Inconsistency(format!(
                "1 is a multiplier of X(p) ({rx}) but not of Z(p) ({rz}) or vice versa"
            )));
        }
        if !rx {
            return Err(AnalysisError::Hypothesis(format!(
                "linear part is not resonant: 1 is not a multiplier of the {n}x{n} monodromy matrix"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    pub fn period(&self) -> f64 {
        self.linear.period()
    }

    pub fn linear_part(&self) -> &PeriodicSystem {
        &self.linear
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.alpha, &self.beta)
    }

    pub fn bounds_hold(&self) -> bool {
        self.bounds_hold
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    fn load_f(&self, x: &[f64], out: &mut [f64]) -> Result<(), ExprError> {
        for (o, e) in out.iter_mut().zip(&self.f) {
            *o = e.eval(x)?;
        }
        Ok(())
    }
}

/// Outcome of the necessary condition; satisfying it proves nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemVerdict {
    Inconclusive,
    AllUnbounded(Orientation),
}

#[derive(Debug, Clone)]
pub struct NecessaryCondition {
    /// `Σ αᵢ ∫zᵢ`.
    pub lower: f64,
    /// `∫ g·z`.
    pub value: f64,
    /// `Σ βᵢ ∫zᵢ`.
    pub upper: f64,
    pub satisfied: bool,
    pub verdict: SystemVerdict,
    pub adjoint: PositiveAdjoint,
}

impl NecessaryCondition {
    /// Weights of the functional `V(x) = ±Σ zᵢ(0) xᵢ`.
    pub fn functional(&self) -> Option<Vec<f64>> {
        match self.verdict {
            SystemVerdict::Inconclusive => None,
            SystemVerdict::AllUnbounded(o) => Some(self.adjoint.z0.iter().map(|z| o.sign() * z).collect()),
        }
    }
}

pub fn necessary_condition(problem: &SystemProblem) -> Result<NecessaryCondition> {
    if !problem.bounds_hold {
        return Err(AnalysisError::Hypothesis(format!(
            "nonlinearity violates its bounds: {}",
            problem.warnings.first().map(String::as_str).unwrap_or("")
        )));
    }
    let adjoint = linear::positive_adjoint_solution(&problem.linear, &problem.tol)?;
    let n = problem.dim();
    let lin = &problem.linear;
    let mut mbuf = vec![0.0; n * n];
    let mut s0 = adjoint.z0.clone();
    s0.push(0.0);
    let end = sim::propagate(
        |t, s, ds| {
            let m = lin.coefficients();
            for (b, e) in mbuf.iter_mut().zip(m) {
                *b = eval_t(e, t)?;
            }
            let mut gz = 0.0;
            for i in 0..n {
                ds[i] = -(0..n).map(|k| mbuf[k * n + i] * s[k]).sum::<f64>();
                gz += eval_t(&lin.forcing_terms()[i], t)? * s[i];
            }
            ds[n] = gz;
            Ok(())
        },
        0.0,
        &s0,
        problem.period(),
        &problem.tol.ode_options(),
    )?;
    let value = end[n];
    let lower: f64 = problem.alpha.iter().zip(&adjoint.integrals).map(|(a, z)| a * z).sum();
    let upper: f64 = problem.beta.iter().zip(&adjoint.integrals).map(|(b, z)| b * z).sum();
    let strict = 1e-10 * lower.abs().max(upper.abs()).max(value.abs()).max(1.0);
    let satisfied = lower + strict < value && value < upper - strict;
    let verdict = if satisfied {
        SystemVerdict::Inconclusive
    } else if value >= upper - strict {
        SystemVerdict::AllUnbounded(Orientation::Increasing)
    } else {
        SystemVerdict::AllUnbounded(Orientation::Decreasing)
    };
    Ok(NecessaryCondition {
        lower,
        value,
        upper,
        satisfied,
        verdict,
        adjoint,
    })
}

#[derive(Debug, Clone)]
pub struct InstabilityRun {
    pub orientation: Orientation,
    /// `V(x0)`.
    pub v0: f64,
    /// `V(x(kp))`, `k = 1..=m`.
    pub values: Vec<f64>,
    /// `‖x(kp)‖`.
    pub norms: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Every step increased `V`.
    pub strictly_increasing: bool,
    /// Mean increase of `V` per period.
    pub growth_rate: f64,
    /// Largest deviation in `Σ zᵢ(0)[xᵢ(p) - xᵢ(0)] = ∫g·z - ∫f(x)·z`.
    pub identity_error: f64,
}

/// Integrates the system over `m` periods and evaluates `V` at each period.
pub fn instability_run(problem: &SystemProblem, x0: &[f64], m: usize) -> Result<InstabilityRun> {
    let cond = necessary_condition(problem)?;
    let SystemVerdict::AllUnbounded(orientation) = cond.verdict else {
        return Err(AnalysisError::Precondition(
            "the necessary condition holds, so no instability is implied".into(),
        ));
    };
    let n = problem.dim();
    if x0.len() != n {
        return Err(AnalysisError::InvalidProblem(format!(
            "initial value has {} entries, system dimension is {n}",
            x0.len()
        )));
    }
    let z0 = cond.adjoint.z0.clone();
    let sign = orientation.sign();
    let v = |x: &[f64]| sign * smatrix::dot(&z0, x);
    let lin = &problem.linear;
    let opts = problem.tol.ode_options();
    let mut mbuf = vec![0.0; n * n];
    let mut fbuf = vec![0.0; n];

    let v0 = v(x0);
    let mut values = Vec::with_capacity(m);
    let mut norms = Vec::with_capacity(m);
    let mut states = Vec::with_capacity(m);
    let mut identity_error: f64 = 0.0;
    let mut strictly_increasing = true;
    let mut x = x0.to_vec();
    let mut prev = v0;
    for k in 1..=m {
        // state: x, z, ∫f(x)·z, ∫g·z
        let mut s0 = x.clone();
        s0.extend(&z0);
        s0.extend([0.0, 0.0]);
        let end = sim::propagate(
            |t, s, ds| {
                for (b, e) in mbuf.iter_mut().zip(lin.coefficients()) {
                    *b = eval_t(e, t)?;
                }
                let (xs, zs) = s.split_at(n);
                problem.load_f(xs, &mut fbuf)?;
                let mut fz = 0.0;
                let mut gz = 0.0;
                for i in 0..n {
                    let gi = eval_t(&lin.forcing_terms()[i], t)?;
                    ds[i] = smatrix::dot(&mbuf[i * n..(i + 1) * n], xs) + gi - fbuf[i];
                    ds[n + i] = -(0..n).map(|r| mbuf[r * n + i] * zs[r]).sum::<f64>();
                    fz += fbuf[i] * zs[i];
                    gz += gi * zs[i];
                }
                ds[2 * n] = fz;
                ds[2 * n + 1] = gz;
                Ok(())
            },
            0.0,
            &s0,
            problem.period(),
            &opts,
        )?;
        let next = end[..n].to_vec();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::Unbounded(k));
        }
        let lhs: f64 = z0.iter().zip(next.iter().zip(&x)).map(|(z, (a, b))| z * (a - b)).sum();
        let rhs = end[2 * n + 1] - end[2 * n];
        identity_error = identity_error.max((lhs - rhs).abs());
        let vk = v(&next);
        if vk - prev < -STRICT_TOL * (1.0 + prev.abs()) {
            return Err(AnalysisError::Inconsistency(format!(
                "V decreased from {prev} to {vk} at period {k}"
            )));
        }
        if vk <= prev {
            strictly_increasing = false;
        }
        values.push(vk);
        norms.push(smatrix::norm2(&next));
        states.push(next.clone());
        prev = vk;
        x = next;
    }
    let growth_rate = if m == 0 { 0.0 } else { (prev - v0) / m as f64 };
    Ok(InstabilityRun {
        orientation,
        v0,
        values,
        norms,
        states,
        strictly_increasing,
        growth_rate,
        identity_error,
    })
}
