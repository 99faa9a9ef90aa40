//! Linear periodic systems `x' = M(t) x + q(t)`: monodromy, the resonance
//! classification, iterate formulas, adjoint systems and solvability.

use std::fmt;

use rand::Rng;

use crate::expr::{ExprError, Expression};
use crate::ode::OdeOptions;
use crate::sim::{self, eval_t};
use crate::smatrix::{
    self, null_space_below, range_membership_below, Complex, DenseMatrix, EigenCluster,
    SpectralData, Svd, UNIT_CIRCLE_TOL,
};
use crate::{AnalysisError, Result, Tolerances};

/// How the system was written before being stored canonically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceForm {
    /// `x' = M(t) x + q(t)`.
    Canonical,
    /// `x' + A(t) x = f(t)`, stored with `M = -A`.
    Damped,
}

#[derive(Debug, Clone)]
pub struct PeriodicSystem {
    n: usize,
    period: f64,
    m: Vec<Expression>,
    q: Vec<Expression>,
    m_const: Vec<Option<f64>>,
    q_const: Vec<Option<f64>>,
    form: SourceForm,
}

impl PeriodicSystem {
    /// Canonical system from `n*n` row-major coefficients and `n` forcings,
    /// all expressions in `t`.
    pub fn new(period: f64, m: Vec<Expression>, q: Vec<Expression>) -> Result<Self> {
        Self::build(period, m, q, SourceForm::Canonical)
    }

    /// System written as `x' + A(t) x = f(t)`.
    pub fn from_damped(period: f64, a: Vec<Expression>, f: Vec<Expression>) -> Result<Self> {
        let m = a.iter().map(Expression::neg).collect();
        Self::build(period, m, f, SourceForm::Damped)
    }

    /// Parses a canonical system from expression strings.
    pub fn parse(period: f64, m: &[&[&str]], q: &[&str]) -> Result<Self> {
        let (m, q) = parse_parts(m, q)?;
        Self::new(period, m, q)
    }

    pub fn parse_damped(period: f64, a: &[&[&str]], f: &[&str]) -> Result<Self> {
        let (a, f) = parse_parts(a, f)?;
        Self::from_damped(period, a, f)
    }

    fn build(period: f64, m: Vec<Expression>, q: Vec<Expression>, form: SourceForm) -> Result<Self> {
        let n = q.len();
        if n == 0 {
            return Err(AnalysisError::InvalidProblem("system dimension is zero".into()));
        }
        if m.len() != n * n {
            return Err(AnalysisError::InvalidProblem(format!(
                "coefficient matrix has {} entries, expected {}",
                m.len(),
                n * n
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(AnalysisError::InvalidProblem(format!("period must be positive, got {period}")));
        }
        for e in m.iter().chain(&q) {
            sim::check_vars(e, &["t"], "coefficient")?;
        }
        let sys = PeriodicSystem {
            n,
            period,
            m_const: m.iter().map(|e| e.as_constant()).collect(),
            q_const: q.iter().map(|e| e.as_constant()).collect(),
            m,
            q,
            form,
        };
        sys.check_periodic()?;
        Ok(sys)
    }

    fn check_periodic(&self) -> Result<()> {
        let p = self.period;
        for t in [0.0, 0.3 * p, 0.71 * p] {
            let (m0, q0) = (self.coefficient_matrix(t)?, self.forcing(t)?);
            let (m1, q1) = (self.coefficient_matrix(t + p)?, self.forcing(t + p)?);
            let dm = m0.sub(&m1).norm();
            let dq = smatrix::norm2(&q0.iter().zip(&q1).map(|(a, b)| a - b).collect::<Vec<_>>());
            if dm > 1e-10 || dq > 1e-10 {
                return Err(AnalysisError::InvalidProblem(format!(
                    "coefficients are not {p}-periodic: mismatch {:.3e} at t = {t}",
                    dm.max(dq)
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn source_form(&self) -> SourceForm {
        self.form
    }

    /// Canonical coefficient expressions, row-major.
    pub fn coefficients(&self) -> &[Expression] {
        &self.m
    }

    pub fn forcing_terms(&self) -> &[Expression] {
        &self.q
    }

    /// The same system with `q ≡ 0`.
    pub fn homogeneous(&self) -> PeriodicSystem {
        let zero = vec![Expression::constant(0.0, &["t"]); self.n];
        self.with_forcing(zero).expect("zero forcing is periodic")
    }

    pub fn with_forcing(&self, q: Vec<Expression>) -> Result<PeriodicSystem> {
        Self::build(self.period, self.m.clone(), q, self.form)
    }

    fn load_m(&self, t: f64, out: &mut [f64]) -> Result<(), ExprError> {
        for ((o, e), c) in out.iter_mut().zip(&self.m).zip(&self.m_const) {
            *o = match c {
                Some(v) => *v,
                None => eval_t(e, t)?,
            };
        }
        Ok(())
    }

    fn load_q(&self, t: f64, out: &mut [f64]) -> Result<(), ExprError> {
        for ((o, e), c) in out.iter_mut().zip(&self.q).zip(&self.q_const) {
            *o = match c {
                Some(v) => *v,
                None => eval_t(e, t)?,
            };
        }
        Ok(())
    }

    pub fn coefficient_matrix(&self, t: f64) -> Result<DenseMatrix> {
        let mut buf = vec![0.0; self.n * self.n];
        self.load_m(t, &mut buf)?;
        Ok(DenseMatrix::from_row_slice(self.n, self.n, &buf))
    }

    pub fn forcing(&self, t: f64) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; self.n];
        self.load_q(t, &mut buf)?;
        Ok(buf)
    }

    pub fn is_forced(&self) -> bool {
        !self.q_const.iter().all(|c| *c == Some(0.0))
    }

    /// Vector field of the forced system.
    pub(crate) fn field(&self) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<(), ExprError> + '_ {
        let n = self.n;
        let mut mbuf = vec![0.0; n * n];
        move |t, x, dx| {
            self.load_m(t, &mut mbuf)?;
            self.load_q(t, dx)?;
            for i in 0..n {
                dx[i] += smatrix::dot(&mbuf[i * n..(i + 1) * n], x);
            }
            Ok(())
        }
    }

    // Integrates X' = MX, X(0) = I together with the forced solution from 0
    // (when `forced`). State layout: X row-major, then x.
    fn flow(&self, t1: f64, forced: bool, opts: &OdeOptions) -> Result<(DenseMatrix, Vec<f64>)> {
        let n = self.n;
        let extra = if forced { n } else { 0 };
        let mut x0 = vec![0.0; n * n + extra];
        for i in 0..n {
            x0[i * n + i] = 1.0;
        }
        let mut mbuf = vec![0.0; n * n];
        let mut qbuf = vec![0.0; n];
        let end = sim::propagate(
            |t, s, ds| {
                self.load_m(t, &mut mbuf)?;
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += mbuf[i * n + k] * s[k * n + j];
                        }
                        ds[i * n + j] = acc;
                    }
                }
                if forced {
                    self.load_q(t, &mut qbuf)?;
                    let x = &s[n * n..];
                    for i in 0..n {
                        ds[n * n + i] = smatrix::dot(&mbuf[i * n..(i + 1) * n], x) + qbuf[i];
                    }
                }
                Ok(())
            },
            0.0,
            &x0,
            t1,
            opts,
        )?;
        let xm = DenseMatrix::from_row_slice(n, n, &end[..n * n]);
        Ok((xm, end[n * n..].to_vec()))
    }

    fn adjoint_flow(&self, t1: f64, opts: &OdeOptions) -> Result<DenseMatrix> {
        let n = self.n;
        let mut z0 = vec![0.0; n * n];
        for i in 0..n {
            z0[i * n + i] = 1.0;
        }
        let mut mbuf = vec![0.0; n * n];
        let end = sim::propagate(
            |t, s, ds| {
                self.load_m(t, &mut mbuf)?;
                // Z' = -Mᵀ Z
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc -= mbuf[k * n + i] * s[k * n + j];
                        }
                        ds[i * n + j] = acc;
                    }
                }
                Ok(())
            },
            0.0,
            &z0,
            t1,
            opts,
        )?;
        Ok(DenseMatrix::from_row_slice(n, n, &end))
    }

    /// State after one period of the forced system from `x0`.
    pub fn poincare(&self, x0: &[f64], opts: &OdeOptions) -> Result<Vec<f64>> {
        sim::propagate(self.field(), 0.0, x0, self.period, opts)
    }

    /// States `x(kp)` for `k = 1..=m`, integrating one period at a time.
    pub fn period_iterates(&self, x0: &[f64], m: usize, opts: &OdeOptions) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(m);
        let mut x = x0.to_vec();
        for k in 1..=m {
            x = self.poincare(&x, opts)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(AnalysisError::Unbounded(k));
            }
            out.push(x.clone());
        }
        Ok(out)
    }

    /// `∫₀ᵖ trace M(t) dt`.
    pub fn trace_integral(&self) -> Result<f64> {
        let n = self.n;
        let mut buf = vec![0.0; n * n];
        sim::quadrature(
            |t| {
                self.load_m(t, &mut buf)?;
                Ok((0..n).map(|i| buf[i * n + i]).sum())
            },
            self.period,
        )
    }
}

fn parse_parts(m: &[&[&str]], q: &[&str]) -> Result<(Vec<Expression>, Vec<Expression>)> {
    let mut me = Vec::new();
    for row in m {
        if row.len() != q.len() {
            return Err(AnalysisError::InvalidProblem(format!(
                "coefficient row has {} entries, expected {}",
                row.len(),
                q.len()
            )));
        }
        for s in *row {
            me.push(Expression::parse(s, &["t"])?);
        }
    }
    let qe = q
        .iter()
        .map(|s| Expression::parse(s, &["t"]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((me, qe))
}

/// `X(t)` for `t >= 0`, using `X(t + kp) = X(t) X(p)^k`.
pub fn fundamental_matrix(sys: &PeriodicSystem, t: f64, opts: &OdeOptions) -> Result<DenseMatrix> {
    semigroup(sys.period, t, |s| Ok(sys.flow(s, false, opts)?.0))
}

/// Adjoint fundamental matrix `Z(t)` of `z' = -Mᵀ(t) z`, `Z(0) = I`.
pub fn adjoint_fundamental(sys: &PeriodicSystem, t: f64, opts: &OdeOptions) -> Result<DenseMatrix> {
    semigroup(sys.period, t, |s| sys.adjoint_flow(s, opts))
}

fn semigroup(p: f64, t: f64, mut at: impl FnMut(f64) -> Result<DenseMatrix>) -> Result<DenseMatrix> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(AnalysisError::Precondition(format!("time must be finite and nonnegative, got {t}")));
    }
    if t <= p {
        return at(t);
    }
    let k = (t / p).floor();
    let r = t - k * p;
    let xp = at(p)?;
    let xr = at(r)?;
    Ok(xr.mul(&xp.pow(k as u32)))
}

#[derive(Debug, Clone)]
pub struct MonodromyReport {
    pub period: f64,
    /// `X(p)`.
    pub monodromy: DenseMatrix,
    pub spectrum: SpectralData,
    /// `x(p)` for the forced system started at 0.
    pub b: Vec<f64>,
    /// `1` is a multiplier: `I - X(p)` has a kernel at the rank threshold.
    pub resonant: bool,
    pub rank_tol: f64,
    /// Absolute singular-value threshold, `rank_tol * max(1, ‖X(p)‖)`.
    pub threshold: f64,
    /// Smallest singular value of `I - X(p)`.
    pub sigma_min: f64,
}

impl MonodromyReport {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `I - X(p)`.
    pub fn defect_matrix(&self) -> DenseMatrix {
        DenseMatrix::identity(self.dim()).sub(&self.monodromy)
    }

    /// Orthonormal basis of `null(I - X(p))`.
    pub fn kernel(&self) -> Vec<Vec<f64>> {
        null_space_below(&self.defect_matrix(), self.threshold)
    }

    /// Orthonormal basis of `null((I - X(p))ᵀ)`.
    pub fn left_kernel(&self) -> Vec<Vec<f64>> {
        null_space_below(&self.defect_matrix().transpose(), self.threshold)
    }

    pub fn range_defect(&self) -> f64 {
        range_membership_below(&self.defect_matrix(), &self.b, self.threshold, self.rank_tol).defect
    }

    pub fn b_in_range(&self) -> bool {
        range_membership_below(&self.defect_matrix(), &self.b, self.threshold, self.rank_tol).in_range
    }
}

pub fn monodromy_report(sys: &PeriodicSystem, tol: &Tolerances) -> Result<MonodromyReport> {
    let (xp, b) = sys.flow(sys.period, true, &tol.ode_options())?;
    report_from_parts(sys.period, xp, b, tol.rank)
}

/// Builds a report from a known monodromy matrix and forcing vector.
pub fn report_from_parts(period: f64, monodromy: DenseMatrix, b: Vec<f64>, rank_tol: f64) -> Result<MonodromyReport> {
    if !monodromy.is_finite() || b.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::Unbounded(1));
    }
    let spectrum = smatrix::eigenvalues_with(&monodromy, rank_tol)?;
    let threshold = rank_tol * monodromy.norm().max(1.0);
    let svd = Svd::new(&DenseMatrix::identity(b.len()).sub(&monodromy));
    let sigma_min = svd.smallest();
    Ok(MonodromyReport {
        period,
        monodromy,
        spectrum,
        b,
        resonant: sigma_min <= threshold,
        rank_tol,
        threshold,
        sigma_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    /// Spectral radius on the unit circle without the multiplier 1.
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictKind {
    NonResonant(Stability),
    Case1AllUnbounded,
    Case2iPeriodicPlusUnbounded,
    Case2iiAllApproachPeriodic,
    Case2iiiAllBounded,
    /// Spectral radius 1 with a non-diagonal Jordan block on the unit
    /// circle: none of the cases applies.
    Uncovered,
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VerdictKind::NonResonant(Stability::Stable) => {
                "NonResonant: unique periodic solution, stable (all solutions approach it)"
            }
            VerdictKind::NonResonant(Stability::Unstable) => "NonResonant: unique periodic solution, unstable",
            VerdictKind::NonResonant(Stability::Neutral) => {
                "NonResonant: unique periodic solution, neutrally stable"
            }
            VerdictKind::Case1AllUnbounded => "Case 1: all solutions unbounded",
            VerdictKind::Case2iPeriodicPlusUnbounded => {
                "Case 2(i): infinitely many periodic solutions and unbounded solutions"
            }
            VerdictKind::Case2iiAllApproachPeriodic => {
                "Case 2(ii): every solution approaches a periodic solution"
            }
            VerdictKind::Case2iiiAllBounded => "Case 2(iii): all solutions bounded",
            VerdictKind::Uncovered => {
                "Uncovered: spectral radius 1 with a non-diagonal Jordan block on the unit circle"
            }
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct ResonanceVerdict {
    pub kind: VerdictKind,
    pub spectral_radius: f64,
    /// Range defect of `b`; `None` when not resonant.
    pub defect: Option<f64>,
    pub unit_circle: Vec<EigenCluster>,
    pub rank_tol: f64,
}

impl ResonanceVerdict {
    pub fn all_unit_circle_diagonal(&self) -> bool {
        self.unit_circle.iter().all(EigenCluster::is_semisimple)
    }
}

pub fn classify(rep: &MonodromyReport) -> ResonanceVerdict {
    let rho = rep.spectrum.spectral_radius;
    let unit_circle: Vec<EigenCluster> = rep.spectrum.unit_circle().cloned().collect();
    let mk = |kind, defect| ResonanceVerdict {
        kind,
        spectral_radius: rho,
        defect,
        unit_circle: unit_circle.clone(),
        rank_tol: rep.rank_tol,
    };
    if !rep.resonant {
        let stability = if rho < 1.0 - UNIT_CIRCLE_TOL {
            Stability::Stable
        } else if rho > 1.0 + UNIT_CIRCLE_TOL {
            Stability::Unstable
        } else {
            Stability::Neutral
        };
        return mk(VerdictKind::NonResonant(stability), None);
    }
    let defect = rep.range_defect();
    if defect > rep.rank_tol {
        return mk(VerdictKind::Case1AllUnbounded, Some(defect));
    }
    if rho > 1.0 + UNIT_CIRCLE_TOL {
        return mk(VerdictKind::Case2iPeriodicPlusUnbounded, Some(defect));
    }
    if !unit_circle.iter().all(EigenCluster::is_semisimple) {
        return mk(VerdictKind::Uncovered, Some(defect));
    }
    let only_one = unit_circle
        .iter()
        .all(|c| c.value.dist(Complex::new(1.0, 0.0)) <= rep.spectrum.cluster_tol);
    if only_one {
        mk(VerdictKind::Case2iiAllApproachPeriodic, Some(defect))
    } else {
        mk(VerdictKind::Case2iiiAllBounded, Some(defect))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    /// Unit vector in `null((I - X(p))ᵀ)`.
    pub v0: Vec<f64>,
    /// `(b, v0)`.
    pub b_dot_v0: f64,
}

/// The functional `x ↦ (x, v0)` that grows by `(b, v0)` every period.
///
/// `v0` is the normalized projection of `b` on the left kernel, which
/// maximizes `|(b, v0)|`; its largest component is made positive.
pub fn massera_witness(rep: &MonodromyReport) -> Result<Witness> {
    let verdict = classify(rep);
    if verdict.kind != VerdictKind::Case1AllUnbounded {
        return Err(AnalysisError::Precondition(format!("witness needs Case 1, verdict is {}", verdict.kind)));
    }
    let n = rep.dim();
    let mut v = vec![0.0; n];
    for k in rep.left_kernel() {
        let c = smatrix::dot(&k, &rep.b);
        for (vi, ki) in v.iter_mut().zip(&k) {
            *vi += c * ki;
        }
    }
    let norm = smatrix::norm2(&v);
    let mut v0: Vec<f64> = v.iter().map(|x| x / norm).collect();
    let lead = v0.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
    if lead < 0.0 {
        v0.iter_mut().for_each(|x| *x = -*x);
    }
    let b_dot_v0 = smatrix::dot(&rep.b, &v0);
    Ok(Witness { v0, b_dot_v0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateOutcome {
    /// `x(mp) = X^m x0 + Σ_{k<m} X^k b`.
    pub x: Vec<f64>,
    /// `x̄0 + X^m (x0 - x̄0)` when a periodic initial value `x̄0` exists.
    pub periodic_form: Option<Vec<f64>>,
}

pub fn iterate_formula(rep: &MonodromyReport, x0: &[f64], m: usize) -> Result<IterateOutcome> {
    let xs = iterate_sequence(rep, x0, m)?;
    let x = xs.last().cloned().unwrap_or_else(|| x0.to_vec());
    let periodic_form = match periodic_initial_set(rep).particular {
        Some(xbar) => {
            let mut d: Vec<f64> = x0.iter().zip(&xbar).map(|(a, b)| a - b).collect();
            for k in 1..=m {
                d = rep.monodromy.mul_vec(&d);
                if d.iter().any(|v| !v.is_finite()) {
                    return Err(AnalysisError::Unbounded(k));
                }
            }
            Some(xbar.iter().zip(&d).map(|(a, b)| a + b).collect())
        }
        None => None,
    };
    Ok(IterateOutcome { x, periodic_form })
}

/// `x(kp)` for `k = 1..=m` by `x_{k+1} = X(p) x_k + b`.
pub fn iterate_sequence(rep: &MonodromyReport, x0: &[f64], m: usize) -> Result<Vec<Vec<f64>>> {
    if x0.len() != rep.dim() {
        return Err(AnalysisError::InvalidProblem(format!(
            "initial value has {} entries, system dimension is {}",
            x0.len(),
            rep.dim()
        )));
    }
    let mut out = Vec::with_capacity(m);
    let mut x = x0.to_vec();
    for k in 1..=m {
        x = rep.monodromy.mul_vec(&x).iter().zip(&rep.b).map(|(a, b)| a + b).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::Unbounded(k));
        }
        out.push(x.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSet {
    /// Minimum-norm solution of `(I - X(p)) x0 = b`, when one exists.
    pub particular: Option<Vec<f64>>,
    /// Basis of `null(I - X(p))`.
    pub kernel: Vec<Vec<f64>>,
}

pub fn periodic_initial_set(rep: &MonodromyReport) -> PeriodicSet {
    let kernel = if rep.resonant { rep.kernel() } else { Vec::new() };
    let particular = if !rep.resonant || rep.b_in_range() {
        let svd = Svd::new(&rep.defect_matrix());
        Some(svd.pseudo_solve(&rep.b, rep.threshold))
    } else {
        None
    };
    PeriodicSet { particular, kernel }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnboundedDirection {
    /// Multiplier of largest modulus.
    pub multiplier: Complex,
    /// Real vector in its invariant subspace.
    pub direction: Vec<f64>,
    /// `x̄0 + direction`: an initial value whose solution is unbounded.
    pub x0: Vec<f64>,
}

/// Initial value of an unbounded solution when `ρ(X(p)) > 1` and a periodic
/// solution exists.
pub fn unbounded_direction(rep: &MonodromyReport) -> Result<UnboundedDirection> {
    let verdict = classify(rep);
    if verdict.kind != VerdictKind::Case2iPeriodicPlusUnbounded {
        return Err(AnalysisError::Precondition(format!(
            "unbounded direction needs Case 2(i), verdict is {}",
            verdict.kind
        )));
    }
    let lambda = rep.spectrum.eigenvalues[0];
    let threshold = rep.threshold.max(1e-6 * lambda.abs());
    let direction = smatrix::eigenvector(&rep.monodromy, lambda, threshold)
        .ok_or_else(|| AnalysisError::NoConvergence(format!("no eigenvector found for multiplier {lambda}")))?;
    let xbar = periodic_initial_set(rep)
        .particular
        .ok_or_else(|| AnalysisError::Inconsistency("Case 2 without a periodic initial value".into()))?;
    let x0 = xbar.iter().zip(&direction).map(|(a, b)| a + b).collect();
    Ok(UnboundedDirection { multiplier: lambda, direction, x0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solvability {
    pub solvable: bool,
    /// `∫₀ᵖ q·z dt` for each periodic adjoint solution `z = Z(t) z0`.
    pub residuals: Vec<f64>,
    /// The `z0` used, one per residual.
    pub adjoint_initial: Vec<Vec<f64>>,
    /// `max(1, ∫|q||z|)`, the scale of the residual test.
    pub scale: f64,
}

/// Tests `∫₀ᵖ q·z = 0` over the periodic solutions of the adjoint system.
pub fn solvability_test(sys: &PeriodicSystem, tol: &Tolerances) -> Result<Solvability> {
    let opts = tol.ode_options();
    let zp = sys.adjoint_flow(sys.period, &opts)?;
    let n = sys.n;
    let threshold = tol.rank * zp.norm().max(1.0);
    let kernel = null_space_below(&DenseMatrix::identity(n).sub(&zp), threshold);
    if kernel.is_empty() {
        return Err(AnalysisError::Precondition(
            "system is not resonant: the adjoint has no periodic solution and the condition is vacuous".into(),
        ));
    }
    let mut residuals = Vec::new();
    let mut scale: f64 = 1.0;
    let mut mbuf = vec![0.0; n * n];
    let mut qbuf = vec![0.0; n];
    for z0 in &kernel {
        let mut s0 = z0.clone();
        s0.extend([0.0, 0.0]);
        let end = sim::propagate(
            |t, s, ds| {
                sys.load_m(t, &mut mbuf)?;
                sys.load_q(t, &mut qbuf)?;
                for i in 0..n {
                    ds[i] = -(0..n).map(|k| mbuf[k * n + i] * s[k]).sum::<f64>();
                }
                ds[n] = smatrix::dot(&qbuf, &s[..n]);
                ds[n + 1] = qbuf.iter().zip(&s[..n]).map(|(a, b)| (a * b).abs()).sum();
                Ok(())
            },
            0.0,
            &s0,
            sys.period,
            &opts,
        )?;
        residuals.push(end[n]);
        scale = scale.max(end[n + 1]);
    }
    let solvable = residuals.iter().all(|r| r.abs() <= tol.rank * scale);
    Ok(Solvability {
        solvable,
        residuals,
        adjoint_initial: kernel,
        scale,
    })
}

#[derive(Debug, Clone)]
pub struct PositiveAdjoint {
    /// Perron root of `Z(p)`.
    pub perron: f64,
    /// `z(0)`, normalized so its components sum to `n`.
    pub z0: Vec<f64>,
    /// Sample times on `[0, p]`.
    pub times: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub min_component: f64,
    /// `∫₀ᵖ z_i dt`.
    pub integrals: Vec<f64>,
    /// Off-diagonal entries of the adjoint coefficient `-Mᵀ` positive at all
    /// samples (sufficient route through Perron-Frobenius).
    pub off_diagonal_positive: bool,
    /// `∫₀ᵖ trace(-Mᵀ) dt`; `det Z(p)` equals its exponential.
    pub adjoint_trace_integral: f64,
    pub det_zp: f64,
}

impl PositiveAdjoint {
    /// The two-dimensional route: `det Z(p) = exp(∫ trace) ≤ 1`.
    pub fn trace_route_holds(&self) -> bool {
        self.z0.len() == 2 && self.adjoint_trace_integral <= 0.0
    }
}

pub const POSITIVITY_SAMPLES: usize = 512;

/// Positive `p`-periodic solution of the adjoint system `z' = -Mᵀ z`.
pub fn positive_adjoint_solution(sys: &PeriodicSystem, tol: &Tolerances) -> Result<PositiveAdjoint> {
    let opts = tol.ode_options();
    let n = sys.n;
    let zp = sys.adjoint_flow(sys.period, &opts)?;
    let spec = smatrix::eigenvalues_with(&zp, tol.rank)?;
    let perron = spec.eigenvalues[0];
    if (spec.spectral_radius - 1.0).abs() > UNIT_CIRCLE_TOL
        || perron.im.abs() > spec.cluster_tol
        || (perron.re - 1.0).abs() > UNIT_CIRCLE_TOL.max(spec.cluster_tol)
    {
        return Err(AnalysisError::Hypothesis(format!(
            "Z(p) has no unit Perron root: spectral radius {:.6e}, dominant multiplier {perron}",
            spec.spectral_radius
        )));
    }
    let threshold = tol.rank * zp.norm().max(1.0);
    let kernel = null_space_below(&zp.shift(1.0), threshold);
    if kernel.is_empty() {
        return Err(AnalysisError::Hypothesis("Z(p) - I has no numerical kernel".into()));
    }
    let mut xi = vec![0.0; n];
    for k in &kernel {
        let c: f64 = k.iter().sum();
        for (x, kv) in xi.iter_mut().zip(k) {
            *x += c * kv;
        }
    }
    if smatrix::norm2(&xi) < 1e-12 {
        xi = kernel[0].clone();
    }
    let sum: f64 = xi.iter().sum();
    if sum == 0.0 {
        return Err(AnalysisError::Hypothesis("periodic adjoint eigenvector is not positive".into()));
    }
    xi.iter_mut().for_each(|x| *x *= n as f64 / sum);
    if let Some(bad) = xi.iter().find(|x| **x <= 0.0) {
        return Err(AnalysisError::Hypothesis(format!(
            "periodic adjoint eigenvector is not positive (component {bad:.3e})"
        )));
    }

    let mut mbuf = vec![0.0; n * n];
    let mut s0 = xi.clone();
    s0.extend(vec![0.0; n]);
    let traj = sim::integrate(
        |t, s, ds| {
            sys.load_m(t, &mut mbuf)?;
            for i in 0..n {
                ds[i] = -(0..n).map(|k| mbuf[k * n + i] * s[k]).sum::<f64>();
                ds[n + i] = s[i];
            }
            Ok(())
        },
        0.0,
        &s0,
        sys.period,
        &opts,
    )?;
    let mut times = Vec::with_capacity(POSITIVITY_SAMPLES + 1);
    let mut samples = Vec::with_capacity(POSITIVITY_SAMPLES + 1);
    let mut min_component = f64::INFINITY;
    let mut buf = vec![0.0; 2 * n];
    for t in sim::grid(sys.period, POSITIVITY_SAMPLES) {
        traj.eval_into(t, &mut buf);
        let z = buf[..n].to_vec();
        min_component = z.iter().copied().fold(min_component, f64::min);
        times.push(t);
        samples.push(z);
    }
    if min_component <= 0.0 {
        return Err(AnalysisError::Hypothesis(format!(
            "periodic adjoint solution is not positive (minimum component {min_component:.3e})"
        )));
    }
    let integrals = traj.final_state()[n..].to_vec();

    let mut off_diagonal_positive = true;
    for t in sim::grid(sys.period, 256) {
        sys.load_m(t, &mut mbuf)?;
        for i in 0..n {
            for j in 0..n {
                if i != j && -mbuf[j * n + i] <= 0.0 {
                    off_diagonal_positive = false;
                }
            }
        }
    }
    let adjoint_trace_integral = -sys.trace_integral()?;
    Ok(PositiveAdjoint {
        perron: perron.re,
        z0: xi,
        times,
        samples,
        min_component,
        integrals,
        off_diagonal_positive,
        adjoint_trace_integral,
        det_zp: zp.determinant(),
    })
}

#[derive(Debug, Clone)]
pub struct Tuned {
    pub kappa: f64,
    pub system: PeriodicSystem,
    /// `det(I - Z(p))` at `kappa`.
    pub phi: f64,
}

pub const TUNE_TOL: f64 = 1e-10;

/// `det(I - Z(p))`, evaluated at integrator tolerance `min(tol.ode, 1e-12)`.
pub fn resonance_function(sys: &PeriodicSystem, tol: &Tolerances) -> Result<f64> {
    let opts = OdeOptions::with_tol(tol.ode.min(1e-12));
    let zp = sys.adjoint_flow(sys.period, &opts)?;
    Ok(DenseMatrix::identity(sys.n).sub(&zp).determinant())
}

/// Bisection on `κ ↦ det(I - Z_κ(p))` until `|det| ≤ 1e-10`.
pub fn tune_to_resonance<F>(mut family: F, bracket: (f64, f64), tol: &Tolerances) -> Result<Tuned>
where
    F: FnMut(f64) -> Result<PeriodicSystem>,
{
    let (mut lo, mut hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let mut phi_lo = resonance_function(&family(lo)?, tol)?;
    let phi_hi = resonance_function(&family(hi)?, tol)?;
    for (k, phi) in [(lo, phi_lo), (hi, phi_hi)] {
        if phi.abs() <= TUNE_TOL {
            return Ok(Tuned { kappa: k, system: family(k)?, phi });
        }
    }
    if phi_lo.signum() == phi_hi.signum() {
        return Err(AnalysisError::Precondition(format!(
            "det(I - Z(p)) has no sign change on [{lo}, {hi}] ({phi_lo:.6e}, {phi_hi:.6e})"
        )));
    }
    let mut best = (f64::INFINITY, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let system = family(mid)?;
        let phi = resonance_function(&system, tol)?;
        if phi.abs() <= TUNE_TOL {
            return Ok(Tuned { kappa: mid, system, phi });
        }
        if phi.abs() < best.0 {
            best = (phi.abs(), mid);
        }
        if phi.signum() == phi_lo.signum() {
            lo = mid;
            phi_lo = phi;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
    }
    Err(AnalysisError::NoConvergence(format!(
        "bisection stalled with |det(I - Z(p))| = {:.3e} at {}",
        best.0, best.1
    )))
}

/// Random system with entries `c0 + c1 sin(k t) + c2 cos(k t)` of period
/// `2π`, `k ∈ {1, 2}`, constant parts in `±constant` and oscillating
/// amplitudes in `±amplitude`. The forcing has the same shape.
pub fn random_trigonometric_system<R: Rng>(rng: &mut R, n: usize, constant: f64, amplitude: f64) -> PeriodicSystem {
    let entry = |rng: &mut R| {
        let c0 = rng.gen_range(-constant..=constant);
        let c1 = rng.gen_range(-amplitude..=amplitude);
        let c2 = rng.gen_range(-amplitude..=amplitude);
        let k: u32 = rng.gen_range(1..=2);
        let s = format!("{c0} + {c1}*sin({k}*t) + {c2}*cos({k}*t)");
        Expression::parse(&s, &["t"]).expect("generated expression parses")
    };
    let m = (0..n * n).map(|_| entry(rng)).collect();
    let q = (0..n).map(|_| entry(rng)).collect();
    PeriodicSystem::new(std::f64::consts::TAU, m, q).expect("generated system is periodic")
}
