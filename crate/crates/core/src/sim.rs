use crate::expr::{ExprError, Expression};
use crate::ode::{self, OdeOptions, Trajectory};
use crate::AnalysisError;

/// Evaluates an expression over `t` alone (or a constant).
pub(crate) fn eval_t(e: &Expression, t: f64) -> Result<f64, ExprError> {
    match e.variables().len() {
        0 => e.eval(&[]),
        _ => e.eval(&[t]),
    }
}

/// Checks that every variable of `e` is in `allowed`.
pub(crate) fn check_vars(e: &Expression, allowed: &[&str], what: &str) -> Result<(), AnalysisError> {
    for v in e.variables() {
        if !allowed.contains(&v.as_str()) && e.depends_on(v) {
            return Err(AnalysisError::InvalidProblem(format!(
                "{what} uses variable '{v}', expected only {allowed:?}"
            )));
        }
    }
    Ok(())
}

// Runs the integrator with a fallible field. An expression error is only
// reported when the integration itself fails; a domain error at a rejected
// trial stage is harmless.
fn with_field<F, T>(
    mut field: F,
    run: impl FnOnce(&mut dyn FnMut(f64, &[f64], &mut [f64])) -> Result<T, ode::OdeError>,
) -> Result<T, AnalysisError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), ExprError>,
{
    let mut first: Option<ExprError> = None;
    let mut wrapped = |t: f64, x: &[f64], dx: &mut [f64]| {
        if let Err(e) = field(t, x, dx) {
            if first.is_none() {
                first = Some(e);
            }
            dx.fill(f64::NAN);
        }
    };
    match run(&mut wrapped) {
        Ok(v) => Ok(v),
        Err(e) => Err(match first {
            Some(expr) => expr.into(),
            None => e.into(),
        }),
    }
}

pub(crate) fn propagate<F>(
    field: F,
    t0: f64,
    x0: &[f64],
    t1: f64,
    opts: &OdeOptions,
) -> Result<Vec<f64>, AnalysisError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), ExprError>,
{
    with_field(field, |f| ode::propagate(f, t0, x0, t1, opts))
}

pub(crate) fn integrate<F>(
    field: F,
    t0: f64,
    x0: &[f64],
    t1: f64,
    opts: &OdeOptions,
) -> Result<Trajectory, AnalysisError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), ExprError>,
{
    with_field(field, |f| ode::integrate(f, t0, x0, t1, opts))
}

/// Equispaced sample points `k p / count`, `k = 0..=count`.
pub(crate) fn grid(p: f64, count: usize) -> impl Iterator<Item = f64> {
    (0..=count).map(move |k| p * k as f64 / count as f64)
}

/// Periodic trapezoid quadrature of a fallible integrand.
pub(crate) fn quadrature<F>(mut f: F, p: f64) -> Result<f64, AnalysisError>
where
    F: FnMut(f64) -> Result<f64, ExprError>,
{
    let mut first: Option<ExprError> = None;
    let q = ode::periodic_quadrature(
        |t| match f(t) {
            Ok(v) => v,
            Err(e) => {
                if first.is_none() {
                    first = Some(e);
                }
                f64::NAN
            }
        },
        p,
    );
    if let Some(e) = first {
        return Err(e.into());
    }
    Ok(q?.value)
}
