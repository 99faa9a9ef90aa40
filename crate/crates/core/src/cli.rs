//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 when a hypothesis of the applicable theorem
//! fails (the analysis says nothing), 1 on input or numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::curves::{self, CurveOrder, CurveProblem};
use crate::expr::{ExprError, Expression};
use crate::linear::{self, PeriodicSystem, VerdictKind};
use crate::pendulum::{self, PendulumProblem};
use crate::scalar::{self, ScalarProblem};
use crate::semilinear::{self, state_names, SystemProblem, SystemVerdict};
use crate::sim::{self, eval_t};
use crate::{AnalysisError, Tolerances};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(e) if e.is_hypothesis_failure() => EXIT_HYPOTHESIS,
            _ => EXIT_FAILURE,
        }
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "resonance", version, about = "Periodic differential equations at resonance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monodromy matrix, multipliers and the resonance classification.
    AnalyzeLinear(Common),
    /// Interval condition and periodic solution of a scalar equation.
    AnalyzeScalar(Common),
    /// Necessary condition and instability run for a semilinear system.
    AnalyzeSystem(Common),
    /// Existence interval, periodic orbit or instability of a pendulum.
    AnalyzePendulum(Common),
    /// Curve of periodic orbits parameterized by their average.
    Curve(Common),
    /// Integrates the equation over several periods.
    Simulate(Common),
    /// Tunes a bracketed parameter of a linear system to resonance.
    Tune(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON problem file.
    file: PathBuf,
    /// Directory for CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter override, repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Grid of averages for `curve`.
    #[arg(long, value_name = "LO:HI:STEP", allow_hyphen_values = true)]
    xi: Option<String>,
    /// Number of periods to iterate.
    #[arg(long, value_name = "M")]
    periods: Option<usize>,
    /// Initial state, comma separated.
    #[arg(long, value_name = "V[,V...]", allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long, value_name = "TOL")]
    tol_rank: Option<f64>,
    #[arg(long, value_name = "TOL")]
    tol_ode: Option<f64>,
    /// SVG plot of the curve.
    #[arg(long, value_name = "PATH")]
    svg: Option<PathBuf>,
}

/// Problem kinds of the JSON schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    LinearSystem,
    Scalar,
    SystemSemilinear,
    Pendulum,
    CurveFirstOrder,
    CurveSecondOrder,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::LinearSystem => "linear-system",
            Kind::Scalar => "scalar",
            Kind::SystemSemilinear => "system-semilinear",
            Kind::Pendulum => "pendulum",
            Kind::CurveFirstOrder => "curve-first-order",
            Kind::CurveSecondOrder => "curve-second-order",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            Kind::LinearSystem => &["coefficients"],
            Kind::Scalar => &["a", "f", "g", "limits"],
            Kind::SystemSemilinear => &["coefficients", "nonlinearity", "alpha", "beta", "forcing"],
            Kind::Pendulum => &["lambda", "g", "bound", "limits", "mu", "e"],
            Kind::CurveFirstOrder => &["g", "e"],
            Kind::CurveSecondOrder => &["lambda", "g", "e"],
        }
    }

    fn optional(self) -> &'static [&'static str] {
        match self {
            Kind::LinearSystem => &["form", "forcing"],
            Kind::Scalar => &["increasing", "xi"],
            Kind::Pendulum => &["xi"],
            Kind::CurveFirstOrder => &["a", "xi"],
            Kind::CurveSecondOrder => &["xi"],
            Kind::SystemSemilinear => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    /// `x' = M(t) x + q(t)`.
    Canonical,
    /// `x' + A(t) x = f(t)`.
    Damped,
}

/// A number or a constant expression over the parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Value(f64),
    Expr(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Value(f64),
    Spec(ParamSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    #[serde(default)]
    pub value: Option<f64>,
    /// `lo:hi:step`; analyses run once per value.
    #[serde(default)]
    pub sweep: Option<String>,
    /// Search interval for `tune`.
    #[serde(default)]
    pub bracket: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolFile {
    #[serde(default)]
    pub ode: Option<f64>,
    #[serde(default)]
    pub rank: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub kind: Kind,
    pub period: Number,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub form: Option<Form>,
    #[serde(default)]
    pub coefficients: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub forcing: Option<Vec<String>>,
    #[serde(default)]
    pub a: Option<String>,
    #[serde(default)]
    pub f: Option<String>,
    #[serde(default)]
    pub g: Option<String>,
    #[serde(default)]
    pub e: Option<String>,
    #[serde(default)]
    pub nonlinearity: Option<Vec<String>>,
    #[serde(default)]
    pub limits: Option<[Number; 2]>,
    #[serde(default)]
    pub increasing: Option<bool>,
    #[serde(default)]
    pub alpha: Option<Vec<Number>>,
    #[serde(default)]
    pub beta: Option<Vec<Number>>,
    #[serde(default)]
    pub lambda: Option<Number>,
    #[serde(default)]
    pub bound: Option<Number>,
    #[serde(default)]
    pub mu: Option<Number>,
    #[serde(default)]
    pub xi: Option<String>,
    #[serde(default)]
    pub parameters: BTreeMap<String, Param>,
    #[serde(default)]
    pub tolerances: Option<TolFile>,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let file: ProblemFile = serde_json::from_str(text)
            .map_err(|e| input(format!("malformed problem file at line {}, column {}: {e}", e.line(), e.column())))?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Input(m) => input(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut add = |name, on: bool| {
            if on {
                v.push(name)
            }
        };
        add("form", self.form.is_some());
        add("coefficients", self.coefficients.is_some());
        add("forcing", self.forcing.is_some());
        add("a", self.a.is_some());
        add("f", self.f.is_some());
        add("g", self.g.is_some());
        add("e", self.e.is_some());
        add("nonlinearity", self.nonlinearity.is_some());
        add("limits", self.limits.is_some());
        add("increasing", self.increasing.is_some());
        add("alpha", self.alpha.is_some());
        add("beta", self.beta.is_some());
        add("lambda", self.lambda.is_some());
        add("bound", self.bound.is_some());
        add("mu", self.mu.is_some());
        add("xi", self.xi.is_some());
        v
    }

    fn validate(&self) -> CliResult<()> {
        let present = self.present();
        let kind = self.kind;
        for r in kind.required() {
            if !present.contains(r) {
                return Err(input(format!("kind '{}' requires field '{r}'", kind.name())));
            }
        }
        for p in &present {
            if !kind.required().contains(p) && !kind.optional().contains(p) {
                return Err(input(format!("field '{p}' does not apply to kind '{}'", kind.name())));
            }
        }
        if let (Some(n), Some(c)) = (self.dimension, &self.coefficients) {
            if c.len() != n || c.iter().any(|r| r.len() != n) {
                return Err(input(format!("coefficients must be a {n}x{n} matrix")));
            }
        }
        for name in self.parameters.keys() {
            if ["t", "x"].contains(&name.as_str()) || name.starts_with('x') && name[1..].parse::<usize>().is_ok() {
                return Err(input(format!("parameter name '{name}' collides with a variable")));
            }
        }
        Ok(())
    }
}

/// Parameter values after applying overrides.
#[derive(Debug, Clone)]
struct Ctx {
    names: Vec<String>,
    values: BTreeMap<String, f64>,
    tol: Tolerances,
}

impl Ctx {
    fn expr(&self, field: &str, src: &str, base: &[&str]) -> CliResult<Expression> {
        let mut vars: Vec<&str> = base.to_vec();
        vars.extend(self.names.iter().map(String::as_str));
        let annotate = |e: ExprError| input(format!("field '{field}': {e}"));
        let mut e = Expression::parse(src, &vars).map_err(annotate)?;
        for (name, v) in &self.values {
            e = e.bind(name, *v);
        }
        for v in e.variables() {
            if !base.contains(&v.as_str()) && e.depends_on(v) {
                return Err(input(format!("field '{field}' uses parameter '{v}', which has no value; pass --param {v}=VALUE")));
            }
        }
        // drop unused, unvalued parameters from the variable list
        for v in e.variables().to_vec() {
            if !base.contains(&v.as_str()) {
                e = e.bind(&v, 0.0);
            }
        }
        Ok(e)
    }

    fn number(&self, field: &str, n: &Number) -> CliResult<f64> {
        match n {
            Number::Value(v) => Ok(*v),
            Number::Expr(s) => Ok(self.expr(field, s, &[])?.eval(&[]).map_err(|e| input(format!("field '{field}': {e}")))?),
        }
    }

    fn numbers(&self, field: &str, ns: &[Number]) -> CliResult<Vec<f64>> {
        ns.iter().map(|n| self.number(field, n)).collect()
    }
}

fn parse_override(s: &str) -> CliResult<(String, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| input(format!("--param expects NAME=VALUE, got '{s}'")))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| input(format!("--param {k}: '{v}' is not a number")))?;
    Ok((k.trim().to_string(), v))
}

fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| input(format!("'{v}' is not a number"))))
        .collect()
}

fn parse_range(s: &str) -> CliResult<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(input(format!("expected LO:HI:STEP, got '{s}'")));
    }
    let v = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| input(format!("'{p}' is not a number in '{s}'"))))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((v[0], v[1], v[2]))
}

/// C-style `%.{prec}g`.
pub fn fmt_g(x: f64, prec: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let p = prec.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    fn strip(s: &str) -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    }
    if exp < -4 || exp >= p as i32 {
        format!("{}e{}{:02}", strip(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        strip(&format!("{:.*}", (p as i32 - 1 - exp) as usize, x))
    }
}

fn g6(x: f64) -> String {
    fmt_g(x, 6)
}

fn complex6(z: crate::smatrix::Complex) -> String {
    if z.im == 0.0 {
        g6(z.re)
    } else {
        format!("{}{}{}i", g6(z.re), if z.im < 0.0 { "-" } else { "+" }, g6(z.im.abs()))
    }
}

fn vec6(v: &[f64]) -> String {
    format!("({})", v.iter().map(|x| g6(*x)).collect::<Vec<_>>().join(", "))
}

/// CSV with a header row, LF endings and `%.15g` numbers.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            text: header.join(",") + "\n",
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|v| fmt_g(*v, 15)).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn text_row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    mag * if r < 1.5 {
        1.0
    } else if r < 3.5 {
        2.0
    } else if r < 7.5 {
        5.0
    } else {
        10.0
    }
}

/// 800×600 SVG with one polyline and labelled axes.
pub fn svg_plot(points: &[(f64, f64)], x_label: &str, y_label: &str) -> String {
    let (w, h) = (800.0, 600.0);
    let (left, right, top, bottom) = (80.0, 30.0, 30.0, 60.0);
    let bounds = |sel: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="600" viewBox="0 0 800 600">"#);
    let _ = writeln!(s, r#"<rect width="800" height="600" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{:.2} {:.2} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        left,
        top,
        h - bottom,
        w - right
    );
    let step = nice_step(x1 - x0);
    let mut k = (x0 / step).ceil() as i64;
    while (k as f64) * step <= x1 + 1e-9 * step {
        let x = k as f64 * step;
        let px = sx(x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            h - bottom,
            h - bottom + 5.0,
            h - bottom + 20.0,
            g6(if x.abs() < 1e-12 * step { 0.0 } else { x })
        );
        k += 1;
    }
    let step = nice_step(y1 - y0);
    let mut k = (y0 / step).ceil() as i64;
    while (k as f64) * step <= y1 + 1e-9 * step {
        let y = k as f64 * step;
        let py = sy(y);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{left:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#,
            left - 5.0,
            left - 8.0,
            py + 4.0,
            g6(if y.abs() < 1e-12 * step { 0.0 } else { y })
        );
        k += 1;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{x_label}</text>"#,
        left + (w - left - right) / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.2})">{y_label}</text>"#,
        top + (h - top - bottom) / 2.0,
        top + (h - top - bottom) / 2.0
    );
    let pts: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, pts.join(" "));
    s.push_str("</svg>\n");
    s
}

/// Report text, artifacts and exit code of one analysis.
#[derive(Debug, Default)]
struct Outcome {
    text: String,
    files: Vec<(String, String)>,
    code: i32,
    verdict: String,
}

impl Outcome {
    fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }
}

fn require<'a, T>(v: &'a Option<T>, name: &str) -> CliResult<&'a T> {
    v.as_ref().ok_or_else(|| input(format!("missing field '{name}'")))
}

fn build_linear(file: &ProblemFile, ctx: &Ctx) -> CliResult<PeriodicSystem> {
    let period = ctx.number("period", &file.period)?;
    let rows = require(&file.coefficients, "coefficients")?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(input(format!("coefficients must be square, got {n} rows of lengths {:?}", rows.iter().map(Vec::len).collect::<Vec<_>>())));
    }
    let mut m = Vec::with_capacity(n * n);
    for (i, row) in rows.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            m.push(ctx.expr(&format!("coefficients[{i}][{j}]"), s, &["t"])?);
        }
    }
    let q = match &file.forcing {
        Some(f) => {
            if f.len() != n {
                return Err(input(format!("forcing has {} entries, expected {n}", f.len())));
            }
            f.iter()
                .enumerate()
                .map(|(i, s)| ctx.expr(&format!("forcing[{i}]"), s, &["t"]))
                .collect::<CliResult<Vec<_>>>()?
        }
        None => vec![Expression::constant(0.0, &["t"]); n],
    };
    Ok(match file.form.unwrap_or(Form::Canonical) {
        Form::Canonical => PeriodicSystem::new(period, m, q)?,
        Form::Damped => PeriodicSystem::from_damped(period, m, q)?,
    })
}

fn build_scalar(file: &ProblemFile, ctx: &Ctx) -> CliResult<ScalarProblem> {
    let period = ctx.number("period", &file.period)?;
    let limits = require(&file.limits, "limits")?;
    let p = ScalarProblem::new(
        ctx.expr("a", require(&file.a, "a")?, &["t"])?,
        ctx.expr("f", require(&file.f, "f")?, &["t"])?,
        ctx.expr("g", require(&file.g, "g")?, &["x"])?,
        (ctx.number("limits", &limits[0])?, ctx.number("limits", &limits[1])?),
        period,
        file.increasing.unwrap_or(false),
    )?;
    Ok(p.with_tolerances(ctx.tol))
}

fn build_system(file: &ProblemFile, ctx: &Ctx) -> CliResult<SystemProblem> {
    let period = ctx.number("period", &file.period)?;
    let rows = require(&file.coefficients, "coefficients")?;
    let n = rows.len();
    let names = state_names(n);
    let vars: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut a = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(input("coefficients must be square"));
        }
        for (j, s) in row.iter().enumerate() {
            a.push(ctx.expr(&format!("coefficients[{i}][{j}]"), s, &["t"])?);
        }
    }
    let f = require(&file.nonlinearity, "nonlinearity")?
        .iter()
        .enumerate()
        .map(|(i, s)| ctx.expr(&format!("nonlinearity[{i}]"), s, &vars))
        .collect::<CliResult<Vec<_>>>()?;
    let g = require(&file.forcing, "forcing")?
        .iter()
        .enumerate()
        .map(|(i, s)| ctx.expr(&format!("forcing[{i}]"), s, &["t"]))
        .collect::<CliResult<Vec<_>>>()?;
    let alpha = ctx.numbers("alpha", require(&file.alpha, "alpha")?)?;
    let beta = ctx.numbers("beta", require(&file.beta, "beta")?)?;
    Ok(SystemProblem::with_tolerances(period, a, f, alpha, beta, g, ctx.tol)?)
}

fn build_pendulum(file: &ProblemFile, ctx: &Ctx) -> CliResult<PendulumProblem> {
    let limits = require(&file.limits, "limits")?;
    let p = PendulumProblem::new(
        ctx.number("lambda", require(&file.lambda, "lambda")?)?,
        ctx.expr("g", require(&file.g, "g")?, &["x"])?,
        ctx.number("bound", require(&file.bound, "bound")?)?,
        (ctx.number("limits", &limits[0])?, ctx.number("limits", &limits[1])?),
        ctx.number("mu", require(&file.mu, "mu")?)?,
        ctx.expr("e", require(&file.e, "e")?, &["t"])?,
        ctx.number("period", &file.period)?,
    )?;
    Ok(p.with_tolerances(ctx.tol))
}

fn build_curve(file: &ProblemFile, ctx: &Ctx) -> CliResult<CurveProblem> {
    let period = ctx.number("period", &file.period)?;
    let g = ctx.expr("g", require(&file.g, "g")?, &["x"])?;
    let p = match file.kind {
        Kind::CurveFirstOrder => {
            let a = file.a.as_ref().map(|s| ctx.expr("a", s, &["t"])).transpose()?;
            CurveProblem::first_order(a, g, ctx.expr("e", require(&file.e, "e")?, &["t"])?, period)?
        }
        Kind::Scalar => {
            // the mean of f is the curve parameter; its oscillating part is e
            let f = ctx.expr("f", require(&file.f, "f")?, &["t"])?;
            let mean = sim::quadrature(|t| eval_t(&f, t), period)? / period;
            let a = ctx.expr("a", require(&file.a, "a")?, &["t"])?;
            CurveProblem::first_order(Some(a), g, f.minus_constant(mean), period)?
        }
        Kind::CurveSecondOrder | Kind::Pendulum => CurveProblem::second_order(
            ctx.number("lambda", require(&file.lambda, "lambda")?)?,
            g,
            ctx.expr("e", require(&file.e, "e")?, &["t"])?,
            period,
        )?,
        k => return Err(input(format!("kind '{}' has no curve of periodic orbits", k.name()))),
    };
    Ok(p.with_tolerances(ctx.tol))
}

fn x0_or_zero(x0: &Option<Vec<f64>>, n: usize) -> CliResult<Vec<f64>> {
    match x0 {
        Some(v) if v.len() == n => Ok(v.clone()),
        Some(v) => Err(input(format!("--x0 has {} entries, the state has {n}", v.len()))),
        None => Ok(vec![0.0; n]),
    }
}

struct Run<'a> {
    file: &'a ProblemFile,
    ctx: Ctx,
    periods: Option<usize>,
    x0: Option<Vec<f64>>,
    xi: Option<String>,
    svg: Option<PathBuf>,
}

fn analyze_linear(run: &Run) -> CliResult<Outcome> {
    let sys = build_linear(run.file, &run.ctx)?;
    linear_report(&sys, run)
}

fn linear_report(sys: &PeriodicSystem, run: &Run) -> CliResult<Outcome> {
    let tol = run.ctx.tol;
    let n = sys.dim();
    let rep = linear::monodromy_report(sys, &tol)?;
    let verdict = linear::classify(&rep);
    let mut out = Outcome {
        verdict: verdict.kind.to_string(),
        ..Default::default()
    };
    let mut spectrum = Csv::new(&["re", "im", "modulus"]);
    for z in &rep.spectrum.eigenvalues {
        spectrum.row(&[z.re, z.im, z.abs()]);
    }
    out.files.push(("spectrum.csv".into(), spectrum.as_str().to_string()));

    let m = run.periods.unwrap_or(20);
    let x0 = x0_or_zero(&run.x0, n)?;
    let mut head = verdict.kind.to_string();
    let mut details = Vec::new();
    match verdict.kind {
        VerdictKind::Case1AllUnbounded => {
            let w = linear::massera_witness(&rep)?;
            let _ = write!(head, "; witness v0 = {}; (b,v0) = {}", vec6(&w.v0), g6(w.b_dot_v0));
            let iterates = sys.period_iterates(&x0, m, &tol.ode_options())?;
            let base = crate::smatrix::dot(&x0, &w.v0);
            let mut csv = Csv::new(&iterate_header(n, "x_dot_v0").iter().map(String::as_str).collect::<Vec<_>>());
            let mut worst: f64 = 0.0;
            for (k, x) in iterates.iter().enumerate() {
                let k = k + 1;
                let proj = crate::smatrix::dot(x, &w.v0);
                worst = worst.max((proj - base - k as f64 * w.b_dot_v0).abs() / k as f64);
                let mut row = vec![k as f64];
                row.extend(x);
                row.push(proj);
                csv.row(&row);
            }
            details.push(format!(
                "growth over {m} periods: max |(x(mp),v0) - (x0,v0) - m(b,v0)| / m = {}",
                g6(worst)
            ));
            out.files.push(("iterates.csv".into(), csv.as_str().to_string()));
        }
        VerdictKind::Case2iPeriodicPlusUnbounded => {
            let u = linear::unbounded_direction(&rep)?;
            details.push(format!(
                "unbounded direction: multiplier {} with |.| = {}, direction {}, from x0 = {}",
                complex6(u.multiplier),
                g6(u.multiplier.abs()),
                vec6(&u.direction),
                vec6(&u.x0)
            ));
            periodic_details(&rep, &mut details);
        }
        VerdictKind::Case2iiAllApproachPeriodic | VerdictKind::Case2iiiAllBounded => {
            periodic_details(&rep, &mut details);
            let iterates = sys.period_iterates(&x0, m, &tol.ode_options())?;
            let ball = iterates.iter().map(|x| crate::smatrix::norm2(x)).fold(crate::smatrix::norm2(&x0), f64::max);
            details.push(format!("simulated {m} periods from {}: |x(kp)| <= {}", vec6(&x0), g6(ball)));
            let mut csv = Csv::new(&iterate_header(n, "norm").iter().map(String::as_str).collect::<Vec<_>>());
            for (k, x) in iterates.iter().enumerate() {
                let mut row = vec![(k + 1) as f64];
                row.extend(x);
                row.push(crate::smatrix::norm2(x));
                csv.row(&row);
            }
            out.files.push(("iterates.csv".into(), csv.as_str().to_string()));
        }
        VerdictKind::Uncovered => out.code = EXIT_HYPOTHESIS,
        VerdictKind::NonResonant(_) => periodic_details(&rep, &mut details),
    }
    out.line(head);
    out.line(format!("period: {}", g6(rep.period)));
    out.line(format!("spectral radius: {}", g6(rep.spectrum.spectral_radius)));
    let mults: Vec<String> = rep.spectrum.eigenvalues.iter().map(|z| complex6(*z)).collect();
    out.line(format!("multipliers: {}", mults.join(", ")));
    out.line(format!("b = x(p; 0) = {}", vec6(&rep.b)));
    out.line(format!("sigma_min(I - X(p)) = {}", g6(rep.sigma_min)));
    if let Some(d) = verdict.defect {
        out.line(format!("range defect of b: {}", g6(d)));
        let s = linear::solvability_test(sys, &tol)?;
        let res: Vec<String> = s.residuals.iter().map(|r| g6(*r)).collect();
        out.line(format!(
            "adjoint test: {} (residuals {})",
            if s.solvable { "periodic solutions exist" } else { "no periodic solution" },
            res.join(", ")
        ));
    }
    for d in details {
        out.line(d);
    }
    Ok(out)
}

fn periodic_details(rep: &linear::MonodromyReport, details: &mut Vec<String>) {
    let set = linear::periodic_initial_set(rep);
    match set.particular {
        Some(p) => details.push(format!(
            "periodic initial values: {} + span of {} kernel vector(s)",
            vec6(&p),
            set.kernel.len()
        )),
        None => details.push("no periodic initial value".into()),
    }
}

fn iterate_header(n: usize, last: &str) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend(state_names(n));
    h.push(last.to_string());
    h
}

fn analyze_scalar(run: &Run) -> CliResult<Outcome> {
    let p = build_scalar(run.file, &run.ctx)?;
    let mut out = Outcome::default();
    for w in p.warnings() {
        out.line(format!("warning: {w}"));
    }
    let v = scalar::scalar_verdict(&p)?;
    out.verdict = v.kind.to_string();
    let i = &v.interval;
    out.line(format!(
        "{}; interval ({}, {}); value {}",
        v.kind,
        g6(i.lower),
        g6(i.upper),
        g6(i.value)
    ));
    out.line(format!("integral of mu: {}", g6(i.mu_integral)));
    if i.satisfied {
        let orb = scalar::find_periodic(&p)?;
        out.line(format!(
            "periodic solution: x(0) = {}, average {}, closure {}",
            g6(orb.x0),
            g6(orb.average),
            g6(orb.closure)
        ));
        let mut csv = Csv::new(&["t", "x"]);
        for (t, x) in &orb.samples {
            csv.row(&[*t, *x]);
        }
        out.files.push(("orbit.csv".into(), csv.as_str().to_string()));
    } else {
        let m = run.periods.unwrap_or(10);
        let x0 = x0_or_zero(&run.x0, 1)?[0];
        let w = scalar::unbounded_witness(&p, x0, m)?;
        let dir = match w.orientation {
            scalar::Orientation::Increasing => "increase",
            scalar::Orientation::Decreasing => "decrease",
        };
        out.line(format!("margin alpha = {}; iterates {dir} from x0 = {}", g6(w.alpha), g6(x0)));
        match w.first_violation {
            None => out.line(format!("|x(kp) - x0| > k alpha holds for k <= {m}")),
            Some(k) => out.line(format!("margin check fails at k = {k}")),
        }
        let mut csv = Csv::new(&["k", "x"]);
        csv.row(&[0.0, x0]);
        for (k, x) in w.iterates.iter().enumerate() {
            csv.row(&[(k + 1) as f64, *x]);
        }
        out.files.push(("iterates.csv".into(), csv.as_str().to_string()));
        if !w.holds {
            out.code = EXIT_FAILURE;
        }
    }
    Ok(out)
}

fn analyze_system(run: &Run) -> CliResult<Outcome> {
    let p = build_system(run.file, &run.ctx)?;
    let mut out = Outcome::default();
    for w in p.warnings() {
        out.line(format!("warning: {w}"));
    }
    let c = semilinear::necessary_condition(&p)?;
    let verdict = match c.verdict {
        SystemVerdict::Inconclusive => "Inconclusive: necessary condition holds".to_string(),
        SystemVerdict::AllUnbounded(o) => format!("AllUnbounded: necessary condition fails ({o:?} drift)"),
    };
    out.verdict = verdict.clone();
    out.line(format!(
        "{verdict}; interval ({}, {}); value {}",
        g6(c.lower),
        g6(c.upper),
        g6(c.value)
    ));
    out.line(format!("adjoint z(0) = {}; integrals {}", vec6(&c.adjoint.z0), vec6(&c.adjoint.integrals)));
    if !c.satisfied {
        let n = p.dim();
        let m = run.periods.unwrap_or(20);
        let x0 = x0_or_zero(&run.x0, n)?;
        let r = semilinear::instability_run(&p, &x0, m)?;
        out.line(format!(
            "V over {m} periods from {}: {} -> {}, mean gain {}, {}",
            vec6(&x0),
            g6(r.v0),
            g6(r.values.last().copied().unwrap_or(r.v0)),
            g6(r.growth_rate),
            if r.strictly_increasing { "strictly increasing" } else { "not strictly increasing" }
        ));
        out.line(format!("identity defect: {}", g6(r.identity_error)));
        let mut csv = Csv::new(&iterate_header(n, "V").iter().map(String::as_str).collect::<Vec<_>>());
        let mut row = vec![0.0];
        row.extend(&x0);
        row.push(r.v0);
        csv.row(&row);
        for (k, (x, v)) in r.states.iter().zip(&r.values).enumerate() {
            let mut row = vec![(k + 1) as f64];
            row.extend(x);
            row.push(*v);
            csv.row(&row);
        }
        out.files.push(("iterates.csv".into(), csv.as_str().to_string()));
    }
    Ok(out)
}

fn analyze_pendulum(run: &Run) -> CliResult<Outcome> {
    let p = build_pendulum(run.file, &run.ctx)?;
    let mut out = Outcome::default();
    for w in p.warnings() {
        out.line(format!("warning: {w}"));
    }
    let v = pendulum::pendulum_verdict(&p)?;
    out.verdict = if v.exists { "PeriodicExists" } else { "AllUnbounded" }.to_string();
    out.line(format!(
        "{}; interval ({}, {}); mu {}",
        out.verdict,
        g6(v.interval.0),
        g6(v.interval.1),
        g6(v.mu)
    ));
    out.line(v.conclusion());
    out.line(format!(
        "slope: sup|g'| >= {} (sampled, not proven) < {} = lambda^2/4 + omega^2",
        g6(v.slope.sup_estimate),
        g6(v.slope.bound)
    ));
    let y0 = x0_or_zero(&run.x0, 2)?;
    let y0 = [y0[0], y0[1]];
    if v.exists {
        let orb = pendulum::find_periodic_2d(&p, y0)?;
        out.line(format!(
            "periodic orbit: (x, x')(0) = ({}, {}), average {}, closure {}, |mu p - int g(x)| = {}",
            g6(orb.x0),
            g6(orb.v0),
            g6(orb.average),
            g6(orb.closure),
            g6(orb.identity_defect)
        ));
        let mut csv = Csv::new(&["t", "x"]);
        for (t, x) in &orb.samples {
            csv.row(&[*t, *x]);
        }
        out.files.push(("orbit.csv".into(), csv.as_str().to_string()));
    }
    let m = run.periods.unwrap_or(20);
    let r = pendulum::poincare_2d(&p, y0, m)?;
    if !v.exists {
        out.line(format!(
            "V = x' + lambda x over {m} periods: min gain {}, {}",
            g6(r.min_gain()),
            if r.monotone { "strictly monotone" } else { "not strictly monotone" }
        ));
    }
    let mut csv = Csv::new(&["k", "x", "dx", "V"]);
    for (k, (s, vk)) in r.states.iter().zip(&r.v).enumerate() {
        csv.row(&[k as f64, s[0], s[1], *vk]);
    }
    out.files.push(("iterates.csv".into(), csv.as_str().to_string()));
    Ok(out)
}

fn curve(run: &Run) -> CliResult<Outcome> {
    let p = build_curve(run.file, &run.ctx)?;
    let spec = run.xi.clone().or_else(|| run.file.xi.clone()).unwrap_or_else(|| "-10:10:0.5".into());
    let (lo, hi, step) = parse_range(&spec)?;
    let grid = curves::xi_grid(lo, hi, step)?;
    let c = curves::trace_curve(&p, &grid)?;
    let table = curves::average_table(&c);
    let mut out = Outcome::default();
    let order = match p.order() {
        CurveOrder::First => "first-order",
        CurveOrder::Second => "second-order",
    };
    out.verdict = format!("{} points", c.points.len());
    out.line(format!(
        "{order} curve: {} grid averages in [{}, {}], {} inserted, {} failed",
        table.rows.len(),
        g6(lo),
        g6(hi),
        c.points.len() - table.rows.len(),
        c.failures.len()
    ));
    if let (Some(first), Some(last)) = (table.rows.first(), table.rows.last()) {
        out.line(format!("mu({}) = {}, mu({}) = {}", g6(first.1), g6(first.0), g6(last.1), g6(last.0)));
    }
    out.line(format!(
        "max gap between adjacent orbits: {}; mu increasing along the grid: {}",
        g6(c.max_gap()),
        table.increasing
    ));
    for (xi, e) in &c.failures {
        out.line(format!("failed at xi = {}: {e}", g6(*xi)));
    }
    let mut csv = Csv::new(&["xi", "mu", "residual", "sup_X"]);
    for pt in &c.points {
        csv.row(&[pt.xi, pt.mu, pt.orbit.residual, pt.orbit.sup_oscillation()]);
    }
    out.files.push(("curve.csv".into(), csv.as_str().to_string()));
    let mut csv = Csv::new(&["nu", "xi"]);
    for (nu, xi) in &table.rows {
        csv.row(&[*nu, *xi]);
    }
    out.files.push(("average.csv".into(), csv.as_str().to_string()));
    if let Some(path) = &run.svg {
        let pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.mu, p.xi)).collect();
        write_file(path, &svg_plot(&pts, "mean forcing", "average"))?;
        out.line(format!("plot written to {}", path.display()));
    }
    if !c.failures.is_empty() {
        out.code = EXIT_FAILURE;
    }
    Ok(out)
}

type Field<'a> = Box<dyn FnMut(f64, &[f64], &mut [f64]) -> Result<(), ExprError> + 'a>;

fn simulate(run: &Run) -> CliResult<Outcome> {
    let file = run.file;
    let ctx = &run.ctx;
    let (n, period, names, field): (usize, f64, Vec<String>, Field) = match file.kind {
        Kind::LinearSystem => {
            let sys = build_linear(file, ctx)?;
            let n = sys.dim();
            let p = sys.period();
            let mut m = vec![0.0; n * n];
            let f: Field = Box::new(move |t, x, dx| {
                for (b, e) in m.iter_mut().zip(sys.coefficients()) {
                    *b = eval_t(e, t)?;
                }
                for i in 0..n {
                    dx[i] = crate::smatrix::dot(&m[i * n..(i + 1) * n], x) + eval_t(&sys.forcing_terms()[i], t)?;
                }
                Ok(())
            });
            (n, p, state_names(n), f)
        }
        Kind::Scalar => {
            let s = build_scalar(file, ctx)?;
            let p = s.period();
            let f: Field = Box::new(move |t, x, dx| {
                dx[0] = -eval_t(s.a(), t)? * x[0] - eval_t(s.g(), x[0])? + eval_t(s.f(), t)?;
                Ok(())
            });
            (1, p, vec!["x".into()], f)
        }
        Kind::SystemSemilinear => {
            let s = build_system(file, ctx)?;
            let n = s.dim();
            let p = s.period();
            let lin = s.linear_part().clone();
            let nl = require(&file.nonlinearity, "nonlinearity")?;
            let names = state_names(n);
            let vars: Vec<&str> = names.iter().map(String::as_str).collect();
            let fs = nl.iter().map(|e| ctx.expr("nonlinearity", e, &vars)).collect::<CliResult<Vec<_>>>()?;
            let mut m = vec![0.0; n * n];
            let f: Field = Box::new(move |t, x, dx| {
                for (b, e) in m.iter_mut().zip(lin.coefficients()) {
                    *b = eval_t(e, t)?;
                }
                for i in 0..n {
                    dx[i] = crate::smatrix::dot(&m[i * n..(i + 1) * n], x) + eval_t(&lin.forcing_terms()[i], t)? - fs[i].eval(x)?;
                }
                Ok(())
            });
            (n, p, state_names(n), f)
        }
        Kind::Pendulum => {
            let s = build_pendulum(file, ctx)?;
            let p = s.period();
            let f: Field = Box::new(move |t, x, dx| {
                dx[0] = x[1];
                dx[1] = -s.lambda() * x[1] - eval_t(s.g(), x[0])? + s.mu() + eval_t(s.e(), t)?;
                Ok(())
            });
            (2, p, vec!["x".into(), "dx".into()], f)
        }
        k => {
            return Err(input(format!(
                "simulate needs a fixed forcing; kind '{}' leaves the mean forcing free",
                k.name()
            )))
        }
    };
    let m = run.periods.unwrap_or(10);
    let x0 = x0_or_zero(&run.x0, n)?;
    let traj = sim::integrate(field, 0.0, &x0, period * m as f64, &ctx.tol.ode_options())?;
    let mut header = vec!["t"];
    header.extend(names.iter().map(String::as_str));
    let mut csv = Csv::new(&header);
    let per = 32;
    let mut it = Csv::new(&{
        let mut h = vec!["k"];
        h.extend(names.iter().map(String::as_str));
        h
    });
    let mut state = vec![0.0; n];
    for k in 0..=(m * per) {
        let t = period * k as f64 / per as f64;
        traj.eval_into(t, &mut state);
        let mut row = vec![t];
        row.extend(&state);
        csv.row(&row);
        if k % per == 0 {
            let mut row = vec![(k / per) as f64];
            row.extend(&state);
            it.row(&row);
        }
    }
    let mut out = Outcome {
        verdict: "simulated".into(),
        ..Default::default()
    };
    out.line(format!("simulated {m} periods of length {} from {}", g6(period), vec6(&x0)));
    out.line(format!("x({}) = {}", g6(period * m as f64), vec6(traj.final_state())));
    out.files.push(("trajectory.csv".into(), csv.as_str().to_string()));
    out.files.push(("iterates.csv".into(), it.as_str().to_string()));
    Ok(out)
}

fn tune(run: &Run) -> CliResult<Outcome> {
    let file = run.file;
    if file.kind != Kind::LinearSystem {
        return Err(input(format!("tune needs kind 'linear-system', got '{}'", file.kind.name())));
    }
    let bracketed: Vec<(&String, [f64; 2])> = file
        .parameters
        .iter()
        .filter_map(|(k, p)| match p {
            Param::Spec(ParamSpec { bracket: Some(b), .. }) => Some((k, *b)),
            _ => None,
        })
        .collect();
    let [(name, bracket)] = bracketed.as_slice() else {
        return Err(input(format!(
            "tune needs exactly one parameter with a bracket, found {}",
            bracketed.len()
        )));
    };
    let family = |kappa: f64| -> crate::Result<PeriodicSystem> {
        let mut ctx = run.ctx.clone();
        ctx.values.insert((*name).clone(), kappa);
        build_linear(file, &ctx).map_err(|e| match e {
            CliError::Analysis(a) => a,
            e => AnalysisError::InvalidProblem(e.to_string()),
        })
    };
    let tuned = linear::tune_to_resonance(family, (bracket[0], bracket[1]), &run.ctx.tol)?;
    let mut out = linear_report(&tuned.system, run)?;
    let head = format!(
        "tuned {name} = {} (det(I - Z(p)) = {})\n",
        fmt_g(tuned.kappa, 15),
        g6(tuned.phi)
    );
    out.text.insert_str(0, &head);
    Ok(out)
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}

fn dispatch(cmd: &Command, run: &Run) -> CliResult<Outcome> {
    let kind = run.file.kind;
    let need = |ok: &[Kind], sub: &str| -> CliResult<()> {
        if ok.contains(&kind) {
            Ok(())
        } else {
            Err(input(format!("{sub} does not accept kind '{}'", kind.name())))
        }
    };
    match cmd {
        Command::AnalyzeLinear(_) => {
            need(&[Kind::LinearSystem], "analyze-linear")?;
            analyze_linear(run)
        }
        Command::AnalyzeScalar(_) => {
            need(&[Kind::Scalar], "analyze-scalar")?;
            analyze_scalar(run)
        }
        Command::AnalyzeSystem(_) => {
            need(&[Kind::SystemSemilinear], "analyze-system")?;
            analyze_system(run)
        }
        Command::AnalyzePendulum(_) => {
            need(&[Kind::Pendulum], "analyze-pendulum")?;
            analyze_pendulum(run)
        }
        Command::Curve(_) => {
            need(
                &[Kind::CurveFirstOrder, Kind::CurveSecondOrder, Kind::Scalar, Kind::Pendulum],
                "curve",
            )?;
            curve(run)
        }
        Command::Simulate(_) => simulate(run),
        Command::Tune(_) => tune(run),
    }
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::AnalyzeLinear(c)
        | Command::AnalyzeScalar(c)
        | Command::AnalyzeSystem(c)
        | Command::AnalyzePendulum(c)
        | Command::Curve(c)
        | Command::Simulate(c)
        | Command::Tune(c) => c,
    }
}

fn execute(cmd: &Command, stdout: &mut dyn Write) -> CliResult<i32> {
    let args = common(cmd);
    let file = ProblemFile::load(&args.file)?;

    let mut tol = Tolerances::default();
    if let Some(t) = &file.tolerances {
        tol.ode = t.ode.unwrap_or(tol.ode);
        tol.rank = t.rank.unwrap_or(tol.rank);
    }
    tol.ode = args.tol_ode.unwrap_or(tol.ode);
    tol.rank = args.tol_rank.unwrap_or(tol.rank);
    if !(tol.ode > 0.0 && tol.rank > 0.0) {
        return Err(input("tolerances must be positive"));
    }

    let overrides = args.params.iter().map(|s| parse_override(s)).collect::<CliResult<BTreeMap<_, _>>>()?;
    for k in overrides.keys() {
        if !file.parameters.contains_key(k) {
            return Err(input(format!("--param {k}: the problem file declares no parameter '{k}'")));
        }
    }
    let mut values = BTreeMap::new();
    let mut sweeps = Vec::new();
    for (k, p) in &file.parameters {
        match (overrides.get(k), p) {
            (Some(v), _) => {
                values.insert(k.clone(), *v);
            }
            (None, Param::Value(v)) => {
                values.insert(k.clone(), *v);
            }
            (None, Param::Spec(s)) => {
                if let Some(v) = s.value {
                    values.insert(k.clone(), v);
                }
                if let Some(sw) = &s.sweep {
                    sweeps.push((k.clone(), sw.clone()));
                }
            }
        }
    }
    let is_analysis = matches!(
        cmd,
        Command::AnalyzeLinear(_) | Command::AnalyzeScalar(_) | Command::AnalyzeSystem(_) | Command::AnalyzePendulum(_)
    );
    let x0 = args.x0.as_deref().map(parse_list).transpose()?;
    let ctx = Ctx {
        names: file.parameters.keys().cloned().collect(),
        values,
        tol,
    };
    let mut run = Run {
        file: &file,
        ctx,
        periods: args.periods,
        x0,
        xi: args.xi.clone(),
        svg: args.svg.clone(),
    };

    if is_analysis && !sweeps.is_empty() {
        if sweeps.len() > 1 {
            return Err(input("only one parameter may be swept at a time"));
        }
        let (name, spec) = &sweeps[0];
        let (lo, hi, step) = parse_range(spec)?;
        let grid = curves::xi_grid(lo, hi, step)?;
        let mut csv = Csv::new(&[name.as_str(), "verdict", "exit_code"]);
        let mut worst = EXIT_OK;
        for v in grid {
            run.ctx.values.insert(name.clone(), v);
            writeln!(stdout, "[{name} = {}]", g6(v))?;
            let (verdict, code) = match dispatch(cmd, &run) {
                Ok(o) => {
                    stdout.write_all(o.text.as_bytes())?;
                    (o.verdict, o.code)
                }
                Err(e) => {
                    writeln!(stdout, "error: {e}")?;
                    ("error".to_string(), e.exit_code())
                }
            };
            csv.text_row(&[fmt_g(v, 15), verdict.replace(',', ";"), code.to_string()]);
            worst = worst.max(code);
        }
        if let Some(dir) = &args.out {
            write_file(&dir.join("sweep.csv"), csv.as_str())?;
        }
        return Ok(worst);
    }

    let out = dispatch(cmd, &run)?;
    stdout.write_all(out.text.as_bytes())?;
    if let Some(dir) = &args.out {
        for (name, content) in &out.files {
            write_file(&dir.join(name), content)?;
        }
    }
    Ok(out.code)
}

/// Runs the command line `args` (including the program name), writing the
/// report to `stdout` and errors to `stderr`. Returns the exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_g() {
        let cases = [
            (0.0, 6, "0"),
            (1.0, 6, "1"),
            (-3.25, 6, "-3.25"),
            (21.623732, 6, "21.6237"),
            (1e-5, 6, "1e-05"),
            (123456789.0, 6, "1.23457e+08"),
            (0.0001, 6, "0.0001"),
            (100000.0, 6, "100000"),
            (1e6, 6, "1e+06"),
            (0.1 + 0.2, 15, "0.3"),
            (std::f64::consts::PI, 15, "3.14159265358979"),
            (-2.5e-300, 15, "-2.5e-300"),
        ];
        for (x, p, s) in cases {
            assert_eq!(fmt_g(x, p), s, "{x}");
        }
    }

    #[test]
    fn schema_rejects_bad_files() {
        let ok = r#"{"kind": "scalar", "period": "2*pi", "a": "sin(t)", "f": "nu + sin(t)",
                     "g": "(2/pi)*atan(x)", "limits": [-1, 1], "parameters": {"nu": 0.5}}"#;
        assert!(ProblemFile::from_json(ok).is_ok());
        let unknown = ok.replace("\"a\":", "\"aa\": 1, \"a\":");
        assert!(ProblemFile::from_json(&unknown).unwrap_err().to_string().contains("unknown field"));
        let missing = ok.replace("\"g\": \"(2/pi)*atan(x)\",", "");
        assert!(ProblemFile::from_json(&missing).unwrap_err().to_string().contains("requires field 'g'"));
        let foreign = ok.replace("\"parameters\"", "\"lambda\": 1, \"parameters\"");
        assert!(ProblemFile::from_json(&foreign).unwrap_err().to_string().contains("does not apply"));
        let err = ProblemFile::from_json("{\n \"kind\": \"scalar\",\n \"period\": }").unwrap_err();
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn parameters_bind_into_expressions() {
        let ctx = Ctx {
            names: vec!["nu".into(), "k".into()],
            values: [("nu".to_string(), 0.5)].into_iter().collect(),
            tol: Tolerances::default(),
        };
        let e = ctx.expr("f", "nu + sin(t)", &["t"]).unwrap();
        assert_eq!(e.variables(), ["t"]);
        assert!((e.eval(&[0.0]).unwrap() - 0.5).abs() < 1e-15);
        let err = ctx.expr("f", "k*t", &["t"]).unwrap_err();
        assert!(err.to_string().contains("--param k="));
        let err = ctx.expr("g", "atan(x", &["x"]).unwrap_err();
        assert!(err.to_string().contains("field 'g'"));
        assert_eq!(ctx.number("period", &Number::Expr("2*pi".into())).unwrap(), std::f64::consts::TAU);
    }

    #[test]
    fn svg_has_fixed_viewport() {
        let s = svg_plot(&[(-0.9, -10.0), (0.0, 0.0), (0.9, 10.0)], "nu", "xi");
        assert!(s.contains(r#"width="800" height="600""#));
        assert_eq!(s.matches("<polyline").count(), 1);
        assert!(s.contains(">-10<") && s.contains(">0.4<"));
    }
}
