//! Scalar expressions over named real variables.
//!
//! Problem files describe coefficients `a(t)`, matrix entries, forcings and
//! nonlinearities `g(x)` as plain text such as `"(2/pi)*atan(x)"`. This module
//! parses them with a small recursive-descent parser, evaluates them in `f64`
//! and differentiates them symbolically (used for Jacobians and derivative
//! bounds).
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          // right-associative
//! primary := number | ident | ident '(' sum ')' | '(' sum ')'
//! ```
//!
//! Implicit multiplication (`2t`) is rejected. Evaluation never returns NaN
//! silently: any non-finite intermediate produced from finite operands is a
//! [`ExprError::Domain`] naming the offending subexpression.

use std::collections::HashMap;
use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: String },
    #[error("variable `{0}` is not bound")]
    Unbound(String),
    #[error("expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("expressions are declared over different variables")]
    VariableMismatch,
}

/// Built-in functions. `sign` is what `abs` differentiates into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Atan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Tanh,
    Sign,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "atan" => Func::Atan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Atan => "atan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Sign => "sign",
        }
    }

    fn apply(self, x: f64) -> Result<f64, String> {
        match self {
            Func::Ln if x <= 0.0 => return Err(format!("ln of non-positive value {x}")),
            Func::Sqrt if x < 0.0 => return Err(format!("sqrt of negative value {x}")),
            _ => {}
        }
        Ok(match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Atan => x.atan(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
            Func::Tanh => x.tanh(),
            Func::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn apply(self, a: f64, b: f64) -> Result<f64, String> {
        match self {
            BinOp::Add => Ok(a + b),
            BinOp::Sub => Ok(a - b),
            BinOp::Mul => Ok(a * b),
            BinOp::Div if b == 0.0 => Err("division by zero".into()),
            BinOp::Div => Ok(a / b),
            BinOp::Pow => Ok(a.powf(b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression together with the ordered variable list it was
/// declared over. Values are passed positionally in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    node: Node,
    vars: Arc<[String]>,
}

impl Expression {
    pub fn parse(src: &str, variables: &[&str]) -> Result<Expression, ExprError> {
        let vars: Arc<[String]> = variables.iter().map(|v| v.to_string()).collect();
        let tokens = tokenize(src)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            vars: &vars,
            end: src.len(),
        };
        let node = parser.sum()?;
        if let Some(tok) = parser.peek() {
            return Err(ExprError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {}", tok.kind.describe()),
            });
        }
        Ok(Expression { node, vars })
    }

    pub fn constant(value: f64, variables: &[&str]) -> Expression {
        Expression {
            node: Node::Const(value),
            vars: variables.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    /// Evaluates with values given in declaration order.
    pub fn eval(&self, values: &[f64]) -> Result<f64, ExprError> {
        if values.len() != self.vars.len() {
            return Err(ExprError::Arity {
                expected: self.vars.len(),
                got: values.len(),
            });
        }
        self.eval_node(&self.node, values)
    }

    /// Evaluates with a name-to-value map covering every declared variable.
    pub fn evaluate(&self, bindings: &HashMap<String, f64>) -> Result<f64, ExprError> {
        let values = self
            .vars
            .iter()
            .map(|v| bindings.get(v).copied().ok_or_else(|| ExprError::Unbound(v.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        self.eval(&values)
    }

    /// Evaluation of a one-variable expression.
    pub fn eval1(&self, x: f64) -> Result<f64, ExprError> {
        self.eval(&[x])
    }

    fn eval_node(&self, node: &Node, values: &[f64]) -> Result<f64, ExprError> {
        let out = match node {
            Node::Const(c) => return Ok(*c),
            Node::Var(i) => return Ok(values[*i]),
            Node::Neg(a) => -self.eval_node(a, values)?,
            Node::Bin(op, a, b) => {
                let x = self.eval_node(a, values)?;
                let y = self.eval_node(b, values)?;
                op.apply(x, y).map_err(|reason| self.domain(node, reason))?
            }
            Node::Call(f, a) => {
                let x = self.eval_node(a, values)?;
                f.apply(x).map_err(|reason| self.domain(node, reason))?
            }
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(self.domain(node, format!("non-finite result {out}")))
        }
    }

    fn domain(&self, node: &Node, reason: String) -> ExprError {
        ExprError::Domain {
            expr: Printer { node, vars: &self.vars }.to_string(),
            reason,
        }
    }

    /// Exact symbolic derivative with respect to `var`, with constant folding.
    ///
    /// `abs` is differentiated to `sign`, so `abs'(0) = 0`.
    pub fn differentiate(&self, var: &str) -> Result<Expression, ExprError> {
        let idx = self
            .index_of(var)
            .ok_or_else(|| ExprError::Unbound(var.to_string()))?;
        Ok(Expression {
            node: diff(&self.node, idx),
            vars: self.vars.clone(),
        })
    }

    /// Replaces variable `name` by a constant and drops it from the
    /// variable list.
    pub fn bind(&self, name: &str, value: f64) -> Expression {
        let Some(idx) = self.index_of(name) else {
            return self.clone();
        };
        let vars: Arc<[String]> = self
            .vars
            .iter()
            .filter(|v| *v != name)
            .cloned()
            .collect();
        Expression {
            node: substitute(&self.node, idx, value),
            vars,
        }
    }

    pub fn depends_on(&self, var: &str) -> bool {
        fn walk(n: &Node, i: usize) -> bool {
            match n {
                Node::Const(_) => false,
                Node::Var(j) => *j == i,
                Node::Neg(a) | Node::Call(_, a) => walk(a, i),
                Node::Bin(_, a, b) => walk(a, i) || walk(b, i),
            }
        }
        self.index_of(var).is_some_and(|i| walk(&self.node, i))
    }

    /// The value if the tree is a single constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.node {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn neg(&self) -> Expression {
        Expression {
            node: neg(self.node.clone()),
            vars: self.vars.clone(),
        }
    }

    pub fn combine(&self, op: BinOp, other: &Expression) -> Result<Expression, ExprError> {
        if self.vars != other.vars {
            return Err(ExprError::VariableMismatch);
        }
        Ok(Expression {
            node: bin(op, self.node.clone(), other.node.clone()),
            vars: self.vars.clone(),
        })
    }

    pub fn minus_constant(&self, c: f64) -> Expression {
        Expression {
            node: bin(BinOp::Sub, self.node.clone(), Node::Const(c)),
            vars: self.vars.clone(),
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer {
            node: &self.node,
            vars: &self.vars,
        }
        .fmt(f)
    }
}

struct Printer<'a> {
    node: &'a Node,
    vars: &'a [String],
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |node| Printer { node, vars: self.vars };
        match self.node {
            Node::Const(c) if *c < 0.0 => write!(f, "(-{})", -c),
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "{}", self.vars[*i]),
            Node::Neg(a) => write!(f, "(-{})", sub(a)),
            Node::Bin(op, a, b) => write!(f, "({} {} {})", sub(a), op.symbol(), sub(b)),
            Node::Call(func, a) => write!(f, "{}({})", func.name(), sub(a)),
        }
    }
}

// ---- constant-folding constructors ----

fn is_const(n: &Node, v: f64) -> bool {
    matches!(n, Node::Const(c) if *c == v)
}

fn neg(a: Node) -> Node {
    match a {
        Node::Const(c) => Node::Const(-c),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn bin(op: BinOp, a: Node, b: Node) -> Node {
    if let (Node::Const(x), Node::Const(y)) = (&a, &b) {
        if let Ok(v) = op.apply(*x, *y) {
            if v.is_finite() {
                return Node::Const(v);
            }
        }
    }
    match op {
        BinOp::Add if is_const(&a, 0.0) => b,
        BinOp::Add if is_const(&b, 0.0) => a,
        BinOp::Sub if is_const(&b, 0.0) => a,
        BinOp::Sub if is_const(&a, 0.0) => neg(b),
        BinOp::Mul if is_const(&a, 0.0) || is_const(&b, 0.0) => Node::Const(0.0),
        BinOp::Mul if is_const(&a, 1.0) => b,
        BinOp::Mul if is_const(&b, 1.0) => a,
        BinOp::Div if is_const(&a, 0.0) => Node::Const(0.0),
        BinOp::Div if is_const(&b, 1.0) => a,
        BinOp::Pow if is_const(&b, 0.0) => Node::Const(1.0),
        BinOp::Pow if is_const(&b, 1.0) => a,
        _ => Node::Bin(op, Box::new(a), Box::new(b)),
    }
}

fn call(f: Func, a: Node) -> Node {
    if let Node::Const(x) = a {
        if let Ok(v) = f.apply(x) {
            if v.is_finite() {
                return Node::Const(v);
            }
        }
    }
    Node::Call(f, Box::new(a))
}

fn depends(n: &Node, i: usize) -> bool {
    match n {
        Node::Const(_) => false,
        Node::Var(j) => *j == i,
        Node::Neg(a) | Node::Call(_, a) => depends(a, i),
        Node::Bin(_, a, b) => depends(a, i) || depends(b, i),
    }
}

fn diff(n: &Node, i: usize) -> Node {
    use BinOp::*;
    match n {
        Node::Const(_) => Node::Const(0.0),
        Node::Var(j) => Node::Const(if *j == i { 1.0 } else { 0.0 }),
        Node::Neg(a) => neg(diff(a, i)),
        Node::Bin(op, a, b) => {
            let (a, b) = (a.as_ref(), b.as_ref());
            match op {
                Add => bin(Add, diff(a, i), diff(b, i)),
                Sub => bin(Sub, diff(a, i), diff(b, i)),
                Mul => bin(
                    Add,
                    bin(Mul, diff(a, i), b.clone()),
                    bin(Mul, a.clone(), diff(b, i)),
                ),
                Div => bin(
                    Div,
                    bin(
                        Sub,
                        bin(Mul, diff(a, i), b.clone()),
                        bin(Mul, a.clone(), diff(b, i)),
                    ),
                    bin(Pow, b.clone(), Node::Const(2.0)),
                ),
                Pow if !depends(b, i) => {
                    // b * a^(b-1) * a'
                    bin(
                        Mul,
                        bin(
                            Mul,
                            b.clone(),
                            bin(Pow, a.clone(), bin(Sub, b.clone(), Node::Const(1.0))),
                        ),
                        diff(a, i),
                    )
                }
                Pow if !depends(a, i) => {
                    // ln(a) * a^b * b'
                    bin(
                        Mul,
                        bin(Mul, call(Func::Ln, a.clone()), n.clone()),
                        diff(b, i),
                    )
                }
                Pow => {
                    // a^b * (b' ln a + b a' / a)
                    bin(
                        Mul,
                        n.clone(),
                        bin(
                            Add,
                            bin(Mul, diff(b, i), call(Func::Ln, a.clone())),
                            bin(Div, bin(Mul, b.clone(), diff(a, i)), a.clone()),
                        ),
                    )
                }
            }
        }
        Node::Call(f, a) => {
            let inner = a.as_ref();
            let outer = match f {
                Func::Sin => call(Func::Cos, inner.clone()),
                Func::Cos => neg(call(Func::Sin, inner.clone())),
                Func::Tan => bin(
                    Div,
                    Node::Const(1.0),
                    bin(Pow, call(Func::Cos, inner.clone()), Node::Const(2.0)),
                ),
                Func::Atan => bin(
                    Div,
                    Node::Const(1.0),
                    bin(
                        Add,
                        Node::Const(1.0),
                        bin(Pow, inner.clone(), Node::Const(2.0)),
                    ),
                ),
                Func::Exp => n.clone(),
                Func::Ln => bin(Div, Node::Const(1.0), inner.clone()),
                Func::Sqrt => bin(Div, Node::Const(0.5), n.clone()),
                Func::Abs => call(Func::Sign, inner.clone()),
                Func::Tanh => bin(
                    Sub,
                    Node::Const(1.0),
                    bin(Pow, n.clone(), Node::Const(2.0)),
                ),
                Func::Sign => Node::Const(0.0),
            };
            bin(Mul, outer, diff(inner, i))
        }
    }
}

fn substitute(n: &Node, idx: usize, value: f64) -> Node {
    match n {
        Node::Const(c) => Node::Const(*c),
        Node::Var(j) if *j == idx => Node::Const(value),
        Node::Var(j) if *j > idx => Node::Var(j - 1),
        Node::Var(j) => Node::Var(*j),
        Node::Neg(a) => neg(substitute(a, idx, value)),
        Node::Bin(op, a, b) => bin(*op, substitute(a, idx, value), substitute(b, idx, value)),
        Node::Call(f, a) => call(*f, substitute(a, idx, value)),
    }
}

// ---- lexer ----

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(v) => format!("number {v}"),
            TokKind::Ident(s) => format!("identifier `{s}`"),
            TokKind::Op(c) => format!("`{c}`"),
            TokKind::LParen => "`(`".into(),
            TokKind::RParen => "`)`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent only when followed by digits, so `2e` stays an error
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push(Token {
                    kind: TokKind::Num(v),
                    offset: start,
                });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    kind: TokKind::Ident(src[start..i].to_string()),
                    offset: start,
                });
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push(Token {
                    kind: TokKind::Op(c as char),
                    offset: start,
                });
                i += 1;
            }
            b'(' => {
                out.push(Token {
                    kind: TokKind::LParen,
                    offset: start,
                });
                i += 1;
            }
            b')' => {
                out.push(Token {
                    kind: TokKind::RParen,
                    offset: start,
                });
                i += 1;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    vars: &'a [String],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokKind::Op(c),
                ..
            }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expected(&self, what: &str) -> ExprError {
        let found = self
            .peek()
            .map_or_else(|| "end of input".to_string(), |t| t.kind.describe());
        ExprError::Syntax {
            offset: self.offset(),
            message: format!("expected {what}, found {found}"),
        }
    }

    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.product()?;
        while let Some(c) = self.eat_op(&['+', '-']) {
            let rhs = self.product()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.eat_op(&['^']).is_some() {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.expected("an operand"));
        };
        match tok.kind {
            TokKind::Num(v) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            TokKind::LParen => {
                self.pos += 1;
                let inner = self.sum()?;
                self.close_paren()?;
                Ok(inner)
            }
            TokKind::Ident(name) => {
                self.pos += 1;
                if matches!(self.peek(), Some(Token { kind: TokKind::LParen, .. })) {
                    let func = Func::from_name(&name).ok_or(ExprError::UnknownFunction {
                        name: name.clone(),
                        offset: tok.offset,
                    })?;
                    self.pos += 1;
                    let arg = self.sum()?;
                    self.close_paren()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(i));
                }
                match name.as_str() {
                    "pi" => Ok(Node::Const(PI)),
                    "e" => Ok(Node::Const(E)),
                    _ => Err(ExprError::UnknownIdentifier {
                        name,
                        offset: tok.offset,
                    }),
                }
            }
            _ => Err(self.expected("an operand")),
        }
    }

    fn close_paren(&mut self) -> Result<(), ExprError> {
        match self.peek() {
            Some(Token {
                kind: TokKind::RParen,
                ..
            }) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.expected("`)`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(src: &str, vars: &[&str], vals: &[f64]) -> f64 {
        Expression::parse(src, vars).unwrap().eval(vals).unwrap()
    }

    #[test]
    fn parse_and_evaluate_basics() {
        assert_eq!(ev("2*sin(t)+1", &["t"], &[0.0]), 1.0);
        assert_eq!(ev("2+3*4^2", &[], &[]), 50.0);
        assert_eq!(ev("exp(1-cos(t))", &["t"], &[0.0]), 1.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("-2^2", &[], &[]), -4.0);
        assert_eq!(ev("2^3^2", &[], &[]), 512.0);
        assert_eq!(ev("2^-1", &[], &[]), 0.5);
        assert_eq!(ev("8/4/2", &[], &[]), 1.0);
        assert_eq!(ev("1-2-3", &[], &[]), -4.0);
        assert_eq!(ev("1.5e2 + 2E-1", &[], &[]), 150.2);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let err = Expression::parse("sin(", &["t"]).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { offset: 4, .. }), "{err:?}");
        let err = Expression::parse("2t", &["t"]).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { offset: 1, .. }), "{err:?}");
        let err = Expression::parse("1 + y", &["t"]).unwrap_err();
        assert_eq!(
            err,
            ExprError::UnknownIdentifier {
                name: "y".into(),
                offset: 4
            }
        );
        let err = Expression::parse("foo(t)", &["t"]).unwrap_err();
        assert!(matches!(err, ExprError::UnknownFunction { offset: 0, .. }));
        assert!(Expression::parse("(1", &[]).is_err());
        assert!(Expression::parse("1 $ 2", &[]).is_err());
    }

    #[test]
    fn arctan_limit_matches_declared_saturation() {
        let g = Expression::parse("(2/pi)*atan(x)", &["x"]).unwrap();
        assert!((g.eval1(1e12).unwrap() - 1.0).abs() < 1e-9);
        assert!((g.eval1(-1e12).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn domain_errors_are_reported() {
        let e = Expression::parse("1/x", &["x"]).unwrap();
        assert!(matches!(e.eval1(0.0), Err(ExprError::Domain { .. })));
        let e = Expression::parse("ln(x) + 1", &["x"]).unwrap();
        match e.eval1(-1.0) {
            Err(ExprError::Domain { expr, .. }) => assert_eq!(expr, "ln(x)"),
            other => panic!("{other:?}"),
        }
        let e = Expression::parse("sqrt(x)", &["x"]).unwrap();
        assert!(e.eval1(-1.0).is_err());
        let e = Expression::parse("exp(x)", &["x"]).unwrap();
        assert!(e.eval1(1000.0).is_err());
    }

    #[test]
    fn named_bindings() {
        let e = Expression::parse("x*y + t", &["t", "x", "y"]).unwrap();
        let b: HashMap<String, f64> =
            [("t".into(), 1.0), ("x".into(), 2.0), ("y".into(), 3.0)].into();
        assert_eq!(e.evaluate(&b).unwrap(), 7.0);
        let partial: HashMap<String, f64> = [("t".into(), 1.0)].into();
        assert_eq!(e.evaluate(&partial), Err(ExprError::Unbound("x".into())));
    }

    #[test]
    fn derivatives() {
        let d = Expression::parse("atan(x)", &["x"]).unwrap().differentiate("x").unwrap();
        assert_eq!(d.eval1(0.0).unwrap(), 1.0);
        assert!((d.eval1(2.0).unwrap() - 0.2).abs() < 1e-15);
        let d = Expression::parse("2*sin(t)", &["t"]).unwrap().differentiate("t").unwrap();
        assert_eq!(d.eval1(0.0).unwrap(), 2.0);
        let d = Expression::parse("(2/pi)*atan(x)", &["x"])
            .unwrap()
            .differentiate("x")
            .unwrap();
        assert!((d.eval1(0.0).unwrap() - 0.636_619_772_367_581_3).abs() < 1e-15);
        // abs'(0) = 0 by convention
        let d = Expression::parse("abs(x)", &["x"]).unwrap().differentiate("x").unwrap();
        assert_eq!(d.eval1(0.0).unwrap(), 0.0);
        assert_eq!(d.eval1(-3.0).unwrap(), -1.0);
    }

    #[test]
    fn constant_folding_in_derivatives() {
        let d = Expression::parse("3*x + 2", &["x"]).unwrap().differentiate("x").unwrap();
        assert_eq!(d.as_constant(), Some(3.0));
        let d = Expression::parse("sin(t)", &["t", "x"]).unwrap().differentiate("x").unwrap();
        assert_eq!(d.as_constant(), Some(0.0));
    }

    #[test]
    fn bind_substitutes_parameters() {
        let f = Expression::parse("nu + sin(t)", &["t", "nu"]).unwrap();
        let g = f.bind("nu", 0.5);
        assert_eq!(g.variables(), &["t".to_string()]);
        assert_eq!(g.eval1(0.0).unwrap(), 0.5);
        assert!(!g.depends_on("nu"));
        let h = Expression::parse("nu * t", &["nu", "t"]).unwrap().bind("nu", 2.0);
        assert_eq!(h.eval1(3.0).unwrap(), 6.0);
    }

    const SAMPLES: [&str; 8] = [
        "(2/pi)*atan(x) + sin(y)*x^2",
        "exp(1-cos(x)) - y/(1+x^2)",
        "tanh(3*x - y) * cos(x*y)",
        "sqrt(1 + x^2 + y^2) * atan(y)",
        "ln(2 + sin(x)) + abs(y)^3",
        "(x - y)^3 / (2 + cos(y))",
        "-x^2 + 2^x - tan(0.3*y)",
        "abs(x)^(1 + y^2/10) + x*y",
    ];

    proptest! {
        #[test]
        fn print_parse_round_trip(idx in 0usize..SAMPLES.len(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let e = Expression::parse(SAMPLES[idx], &["x", "y"]).unwrap();
            let printed = e.to_string();
            let back = Expression::parse(&printed, &["x", "y"]).unwrap();
            let a = e.eval(&[x, y]).unwrap();
            let b = back.eval(&[x, y]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{printed}: {a} vs {b}");
        }

        #[test]
        fn derivative_matches_central_difference(idx in 0usize..SAMPLES.len(), x in 0.2f64..2.5, y in -2.5f64..2.5) {
            // x kept positive so the general power rule stays in its domain
            let e = Expression::parse(SAMPLES[idx], &["x", "y"]).unwrap();
            for (k, var) in ["x", "y"].iter().enumerate() {
                let d = e.differentiate(var).unwrap();
                let sym = d.eval(&[x, y]).unwrap();
                let h = 1e-6;
                let mut p = [x, y];
                let mut m = [x, y];
                p[k] += h;
                m[k] -= h;
                let fd = (e.eval(&p).unwrap() - e.eval(&m).unwrap()) / (2.0 * h);
                prop_assert!((sym - fd).abs() <= 1e-5 * sym.abs().max(1.0), "{var} of {}: {sym} vs {fd}", SAMPLES[idx]);
            }
        }
    }
}
