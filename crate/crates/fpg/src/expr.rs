//! A small arithmetic expression language for user-supplied metrics and
//! projective factors.
//!
//! Grammar (standard precedence, tightest first): `^` with integer exponent,
//! unary minus, `*` `/`, `+` `-`, parentheses, and calls of the closed
//! primitive set `sqrt exp log sin cos atan`. Variables are `x1..xn` and
//! `y1..yn`; indices are checked against the problem dimension at parse time.

use crate::error::{Error, Result};
use crate::jet::{Num, ScalarField, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Atan,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Atan => "atan",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "atan" => Func::Atan,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i64),
    Call(Func, Box<Node>),
}

/// A parsed expression bound to a problem dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    n: usize,
    root: Node,
}

impl Expr {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// True when any `y` variable occurs (used to reject fiber-dependent
    /// entries where a function of x alone is required).
    pub fn references_y(&self) -> bool {
        fn walk(node: &Node) -> bool {
            match node {
                Node::Const(_) => false,
                Node::Var(Var::Y(_)) => true,
                Node::Var(Var::X(_)) => false,
                Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => walk(a),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    walk(a) || walk(b)
                }
            }
        }
        walk(&self.root)
    }

    pub fn pretty(&self) -> String {
        fn prec(node: &Node) -> u8 {
            match node {
                Node::Add(..) | Node::Sub(..) => 1,
                Node::Mul(..) | Node::Div(..) => 2,
                Node::Neg(..) => 3,
                Node::Pow(..) => 4,
                Node::Const(_) | Node::Var(_) | Node::Call(..) => 5,
            }
        }
        fn fmt(node: &Node, out: &mut String) {
            let wrap = |child: &Node, min: u8, out: &mut String| {
                let need = prec(child) < min;
                if need {
                    out.push('(');
                }
                fmt(child, out);
                if need {
                    out.push(')');
                }
            };
            match node {
                Node::Const(v) => {
                    if *v < 0.0 {
                        out.push_str(&format!("({v})"));
                    } else {
                        out.push_str(&format!("{v}"));
                    }
                }
                Node::Var(Var::X(i)) => out.push_str(&format!("x{}", i + 1)),
                Node::Var(Var::Y(i)) => out.push_str(&format!("y{}", i + 1)),
                Node::Neg(a) => {
                    out.push('-');
                    wrap(a, 3, out);
                }
                Node::Add(a, b) => {
                    wrap(a, 1, out);
                    out.push_str(" + ");
                    wrap(b, 2, out);
                }
                Node::Sub(a, b) => {
                    wrap(a, 1, out);
                    out.push_str(" - ");
                    wrap(b, 2, out);
                }
                Node::Mul(a, b) => {
                    wrap(a, 2, out);
                    out.push('*');
                    wrap(b, 3, out);
                }
                Node::Div(a, b) => {
                    wrap(a, 2, out);
                    out.push('/');
                    wrap(b, 3, out);
                }
                Node::Pow(a, e) => {
                    wrap(a, 5, out);
                    if *e < 0 {
                        out.push_str(&format!("^({e})"));
                    } else {
                        out.push_str(&format!("^{e}"));
                    }
                }
                Node::Call(f, a) => {
                    out.push_str(f.name());
                    out.push('(');
                    fmt(a, out);
                    out.push(')');
                }
            }
        }
        let mut s = String::new();
        fmt(&self.root, &mut s);
        s
    }
}

impl ScalarField for Expr {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval_num(&self, x: &[Num], y: &[Num]) -> Result<Num> {
        fn go(node: &Node, x: &[Num], y: &[Num]) -> Result<Num> {
            Ok(match node {
                Node::Const(v) => Num::Scalar(*v),
                Node::Var(Var::X(i)) => x[*i].clone(),
                Node::Var(Var::Y(i)) => y[*i].clone(),
                Node::Neg(a) => go(a, x, y)?.neg(),
                Node::Add(a, b) => go(a, x, y)?.add(&go(b, x, y)?),
                Node::Sub(a, b) => go(a, x, y)?.sub(&go(b, x, y)?),
                Node::Mul(a, b) => go(a, x, y)?.mul(&go(b, x, y)?),
                Node::Div(a, b) => go(a, x, y)?.div(&go(b, x, y)?)?,
                Node::Pow(a, e) => go(a, x, y)?.powi(*e)?,
                Node::Call(f, a) => {
                    let v = go(a, x, y)?;
                    match f {
                        Func::Sqrt => v.sqrt()?,
                        Func::Exp => v.exp()?,
                        Func::Log => v.ln()?,
                        Func::Sin => v.sin()?,
                        Func::Cos => v.cos()?,
                        Func::Atan => v.atan()?,
                    }
                }
            })
        }
        go(&self.root, x, y)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn tokenize(src: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (l, co) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        let tok = if c.is_ascii_digit() || c == '.' {
            let mut s = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_ascii_digit() || d == '.' {
                    s.push(bump(&mut chars));
                } else if d == 'e' || d == 'E' {
                    // exponent only if followed by digit or sign+digit
                    let mut look = chars.clone();
                    look.next();
                    match look.peek() {
                        Some(&x) if x.is_ascii_digit() => {
                            s.push(bump(&mut chars));
                        }
                        Some(&('+' | '-')) => {
                            let mut look2 = look.clone();
                            look2.next();
                            if matches!(look2.peek(), Some(x) if x.is_ascii_digit()) {
                                s.push(bump(&mut chars));
                                s.push(bump(&mut chars));
                            } else {
                                break;
                            }
                        }
                        _ => break,
                    }
                } else {
                    break;
                }
            }
            let v: f64 = s.parse().map_err(|_| Error::Syntax {
                line: l,
                col: co,
                expected: format!("number (got '{s}')"),
            })?;
            Tok::Num(v)
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    s.push(bump(&mut chars));
                } else {
                    break;
                }
            }
            Tok::Ident(s)
        } else {
            let t = match c {
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '^' => Tok::Caret,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                other => {
                    return Err(Error::Syntax {
                        line: l,
                        col: co,
                        expected: format!("operator, number or identifier (got '{other}')"),
                    })
                }
            };
            bump(&mut chars);
            t
        };
        out.push(Spanned { tok, line: l, col: co });
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    n: usize,
    end_line: usize,
    end_col: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|s| (s.line, s.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn err(&self, expected: &str) -> Error {
        let (line, col) = self.here();
        Error::Syntax {
            line,
            col,
            expected: expected.to_string(),
        }
    }

    fn eat(&mut self, want: &Tok, expected: &str) -> Result<()> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(expected))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let neg = if self.peek() == Some(&Tok::Minus) {
                self.pos += 1;
                true
            } else {
                false
            };
            let mut paren = false;
            if self.peek() == Some(&Tok::LParen) {
                self.pos += 1;
                paren = true;
            }
            let sign = if paren && self.peek() == Some(&Tok::Minus) {
                self.pos += 1;
                -1
            } else {
                1
            };
            let e = match self.peek() {
                Some(Tok::Num(v)) if v.fract() == 0.0 => {
                    let e = *v as i64;
                    self.pos += 1;
                    e
                }
                _ => return Err(self.err("integer exponent")),
            };
            if paren {
                self.eat(&Tok::RParen, "')'")?;
            }
            let e = if neg { -e } else { sign * e };
            Ok(Node::Pow(Box::new(base), e))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.eat(&Tok::RParen, "')'")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(f) = Func::from_name(&name) {
                    self.eat(&Tok::LParen, "'(' after function name")?;
                    let arg = self.expr()?;
                    self.eat(&Tok::RParen, "')'")?;
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                let (kind, digits) = name.split_at(1);
                if (kind == "x" || kind == "y") && !digits.is_empty() {
                    if let Ok(idx) = digits.parse::<usize>() {
                        if idx == 0 || idx > self.n {
                            return Err(Error::Dimension(format!(
                                "variable {name} out of range for dimension {}",
                                self.n
                            )));
                        }
                        let v = if kind == "x" {
                            Var::X(idx - 1)
                        } else {
                            Var::Y(idx - 1)
                        };
                        return Ok(Node::Var(v));
                    }
                }
                Err(Error::UnknownIdentifier(name))
            }
            _ => Err(self.err("number, variable, function call or '('")),
        }
    }
}

/// Parse `src` into an expression bound to dimension `n`.
pub fn parse(src: &str, n: usize) -> Result<Expr> {
    if src.trim().is_empty() {
        return Err(Error::Syntax {
            line: 1,
            col: 1,
            expected: "nonempty expression".into(),
        });
    }
    let toks = tokenize(src)?;
    let lines = src.lines().count().max(1);
    let last_len = src.lines().last().map(|l| l.len()).unwrap_or(0);
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        n,
        end_line: lines,
        end_col: last_len + 1,
    };
    let root = p.expr()?;
    if p.pos != toks.len() {
        return Err(p.err("end of input"));
    }
    Ok(Expr { n, root })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::EvalPoint;
    use proptest::prelude::*;

    #[test]
    fn euclidean_norm_parses_and_evals() {
        let e = parse("sqrt(y1^2+y2^2+y3^2)", 3).unwrap();
        let p = EvalPoint::new(vec![0.0; 3], vec![3.0, 4.0, 0.0]).unwrap();
        assert_eq!(e.eval(&p).unwrap(), 5.0);
    }

    #[test]
    fn linear_factor_evals() {
        let e = parse("0.05*(y1 + x1*y2)", 3).unwrap();
        let p = EvalPoint::new(vec![0.1, 0.2, 0.3], vec![1.0, 0.5, -0.25]).unwrap();
        let v = e.eval(&p).unwrap();
        assert!((v - 0.05 * (1.0 + 0.1 * 0.5)).abs() < 1e-16);
        assert!((v - 0.0525).abs() < 1e-16);
    }

    #[test]
    fn out_of_range_index_is_dimension_error() {
        assert!(matches!(parse("y4", 3), Err(crate::error::Error::Dimension(_))));
    }

    #[test]
    fn unknown_identifier() {
        assert!(matches!(
            parse("tanh(y1)", 3),
            Err(crate::error::Error::UnknownIdentifier(_))
        ));
    }

    #[test]
    fn syntax_error_carries_position() {
        match parse("y1 + * y2", 3) {
            Err(crate::error::Error::Syntax { line, col, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(col, 6);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        let e = parse("-y1^2", 1).unwrap();
        let p = EvalPoint::new(vec![0.0], vec![3.0]).unwrap();
        assert_eq!(e.eval(&p).unwrap(), -9.0);
    }

    #[test]
    fn negative_exponent() {
        let e = parse("y1^-2", 1).unwrap();
        let p = EvalPoint::new(vec![0.0], vec![2.0]).unwrap();
        assert_eq!(e.eval(&p).unwrap(), 0.25);
    }

    #[test]
    fn fractional_exponent_rejected() {
        assert!(matches!(
            parse("y1^1.5", 1),
            Err(crate::error::Error::Syntax { .. })
        ));
    }

    #[test]
    fn jet_order_zero_matches_plain_eval() {
        use crate::jet::{directional_derivative, euler_degree};
        let e = parse("sqrt(y1^2+y2^2+y3^2) + 0.1*x2*y1", 3).unwrap();
        let mut rng = crate::sample::SeededRng::new(7);
        for _ in 0..1000 {
            let p = crate::sample::sample_point(3, &crate::sample::Domain::default_box(3), &mut rng);
            let plain = e.eval(&p).unwrap();
            // order-zero through a jet evaluation
            let mut dir = vec![0.0; 6];
            dir[3..].copy_from_slice(&p.y);
            let _ = directional_derivative(&e, &p, &[dir]).unwrap();
            let _ = euler_degree(&e, &p);
            let again = e.eval(&p).unwrap();
            assert_eq!(plain, again);
        }
    }

    fn arb_node(n: usize, depth: u32) -> BoxedStrategy<Node> {
        let leaf = prop_oneof![
            (0.0f64..10.0).prop_map(Node::Const),
            (0..n).prop_map(|i| Node::Var(Var::X(i))),
            (0..n).prop_map(|i| Node::Var(Var::Y(i))),
        ];
        leaf.prop_recursive(depth, 64, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Node::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Node::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Node::Mul(Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
                (inner.clone(), 0i64..5).prop_map(|(a, e)| Node::Pow(Box::new(a), e)),
                inner
                    .clone()
                    .prop_map(|a| Node::Call(Func::Sin, Box::new(a))),
            ]
        })
        .boxed()
    }

    proptest! {
        #[test]
        fn pretty_print_parse_is_a_fixpoint(root in arb_node(3, 4)) {
            let e = Expr { n: 3, root };
            let printed = e.pretty();
            let reparsed = parse(&printed, 3).unwrap();
            prop_assert_eq!(reparsed.pretty(), printed);
        }
    }
}
