//! Equivalence checking for a LaTeX arithmetic subset.
//!
//! Supported: integers, decimals, `+ - * /`, `\cdot`, `\times`, `\div`, `^`,
//! `\frac`, `\sqrt` (with optional index), `\pi`, single-letter and Greek
//! variables (optionally subscripted), parentheses, brackets, brace groups and
//! implicit multiplication. Constant expressions compare exactly where the value
//! is rational; anything else is compared by evaluating both sides at shared
//! seeded random assignments.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SAMPLE_POINTS: usize = 16;
pub const RELATIVE_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 0x5EED_CAFE;

/// Bit budget for exact powers before falling back to floating point.
const MAX_EXACT_BITS: u64 = 1 << 16;

const GREEK: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "epsilon", "varepsilon", "zeta", "eta", "theta",
    "vartheta", "iota", "kappa", "lambda", "mu", "nu", "xi", "rho", "sigma", "tau", "upsilon",
    "phi", "varphi", "chi", "psi", "omega",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(BigRational),
    Var(String),
    Pi,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Root { radicand: Box<Expr>, index: Option<Box<Expr>> },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Cmd(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Underscore,
    Open(char),
    Close(char),
}

fn tokenize(s: &str) -> Option<Vec<Tok>> {
    let chars: Vec<char> = s.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                let mut seen_dot = false;
                while i < chars.len() && (chars[i].is_ascii_digit() || (chars[i] == '.' && !seen_dot)) {
                    seen_dot |= chars[i] == '.';
                    i += 1;
                }
                let lit: String = chars[start..i].iter().collect();
                if lit == "." {
                    return None;
                }
                toks.push(Tok::Num(lit));
            }
            'a'..='z' | 'A'..='Z' => {
                toks.push(Tok::Ident(c.to_string()));
                i += 1;
            }
            '\\' => {
                i += 1;
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphabetic() {
                    i += 1;
                }
                if start == i {
                    // escaped braces act as grouping
                    match chars.get(i) {
                        Some('{') => toks.push(Tok::Open('{')),
                        Some('}') => toks.push(Tok::Close('}')),
                        _ => return None,
                    }
                    i += 1;
                } else {
                    toks.push(Tok::Cmd(chars[start..i].iter().collect()));
                }
            }
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                toks.push(Tok::Star);
                i += 1;
            }
            '/' => {
                toks.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                toks.push(Tok::Caret);
                i += 1;
            }
            '_' => {
                toks.push(Tok::Underscore);
                i += 1;
            }
            '(' | '[' | '{' => {
                toks.push(Tok::Open(c));
                i += 1;
            }
            ')' | ']' | '}' => {
                toks.push(Tok::Close(c));
                i += 1;
            }
            _ => return None,
        }
    }
    Some(toks)
}

fn closer(open: char) -> char {
    match open {
        '(' => ')',
        '[' => ']',
        _ => '}',
    }
}

fn parse_decimal(lit: &str) -> Option<BigRational> {
    let (int_part, frac_part) = lit.split_once('.').unwrap_or((lit, ""));
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    Some(BigRational::new(numer, denom))
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect_close(&mut self, c: char) -> Option<()> {
        (self.next()? == Tok::Close(c)).then_some(())
    }

    fn enter(&mut self) -> Option<()> {
        self.depth += 1;
        (self.depth < 200).then_some(())
    }

    fn expr(&mut self) -> Option<Expr> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        self.depth -= 1;
        Some(lhs)
    }

    fn starts_operand(&self) -> bool {
        match self.peek() {
            Some(Tok::Num(_) | Tok::Ident(_) | Tok::Open(_)) => true,
            Some(Tok::Cmd(c)) => is_operand_cmd(c),
            _ => false,
        }
    }

    fn term(&mut self) -> Option<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Cmd(c)) if c == "cdot" || c == "times" => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Cmd(c)) if c == "div" => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ if self.starts_operand() => {
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.power()?));
                }
                _ => break,
            }
        }
        Some(lhs)
    }

    fn unary(&mut self) -> Option<Expr> {
        self.enter()?;
        let e = match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                Expr::Neg(Box::new(self.unary()?))
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()?
            }
            _ => self.power()?,
        };
        self.depth -= 1;
        Some(e)
    }

    fn power(&mut self) -> Option<Expr> {
        let base = self.primary()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exponent = self.script_argument()?;
            return Some(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Some(base)
    }

    /// A brace group, or a single token with multi-digit numbers split after the
    /// first digit (`x^23` is `x^2 * 3`).
    fn script_argument(&mut self) -> Option<Expr> {
        match self.peek()? {
            Tok::Open('{') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_close('}')?;
                Some(e)
            }
            Tok::Num(lit) => {
                let lit = lit.clone();
                let mut chars = lit.chars();
                let first = chars.next()?;
                let rest: String = chars.collect();
                if rest.is_empty() {
                    self.pos += 1;
                } else {
                    self.toks[self.pos] = Tok::Num(rest);
                }
                parse_decimal(&first.to_string()).map(Expr::Num)
            }
            Tok::Minus => {
                self.pos += 1;
                Some(Expr::Neg(Box::new(self.script_argument()?)))
            }
            _ => self.primary(),
        }
    }

    fn group_argument(&mut self) -> Option<Expr> {
        self.script_argument()
    }

    fn primary(&mut self) -> Option<Expr> {
        self.enter()?;
        let e = match self.next()? {
            Tok::Num(lit) => Expr::Num(parse_decimal(&lit)?),
            Tok::Ident(name) => {
                let mut name = name;
                if self.peek() == Some(&Tok::Underscore) {
                    self.pos += 1;
                    name.push('_');
                    name.push_str(&self.subscript_label()?);
                }
                Expr::Var(name)
            }
            Tok::Open(c) => {
                let e = self.expr()?;
                self.expect_close(closer(c))?;
                e
            }
            Tok::Cmd(cmd) => match cmd.as_str() {
                "pi" => Expr::Pi,
                "frac" => {
                    let num = self.group_argument()?;
                    let den = self.group_argument()?;
                    Expr::Div(Box::new(num), Box::new(den))
                }
                "sqrt" => {
                    let index = if self.peek() == Some(&Tok::Open('[')) {
                        self.pos += 1;
                        let idx = self.expr()?;
                        self.expect_close(']')?;
                        Some(Box::new(idx))
                    } else {
                        None
                    };
                    Expr::Root {
                        radicand: Box::new(self.group_argument()?),
                        index,
                    }
                }
                g if GREEK.contains(&g) => Expr::Var(g.to_string()),
                _ => return None,
            },
            _ => return None,
        };
        self.depth -= 1;
        Some(e)
    }

    fn subscript_label(&mut self) -> Option<String> {
        match self.next()? {
            Tok::Num(n) => Some(n),
            Tok::Ident(n) => Some(n),
            Tok::Open('{') => {
                let mut label = String::new();
                loop {
                    match self.next()? {
                        Tok::Close('}') => break,
                        Tok::Num(n) | Tok::Ident(n) => label.push_str(&n),
                        _ => return None,
                    }
                }
                Some(label)
            }
            _ => None,
        }
    }
}

fn is_operand_cmd(c: &str) -> bool {
    matches!(c, "pi" | "frac" | "sqrt") || GREEK.contains(&c)
}

/// Parses the supported LaTeX subset; `None` for anything outside it.
pub fn parse(s: &str) -> Option<Expr> {
    let toks = tokenize(s)?;
    if toks.is_empty() {
        return None;
    }
    let mut p = Parser { toks, pos: 0, depth: 0 };
    let e = p.expr()?;
    (p.pos == p.toks.len()).then_some(e)
}

impl Expr {
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Num(_) | Expr::Pi => {}
            Expr::Neg(a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Root { radicand, index } => {
                radicand.collect_vars(out);
                if let Some(i) = index {
                    i.collect_vars(out);
                }
            }
        }
    }

    pub fn eval_f64(&self, env: &HashMap<String, f64>) -> f64 {
        match self {
            Expr::Num(r) => ratio_to_f64(r),
            Expr::Var(v) => env.get(v).copied().unwrap_or(f64::NAN),
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(a) => -a.eval_f64(env),
            Expr::Add(a, b) => a.eval_f64(env) + b.eval_f64(env),
            Expr::Sub(a, b) => a.eval_f64(env) - b.eval_f64(env),
            Expr::Mul(a, b) => a.eval_f64(env) * b.eval_f64(env),
            Expr::Div(a, b) => a.eval_f64(env) / b.eval_f64(env),
            Expr::Pow(a, b) => a.eval_f64(env).powf(b.eval_f64(env)),
            Expr::Root { radicand, index } => {
                let x = radicand.eval_f64(env);
                match index {
                    None => x.sqrt(),
                    Some(n) => nth_root_f64(x, n.eval_f64(env)),
                }
            }
        }
    }

    /// Exact value for constant expressions; `Approx` once an irrational step
    /// occurs. `None` on division by zero or a variable.
    fn eval_exact(&self) -> Option<Value> {
        Some(match self {
            Expr::Num(r) => Value::Exact(r.clone()),
            Expr::Var(_) => return None,
            Expr::Pi => Value::Approx(std::f64::consts::PI),
            Expr::Neg(a) => match a.eval_exact()? {
                Value::Exact(r) => Value::Exact(-r),
                Value::Approx(x) => Value::Approx(-x),
            },
            Expr::Add(a, b) => combine(a.eval_exact()?, b.eval_exact()?, |x, y| Some(x + y), |x, y| x + y)?,
            Expr::Sub(a, b) => combine(a.eval_exact()?, b.eval_exact()?, |x, y| Some(x - y), |x, y| x - y)?,
            Expr::Mul(a, b) => combine(a.eval_exact()?, b.eval_exact()?, |x, y| Some(x * y), |x, y| x * y)?,
            Expr::Div(a, b) => combine(
                a.eval_exact()?,
                b.eval_exact()?,
                |x, y| (!y.is_zero()).then(|| x / y),
                |x, y| x / y,
            )?,
            Expr::Pow(a, b) => pow_exact(a.eval_exact()?, b.eval_exact()?)?,
            Expr::Root { radicand, index } => {
                let n = match index {
                    None => Value::Exact(BigRational::from_integer(2.into())),
                    Some(i) => i.eval_exact()?,
                };
                root_exact(radicand.eval_exact()?, n)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Exact(BigRational),
    Approx(f64),
}

impl Value {
    fn to_f64(&self) -> f64 {
        match self {
            Value::Exact(r) => ratio_to_f64(r),
            Value::Approx(x) => *x,
        }
    }
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn combine(
    a: Value,
    b: Value,
    exact: impl Fn(BigRational, BigRational) -> Option<BigRational>,
    approx: impl Fn(f64, f64) -> f64,
) -> Option<Value> {
    match (a, b) {
        (Value::Exact(x), Value::Exact(y)) => exact(x, y).map(Value::Exact),
        (a, b) => Some(Value::Approx(approx(a.to_f64(), b.to_f64()))),
    }
}

fn bits(r: &BigRational) -> u64 {
    r.numer().bits().max(r.denom().bits()).max(1)
}

fn pow_exact(base: Value, exp: Value) -> Option<Value> {
    if let (Value::Exact(b), Value::Exact(e)) = (&base, &exp) {
        if e.is_integer() {
            if let Some(n) = e.to_integer().to_i64() {
                if n.unsigned_abs().saturating_mul(bits(b)) <= MAX_EXACT_BITS {
                    if n < 0 && b.is_zero() {
                        return None;
                    }
                    let p = num_traits::pow(b.clone(), n.unsigned_abs() as usize);
                    return Some(Value::Exact(if n < 0 { p.recip() } else { p }));
                }
            }
        }
    }
    Some(Value::Approx(base.to_f64().powf(exp.to_f64())))
}

fn root_exact(radicand: Value, index: Value) -> Option<Value> {
    if let (Value::Exact(r), Value::Exact(n)) = (&radicand, &index) {
        if let Some(k) = n.is_integer().then(|| n.to_integer().to_u32()).flatten() {
            if k >= 1 && (!r.is_negative() || k % 2 == 1) {
                let root = |x: &BigInt| -> Option<BigInt> {
                    let c = x.abs().nth_root(k);
                    (num_traits::pow(c.clone(), k as usize) == x.abs()).then(|| if x.is_negative() { -c } else { c })
                };
                if let (Some(num), Some(den)) = (root(r.numer()), root(r.denom())) {
                    return Some(Value::Exact(BigRational::new(num, den)));
                }
            }
        }
    }
    Some(Value::Approx(nth_root_f64(radicand.to_f64(), index.to_f64())))
}

fn nth_root_f64(x: f64, n: f64) -> f64 {
    if x < 0.0 && n.fract() == 0.0 && (n as i64) % 2 != 0 {
        -(-x).powf(1.0 / n)
    } else {
        x.powf(1.0 / n)
    }
}

fn close(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    let scale = a.abs().max(b.abs());
    if scale < 1e-12 {
        return true;
    }
    (a - b).abs() <= RELATIVE_TOLERANCE * scale
}

/// Equivalence with the default sampling seed.
pub fn symbolic_equivalent(a: &str, b: &str) -> bool {
    symbolic_equivalent_seeded(a, b, DEFAULT_SEED)
}

/// Parses both sides; unparseable input is never equivalent.
pub fn symbolic_equivalent_seeded(a: &str, b: &str, seed: u64) -> bool {
    let (Some(ea), Some(eb)) = (parse(a), parse(b)) else {
        return false;
    };
    let mut vars = ea.variables();
    vars.extend(eb.variables());

    if vars.is_empty() {
        return match (ea.eval_exact(), eb.eval_exact()) {
            (Some(Value::Exact(x)), Some(Value::Exact(y))) => x == y,
            (Some(x), Some(y)) => {
                let (x, y) = (x.to_f64(), y.to_f64());
                x.is_finite() && y.is_finite() && close(x, y)
            }
            _ => false,
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agreeing = 0;
    for _ in 0..SAMPLE_POINTS {
        let env: HashMap<String, f64> = vars
            .iter()
            .map(|v| (v.clone(), rng.gen_range(0.5..3.5)))
            .collect();
        let (x, y) = (ea.eval_f64(&env), eb.eval_f64(&env));
        match (x.is_finite(), y.is_finite()) {
            (true, true) if close(x, y) => agreeing += 1,
            (false, false) => {}
            _ => return false,
        }
    }
    agreeing > 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commutativity() {
        assert!(symbolic_equivalent("x+1", "1+x"));
    }

    #[test]
    fn rational_identity() {
        assert!(symbolic_equivalent("\\frac{2}{4}", "\\frac{1}{2}"));
        assert!(symbolic_equivalent("0.5", "\\frac{1}{2}"));
    }

    #[test]
    fn constant_power() {
        // exact oracle: 2^10 = 1024
        assert!(symbolic_equivalent("2^{10}", "1024"));
        assert!(!symbolic_equivalent("2^{10}", "1023"));
    }

    #[test]
    fn distinct_linear_forms() {
        assert!(!symbolic_equivalent("x+1", "x+2"));
    }

    #[test]
    fn implicit_multiplication_and_roots() {
        assert!(symbolic_equivalent("2x", "x+x"));
        assert!(symbolic_equivalent("\\sqrt{8}", "2\\sqrt{2}"));
        assert!(symbolic_equivalent("\\sqrt[3]{27}", "3"));
        assert!(symbolic_equivalent("\\frac12", "0.5"));
        assert!(symbolic_equivalent("(x+1)^2", "x^2+2x+1"));
        assert!(symbolic_equivalent("x^23", "3x^2"));
    }

    #[test]
    fn pi_and_greek() {
        assert!(symbolic_equivalent("2\\pi r", "r\\pi\\cdot 2"));
        assert!(symbolic_equivalent("\\theta\\times 2", "2\\theta"));
        assert!(!symbolic_equivalent("\\pi", "3.14159"));
    }

    #[test]
    fn subscripts_are_distinct_variables() {
        assert!(symbolic_equivalent("a_1+a_{2}", "a_2+a_1"));
        assert!(!symbolic_equivalent("a_1", "a_2"));
    }

    #[test]
    fn unparseable_is_false() {
        assert!(!symbolic_equivalent("(1,2)", "(1,2)"));
        assert!(!symbolic_equivalent("\\infty", "\\infty"));
        assert!(!symbolic_equivalent("", ""));
        assert!(!symbolic_equivalent("1+", "1"));
    }

    #[test]
    fn division_by_zero_is_false() {
        assert!(!symbolic_equivalent("\\frac{1}{0}", "\\frac{1}{0}"));
    }

    #[test]
    fn huge_powers_fall_back_to_floats() {
        assert!(symbolic_equivalent("2^{10000}", "2^{10000}"));
        assert!(!symbolic_equivalent("2^{10000}", "2^{10000}+1"));
        // beyond the exact budget the float value overflows and nothing is claimed
        assert!(!symbolic_equivalent("2^{1000000}", "2^{1000000}"));
    }

    #[test]
    fn negative_and_unary() {
        assert!(symbolic_equivalent("-x^2", "-(x^2)"));
        assert!(!symbolic_equivalent("-x^2", "(-x)^2"));
        assert!(symbolic_equivalent("x^{-1}", "\\frac{1}{x}"));
    }

    #[test]
    fn deeply_nested_input_does_not_overflow() {
        let s = format!("{}1{}", "(".repeat(5000), ")".repeat(5000));
        assert!(!symbolic_equivalent(&s, "1"));
    }
}
