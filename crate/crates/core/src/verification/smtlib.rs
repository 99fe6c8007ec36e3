//! Linear-real-arithmetic subset of SMT-LIB used for property files.
//!
//! Inputs are `X_<i>`, outputs `Y_<j>`, both declared with
//! `(declare-const <name> Real)`. Input assertions must be simple bounds;
//! output assertions may use `and`/`or` and are flattened to disjunctive
//! normal form. Assertions describe the violation: a model of the query is
//! a counterexample.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use super::property::{Disjunct, InputBox, LinearAtom, Property, PropertySource};

pub const MAX_DISJUNCTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmtlibError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: Pos, message: String },
    #[error("unknown symbol `{symbol}` at {pos}")]
    UnknownSymbol { symbol: String, pos: Pos },
    #[error("non-box input constraint at {pos}: {message}")]
    NonBoxInput { pos: Pos, message: String },
    #[error("output condition expands to more than {MAX_DISJUNCTS} disjuncts")]
    DnfTooLarge,
    #[error("invalid property: {0}")]
    Property(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }
}

fn syntax(pos: Pos, message: impl Into<String>) -> SmtlibError {
    SmtlibError::Syntax {
        pos,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Sexp>, SmtlibError> {
    let mut stack: Vec<(Vec<Sexp>, Pos)> = Vec::new();
    let mut top = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1, 1);
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        if c == '\n' {
            chars.next();
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            col += 1;
            continue;
        }
        if c == ';' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
            }
            continue;
        }
        match c {
            '(' => {
                chars.next();
                col += 1;
                stack.push((Vec::new(), pos));
            }
            ')' => {
                chars.next();
                col += 1;
                let (items, start) = stack.pop().ok_or_else(|| syntax(pos, "unbalanced `)`"))?;
                let list = Sexp::List(items, start);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(list),
                    None => top.push(list),
                }
            }
            _ => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    word.push(c);
                    chars.next();
                    col += 1;
                }
                let atom = Sexp::Atom(word, pos);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(atom),
                    None => return Err(syntax(pos, "expected `(` to start a command")),
                }
            }
        }
    }
    if let Some((_, start)) = stack.pop() {
        return Err(syntax(start, "unclosed `(`"));
    }
    Ok(top)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Var {
    X(usize),
    Y(usize),
}

#[derive(Debug, Clone, Default)]
struct LinExpr {
    vars: BTreeMap<Var, f64>,
    constant: f64,
}

impl LinExpr {
    fn constant(v: f64) -> Self {
        Self {
            vars: BTreeMap::new(),
            constant: v,
        }
    }

    fn scale(mut self, k: f64) -> Self {
        for c in self.vars.values_mut() {
            *c *= k;
        }
        self.constant *= k;
        self
    }

    fn add(mut self, other: LinExpr, sign: f64) -> Self {
        for (v, c) in other.vars {
            *self.vars.entry(v).or_insert(0.0) += sign * c;
        }
        self.constant += sign * other.constant;
        self
    }

    fn is_constant(&self) -> bool {
        self.vars.values().all(|&c| c == 0.0)
    }
}

#[derive(Debug, Clone)]
enum Formula {
    Const(bool),
    /// `expr ≤ 0`
    Atom(LinExpr, Pos),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

fn parse_var_name(name: &str) -> Option<Var> {
    let (prefix, idx) = name.split_once('_')?;
    if idx.is_empty() || !idx.bytes().all(|b| b.is_ascii_digit()) || (idx.len() > 1 && idx.starts_with('0')) {
        return None;
    }
    let i: usize = idx.parse().ok()?;
    match prefix {
        "X" => Some(Var::X(i)),
        "Y" => Some(Var::Y(i)),
        _ => None,
    }
}

fn parse_number(tok: &str) -> Option<f64> {
    let body = tok.strip_prefix('-').unwrap_or(tok);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

struct Parser {
    declared: BTreeMap<Var, Pos>,
}

impl Parser {
    fn term(&self, s: &Sexp) -> Result<LinExpr, SmtlibError> {
        match s {
            Sexp::Atom(tok, pos) => {
                if let Some(v) = parse_number(tok) {
                    return Ok(LinExpr::constant(v));
                }
                match parse_var_name(tok) {
                    Some(var) if self.declared.contains_key(&var) => {
                        let mut e = LinExpr::default();
                        e.vars.insert(var, 1.0);
                        Ok(e)
                    }
                    _ => Err(SmtlibError::UnknownSymbol {
                        symbol: tok.clone(),
                        pos: *pos,
                    }),
                }
            }
            Sexp::List(items, pos) => {
                let (head, args) = split_head(items, *pos)?;
                match head {
                    "+" => {
                        if args.is_empty() {
                            return Err(syntax(*pos, "`+` needs arguments"));
                        }
                        args.iter()
                            .try_fold(LinExpr::default(), |acc, a| Ok(acc.add(self.term(a)?, 1.0)))
                    }
                    "-" => match args {
                        [] => Err(syntax(*pos, "`-` needs arguments")),
                        [only] => Ok(self.term(only)?.scale(-1.0)),
                        [first, rest @ ..] => rest
                            .iter()
                            .try_fold(self.term(first)?, |acc, a| Ok(acc.add(self.term(a)?, -1.0))),
                    },
                    "*" => {
                        let [a, b] = args else {
                            return Err(syntax(*pos, "`*` takes exactly two arguments"));
                        };
                        let (a, b) = (self.term(a)?, self.term(b)?);
                        if a.is_constant() {
                            Ok(b.scale(a.constant))
                        } else if b.is_constant() {
                            Ok(a.scale(b.constant))
                        } else {
                            Err(syntax(*pos, "nonlinear product"))
                        }
                    }
                    other => Err(SmtlibError::UnknownSymbol {
                        symbol: other.into(),
                        pos: items[0].pos(),
                    }),
                }
            }
        }
    }

    fn formula(&self, s: &Sexp) -> Result<Formula, SmtlibError> {
        let Sexp::List(items, pos) = s else {
            return match s {
                Sexp::Atom(t, _) if t == "true" => Ok(Formula::Const(true)),
                Sexp::Atom(t, _) if t == "false" => Ok(Formula::Const(false)),
                Sexp::Atom(t, p) => Err(SmtlibError::UnknownSymbol {
                    symbol: t.clone(),
                    pos: *p,
                }),
                Sexp::List(..) => unreachable!(),
            };
        };
        let (head, args) = split_head(items, *pos)?;
        match head {
            "and" => Ok(Formula::And(args.iter().map(|a| self.formula(a)).collect::<Result<_, _>>()?)),
            "or" => Ok(Formula::Or(args.iter().map(|a| self.formula(a)).collect::<Result<_, _>>()?)),
            "<=" | ">=" | "<" | ">" => {
                let [a, b] = args else {
                    return Err(syntax(*pos, format!("`{head}` takes exactly two arguments")));
                };
                let (a, b) = (self.term(a)?, self.term(b)?);
                // strict comparisons are relaxed to their closed versions
                let expr = if head.starts_with('<') { a.add(b, -1.0) } else { b.add(a, -1.0) };
                if expr.is_constant() {
                    Ok(Formula::Const(expr.constant <= 0.0))
                } else {
                    Ok(Formula::Atom(expr, *pos))
                }
            }
            other => Err(SmtlibError::UnknownSymbol {
                symbol: other.into(),
                pos: items[0].pos(),
            }),
        }
    }
}

fn split_head(items: &[Sexp], pos: Pos) -> Result<(&str, &[Sexp]), SmtlibError> {
    match items.split_first() {
        Some((Sexp::Atom(h, _), rest)) => Ok((h.as_str(), rest)),
        Some((Sexp::List(_, p), _)) => Err(syntax(*p, "expected an operator")),
        None => Err(syntax(pos, "empty list")),
    }
}

fn mentions_input(f: &Formula) -> Option<Pos> {
    match f {
        Formula::Const(_) => None,
        Formula::Atom(e, pos) => e
            .vars
            .iter()
            .any(|(v, c)| matches!(v, Var::X(_)) && *c != 0.0)
            .then_some(*pos),
        Formula::And(fs) | Formula::Or(fs) => fs.iter().find_map(mentions_input),
    }
}

type YAtom = (BTreeMap<usize, f64>, f64);

fn dnf(f: &Formula) -> Result<Vec<Vec<YAtom>>, SmtlibError> {
    match f {
        Formula::Const(true) => Ok(vec![vec![]]),
        Formula::Const(false) => Ok(vec![]),
        Formula::Atom(e, _) => {
            let coeffs = e
                .vars
                .iter()
                .filter(|(_, c)| **c != 0.0)
                .map(|(v, c)| match v {
                    Var::Y(j) => (*j, *c),
                    Var::X(_) => unreachable!("input atoms are filtered out first"),
                })
                .collect();
            Ok(vec![vec![(coeffs, -e.constant + 0.0)]])
        }
        Formula::Or(fs) => {
            let mut out = Vec::new();
            for g in fs {
                out.extend(dnf(g)?);
                if out.len() > MAX_DISJUNCTS {
                    return Err(SmtlibError::DnfTooLarge);
                }
            }
            Ok(out)
        }
        Formula::And(fs) => {
            let mut acc: Vec<Vec<YAtom>> = vec![vec![]];
            for g in fs {
                let parts = dnf(g)?;
                if acc.len().saturating_mul(parts.len()) > MAX_DISJUNCTS {
                    return Err(SmtlibError::DnfTooLarge);
                }
                acc = acc
                    .iter()
                    .flat_map(|left| {
                        parts.iter().map(move |right| {
                            let mut c = left.clone();
                            c.extend(right.iter().cloned());
                            c
                        })
                    })
                    .collect();
            }
            Ok(acc)
        }
    }
}

fn flatten_and(f: Formula, out: &mut Vec<Formula>) {
    match f {
        Formula::And(fs) => fs.into_iter().for_each(|g| flatten_and(g, out)),
        other => out.push(other),
    }
}

fn contiguous(indices: &[usize], kind: &str) -> Result<usize, SmtlibError> {
    for (expected, &i) in indices.iter().enumerate() {
        if i != expected {
            return Err(SmtlibError::Property(format!(
                "{kind}_{expected} is not declared but {kind}_{i} is"
            )));
        }
    }
    Ok(indices.len())
}

/// Parses a property file.
pub fn parse_smtlib(text: &str) -> Result<Property, SmtlibError> {
    let commands = tokenize(text)?;
    let mut parser = Parser {
        declared: BTreeMap::new(),
    };
    let mut asserts = Vec::new();
    for cmd in &commands {
        let Sexp::List(items, pos) = cmd else { unreachable!("tokenize yields lists") };
        let (head, args) = split_head(items, *pos)?;
        match head {
            "declare-const" | "declare-fun" => {
                let (name, sort) = match (head, args) {
                    ("declare-const", [Sexp::Atom(n, p), Sexp::Atom(s, _)]) => ((n, p), s),
                    ("declare-fun", [Sexp::Atom(n, p), Sexp::List(a, _), Sexp::Atom(s, _)]) if a.is_empty() => {
                        ((n, p), s)
                    }
                    _ => return Err(syntax(*pos, format!("malformed {head}"))),
                };
                if sort != "Real" {
                    return Err(syntax(*pos, format!("unsupported sort `{sort}`; only Real is allowed")));
                }
                let var = parse_var_name(name.0).ok_or_else(|| SmtlibError::UnknownSymbol {
                    symbol: name.0.clone(),
                    pos: *name.1,
                })?;
                if parser.declared.insert(var, *name.1).is_some() {
                    return Err(syntax(*name.1, format!("`{}` declared twice", name.0)));
                }
            }
            "assert" => {
                let [f] = args else {
                    return Err(syntax(*pos, "assert takes one formula"));
                };
                asserts.push(parser.formula(f)?);
            }
            "set-logic" | "set-info" | "set-option" | "check-sat" | "get-model" | "exit" => {}
            other => {
                return Err(SmtlibError::UnknownSymbol {
                    symbol: other.into(),
                    pos: items[0].pos(),
                })
            }
        }
    }

    let xs: Vec<usize> = parser.declared.keys().filter_map(|v| match v { Var::X(i) => Some(*i), _ => None }).collect();
    let ys: Vec<usize> = parser.declared.keys().filter_map(|v| match v { Var::Y(j) => Some(*j), _ => None }).collect();
    let d = contiguous(&xs, "X")?;
    let m = contiguous(&ys, "Y")?;
    if d == 0 || m == 0 {
        return Err(SmtlibError::Property("need at least one X and one Y declaration".into()));
    }

    let mut conjuncts = Vec::new();
    for a in asserts {
        flatten_and(a, &mut conjuncts);
    }
    let mut lo = vec![f64::NEG_INFINITY; d];
    let mut hi = vec![f64::INFINITY; d];
    let mut output_parts = Vec::new();
    for f in conjuncts {
        match &f {
            Formula::Atom(e, pos) if mentions_input(&f).is_some() => {
                let terms: Vec<(&Var, &f64)> = e.vars.iter().filter(|(_, c)| **c != 0.0).collect();
                let [(Var::X(i), &c)] = terms.as_slice() else {
                    return Err(SmtlibError::NonBoxInput {
                        pos: *pos,
                        message: "each input assertion must bound a single X variable".into(),
                    });
                };
                let bound = -e.constant / c + 0.0;
                if c > 0.0 {
                    hi[*i] = hi[*i].min(bound);
                } else {
                    lo[*i] = lo[*i].max(bound);
                }
            }
            _ => {
                if let Some(pos) = mentions_input(&f) {
                    return Err(SmtlibError::NonBoxInput {
                        pos,
                        message: "input variables may only appear in top-level bounds".into(),
                    });
                }
                output_parts.push(f);
            }
        }
    }
    for i in 0..d {
        if !lo[i].is_finite() || !hi[i].is_finite() {
            return Err(SmtlibError::Property(format!("X_{i} needs both a lower and an upper bound")));
        }
    }
    let disjuncts = dnf(&Formula::And(output_parts))?;
    let violation: Vec<Disjunct> = disjuncts
        .into_iter()
        .map(|conj| {
            conj.into_iter()
                .map(|(coeffs, rhs)| {
                    let mut dense = vec![0.0; m];
                    for (j, c) in coeffs {
                        dense[j] = c;
                    }
                    LinearAtom::output(dense, rhs)
                })
                .collect()
        })
        .collect();
    if violation.iter().any(Vec::is_empty) {
        return Err(SmtlibError::Property(
            "output condition is trivially true; a disjunct has no atom".into(),
        ));
    }
    let input_box = InputBox::new(lo, hi).map_err(|e| SmtlibError::Property(e.to_string()))?;
    Property::new(input_box, m, violation, PropertySource::Smtlib)
        .map_err(|e| SmtlibError::Property(e.to_string()))
}

fn number(v: f64) -> String {
    let v = v + 0.0;
    let mut s = format!("{}", v.abs());
    if !s.contains('.') {
        s.push_str(".0");
    }
    if v < 0.0 {
        format!("(- {s})")
    } else {
        s
    }
}

fn atom_text(atom: &LinearAtom) -> String {
    let terms: Vec<String> = atom
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, &c)| {
            if c == 1.0 {
                format!("Y_{j}")
            } else {
                format!("(* {} Y_{j})", number(c))
            }
        })
        .collect();
    let lhs = if terms.len() == 1 {
        terms[0].clone()
    } else {
        format!("(+ {})", terms.join(" "))
    };
    format!("(<= {lhs} {})", number(atom.rhs))
}

/// Writes a property in the same subset [`parse_smtlib`] reads.
pub fn emit_smtlib(p: &Property) -> String {
    let mut out = String::new();
    out.push_str("; violation query: any model is a counterexample\n");
    for i in 0..p.input_dim() {
        let _ = writeln!(out, "(declare-const X_{i} Real)");
    }
    for j in 0..p.output_dim {
        let _ = writeln!(out, "(declare-const Y_{j} Real)");
    }
    for i in 0..p.input_dim() {
        let _ = writeln!(out, "(assert (>= X_{i} {}))", number(p.input_box.lo[i]));
        let _ = writeln!(out, "(assert (<= X_{i} {}))", number(p.input_box.hi[i]));
    }
    let conj = |d: &Disjunct| {
        if d.len() == 1 {
            atom_text(&d[0])
        } else {
            format!("(and {})", d.iter().map(atom_text).collect::<Vec<_>>().join(" "))
        }
    };
    if p.violation.len() == 1 {
        for atom in &p.violation[0] {
            let _ = writeln!(out, "(assert {})", atom_text(atom));
        }
    } else {
        let _ = writeln!(out, "(assert (or");
        for d in &p.violation {
            let _ = writeln!(out, "  {}", conj(d));
        }
        let _ = writeln!(out, "))");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verification::property::robustness_property;

    #[test]
    fn parses_basic_query() {
        let p = parse_smtlib(
            "(declare-const X_0 Real)(declare-const Y_0 Real)(assert (<= X_0 1.0))(assert (>= X_0 0.0))(assert (>= Y_0 0.5))",
        )
        .unwrap();
        assert_eq!(p.input_box, InputBox::new(vec![0.0], vec![1.0]).unwrap());
        assert_eq!(p.violation, vec![vec![LinearAtom::output(vec![-1.0], -0.5)]]);
    }

    fn header(d: usize, m: usize) -> String {
        let mut s = String::new();
        for i in 0..d {
            s += &format!("(declare-const X_{i} Real)(assert (>= X_{i} 0))(assert (<= X_{i} 1))\n");
        }
        for j in 0..m {
            s += &format!("(declare-const Y_{j} Real)\n");
        }
        s
    }

    #[test]
    fn single_or_gives_two_disjuncts() {
        let p = parse_smtlib(&(header(1, 3) + "(assert (or (>= Y_0 Y_1) (>= Y_2 Y_1)))")).unwrap();
        assert_eq!(p.violation.len(), 2);
        assert_eq!(p.violation[0], vec![LinearAtom::output(vec![-1.0, 1.0, 0.0], 0.0)]);
    }

    #[test]
    fn terms_and_comments() {
        let text = header(2, 2)
            + "; a comment\n(assert (<= (+ (* 2 Y_0) (- Y_1) (* Y_1 (- 3.5))) (- 1.25))) ; trailing\n(check-sat)";
        let p = parse_smtlib(&text).unwrap();
        assert_eq!(p.violation, vec![vec![LinearAtom::output(vec![2.0, -4.5], -1.25)]]);
        let p = parse_smtlib(&(header(1, 2) + "(assert (> (- Y_0 Y_1) -2))")).unwrap();
        assert_eq!(p.violation, vec![vec![LinearAtom::output(vec![-1.0, 1.0], 2.0)]]);
    }

    #[test]
    fn and_of_ors_distributes() {
        let text = header(1, 2) + "(assert (or (<= Y_0 1) (<= Y_1 1)))(assert (or (>= Y_0 0) (>= Y_1 0)))";
        assert_eq!(parse_smtlib(&text).unwrap().violation.len(), 4);
    }

    #[test]
    fn box_constraints_inside_and() {
        let text = "(declare-const X_0 Real)(declare-const Y_0 Real)\
                    (assert (and (<= X_0 0.75) (>= X_0 0.25) (<= Y_0 0)))";
        let p = parse_smtlib(text).unwrap();
        assert_eq!(p.input_box.lo, vec![0.25]);
        assert_eq!(p.input_box.hi, vec![0.75]);
    }

    #[test]
    fn rejects_non_box_input() {
        let text = "(declare-const X_0 Real)(declare-const X_1 Real)(declare-const Y_0 Real)\
                    (assert (<= (+ X_0 X_1) 1.0))(assert (>= Y_0 0))";
        assert!(matches!(parse_smtlib(text), Err(SmtlibError::NonBoxInput { .. })));
        let text = header(1, 1) + "(assert (or (<= X_0 0.5) (<= Y_0 0)))";
        assert!(matches!(parse_smtlib(&text), Err(SmtlibError::NonBoxInput { .. })));
        let text = header(1, 1) + "(assert (<= (+ X_0 Y_0) 0))";
        assert!(matches!(parse_smtlib(&text), Err(SmtlibError::NonBoxInput { .. })));
    }

    #[test]
    fn rejects_unknown_symbols() {
        let e = parse_smtlib(&(header(1, 1) + "(assert (<= Y_0 Z))")).unwrap_err();
        assert!(matches!(&e, SmtlibError::UnknownSymbol { symbol, .. } if symbol == "Z"), "{e}");
        let e = parse_smtlib(&(header(1, 1) + "(assert (<= Y_1 0))")).unwrap_err();
        assert!(matches!(e, SmtlibError::UnknownSymbol { .. }));
        let e = parse_smtlib(&(header(1, 1) + "(assert (=> (<= Y_0 0) (<= Y_0 1)))")).unwrap_err();
        assert!(matches!(e, SmtlibError::UnknownSymbol { .. }));
        let e = parse_smtlib(&(header(1, 1) + "(push 1)")).unwrap_err();
        assert!(matches!(e, SmtlibError::UnknownSymbol { .. }));
    }

    #[test]
    fn rejects_dnf_blowup() {
        let mut text = header(1, 2);
        for _ in 0..7 {
            text += "(assert (or (<= Y_0 1) (<= Y_1 1)))";
        }
        assert_eq!(parse_smtlib(&text).unwrap_err(), SmtlibError::DnfTooLarge);
        let mut ok = header(1, 2);
        for _ in 0..6 {
            ok += "(assert (or (<= Y_0 1) (<= Y_1 1)))";
        }
        assert_eq!(parse_smtlib(&ok).unwrap().violation.len(), 64);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = parse_smtlib("(declare-const X_0 Real)\n(assert (<= X_0 1)").unwrap_err();
        assert!(e.to_string().contains("2:1"), "{e}");
        let e = parse_smtlib("(declare-const X_0 Real))").unwrap_err();
        assert!(matches!(e, SmtlibError::Syntax { .. }));
        let e = parse_smtlib(&(header(1, 1) + "(assert (<= (* Y_0 Y_0) 1))")).unwrap_err();
        assert!(e.to_string().contains("nonlinear"));
        assert!(parse_smtlib("(declare-const X_0 Int)").is_err());
    }

    #[test]
    fn missing_bounds_or_outputs() {
        let e = parse_smtlib("(declare-const X_0 Real)(declare-const Y_0 Real)(assert (<= X_0 1))(assert (<= Y_0 0))");
        assert!(matches!(e, Err(SmtlibError::Property(_))));
        let e = parse_smtlib(&header(1, 1));
        assert!(matches!(e, Err(SmtlibError::Property(_))));
        let e = parse_smtlib("(declare-const X_1 Real)(declare-const Y_0 Real)");
        assert!(matches!(e, Err(SmtlibError::Property(_))));
    }

    #[test]
    fn robustness_round_trip() {
        let p = robustness_property(&[0.2, 0.9, 0.5], 1, 3, 0.05, &InputBox::unit(3)).unwrap();
        let text = emit_smtlib(&p);
        assert_eq!(text.matches("declare-const X_").count(), 3);
        assert_eq!(text.matches("declare-const Y_").count(), 3);
        let back = parse_smtlib(&text).unwrap();
        assert!(p.semantically_equal(&back), "{text}");
    }

    #[test]
    fn multi_atom_disjunct_round_trip() {
        let text = header(2, 2) + "(assert (or (and (<= Y_0 0.1) (>= Y_1 0.3)) (<= (- Y_0 Y_1) 0.000001)))";
        let p = parse_smtlib(&text).unwrap();
        let back = parse_smtlib(&emit_smtlib(&p)).unwrap();
        assert!(p.semantically_equal(&back));
    }
}
