//! Branching-time specifications over program valuations.
//!
//! Formulas combine the assertion atoms of [`crate::vocab`] with boolean
//! connectives and temporal operators; next-state operators are indexed by
//! process, and the unindexed forms quantify over all processes.  This module
//! owns the concrete syntax, the negation normal form, the alpha/beta
//! classification the tableau runs on, and an explicit-state model checker
//! that is kept deliberately independent of the synthesis path so it can
//! verify synthesis output.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::lang::parse::{parse_atom as parse_raw_atom, resolve_atom};
use crate::lang::{build_transition_system, LangError, Program};
use crate::lex::{lex, Cursor, Tok};
use crate::vocab::{Atom, EvalError, Guard, Valuation, VarId, Vocab};

/// Identifier of an opaque one-step effect; meaningful only to the
/// [`StepOracle`] that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StepId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    /// All moves of process `i` (0-based internally, 1-based in syntax).
    AllNext(usize, Box<Formula>),
    /// Some move of process `i`.
    ExNext(usize, Box<Formula>),
    /// All moves of every process; expands to a conjunction of [`Formula::AllNext`].
    AllNextAll(Box<Formula>),
    /// Some move of some process.
    ExNextAny(Box<Formula>),
    AllUntil(Box<Formula>, Box<Formula>),
    ExUntil(Box<Formula>, Box<Formula>),
    AllFinally(Box<Formula>),
    ExFinally(Box<Formula>),
    AllGlobally(Box<Formula>),
    ExGlobally(Box<Formula>),
    /// Placeholder for the pinned post-state of one program instruction.
    /// Appears only directly under a next-state operator; resolved against a
    /// [`StepOracle`] when needed.
    Step(StepId),
}

impl Formula {
    pub fn tt() -> Formula {
        Formula::Atom(Atom::True)
    }

    pub fn ff() -> Formula {
        Formula::Atom(Atom::False)
    }

    pub fn atom(a: Atom) -> Formula {
        Formula::Atom(a)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    pub fn ax(i: usize, f: Formula) -> Formula {
        Formula::AllNext(i, Box::new(f))
    }

    pub fn ex(i: usize, f: Formula) -> Formula {
        Formula::ExNext(i, Box::new(f))
    }

    pub fn ax_all(f: Formula) -> Formula {
        Formula::AllNextAll(Box::new(f))
    }

    pub fn ex_any(f: Formula) -> Formula {
        Formula::ExNextAny(Box::new(f))
    }

    pub fn au(p: Formula, q: Formula) -> Formula {
        Formula::AllUntil(Box::new(p), Box::new(q))
    }

    pub fn eu(p: Formula, q: Formula) -> Formula {
        Formula::ExUntil(Box::new(p), Box::new(q))
    }

    pub fn af(f: Formula) -> Formula {
        Formula::AllFinally(Box::new(f))
    }

    pub fn ef(f: Formula) -> Formula {
        Formula::ExFinally(Box::new(f))
    }

    pub fn ag(f: Formula) -> Formula {
        Formula::AllGlobally(Box::new(f))
    }

    pub fn eg(f: Formula) -> Formula {
        Formula::ExGlobally(Box::new(f))
    }

    /// Conjunction of many parts; empty input is `true`, singletons unwrap.
    pub fn conj(mut parts: Vec<Formula>) -> Formula {
        match parts.len() {
            0 => Formula::tt(),
            1 => parts.pop().unwrap(),
            _ => {
                let mut f = parts.pop().unwrap();
                while let Some(p) = parts.pop() {
                    f = Formula::and(p, f);
                }
                f
            }
        }
    }

    /// Disjunction of many parts; empty input is `false`.
    pub fn disj(mut parts: Vec<Formula>) -> Formula {
        match parts.len() {
            0 => Formula::ff(),
            1 => parts.pop().unwrap(),
            _ => {
                let mut f = parts.pop().unwrap();
                while let Some(p) = parts.pop() {
                    f = Formula::or(p, f);
                }
                f
            }
        }
    }

    /// Embed a program guard: same atoms, boolean connectives only.
    pub fn from_guard(g: &Guard) -> Formula {
        match g {
            Guard::Atom(a) => Formula::Atom(a.clone()),
            Guard::Not(x) => Formula::not(Formula::from_guard(x)),
            Guard::And(a, b) => Formula::and(Formula::from_guard(a), Formula::from_guard(b)),
            Guard::Or(a, b) => Formula::or(Formula::from_guard(a), Formula::from_guard(b)),
        }
    }

    /// Largest 0-based process index mentioned by a next-state operator.
    pub fn max_process_index(&self) -> Option<usize> {
        match self {
            Formula::Atom(_) | Formula::Step(_) => None,
            Formula::AllNext(i, f) | Formula::ExNext(i, f) => {
                Some(f.max_process_index().map_or(*i, |m| m.max(*i)))
            }
            Formula::Not(f)
            | Formula::AllNextAll(f)
            | Formula::ExNextAny(f)
            | Formula::AllFinally(f)
            | Formula::ExFinally(f)
            | Formula::AllGlobally(f)
            | Formula::ExGlobally(f) => f.max_process_index(),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b)
            | Formula::AllUntil(a, b)
            | Formula::ExUntil(a, b) => match (a.max_process_index(), b.max_process_index()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogicError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("{context}: {source}")]
    Sort { context: String, source: EvalError },
    #[error("process index {found} out of range: the program has {num_procs} process(es)")]
    BadProcessIndex { found: usize, num_procs: usize },
    #[error("model is not total: state {0} has no successor")]
    NonTotalModel(u32),
    #[error("step placeholder outside a next-state operator")]
    MisplacedStep,
    #[error("step placeholder reached without a step oracle")]
    MissingOracle,
    #[error("atom evaluation failed in state [{state}]: {source}")]
    AtomEval { state: String, source: EvalError },
    #[error(transparent)]
    Lang(#[from] LangError),
}

// ---------------------------------------------------------------------------
// Concrete syntax
// ---------------------------------------------------------------------------

fn syn(cur: &Cursor, msg: impl Into<String>) -> LogicError {
    let (line, col) = cur.pos_info();
    LogicError::Syntax { line, col, msg: msg.into() }
}

fn expect(cur: &mut Cursor, t: &Tok) -> Result<(), LogicError> {
    if cur.eat(t) {
        Ok(())
    } else {
        let found = cur.peek().map(|x| x.to_string()).unwrap_or_else(|| "end of input".into());
        Err(syn(cur, format!("expected {t}, found {found}")))
    }
}

/// `AG`, `EX3`, ... split into operator and optional 1-based process index.
fn temporal_prefix(s: &str) -> Option<(&'static str, Option<usize>)> {
    for op in ["AG", "EG", "AF", "EF", "AX", "EX"] {
        if let Some(rest) = s.strip_prefix(op) {
            if rest.is_empty() {
                return Some((op, None));
            }
            if rest.chars().all(|c| c.is_ascii_digit()) {
                return Some((op, rest.parse().ok()));
            }
        }
    }
    None
}

fn parse_primary(cur: &mut Cursor, vocab: &Vocab) -> Result<Formula, LogicError> {
    if cur.eat(&Tok::Bang) {
        return Ok(Formula::not(parse_primary(cur, vocab)?));
    }
    if cur.eat(&Tok::LParen) {
        let f = parse_formula(cur, vocab)?;
        expect(cur, &Tok::RParen)?;
        return Ok(f);
    }
    if let Some(Tok::Ident(s)) = cur.peek() {
        let s = s.clone();
        if (s == "A" || s == "E") && cur.peek2() == Some(&Tok::LBracket) {
            cur.next();
            cur.next();
            let p = parse_formula(cur, vocab)?;
            if !cur.eat_ident("U") {
                return Err(syn(cur, "expected `U` in until formula"));
            }
            let q = parse_formula(cur, vocab)?;
            expect(cur, &Tok::RBracket)?;
            return Ok(if s == "A" { Formula::au(p, q) } else { Formula::eu(p, q) });
        }
        if let Some((op, index)) = temporal_prefix(&s) {
            cur.next();
            if let Some(ix) = index {
                if ix == 0 {
                    return Err(syn(cur, "process indices are 1-based"));
                }
                if !matches!(op, "AX" | "EX") {
                    return Err(syn(cur, format!("`{op}` does not take a process index")));
                }
            }
            let f = parse_primary(cur, vocab)?;
            return Ok(match (op, index) {
                ("AX", Some(i)) => Formula::ax(i - 1, f),
                ("EX", Some(i)) => Formula::ex(i - 1, f),
                ("AX", None) => Formula::ax_all(f),
                ("EX", None) => Formula::ex_any(f),
                ("AF", None) => Formula::af(f),
                ("EF", None) => Formula::ef(f),
                ("AG", None) => Formula::ag(f),
                ("EG", None) => Formula::eg(f),
                _ => unreachable!(),
            });
        }
        if s == "true" {
            cur.next();
            return Ok(Formula::tt());
        }
        if s == "false" {
            cur.next();
            return Ok(Formula::ff());
        }
    }
    let raw = parse_raw_atom(cur).map_err(|e| match e {
        LangError::Syntax { line, col, msg } => LogicError::Syntax { line, col, msg },
        other => LogicError::Lang(other),
    })?;
    let atom = resolve_atom(vocab, &raw, None);
    atom.check(vocab)
        .map_err(|e| LogicError::Sort { context: "specification atom".into(), source: e })?;
    Ok(Formula::Atom(atom))
}

fn parse_conj(cur: &mut Cursor, vocab: &Vocab) -> Result<Formula, LogicError> {
    let mut f = parse_primary(cur, vocab)?;
    while cur.eat(&Tok::Amp) {
        let rhs = parse_primary(cur, vocab)?;
        f = Formula::and(f, rhs);
    }
    Ok(f)
}

fn parse_disj(cur: &mut Cursor, vocab: &Vocab) -> Result<Formula, LogicError> {
    let mut f = parse_conj(cur, vocab)?;
    while cur.eat(&Tok::Pipe) {
        let rhs = parse_conj(cur, vocab)?;
        f = Formula::or(f, rhs);
    }
    Ok(f)
}

fn parse_impl(cur: &mut Cursor, vocab: &Vocab) -> Result<Formula, LogicError> {
    let f = parse_disj(cur, vocab)?;
    if cur.eat(&Tok::Arrow) {
        let rhs = parse_impl(cur, vocab)?; // right-associative
        return Ok(Formula::implies(f, rhs));
    }
    Ok(f)
}

fn parse_formula(cur: &mut Cursor, vocab: &Vocab) -> Result<Formula, LogicError> {
    let f = parse_impl(cur, vocab)?;
    if cur.eat(&Tok::DArrow) {
        let rhs = parse_formula(cur, vocab)?;
        return Ok(Formula::iff(f, rhs));
    }
    Ok(f)
}

/// Parse a complete specification; atoms resolve against `vocab`.
pub fn parse_spec(text: &str, vocab: &Vocab) -> Result<Formula, LogicError> {
    let toks = lex(text).map_err(|(line, col, msg)| LogicError::Syntax { line, col, msg })?;
    let mut cur = Cursor::new(toks);
    let f = parse_formula(&mut cur, vocab)?;
    if !cur.at_end() {
        let found = cur.peek().map(|x| x.to_string()).unwrap_or_default();
        return Err(syn(&cur, format!("unexpected {found} after formula")));
    }
    Ok(f)
}

/// Check that every indexed next-state operator names an existing process.
pub fn validate_process_indices(f: &Formula, num_procs: usize) -> Result<(), LogicError> {
    match f.max_process_index() {
        Some(i) if i >= num_procs => {
            Err(LogicError::BadProcessIndex { found: i + 1, num_procs })
        }
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Display
// ---------------------------------------------------------------------------

pub struct FormulaDisplay<'a> {
    f: &'a Formula,
    vocab: &'a Vocab,
}

impl Formula {
    pub fn display<'a>(&'a self, vocab: &'a Vocab) -> FormulaDisplay<'a> {
        FormulaDisplay { f: self, vocab }
    }
}

fn prec(f: &Formula) -> u8 {
    match f {
        Formula::Iff(_, _) => 1,
        Formula::Implies(_, _) => 2,
        Formula::Or(_, _) => 3,
        Formula::And(_, _) => 4,
        Formula::Not(_)
        | Formula::AllNext(_, _)
        | Formula::ExNext(_, _)
        | Formula::AllNextAll(_)
        | Formula::ExNextAny(_)
        | Formula::AllFinally(_)
        | Formula::ExFinally(_)
        | Formula::AllGlobally(_)
        | Formula::ExGlobally(_) => 5,
        Formula::Atom(_) | Formula::AllUntil(_, _) | Formula::ExUntil(_, _) | Formula::Step(_) => 6,
    }
}

fn fmt_formula(
    f: &Formula,
    vocab: &Vocab,
    parent: u8,
    out: &mut fmt::Formatter<'_>,
) -> fmt::Result {
    let me = prec(f);
    let parens = me < parent;
    if parens {
        write!(out, "(")?;
    }
    match f {
        Formula::Atom(a) => write!(out, "{}", a.display(vocab))?,
        Formula::Not(x) => {
            write!(out, "!(")?;
            fmt_formula(x, vocab, 0, out)?;
            write!(out, ")")?;
        }
        Formula::And(a, b) => {
            fmt_formula(a, vocab, 4, out)?;
            write!(out, " & ")?;
            fmt_formula(b, vocab, 4, out)?;
        }
        Formula::Or(a, b) => {
            fmt_formula(a, vocab, 3, out)?;
            write!(out, " | ")?;
            fmt_formula(b, vocab, 3, out)?;
        }
        Formula::Implies(a, b) => {
            fmt_formula(a, vocab, 3, out)?;
            write!(out, " -> ")?;
            fmt_formula(b, vocab, 2, out)?;
        }
        Formula::Iff(a, b) => {
            fmt_formula(a, vocab, 2, out)?;
            write!(out, " <-> ")?;
            fmt_formula(b, vocab, 1, out)?;
        }
        Formula::AllNext(i, x) => {
            write!(out, "AX{} ", i + 1)?;
            fmt_formula(x, vocab, 5, out)?;
        }
        Formula::ExNext(i, x) => {
            write!(out, "EX{} ", i + 1)?;
            fmt_formula(x, vocab, 5, out)?;
        }
        Formula::AllNextAll(x) => {
            write!(out, "AX ")?;
            fmt_formula(x, vocab, 5, out)?;
        }
        Formula::ExNextAny(x) => {
            write!(out, "EX ")?;
            fmt_formula(x, vocab, 5, out)?;
        }
        Formula::AllFinally(x) => {
            write!(out, "AF ")?;
            fmt_formula(x, vocab, 5, out)?;
        }
        Formula::ExFinally(x) => {
            write!(out, "EF ")?;
            fmt_formula(x, vocab, 5, out)?;
        }
        Formula::AllGlobally(x) => {
            write!(out, "AG ")?;
            fmt_formula(x, vocab, 5, out)?;
        }
        Formula::ExGlobally(x) => {
            write!(out, "EG ")?;
            fmt_formula(x, vocab, 5, out)?;
        }
        Formula::AllUntil(p, q) => {
            write!(out, "A[")?;
            fmt_formula(p, vocab, 0, out)?;
            write!(out, " U ")?;
            fmt_formula(q, vocab, 0, out)?;
            write!(out, "]")?;
        }
        Formula::ExUntil(p, q) => {
            write!(out, "E[")?;
            fmt_formula(p, vocab, 0, out)?;
            write!(out, " U ")?;
            fmt_formula(q, vocab, 0, out)?;
            write!(out, "]")?;
        }
        Formula::Step(id) => write!(out, "@step{}", id.0)?,
    }
    if parens {
        write!(out, ")")?;
    }
    Ok(())
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_formula(self.f, self.vocab, 0, f)
    }
}

// ---------------------------------------------------------------------------
// Negation normal form
// ---------------------------------------------------------------------------

/// Negate an atom, folding integer comparisons into their complements.
fn negate_atom(a: &Atom) -> Formula {
    match a {
        Atom::True => Formula::ff(),
        Atom::False => Formula::tt(),
        Atom::Lt(x, y) => Formula::Atom(Atom::Ge(x.clone(), y.clone())),
        Atom::Le(x, y) => Formula::Atom(Atom::Gt(x.clone(), y.clone())),
        Atom::Gt(x, y) => Formula::Atom(Atom::Le(x.clone(), y.clone())),
        Atom::Ge(x, y) => Formula::Atom(Atom::Lt(x.clone(), y.clone())),
        Atom::Eq(_, _) => Formula::not(Formula::Atom(a.clone())),
    }
}

fn nnf_neg(f: &Formula, k: usize) -> Formula {
    match f {
        Formula::Atom(a) => negate_atom(a),
        Formula::Not(x) => to_nnf(x, k),
        Formula::And(a, b) => Formula::or(nnf_neg(a, k), nnf_neg(b, k)),
        Formula::Or(a, b) => Formula::and(nnf_neg(a, k), nnf_neg(b, k)),
        Formula::Implies(a, b) => Formula::and(to_nnf(a, k), nnf_neg(b, k)),
        Formula::Iff(a, b) => Formula::or(
            Formula::and(to_nnf(a, k), nnf_neg(b, k)),
            Formula::and(nnf_neg(a, k), to_nnf(b, k)),
        ),
        Formula::AllNext(i, x) => Formula::ex(*i, nnf_neg(x, k)),
        Formula::ExNext(i, x) => Formula::ax(*i, nnf_neg(x, k)),
        Formula::AllNextAll(x) => to_nnf(&Formula::ex_any(Formula::not((**x).clone())), k),
        Formula::ExNextAny(x) => to_nnf(&Formula::ax_all(Formula::not((**x).clone())), k),
        // ¬A[p U q] = E[¬q U (¬p & ¬q)] | EG ¬q
        Formula::AllUntil(p, q) => {
            let np = nnf_neg(p, k);
            let nq = nnf_neg(q, k);
            Formula::or(
                Formula::eu(nq.clone(), Formula::and(np, nq.clone())),
                Formula::eg(nq),
            )
        }
        // ¬E[p U q] = A[¬q U (¬p & ¬q)] | AG ¬q
        Formula::ExUntil(p, q) => {
            let np = nnf_neg(p, k);
            let nq = nnf_neg(q, k);
            Formula::or(
                Formula::au(nq.clone(), Formula::and(np, nq.clone())),
                Formula::ag(nq),
            )
        }
        Formula::AllFinally(x) => Formula::eg(nnf_neg(x, k)),
        Formula::ExFinally(x) => Formula::ag(nnf_neg(x, k)),
        Formula::AllGlobally(x) => Formula::eu(Formula::tt(), nnf_neg(x, k)),
        Formula::ExGlobally(x) => Formula::au(Formula::tt(), nnf_neg(x, k)),
        Formula::Step(_) => panic!("step placeholders cannot be negated"),
    }
}

/// Negation normal form over `k` processes: negation only on atoms, no
/// implication or equivalence, unindexed next operators expanded, `AF`/`EF`
/// rewritten to untils.  `AG`/`EG` survive as first-class greatest-fixpoint
/// operators (they are not expressible in the until fragment).
pub fn to_nnf(f: &Formula, k: usize) -> Formula {
    assert!(k >= 1, "a program has at least one process");
    match f {
        Formula::Atom(_) | Formula::Step(_) => f.clone(),
        Formula::Not(x) => nnf_neg(x, k),
        Formula::And(a, b) => Formula::and(to_nnf(a, k), to_nnf(b, k)),
        Formula::Or(a, b) => Formula::or(to_nnf(a, k), to_nnf(b, k)),
        Formula::Implies(a, b) => Formula::or(nnf_neg(a, k), to_nnf(b, k)),
        Formula::Iff(a, b) => Formula::or(
            Formula::and(to_nnf(a, k), to_nnf(b, k)),
            Formula::and(nnf_neg(a, k), nnf_neg(b, k)),
        ),
        Formula::AllNext(i, x) => Formula::ax(*i, to_nnf(x, k)),
        Formula::ExNext(i, x) => Formula::ex(*i, to_nnf(x, k)),
        Formula::AllNextAll(x) => {
            Formula::conj((0..k).map(|i| Formula::ax(i, to_nnf(x, k))).collect())
        }
        Formula::ExNextAny(x) => {
            Formula::disj((0..k).map(|i| Formula::ex(i, to_nnf(x, k))).collect())
        }
        Formula::AllUntil(p, q) => Formula::au(to_nnf(p, k), to_nnf(q, k)),
        Formula::ExUntil(p, q) => Formula::eu(to_nnf(p, k), to_nnf(q, k)),
        Formula::AllFinally(x) => Formula::au(Formula::tt(), to_nnf(x, k)),
        Formula::ExFinally(x) => Formula::eu(Formula::tt(), to_nnf(x, k)),
        Formula::AllGlobally(x) => Formula::ag(to_nnf(x, k)),
        Formula::ExGlobally(x) => Formula::eg(to_nnf(x, k)),
    }
}

pub fn is_nnf(f: &Formula) -> bool {
    match f {
        Formula::Atom(_) | Formula::Step(_) => true,
        Formula::Not(x) => matches!(**x, Formula::Atom(_)),
        Formula::And(a, b) | Formula::Or(a, b) => is_nnf(a) && is_nnf(b),
        Formula::AllNext(_, x) | Formula::ExNext(_, x) => is_nnf(x),
        Formula::AllUntil(p, q) | Formula::ExUntil(p, q) => is_nnf(p) && is_nnf(q),
        Formula::AllGlobally(x) | Formula::ExGlobally(x) => is_nnf(x),
        Formula::Implies(_, _)
        | Formula::Iff(_, _)
        | Formula::AllNextAll(_)
        | Formula::ExNextAny(_)
        | Formula::AllFinally(_)
        | Formula::ExFinally(_) => false,
    }
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Decomposition rule of a normal-form formula at a tableau node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    /// The formula is the conjunction of the parts.
    Alpha(Vec<Formula>),
    /// The formula is the disjunction of the parts.
    Beta(Vec<Formula>),
    /// Literals and next-state formulas: nothing to decompose locally.
    Elementary,
}

/// Classify a normal-form formula for tableau expansion over `k` processes.
/// Untils unroll one step as beta rules; the globallys unroll as alpha rules.
pub fn classify(f: &Formula, k: usize) -> Rule {
    match f {
        Formula::Atom(_) | Formula::Not(_) | Formula::AllNext(_, _) | Formula::ExNext(_, _) => {
            Rule::Elementary
        }
        Formula::Step(_) => Rule::Elementary,
        Formula::And(a, b) => Rule::Alpha(vec![(**a).clone(), (**b).clone()]),
        Formula::Or(a, b) => Rule::Beta(vec![(**a).clone(), (**b).clone()]),
        Formula::AllGlobally(x) => Rule::Alpha(vec![
            (**x).clone(),
            Formula::conj((0..k).map(|i| Formula::ax(i, f.clone())).collect()),
        ]),
        Formula::ExGlobally(x) => Rule::Alpha(vec![
            (**x).clone(),
            Formula::disj((0..k).map(|i| Formula::ex(i, f.clone())).collect()),
        ]),
        Formula::AllUntil(p, q) => Rule::Beta(vec![
            (**q).clone(),
            Formula::and(
                (**p).clone(),
                Formula::conj((0..k).map(|i| Formula::ax(i, f.clone())).collect()),
            ),
        ]),
        Formula::ExUntil(p, q) => Rule::Beta(vec![
            (**q).clone(),
            Formula::and(
                (**p).clone(),
                Formula::disj((0..k).map(|i| Formula::ex(i, f.clone())).collect()),
            ),
        ]),
        other => panic!("classify expects normal form, got {other:?}"),
    }
}

/// The closed set of formulas that can appear in tableau labels for `f`:
/// start from the normal form and close under decomposition parts and
/// next-state bodies.
pub fn closure(f: &Formula, k: usize) -> BTreeSet<Formula> {
    let mut set = BTreeSet::new();
    let mut work = vec![to_nnf(f, k)];
    while let Some(g) = work.pop() {
        if set.contains(&g) {
            continue;
        }
        match classify(&g, k) {
            Rule::Alpha(parts) | Rule::Beta(parts) => work.extend(parts),
            Rule::Elementary => {
                if let Formula::AllNext(_, inner) | Formula::ExNext(_, inner) = &g {
                    work.push((**inner).clone());
                }
            }
        }
        set.insert(g);
    }
    set
}

pub fn closure_size(f: &Formula, k: usize) -> usize {
    closure(f, k).len()
}

// ---------------------------------------------------------------------------
// Models and model checking
// ---------------------------------------------------------------------------

/// Resolves step placeholders: given a pre-state, the fully determined
/// post-state of the instruction the step stands for, or `None` when the move
/// is undefined there (its arithmetic left the domain).
pub trait StepOracle {
    fn post(&self, id: StepId, pre: &Valuation) -> Option<Valuation>;
}

/// An explicit model: states are total valuations, transitions carry the
/// index of the moving process.
#[derive(Debug, Clone)]
pub struct Model {
    pub vocab: Vocab,
    pub num_procs: usize,
    pub states: Vec<Valuation>,
    pub initial: Vec<u32>,
    pub transitions: Vec<(u32, u8, u32)>,
    succs: Vec<Vec<(u8, u32)>>,
}

impl Model {
    pub fn new(
        vocab: Vocab,
        num_procs: usize,
        states: Vec<Valuation>,
        initial: Vec<u32>,
        mut transitions: Vec<(u32, u8, u32)>,
    ) -> Model {
        transitions.sort_unstable();
        transitions.dedup();
        let mut succs = vec![Vec::new(); states.len()];
        for &(a, p, b) in &transitions {
            succs[a as usize].push((p, b));
        }
        Model { vocab, num_procs, states, initial, transitions, succs }
    }

    pub fn succs(&self, s: u32) -> &[(u8, u32)] {
        &self.succs[s as usize]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Outcome of a check, with one violated initial state as the witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub holds: bool,
    pub witness: Option<(u32, String)>,
}

struct Checker<'a> {
    m: &'a Model,
    oracle: Option<&'a dyn StepOracle>,
    memo: BTreeMap<Formula, Vec<bool>>,
}

impl<'a> Checker<'a> {
    fn sat(&mut self, f: &Formula) -> Result<Vec<bool>, LogicError> {
        if let Some(v) = self.memo.get(f) {
            return Ok(v.clone());
        }
        let n = self.m.states.len();
        let v = match f {
            Formula::Atom(a) => {
                let mut v = Vec::with_capacity(n);
                for s in &self.m.states {
                    v.push(a.eval(&self.m.vocab, s).map_err(|e| LogicError::AtomEval {
                        state: s.render(&self.m.vocab),
                        source: e,
                    })?);
                }
                v
            }
            Formula::Not(x) => {
                let inner = self.sat(x)?;
                inner.iter().map(|b| !b).collect()
            }
            Formula::And(a, b) => {
                let (x, y) = (self.sat(a)?, self.sat(b)?);
                x.iter().zip(&y).map(|(a, b)| *a && *b).collect()
            }
            Formula::Or(a, b) => {
                let (x, y) = (self.sat(a)?, self.sat(b)?);
                x.iter().zip(&y).map(|(a, b)| *a || *b).collect()
            }
            Formula::AllNext(i, inner) => self.next_op(*i, inner, true)?,
            Formula::ExNext(i, inner) => self.next_op(*i, inner, false)?,
            Formula::AllUntil(p, q) => {
                let (sp, sq) = (self.sat(p)?, self.sat(q)?);
                let mut v = sq;
                loop {
                    let mut changed = false;
                    for s in 0..n {
                        if !v[s]
                            && sp[s]
                            && self.m.succs(s as u32).iter().all(|&(_, t)| v[t as usize])
                        {
                            v[s] = true;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                v
            }
            Formula::ExUntil(p, q) => {
                let (sp, sq) = (self.sat(p)?, self.sat(q)?);
                let mut v = sq;
                loop {
                    let mut changed = false;
                    for s in 0..n {
                        if !v[s]
                            && sp[s]
                            && self.m.succs(s as u32).iter().any(|&(_, t)| v[t as usize])
                        {
                            v[s] = true;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                v
            }
            Formula::AllGlobally(x) => {
                let mut v = self.sat(x)?;
                loop {
                    let mut changed = false;
                    for s in 0..n {
                        if v[s] && self.m.succs(s as u32).iter().any(|&(_, t)| !v[t as usize]) {
                            v[s] = false;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                v
            }
            Formula::ExGlobally(x) => {
                let mut v = self.sat(x)?;
                loop {
                    let mut changed = false;
                    for s in 0..n {
                        if v[s] && !self.m.succs(s as u32).iter().any(|&(_, t)| v[t as usize]) {
                            v[s] = false;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                v
            }
            Formula::Step(_) => return Err(LogicError::MisplacedStep),
            other => unreachable!("model checking runs on normal form, got {other:?}"),
        };
        self.memo.insert(f.clone(), v.clone());
        Ok(v)
    }

    /// `AXᵢ`/`EXᵢ` over process-`i` edges, with the step-placeholder payload
    /// compared against the oracle's pinned post-state.
    fn next_op(&mut self, i: usize, inner: &Formula, universal: bool) -> Result<Vec<bool>, LogicError> {
        let n = self.m.states.len();
        if let Formula::Step(id) = inner {
            let oracle = self.oracle.ok_or(LogicError::MissingOracle)?;
            let mut v = Vec::with_capacity(n);
            for s in 0..n {
                let post = oracle.post(*id, &self.m.states[s]);
                let mut succs =
                    self.m.succs(s as u32).iter().filter(|&&(p, _)| p as usize == i).peekable();
                let holds = match (&post, universal) {
                    (Some(pv), true) => {
                        succs.all(|&(_, t)| &self.m.states[t as usize] == pv)
                    }
                    (Some(pv), false) => {
                        succs.any(|&(_, t)| &self.m.states[t as usize] == pv)
                    }
                    // an undefined move satisfies nothing: AXᵢ holds only
                    // vacuously, EXᵢ never
                    (None, true) => succs.peek().is_none(),
                    (None, false) => false,
                };
                v.push(holds);
            }
            return Ok(v);
        }
        let sf = self.sat(inner)?;
        let mut v = Vec::with_capacity(n);
        for s in 0..n {
            let mut succs = self.m.succs(s as u32).iter().filter(|&&(p, _)| p as usize == i);
            let holds = if universal {
                succs.all(|&(_, t)| sf[t as usize])
            } else {
                succs.any(|&(_, t)| sf[t as usize])
            };
            v.push(holds);
        }
        Ok(v)
    }
}

/// Check `f` over a total model, resolving step placeholders with `oracle`.
pub fn model_check_with(
    m: &Model,
    f: &Formula,
    oracle: Option<&dyn StepOracle>,
) -> Result<CheckResult, LogicError> {
    for s in 0..m.states.len() {
        if m.succs(s as u32).is_empty() {
            return Err(LogicError::NonTotalModel(s as u32));
        }
    }
    let nnf = to_nnf(f, m.num_procs.max(1));
    let mut ck = Checker { m, oracle, memo: BTreeMap::new() };
    let sat = ck.sat(&nnf)?;
    for &i in &m.initial {
        if !sat[i as usize] {
            return Ok(CheckResult {
                holds: false,
                witness: Some((i, m.states[i as usize].render(&m.vocab))),
            });
        }
    }
    Ok(CheckResult { holds: true, witness: None })
}

pub fn model_check(m: &Model, f: &Formula) -> Result<CheckResult, LogicError> {
    model_check_with(m, f, None)
}

/// Build the program's transition system and check the specification on it.
/// A reachable deadlock is reported as an error, never repaired.
pub fn program_satisfies(p: &Program, f: &Formula) -> Result<CheckResult, LogicError> {
    validate_process_indices(f, p.num_procs())?;
    let initials = p.initial_valuations()?;
    let ts = build_transition_system(p, &initials)?;
    ts.require_total()?;
    model_check(&ts.to_model(), f)
}

/// Variables mentioned by the formula's atoms.
pub fn formula_vars(f: &Formula, out: &mut Vec<VarId>) {
    match f {
        Formula::Atom(a) => a.vars(out),
        Formula::Step(_) => {}
        Formula::Not(x)
        | Formula::AllNext(_, x)
        | Formula::ExNext(_, x)
        | Formula::AllNextAll(x)
        | Formula::ExNextAny(x)
        | Formula::AllFinally(x)
        | Formula::ExFinally(x)
        | Formula::AllGlobally(x)
        | Formula::ExGlobally(x) => formula_vars(x, out),
        Formula::And(a, b)
        | Formula::Or(a, b)
        | Formula::Implies(a, b)
        | Formula::Iff(a, b)
        | Formula::AllUntil(a, b)
        | Formula::ExUntil(a, b) => {
            formula_vars(a, out);
            formula_vars(b, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::vocab::Value;

    fn two_var_vocab() -> Vocab {
        let mut v = Vocab::new();
        let d = v
            .add_sort("d3", vec![Value::Int(0), Value::Int(1), Value::Int(2)])
            .unwrap();
        v.add_var("v1", d, crate::vocab::VarKind::Shared).unwrap();
        v.add_var("v2", d, crate::vocab::VarKind::Shared).unwrap();
        v
    }

    #[test]
    fn parses_with_expected_precedence() {
        let vocab = two_var_vocab();
        let f = parse_spec("v1 = 0 | v1 = 1 & v2 = 2", &vocab).unwrap();
        assert!(matches!(f, Formula::Or(_, _)));
        let f = parse_spec("v1 = 0 -> v1 = 1 -> v2 = 2", &vocab).unwrap();
        match f {
            Formula::Implies(_, rhs) => assert!(matches!(*rhs, Formula::Implies(_, _))),
            _ => panic!("implication should be right-associative"),
        }
        let f = parse_spec("AG (v1 = 2 -> AF (v2 = 1))", &vocab).unwrap();
        assert!(matches!(f, Formula::AllGlobally(_)));
    }

    #[test]
    fn indexed_next_operators_parse() {
        let vocab = two_var_vocab();
        let f = parse_spec("AX1 v1 = 0 & EX2 v2 = 1", &vocab).unwrap();
        match f {
            Formula::And(a, b) => {
                assert!(matches!(*a, Formula::AllNext(0, _)));
                assert!(matches!(*b, Formula::ExNext(1, _)));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn nested_until_is_a_syntax_error() {
        let vocab = two_var_vocab();
        let err = parse_spec("A[v1 = 0 U v1 = 1 U v1 = 2]", &vocab).unwrap_err();
        assert!(matches!(err, LogicError::Syntax { .. }), "{err}");
    }

    #[test]
    fn display_round_trips_through_parser() {
        let vocab = two_var_vocab();
        for src in [
            "AG !(v1 = 1 & v2 = 1)",
            "A[v1 = 0 U v2 = 2] | E[true U v1 = 2]",
            "AX1 (v1 = 0 -> EX2 v2 = 1)",
            "AG (v1 = 2 -> AF v2 = 1)",
            "!(v1 = 0) & v2 >= 1 <-> EF v1 = 2",
        ] {
            let f = parse_spec(src, &vocab).unwrap();
            let shown = f.display(&vocab).to_string();
            let again = parse_spec(&shown, &vocab)
                .unwrap_or_else(|e| panic!("reparse of `{shown}`: {e}"));
            assert_eq!(f, again, "{src} -> {shown}");
        }
    }

    #[test]
    fn nnf_pushes_negations_onto_atoms() {
        let vocab = two_var_vocab();
        for src in [
            "!(AG (v1 = 0 -> AF v2 = 1))",
            "!(A[v1 = 0 U v2 = 1])",
            "!(E[v1 = 0 U v2 = 1])",
            "!(AX (v1 = 0 <-> v2 = 1))",
            "!(EG EF v1 = 2)",
            "!!(v1 < 2)",
        ] {
            let f = parse_spec(src, &vocab).unwrap();
            let n = to_nnf(&f, 2);
            assert!(is_nnf(&n), "{src} -> {:?}", n);
        }
    }

    #[test]
    fn negated_globally_becomes_until() {
        let vocab = two_var_vocab();
        let f = parse_spec("!(AG v1 = 0)", &vocab).unwrap();
        let n = to_nnf(&f, 1);
        // EF !(v1 = 0) in until form
        match n {
            Formula::ExUntil(p, _) => assert_eq!(*p, Formula::tt()),
            other => panic!("expected an until, got {other:?}"),
        }
    }

    #[test]
    fn classification_shapes() {
        let vocab = two_var_vocab();
        let f = to_nnf(&parse_spec("AG v1 = 0", &vocab).unwrap(), 2);
        match classify(&f, 2) {
            Rule::Alpha(parts) => {
                assert_eq!(parts.len(), 2);
                assert_eq!(parts[0], parse_spec("v1 = 0", &vocab).unwrap());
                // second part: AX1 AG v1=0 & AX2 AG v1=0
                assert!(matches!(parts[1], Formula::And(_, _)));
            }
            other => panic!("{other:?}"),
        }
        let f = to_nnf(&parse_spec("A[v1 = 0 U v2 = 1]", &vocab).unwrap(), 1);
        match classify(&f, 1) {
            Rule::Beta(parts) => {
                assert_eq!(parts.len(), 2);
                assert!(matches!(parts[1], Formula::And(_, _)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn closure_stays_finite_and_small() {
        let vocab = two_var_vocab();
        let f = parse_spec("AG (v1 = 2 -> AF v2 = 1)", &vocab).unwrap();
        let c = closure(&f, 2);
        assert!(c.len() <= 16, "closure blew up: {}", c.len());
        assert!(c.iter().all(is_nnf));
    }

    #[test]
    fn model_checking_a_simple_loop() {
        // two states looping: v1: 0 -> 1 -> 0 (single process)
        let mut vocab = Vocab::new();
        let d = vocab.add_sort("d", vec![Value::Int(0), Value::Int(1)]).unwrap();
        let v1 = vocab.add_var("v1", d, crate::vocab::VarKind::Shared).unwrap();
        let mk = |ix: u8| {
            let mut v = Valuation::new(&vocab);
            v.set_index(v1, ix);
            v
        };
        let m = Model::new(vocab.clone(), 1, vec![mk(0), mk(1)], vec![0], vec![(0, 0, 1), (1, 0, 0)]);
        let check = |s: &str| model_check(&m, &parse_spec(s, &vocab).unwrap()).unwrap().holds;
        assert!(check("AF v1 = 1"));
        assert!(check("AG (v1 = 0 -> AX1 v1 = 1)"));
        assert!(check("AG EF v1 = 0"));
        assert!(!check("AG v1 = 0"));
        assert!(check("EG true"));
        assert!(!check("EG v1 = 0"));
        assert!(check("A[true U v1 = 1]"));
        assert!(!check("E[v1 = 0 U v1 = 1] -> false"));
    }

    #[test]
    fn axi_is_vacuous_without_that_process_edge() {
        // one state, self loop by process 1 only; process 2 has no move
        let mut vocab = Vocab::new();
        let d = vocab.add_sort("d", vec![Value::Int(0)]).unwrap();
        vocab.add_var("v1", d, crate::vocab::VarKind::Shared).unwrap();
        let v = Valuation::new(&vocab);
        let m = Model::new(vocab.clone(), 2, vec![v], vec![0], vec![(0, 0, 0)]);
        let check = |s: &str| model_check(&m, &parse_spec(s, &vocab).unwrap()).unwrap().holds;
        assert!(check("AX2 false"));
        assert!(!check("EX2 true"));
        assert!(check("EX1 true"));
    }

    #[test]
    fn non_total_model_is_rejected() {
        let mut vocab = Vocab::new();
        let d = vocab.add_sort("d", vec![Value::Int(0)]).unwrap();
        vocab.add_var("v1", d, crate::vocab::VarKind::Shared).unwrap();
        let v = Valuation::new(&vocab);
        let m = Model::new(vocab.clone(), 1, vec![v], vec![0], vec![]);
        let err = model_check(&m, &Formula::tt()).unwrap_err();
        assert!(matches!(err, LogicError::NonTotalModel(0)));
    }

    #[test]
    fn program_check_reports_witness() {
        let p = parse_program(
            "shared v : {0,1};\nprocess P1 { a: goto a; }",
        )
        .unwrap();
        let f = parse_spec("v = 0", &p.vocab).unwrap();
        let r = program_satisfies(&p, &f).unwrap();
        assert!(!r.holds);
        let (_, witness) = r.witness.unwrap();
        assert!(witness.contains("v=1"), "{witness}");
    }

    #[test]
    fn program_deadlock_is_an_error() {
        let p = parse_program(
            "shared v : {0,1} with v = 0;\n\
             process P1 { a: when (v = 1) -> { goto a; } }",
        )
        .unwrap();
        let err = program_satisfies(&p, &Formula::tt()).unwrap_err();
        assert!(matches!(err, LogicError::Lang(LangError::Deadlock { .. })), "{err}");
    }

    #[test]
    fn mutual_exclusion_of_a_lock_program() {
        let p = parse_program(
            "shared turn : {0, 1} with turn = 0;\n\
             process P1 { n: when (turn = 0) -> { goto c; } c: turn := 1; x: goto n; }\n\
             process P2 { n: when (turn = 1) -> { goto c; } c: turn := 0; x: goto n; }",
        )
        .unwrap();
        let f = parse_spec("AG !(loc1 = c & loc2 = c)", &p.vocab).unwrap();
        assert!(program_satisfies(&p, &f).unwrap().holds);
        let g = parse_spec("AG EF loc1 = c", &p.vocab).unwrap();
        assert!(program_satisfies(&p, &g).unwrap().holds);
    }
}
