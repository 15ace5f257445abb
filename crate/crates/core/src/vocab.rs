//! Sorts, variables, terms, atoms and guards of the assertion vocabulary.
//!
//! Every sort carries an explicit finite ordered domain; every function and
//! predicate symbol is built in with a fixed interpretation.  Arithmetic that
//! escapes the declared domain is a [`EvalError::PartialApplication`] rather
//! than wrapping.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Interned sort handle.  Sorts are structural: two declarations with the same
/// domain list share one `SortId`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SortId(pub u32);

/// Handle of a state variable (location, shared, local, auxiliary or shadow).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub u32);

/// A domain element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Bool(bool),
    Int(i64),
    /// Location labels and other symbolic constants.
    Label(String),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(true) => write!(f, "T"),
            Value::Bool(false) => write!(f, "F"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Label(s) => write!(f, "{s}"),
        }
    }
}

/// A named finite ordered domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sort {
    pub name: String,
    pub domain: Vec<Value>,
}

/// What role a variable plays in the program state; the synthesizer and the
/// code generator both need this classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarKind {
    /// Control location of process `i` (0-based).
    Location(usize),
    Shared,
    /// Local to process `i`: only that process may read or write it.
    Local(usize),
    /// Auxiliary variable introduced by model extraction (the duplicate-state
    /// disambiguator).
    Aux,
    /// Shadow of an input variable, fixed to that variable's initial value.
    Shadow(VarId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarInfo {
    pub name: String,
    pub sort: SortId,
    pub kind: VarKind,
}

/// The symbol table: sorts with their domains plus the declared variables in
/// canonical (declaration) order.  A [`Valuation`] assigns every variable a
/// domain index following this order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    sorts: Vec<Sort>,
    vars: Vec<VarInfo>,
    by_name: BTreeMap<String, VarId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("duplicate value {value} in domain of sort {sort}")]
    DuplicateDomainValue { sort: String, value: String },
    #[error("empty domain for sort {0}")]
    EmptyDomain(String),
    #[error("duplicate variable {0}")]
    DuplicateVariable(String),
    #[error("unknown symbol {0}")]
    UnknownSymbol(String),
    #[error("domain of sort {0} exceeds 255 values")]
    DomainTooLarge(String),
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Vocab::default();
        v.sorts.push(Sort {
            name: "bool".into(),
            domain: vec![Value::Bool(false), Value::Bool(true)],
        });
        v
    }

    pub fn bool_sort(&self) -> SortId {
        SortId(0)
    }

    /// Intern a sort by its domain; the name is kept for display only.
    pub fn add_sort(&mut self, name: &str, domain: Vec<Value>) -> Result<SortId, VocabError> {
        if domain.is_empty() {
            return Err(VocabError::EmptyDomain(name.into()));
        }
        if domain.len() > 255 {
            return Err(VocabError::DomainTooLarge(name.into()));
        }
        for (i, v) in domain.iter().enumerate() {
            if domain[..i].contains(v) {
                return Err(VocabError::DuplicateDomainValue {
                    sort: name.into(),
                    value: v.to_string(),
                });
            }
        }
        if let Some(pos) = self.sorts.iter().position(|s| s.domain == domain) {
            return Ok(SortId(pos as u32));
        }
        self.sorts.push(Sort { name: name.into(), domain });
        Ok(SortId((self.sorts.len() - 1) as u32))
    }

    pub fn add_var(&mut self, name: &str, sort: SortId, kind: VarKind) -> Result<VarId, VocabError> {
        if self.by_name.contains_key(name) {
            return Err(VocabError::DuplicateVariable(name.into()));
        }
        let id = VarId(self.vars.len() as u32);
        self.vars.push(VarInfo { name: name.into(), sort, kind });
        self.by_name.insert(name.into(), id);
        Ok(id)
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn var_info(&self, v: VarId) -> &VarInfo {
        &self.vars[v.0 as usize]
    }

    /// Reclassify a variable (e.g. mark a mirror-initialized shared variable
    /// as a shadow once its initializer is known).
    pub fn set_var_kind(&mut self, v: VarId, kind: VarKind) {
        self.vars[v.0 as usize].kind = kind;
    }

    /// Rename a variable, keeping its id; fails if the name is taken.
    pub fn rename_var(&mut self, v: VarId, name: &str) -> Result<(), VocabError> {
        if self.by_name.contains_key(name) {
            return Err(VocabError::DuplicateVariable(name.into()));
        }
        let old = std::mem::replace(&mut self.vars[v.0 as usize].name, name.to_string());
        self.by_name.remove(&old);
        self.by_name.insert(name.to_string(), v);
        Ok(())
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v.0 as usize].name
    }

    pub fn sort_of(&self, v: VarId) -> SortId {
        self.vars[v.0 as usize].sort
    }

    pub fn sort(&self, s: SortId) -> &Sort {
        &self.sorts[s.0 as usize]
    }

    pub fn domain(&self, s: SortId) -> &[Value] {
        &self.sorts[s.0 as usize].domain
    }

    pub fn domain_of_var(&self, v: VarId) -> &[Value] {
        self.domain(self.sort_of(v))
    }

    pub fn value_index(&self, s: SortId, value: &Value) -> Option<u8> {
        self.domain(s).iter().position(|v| v == value).map(|i| i as u8)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.vars.len() as u32).map(VarId)
    }

    /// True if every value of the sort is an integer.
    pub fn is_int_sort(&self, s: SortId) -> bool {
        self.domain(s).iter().all(|v| matches!(v, Value::Int(_)))
    }

    /// All total assignments to `vars` (other variables untouched), in
    /// odometer order over the declared domains — the canonical enumeration
    /// used by guard simplification and the tableau's consistency check.
    pub fn enumerate_assignments(&self, vars: &[VarId]) -> Vec<BTreeMap<VarId, u8>> {
        let mut out = vec![BTreeMap::new()];
        for &v in vars {
            let n = self.domain_of_var(v).len() as u8;
            let mut next = Vec::with_capacity(out.len() * n as usize);
            for base in &out {
                for ix in 0..n {
                    let mut m = base.clone();
                    m.insert(v, ix);
                    next.push(m);
                }
            }
            out = next;
        }
        out
    }
}

/// A total assignment of every variable in a [`Vocab`], stored as one domain
/// index per variable in declaration order.  State identity is valuation
/// identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Valuation {
    ixs: Vec<u8>,
}

impl Valuation {
    pub fn new(vocab: &Vocab) -> Self {
        Valuation { ixs: vec![0; vocab.num_vars()] }
    }

    pub fn from_indices(ixs: Vec<u8>) -> Self {
        Valuation { ixs }
    }

    pub fn index(&self, v: VarId) -> u8 {
        self.ixs[v.0 as usize]
    }

    pub fn indices(&self) -> &[u8] {
        &self.ixs
    }

    pub fn set_index(&mut self, v: VarId, ix: u8) {
        self.ixs[v.0 as usize] = ix;
    }

    pub fn get<'a>(&self, vocab: &'a Vocab, v: VarId) -> &'a Value {
        &vocab.domain_of_var(v)[self.ixs[v.0 as usize] as usize]
    }

    pub fn set(&mut self, vocab: &Vocab, v: VarId, value: &Value) -> Result<(), EvalError> {
        let sort = vocab.sort_of(v);
        match vocab.value_index(sort, value) {
            Some(ix) => {
                self.set_index(v, ix);
                Ok(())
            }
            None => Err(EvalError::PartialApplication {
                detail: format!(
                    "value {} is outside the domain of {}",
                    value,
                    vocab.var_name(v)
                ),
            }),
        }
    }

    /// Extend with one extra trailing variable slot (used when the auxiliary
    /// variable is appended to the vocabulary).
    pub fn extended(&self, ix: u8) -> Valuation {
        let mut ixs = self.ixs.clone();
        ixs.push(ix);
        Valuation { ixs }
    }

    pub fn render(&self, vocab: &Vocab) -> String {
        let mut parts = Vec::new();
        for v in vocab.var_ids() {
            parts.push(format!("{}={}", vocab.var_name(v), self.get(vocab, v)));
        }
        parts.join(", ")
    }
}

/// Terms: variables, literals and bounded integer arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Var(VarId),
    Lit(Value),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(v: VarId) -> Term {
        Term::Var(v)
    }

    pub fn int(n: i64) -> Term {
        Term::Lit(Value::Int(n))
    }

    pub fn vars(&self, out: &mut Vec<VarId>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Term::Lit(_) => {}
            Term::Add(a, b) | Term::Sub(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }

    /// The sort a term determines on its own, if any.  Integer and label
    /// literals are polymorphic and take their sort from context.
    fn intrinsic_sort(&self, vocab: &Vocab) -> Option<SortId> {
        match self {
            Term::Var(v) => Some(vocab.sort_of(*v)),
            Term::Lit(Value::Bool(_)) => Some(vocab.bool_sort()),
            Term::Lit(_) => None,
            Term::Add(a, b) | Term::Sub(a, b) => {
                a.intrinsic_sort(vocab).or_else(|| b.intrinsic_sort(vocab))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    /// A built-in function application left the finite domain.
    #[error("partial application: {detail}")]
    PartialApplication { detail: String },
    #[error("sort mismatch: {detail}")]
    SortMismatch { detail: String },
}

fn sort_mismatch(detail: impl Into<String>) -> EvalError {
    EvalError::SortMismatch { detail: detail.into() }
}

/// Statically check that `t` is a well-formed term of sort `expected`.
pub fn check_term(t: &Term, expected: SortId, vocab: &Vocab) -> Result<(), EvalError> {
    match t {
        Term::Var(v) => {
            if vocab.sort_of(*v) == expected {
                Ok(())
            } else {
                Err(sort_mismatch(format!(
                    "variable {} has sort {}, expected {}",
                    vocab.var_name(*v),
                    vocab.sort(vocab.sort_of(*v)).name,
                    vocab.sort(expected).name
                )))
            }
        }
        Term::Lit(value) => {
            if vocab.value_index(expected, value).is_some() {
                Ok(())
            } else {
                Err(sort_mismatch(format!(
                    "literal {} is not in the domain of sort {}",
                    value,
                    vocab.sort(expected).name
                )))
            }
        }
        Term::Add(a, b) | Term::Sub(a, b) => {
            if !vocab.is_int_sort(expected) {
                return Err(sort_mismatch(format!(
                    "arithmetic over non-integer sort {}",
                    vocab.sort(expected).name
                )));
            }
            check_term(a, expected, vocab)?;
            check_term(b, expected, vocab)
        }
    }
}

/// Evaluate a term of sort `expected` under a total valuation.  Every
/// intermediate arithmetic result must stay inside the expected domain.
pub fn eval_term(
    t: &Term,
    expected: SortId,
    vocab: &Vocab,
    val: &Valuation,
) -> Result<Value, EvalError> {
    match t {
        Term::Var(v) => Ok(val.get(vocab, *v).clone()),
        Term::Lit(value) => Ok(value.clone()),
        Term::Add(a, b) | Term::Sub(a, b) => {
            let x = eval_term(a, expected, vocab, val)?;
            let y = eval_term(b, expected, vocab, val)?;
            let (x, y) = match (x.as_int(), y.as_int()) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(sort_mismatch("arithmetic on non-integer values".to_string())),
            };
            let r = if matches!(t, Term::Add(_, _)) { x + y } else { x - y };
            let value = Value::Int(r);
            if vocab.value_index(expected, &value).is_some() {
                Ok(value)
            } else {
                Err(EvalError::PartialApplication {
                    detail: format!(
                        "{} {} {} = {} is outside the domain of sort {}",
                        x,
                        if matches!(t, Term::Add(_, _)) { "+" } else { "-" },
                        y,
                        r,
                        vocab.sort(expected).name
                    ),
                })
            }
        }
    }
}

/// Atoms: equality at every sort plus integer comparisons, with constant truth
/// values as nullary predicates.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Atom {
    True,
    False,
    Eq(Term, Term),
    Lt(Term, Term),
    Le(Term, Term),
    Gt(Term, Term),
    Ge(Term, Term),
}

impl Atom {
    /// Equality with any literal side normalized to the right, so that
    /// `0 = v` and `v = 0` are the same atom.
    pub fn eq(a: Term, b: Term) -> Atom {
        match (&a, &b) {
            (Term::Lit(_), Term::Var(_)) => Atom::Eq(b, a),
            _ => Atom::Eq(a, b),
        }
    }

    /// The simple atom `v = value`.
    pub fn simple(v: VarId, value: Value) -> Atom {
        Atom::Eq(Term::Var(v), Term::Lit(value))
    }

    /// If this is a simple atom `v = literal`, return the pieces.
    pub fn as_simple(&self) -> Option<(VarId, &Value)> {
        match self {
            Atom::Eq(Term::Var(v), Term::Lit(value)) => Some((*v, value)),
            _ => None,
        }
    }

    pub fn vars(&self, out: &mut Vec<VarId>) {
        match self {
            Atom::True | Atom::False => {}
            Atom::Eq(a, b) | Atom::Lt(a, b) | Atom::Le(a, b) | Atom::Gt(a, b) | Atom::Ge(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }

    fn operand_sort(&self, vocab: &Vocab) -> Result<SortId, EvalError> {
        match self {
            Atom::True | Atom::False => Err(sort_mismatch("constant atom has no operands")),
            Atom::Eq(a, b) | Atom::Lt(a, b) | Atom::Le(a, b) | Atom::Gt(a, b) | Atom::Ge(a, b) => a
                .intrinsic_sort(vocab)
                .or_else(|| b.intrinsic_sort(vocab))
                .ok_or_else(|| {
                    sort_mismatch("cannot infer the sort of a comparison between two literals")
                }),
        }
    }

    pub fn check(&self, vocab: &Vocab) -> Result<(), EvalError> {
        match self {
            Atom::True | Atom::False => Ok(()),
            Atom::Eq(a, b) => {
                let s = self.operand_sort(vocab)?;
                check_term(a, s, vocab)?;
                check_term(b, s, vocab)
            }
            Atom::Lt(a, b) | Atom::Le(a, b) | Atom::Gt(a, b) | Atom::Ge(a, b) => {
                let s = self.operand_sort(vocab)?;
                if !vocab.is_int_sort(s) {
                    return Err(sort_mismatch(format!(
                        "ordered comparison over non-integer sort {}",
                        vocab.sort(s).name
                    )));
                }
                check_term(a, s, vocab)?;
                check_term(b, s, vocab)
            }
        }
    }

    pub fn eval(&self, vocab: &Vocab, val: &Valuation) -> Result<bool, EvalError> {
        match self {
            Atom::True => Ok(true),
            Atom::False => Ok(false),
            Atom::Eq(a, b) => {
                let s = self.operand_sort(vocab)?;
                Ok(eval_term(a, s, vocab, val)? == eval_term(b, s, vocab, val)?)
            }
            Atom::Lt(a, b) | Atom::Le(a, b) | Atom::Gt(a, b) | Atom::Ge(a, b) => {
                let s = self.operand_sort(vocab)?;
                let x = eval_term(a, s, vocab, val)?
                    .as_int()
                    .ok_or_else(|| sort_mismatch("comparison on non-integer value"))?;
                let y = eval_term(b, s, vocab, val)?
                    .as_int()
                    .ok_or_else(|| sort_mismatch("comparison on non-integer value"))?;
                Ok(match self {
                    Atom::Lt(_, _) => x < y,
                    Atom::Le(_, _) => x <= y,
                    Atom::Gt(_, _) => x > y,
                    Atom::Ge(_, _) => x >= y,
                    _ => unreachable!(),
                })
            }
        }
    }
}

/// Boolean combinations of atoms: instruction and region guards.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Guard {
    Atom(Atom),
    Not(Box<Guard>),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
}

impl Guard {
    pub fn tt() -> Guard {
        Guard::Atom(Atom::True)
    }

    pub fn ff() -> Guard {
        Guard::Atom(Atom::False)
    }

    pub fn atom(a: Atom) -> Guard {
        Guard::Atom(a)
    }

    pub fn and(a: Guard, b: Guard) -> Guard {
        Guard::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Guard, b: Guard) -> Guard {
        Guard::Or(Box::new(a), Box::new(b))
    }

    pub fn not(a: Guard) -> Guard {
        Guard::Not(Box::new(a))
    }

    /// Right-folded conjunction; empty input is `true`.
    pub fn conj(mut parts: Vec<Guard>) -> Guard {
        match parts.len() {
            0 => Guard::tt(),
            1 => parts.pop().unwrap(),
            _ => {
                let mut g = parts.pop().unwrap();
                while let Some(p) = parts.pop() {
                    g = Guard::and(p, g);
                }
                g
            }
        }
    }

    /// Right-folded disjunction; empty input is `false`.
    pub fn disj(mut parts: Vec<Guard>) -> Guard {
        match parts.len() {
            0 => Guard::ff(),
            1 => parts.pop().unwrap(),
            _ => {
                let mut g = parts.pop().unwrap();
                while let Some(p) = parts.pop() {
                    g = Guard::or(p, g);
                }
                g
            }
        }
    }

    pub fn vars(&self, out: &mut Vec<VarId>) {
        match self {
            Guard::Atom(a) => a.vars(out),
            Guard::Not(g) => g.vars(out),
            Guard::And(a, b) | Guard::Or(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }

    pub fn check(&self, vocab: &Vocab) -> Result<(), EvalError> {
        match self {
            Guard::Atom(a) => a.check(vocab),
            Guard::Not(g) => g.check(vocab),
            Guard::And(a, b) | Guard::Or(a, b) => {
                a.check(vocab)?;
                b.check(vocab)
            }
        }
    }

    pub fn eval(&self, vocab: &Vocab, val: &Valuation) -> Result<bool, EvalError> {
        match self {
            Guard::Atom(a) => a.eval(vocab, val),
            Guard::Not(g) => Ok(!g.eval(vocab, val)?),
            Guard::And(a, b) => Ok(a.eval(vocab, val)? && b.eval(vocab, val)?),
            Guard::Or(a, b) => Ok(a.eval(vocab, val)? || b.eval(vocab, val)?),
        }
    }
}

// ---------------------------------------------------------------------------
// Display (concrete syntax; round-trips through the parsers)
// ---------------------------------------------------------------------------

pub struct TermDisplay<'a> {
    term: &'a Term,
    vocab: &'a Vocab,
}

impl Term {
    pub fn display<'a>(&'a self, vocab: &'a Vocab) -> TermDisplay<'a> {
        TermDisplay { term: self, vocab }
    }
}

impl fmt::Display for TermDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.term {
            Term::Var(v) => write!(f, "{}", self.vocab.var_name(*v)),
            Term::Lit(value) => write!(f, "{value}"),
            Term::Add(a, b) => {
                write!(f, "{} + {}", a.display(self.vocab), b.display(self.vocab))
            }
            Term::Sub(a, b) => {
                write!(f, "{} - {}", a.display(self.vocab), b.display(self.vocab))
            }
        }
    }
}

pub struct AtomDisplay<'a> {
    atom: &'a Atom,
    vocab: &'a Vocab,
}

impl Atom {
    pub fn display<'a>(&'a self, vocab: &'a Vocab) -> AtomDisplay<'a> {
        AtomDisplay { atom: self, vocab }
    }
}

impl fmt::Display for AtomDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.vocab;
        match self.atom {
            Atom::True => write!(f, "true"),
            Atom::False => write!(f, "false"),
            Atom::Eq(a, b) => write!(f, "{} = {}", a.display(v), b.display(v)),
            Atom::Lt(a, b) => write!(f, "{} < {}", a.display(v), b.display(v)),
            Atom::Le(a, b) => write!(f, "{} <= {}", a.display(v), b.display(v)),
            Atom::Gt(a, b) => write!(f, "{} > {}", a.display(v), b.display(v)),
            Atom::Ge(a, b) => write!(f, "{} >= {}", a.display(v), b.display(v)),
        }
    }
}

pub struct GuardDisplay<'a> {
    guard: &'a Guard,
    vocab: &'a Vocab,
}

impl Guard {
    pub fn display<'a>(&'a self, vocab: &'a Vocab) -> GuardDisplay<'a> {
        GuardDisplay { guard: self, vocab }
    }
}

fn fmt_guard(g: &Guard, vocab: &Vocab, parent: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    // Precedence: atoms bind tightest, then !, &, |.
    let prec = match g {
        Guard::Atom(_) => 3,
        Guard::Not(_) => 3,
        Guard::And(_, _) => 2,
        Guard::Or(_, _) => 1,
    };
    let parens = prec < parent;
    if parens {
        write!(f, "(")?;
    }
    match g {
        Guard::Atom(a) => {
            // Non-simple atoms get parens under ! so the printed text re-parses.
            write!(f, "{}", a.display(vocab))?;
        }
        Guard::Not(inner) => {
            write!(f, "!")?;
            match &**inner {
                Guard::Atom(_) | Guard::Not(_) => {
                    write!(f, "(")?;
                    fmt_guard(inner, vocab, 0, f)?;
                    write!(f, ")")?;
                }
                _ => fmt_guard(inner, vocab, 3, f)?,
            }
        }
        Guard::And(a, b) => {
            fmt_guard(a, vocab, 2, f)?;
            write!(f, " & ")?;
            fmt_guard(b, vocab, 2, f)?;
        }
        Guard::Or(a, b) => {
            fmt_guard(a, vocab, 1, f)?;
            write!(f, " | ")?;
            fmt_guard(b, vocab, 1, f)?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for GuardDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_guard(self.guard, self.vocab, 0, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_vocab() -> (Vocab, VarId, VarId) {
        let mut vocab = Vocab::new();
        let d = vocab
            .add_sort(
                "d4",
                vec![Value::Int(0), Value::Int(1), Value::Int(2), Value::Int(3)],
            )
            .unwrap();
        let v1 = vocab.add_var("v1", d, VarKind::Shared).unwrap();
        let v2 = vocab.add_var("v2", d, VarKind::Shared).unwrap();
        (vocab, v1, v2)
    }

    #[test]
    fn term_evaluation_in_domain() {
        let (vocab, v1, _) = small_vocab();
        let mut val = Valuation::new(&vocab);
        val.set(&vocab, v1, &Value::Int(2)).unwrap();
        let t = Term::Add(Box::new(Term::var(v1)), Box::new(Term::int(1)));
        let s = vocab.sort_of(v1);
        assert_eq!(eval_term(&t, s, &vocab, &val).unwrap(), Value::Int(3));
    }

    #[test]
    fn term_evaluation_escaping_domain_is_partial() {
        let (vocab, v1, _) = small_vocab();
        let mut val = Valuation::new(&vocab);
        val.set(&vocab, v1, &Value::Int(3)).unwrap();
        let t = Term::Add(Box::new(Term::var(v1)), Box::new(Term::int(1)));
        let s = vocab.sort_of(v1);
        match eval_term(&t, s, &vocab, &val) {
            Err(EvalError::PartialApplication { .. }) => {}
            other => panic!("expected partial application, got {other:?}"),
        }
    }

    #[test]
    fn atoms_evaluate_and_check() {
        let (vocab, v1, v2) = small_vocab();
        let mut val = Valuation::new(&vocab);
        val.set(&vocab, v1, &Value::Int(1)).unwrap();
        val.set(&vocab, v2, &Value::Int(2)).unwrap();
        let lt = Atom::Lt(Term::var(v1), Term::var(v2));
        lt.check(&vocab).unwrap();
        assert!(lt.eval(&vocab, &val).unwrap());
        let eq = Atom::eq(Term::int(1), Term::var(v1));
        // literal side normalized to the right
        assert_eq!(eq.as_simple().unwrap().0, v1);
        assert!(eq.eval(&vocab, &val).unwrap());
    }

    #[test]
    fn literal_outside_domain_is_sort_error() {
        let (vocab, v1, _) = small_vocab();
        let a = Atom::eq(Term::var(v1), Term::int(7));
        assert!(matches!(a.check(&vocab), Err(EvalError::SortMismatch { .. })));
    }

    #[test]
    fn sorts_are_structural() {
        let mut vocab = Vocab::new();
        let a = vocab.add_sort("a", vec![Value::Int(0), Value::Int(1)]).unwrap();
        let b = vocab.add_sort("b", vec![Value::Int(0), Value::Int(1)]).unwrap();
        assert_eq!(a, b);
        let c = vocab.add_sort("c", vec![Value::Int(1), Value::Int(0)]).unwrap();
        assert_ne!(a, c); // order is part of the domain
    }

    #[test]
    fn duplicate_domain_value_rejected() {
        let mut vocab = Vocab::new();
        let r = vocab.add_sort("bad", vec![Value::Int(0), Value::Int(0)]);
        assert!(matches!(r, Err(VocabError::DuplicateDomainValue { .. })));
    }

    #[test]
    fn assignment_enumeration_is_odometer_ordered() {
        let (vocab, v1, v2) = small_vocab();
        let all = vocab.enumerate_assignments(&[v1, v2]);
        assert_eq!(all.len(), 16);
        assert_eq!(all[0][&v1], 0);
        assert_eq!(all[0][&v2], 0);
        assert_eq!(all[1][&v2], 1); // last variable varies fastest
        assert_eq!(all[4][&v1], 1);
    }

    #[test]
    fn guard_display_round_trip_shape() {
        let (vocab, v1, v2) = small_vocab();
        let g = Guard::or(
            Guard::and(
                Guard::atom(Atom::simple(v1, Value::Int(0))),
                Guard::atom(Atom::simple(v2, Value::Int(1))),
            ),
            Guard::not(Guard::atom(Atom::Lt(Term::var(v1), Term::var(v2)))),
        );
        assert_eq!(
            g.display(&vocab).to_string(),
            "v1 = 0 & v2 = 1 | !(v1 < v2)"
        );
    }
}
