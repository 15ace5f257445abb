//! Parser for the program DSL.
//!
//! Parsing is two-stage: a surface pass over tokens producing name-based
//! syntax, then resolution, which builds the symbol table, checks sorts, and
//! enforces per-process visibility (a plain instruction of process `i` may
//! only touch shared variables and its own locals; region guards and bodies
//! may read anything, since synthesized guards mention the whole state).

use crate::lex::{lex, Cursor, Tok};
use crate::vocab::{Atom, Guard, Term, Value, VarId, VarKind, Vocab};

use super::{Block, Decl, Exit, Init, Instruction, LangError, Process, Program, Stmt};

const RESERVED: &[&str] = &[
    "shared", "process", "local", "atomic", "when", "goto", "if", "else", "with", "bool", "true",
    "false", "T", "F",
];

// ---------------------------------------------------------------------------
// Surface syntax
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) enum RTerm {
    Name(String),
    Lit(Value),
    Add(Box<RTerm>, Box<RTerm>),
    Sub(Box<RTerm>, Box<RTerm>),
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum CmpOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone)]
pub(crate) enum RAtom {
    Const(bool),
    Cmp(RTerm, CmpOp, RTerm),
    /// A bare name in guard position: sugar for `name = T`.
    Bare(RTerm),
}

#[derive(Debug, Clone)]
enum RGuard {
    Atom(RAtom),
    Not(Box<RGuard>),
    And(Box<RGuard>, Box<RGuard>),
    Or(Box<RGuard>, Box<RGuard>),
}

#[derive(Debug, Clone)]
struct RAssign {
    targets: Vec<String>,
    exprs: Vec<RTerm>,
}

#[derive(Debug, Clone)]
enum RStmt {
    Assign(RAssign),
    If { guard: RGuard, then_s: Vec<RStmt>, else_s: Vec<RStmt> },
}

#[derive(Debug, Clone)]
enum RExit {
    Fall,
    Goto(String),
    Branch { guard: RGuard, then_to: String, else_to: String },
}

#[derive(Debug, Clone)]
struct RBlock {
    stmts: Vec<RStmt>,
    exit: RExit,
}

#[derive(Debug, Clone)]
enum RInstr {
    Assign(RAssign),
    IfGoto { guard: RGuard, then_to: String, else_to: String },
    Goto(String),
    Block(RBlock),
    Ccr { guard: RGuard, body: RBlock },
}

#[derive(Debug, Clone)]
enum RDomain {
    Bool,
    Values(Vec<Value>),
}

#[derive(Debug, Clone)]
struct RDeclGroup {
    names: Vec<String>,
    domain: RDomain,
    /// `with name = init` clauses; the init is either a literal or a name
    /// (an earlier variable to mirror, or a label constant of the domain).
    inits: Vec<(String, RTerm)>,
}

#[derive(Debug, Clone)]
struct RProcess {
    name: String,
    locals: Vec<RDeclGroup>,
    instrs: Vec<(String, RInstr)>,
}

#[derive(Debug, Clone)]
struct RProgram {
    shared: Vec<RDeclGroup>,
    processes: Vec<RProcess>,
}

fn syn(cur: &Cursor, msg: impl Into<String>) -> LangError {
    let (line, col) = cur.pos_info();
    LangError::Syntax { line, col, msg: msg.into() }
}

fn expect(cur: &mut Cursor, t: &Tok) -> Result<(), LangError> {
    if cur.eat(t) {
        Ok(())
    } else {
        let found = cur.peek().map(|x| x.to_string()).unwrap_or_else(|| "end of input".into());
        Err(syn(cur, format!("expected {t}, found {found}")))
    }
}

fn expect_name(cur: &mut Cursor, what: &str) -> Result<String, LangError> {
    match cur.peek() {
        Some(Tok::Ident(s)) => {
            let s = s.clone();
            cur.next();
            Ok(s)
        }
        other => {
            let found = other.map(|x| x.to_string()).unwrap_or_else(|| "end of input".into());
            Err(syn(cur, format!("expected {what}, found {found}")))
        }
    }
}

fn expect_fresh_name(cur: &mut Cursor, what: &str) -> Result<String, LangError> {
    let s = expect_name(cur, what)?;
    if RESERVED.contains(&s.as_str()) {
        return Err(syn(cur, format!("`{s}` is a reserved word and cannot name a {what}")));
    }
    Ok(s)
}

/// A possibly qualified name `P.x`; the dot form names another process's local.
fn qualified_name(cur: &mut Cursor) -> Result<String, LangError> {
    let mut s = expect_name(cur, "name")?;
    if cur.eat(&Tok::Dot) {
        let rest = expect_name(cur, "name")?;
        s.push('.');
        s.push_str(&rest);
    }
    Ok(s)
}

fn parse_value(cur: &mut Cursor) -> Result<Value, LangError> {
    match cur.peek().cloned() {
        Some(Tok::Int(n)) => {
            cur.next();
            Ok(Value::Int(n))
        }
        Some(Tok::Minus) => {
            cur.next();
            match cur.next() {
                Some(Tok::Int(n)) => Ok(Value::Int(-n)),
                _ => Err(syn(cur, "expected integer after `-`")),
            }
        }
        Some(Tok::Ident(s)) => {
            cur.next();
            match s.as_str() {
                "T" => Ok(Value::Bool(true)),
                "F" => Ok(Value::Bool(false)),
                _ if RESERVED.contains(&s.as_str()) => {
                    Err(syn(cur, format!("`{s}` is reserved and cannot be a domain value")))
                }
                _ => Ok(Value::Label(s)),
            }
        }
        _ => Err(syn(cur, "expected a domain value")),
    }
}

fn parse_domain(cur: &mut Cursor) -> Result<RDomain, LangError> {
    if cur.eat_ident("bool") {
        return Ok(RDomain::Bool);
    }
    expect(cur, &Tok::LBrace)?;
    let first = parse_value(cur)?;
    if cur.eat(&Tok::DotDot) {
        let lo = match first {
            Value::Int(n) => n,
            other => return Err(syn(cur, format!("range bound `{other}` is not an integer"))),
        };
        let hi = match cur.next() {
            Some(Tok::Int(n)) => n,
            _ => return Err(syn(cur, "expected integer range bound")),
        };
        expect(cur, &Tok::RBrace)?;
        if lo > hi {
            return Err(syn(cur, format!("empty range {{{lo}..{hi}}}")));
        }
        return Ok(RDomain::Values((lo..=hi).map(Value::Int).collect()));
    }
    let mut vals = vec![first];
    while cur.eat(&Tok::Comma) {
        vals.push(parse_value(cur)?);
    }
    expect(cur, &Tok::RBrace)?;
    Ok(RDomain::Values(vals))
}

fn parse_decl_group(cur: &mut Cursor) -> Result<RDeclGroup, LangError> {
    let mut names = vec![expect_fresh_name(cur, "variable")?];
    while cur.eat(&Tok::Comma) {
        names.push(expect_fresh_name(cur, "variable")?);
    }
    expect(cur, &Tok::Colon)?;
    let domain = parse_domain(cur)?;
    let mut inits = Vec::new();
    if cur.eat_ident("with") {
        loop {
            let name = expect_name(cur, "variable")?;
            expect(cur, &Tok::Eq)?;
            let value = parse_init_value(cur)?;
            inits.push((name, value));
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
    }
    expect(cur, &Tok::Semi)?;
    Ok(RDeclGroup { names, domain, inits })
}

fn parse_init_value(cur: &mut Cursor) -> Result<RTerm, LangError> {
    match cur.peek().cloned() {
        Some(Tok::Ident(s)) if !RESERVED.contains(&s.as_str()) || s == "T" || s == "F" => {
            cur.next();
            match s.as_str() {
                "T" => Ok(RTerm::Lit(Value::Bool(true))),
                "F" => Ok(RTerm::Lit(Value::Bool(false))),
                _ => Ok(RTerm::Name(s)),
            }
        }
        _ => Ok(RTerm::Lit(parse_value(cur)?)),
    }
}

// Terms: sums of names and literals; no parentheses at term level.
fn parse_term(cur: &mut Cursor) -> Result<RTerm, LangError> {
    let mut t = parse_term_factor(cur)?;
    loop {
        if cur.eat(&Tok::Plus) {
            let rhs = parse_term_factor(cur)?;
            t = RTerm::Add(Box::new(t), Box::new(rhs));
        } else if cur.eat(&Tok::Minus) {
            let rhs = parse_term_factor(cur)?;
            t = RTerm::Sub(Box::new(t), Box::new(rhs));
        } else {
            return Ok(t);
        }
    }
}

fn parse_term_factor(cur: &mut Cursor) -> Result<RTerm, LangError> {
    match cur.peek().cloned() {
        Some(Tok::Int(n)) => {
            cur.next();
            Ok(RTerm::Lit(Value::Int(n)))
        }
        Some(Tok::Minus) => {
            cur.next();
            match cur.next() {
                Some(Tok::Int(n)) => Ok(RTerm::Lit(Value::Int(-n))),
                _ => Err(syn(cur, "expected integer after `-`")),
            }
        }
        Some(Tok::Ident(s)) => match s.as_str() {
            "T" => {
                cur.next();
                Ok(RTerm::Lit(Value::Bool(true)))
            }
            "F" => {
                cur.next();
                Ok(RTerm::Lit(Value::Bool(false)))
            }
            _ if RESERVED.contains(&s.as_str()) => {
                Err(syn(cur, format!("unexpected keyword `{s}` in expression")))
            }
            _ => Ok(RTerm::Name(qualified_name(cur)?)),
        },
        other => {
            let found = other.map(|x| x.to_string()).unwrap_or_else(|| "end of input".into());
            Err(syn(cur, format!("expected expression, found {found}")))
        }
    }
}

pub(crate) fn parse_atom(cur: &mut Cursor) -> Result<RAtom, LangError> {
    let lhs = parse_term(cur)?;
    let op = match cur.peek() {
        Some(Tok::Eq) => Some(CmpOp::Eq),
        Some(Tok::Lt) => Some(CmpOp::Lt),
        Some(Tok::Le) => Some(CmpOp::Le),
        Some(Tok::Gt) => Some(CmpOp::Gt),
        Some(Tok::Ge) => Some(CmpOp::Ge),
        _ => None,
    };
    match op {
        Some(op) => {
            cur.next();
            let rhs = parse_term(cur)?;
            Ok(RAtom::Cmp(lhs, op, rhs))
        }
        None => Ok(RAtom::Bare(lhs)),
    }
}

fn parse_guard_primary(cur: &mut Cursor) -> Result<RGuard, LangError> {
    if cur.eat(&Tok::Bang) {
        let g = parse_guard_primary(cur)?;
        return Ok(RGuard::Not(Box::new(g)));
    }
    if cur.eat(&Tok::LParen) {
        let g = parse_guard(cur)?;
        expect(cur, &Tok::RParen)?;
        return Ok(g);
    }
    if cur.eat_ident("true") {
        return Ok(RGuard::Atom(RAtom::Const(true)));
    }
    if cur.eat_ident("false") {
        return Ok(RGuard::Atom(RAtom::Const(false)));
    }
    Ok(RGuard::Atom(parse_atom(cur)?))
}

fn parse_guard_conj(cur: &mut Cursor) -> Result<RGuard, LangError> {
    let mut g = parse_guard_primary(cur)?;
    while cur.eat(&Tok::Amp) {
        let rhs = parse_guard_primary(cur)?;
        g = RGuard::And(Box::new(g), Box::new(rhs));
    }
    Ok(g)
}

fn parse_guard(cur: &mut Cursor) -> Result<RGuard, LangError> {
    let mut g = parse_guard_conj(cur)?;
    while cur.eat(&Tok::Pipe) {
        let rhs = parse_guard_conj(cur)?;
        g = RGuard::Or(Box::new(g), Box::new(rhs));
    }
    Ok(g)
}

fn parse_assign(cur: &mut Cursor) -> Result<RAssign, LangError> {
    let mut targets = vec![qualified_name(cur)?];
    while cur.eat(&Tok::Comma) {
        targets.push(qualified_name(cur)?);
    }
    expect(cur, &Tok::Assign)?;
    let mut exprs = vec![parse_term(cur)?];
    while cur.eat(&Tok::Comma) {
        exprs.push(parse_term(cur)?);
    }
    if targets.len() != exprs.len() {
        return Err(syn(
            cur,
            format!("{} assignment target(s) but {} expression(s)", targets.len(), exprs.len()),
        ));
    }
    Ok(RAssign { targets, exprs })
}

/// After a consumed `else`: either a braced statement list or an `else if`
/// continuation of the chain.
fn parse_else_tail(cur: &mut Cursor) -> Result<Vec<RStmt>, LangError> {
    if cur.eat_ident("if") {
        expect(cur, &Tok::LParen)?;
        let guard = parse_guard(cur)?;
        expect(cur, &Tok::RParen)?;
        expect(cur, &Tok::LBrace)?;
        let then_s = parse_stmt_list(cur)?;
        let else_s = if cur.eat_ident("else") { parse_else_tail(cur)? } else { Vec::new() };
        Ok(vec![RStmt::If { guard, then_s, else_s }])
    } else {
        expect(cur, &Tok::LBrace)?;
        parse_stmt_list(cur)
    }
}

/// Statements inside a conditional body: assignments and nested conditionals
/// only — control transfers live at the block's top level.
fn parse_stmt_list(cur: &mut Cursor) -> Result<Vec<RStmt>, LangError> {
    let mut out = Vec::new();
    loop {
        if cur.eat(&Tok::RBrace) {
            return Ok(out);
        }
        if cur.at_ident("goto") {
            return Err(syn(cur, "`goto` is not allowed inside a conditional body"));
        }
        if cur.eat_ident("if") {
            expect(cur, &Tok::LParen)?;
            let guard = parse_guard(cur)?;
            expect(cur, &Tok::RParen)?;
            expect(cur, &Tok::LBrace)?;
            let then_s = parse_stmt_list(cur)?;
            let else_s = if cur.eat_ident("else") { parse_else_tail(cur)? } else { Vec::new() };
            out.push(RStmt::If { guard, then_s, else_s });
            continue;
        }
        let a = parse_assign(cur)?;
        expect(cur, &Tok::Semi)?;
        out.push(RStmt::Assign(a));
    }
}

/// The body of `atomic { ... }` or a region: statements, then an optional
/// closing control transfer.
fn parse_block(cur: &mut Cursor) -> Result<RBlock, LangError> {
    let mut stmts = Vec::new();
    loop {
        if cur.eat(&Tok::RBrace) {
            return Ok(RBlock { stmts, exit: RExit::Fall });
        }
        if cur.eat_ident("goto") {
            let to = expect_name(cur, "label")?;
            expect(cur, &Tok::Semi)?;
            expect(cur, &Tok::RBrace)?;
            return Ok(RBlock { stmts, exit: RExit::Goto(to) });
        }
        if cur.eat_ident("if") {
            expect(cur, &Tok::LParen)?;
            let guard = parse_guard(cur)?;
            expect(cur, &Tok::RParen)?;
            if cur.eat(&Tok::LBrace) {
                let then_s = parse_stmt_list(cur)?;
                let else_s =
                    if cur.eat_ident("else") { parse_else_tail(cur)? } else { Vec::new() };
                stmts.push(RStmt::If { guard, then_s, else_s });
                continue;
            }
            let then_to = expect_name(cur, "label")?;
            expect(cur, &Tok::Comma)?;
            let else_to = expect_name(cur, "label")?;
            expect(cur, &Tok::Semi)?;
            expect(cur, &Tok::RBrace)?;
            return Ok(RBlock { stmts, exit: RExit::Branch { guard, then_to, else_to } });
        }
        let a = parse_assign(cur)?;
        expect(cur, &Tok::Semi)?;
        stmts.push(RStmt::Assign(a));
    }
}

fn parse_instr(cur: &mut Cursor) -> Result<RInstr, LangError> {
    if cur.eat_ident("goto") {
        let to = expect_name(cur, "label")?;
        expect(cur, &Tok::Semi)?;
        return Ok(RInstr::Goto(to));
    }
    if cur.eat_ident("if") {
        expect(cur, &Tok::LParen)?;
        let guard = parse_guard(cur)?;
        expect(cur, &Tok::RParen)?;
        let then_to = expect_name(cur, "label")?;
        expect(cur, &Tok::Comma)?;
        let else_to = expect_name(cur, "label")?;
        expect(cur, &Tok::Semi)?;
        return Ok(RInstr::IfGoto { guard, then_to, else_to });
    }
    if cur.eat_ident("atomic") {
        expect(cur, &Tok::LBrace)?;
        return Ok(RInstr::Block(parse_block(cur)?));
    }
    if cur.eat_ident("when") {
        let guard = parse_guard(cur)?;
        expect(cur, &Tok::Arrow)?;
        expect(cur, &Tok::LBrace)?;
        let body = parse_block(cur)?;
        return Ok(RInstr::Ccr { guard, body });
    }
    let a = parse_assign(cur)?;
    expect(cur, &Tok::Semi)?;
    Ok(RInstr::Assign(a))
}

fn parse_process(cur: &mut Cursor) -> Result<RProcess, LangError> {
    let name = expect_fresh_name(cur, "process")?;
    expect(cur, &Tok::LBrace)?;
    let mut locals = Vec::new();
    while cur.eat_ident("local") {
        locals.push(parse_decl_group(cur)?);
    }
    let mut instrs = Vec::new();
    loop {
        if cur.eat(&Tok::RBrace) {
            if instrs.is_empty() {
                return Err(syn(cur, format!("process {name} has no instructions")));
            }
            return Ok(RProcess { name, locals, instrs });
        }
        let label = expect_fresh_name(cur, "label")?;
        expect(cur, &Tok::Colon)?;
        instrs.push((label, parse_instr(cur)?));
    }
}

fn parse_raw(cur: &mut Cursor) -> Result<RProgram, LangError> {
    let mut shared = Vec::new();
    let mut processes = Vec::new();
    while !cur.at_end() {
        if cur.eat_ident("shared") {
            shared.push(parse_decl_group(cur)?);
        } else if cur.eat_ident("process") {
            processes.push(parse_process(cur)?);
        } else {
            let found = cur.peek().map(|x| x.to_string()).unwrap_or_default();
            return Err(syn(cur, format!("expected `shared` or `process`, found {found}")));
        }
    }
    if processes.is_empty() {
        return Err(syn(cur, "program has no processes"));
    }
    Ok(RProgram { shared, processes })
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

/// Resolve a name in process context: own local first, then the global
/// namespace; names that match nothing become label literals so that
/// location comparisons like `loc1 = crit` read naturally.
pub(crate) fn resolve_name(vocab: &Vocab, n: &str, proc: Option<(usize, &str)>) -> Term {
    if let Some((_, pname)) = proc {
        if !n.contains('.') {
            if let Some(v) = vocab.var(&format!("{pname}.{n}")) {
                return Term::Var(v);
            }
        }
    }
    match vocab.var(n) {
        Some(v) => Term::Var(v),
        None => Term::Lit(Value::Label(n.to_string())),
    }
}

pub(crate) fn resolve_term(vocab: &Vocab, t: &RTerm, proc: Option<(usize, &str)>) -> Term {
    match t {
        RTerm::Name(n) => resolve_name(vocab, n, proc),
        RTerm::Lit(v) => Term::Lit(v.clone()),
        RTerm::Add(a, b) => Term::Add(
            Box::new(resolve_term(vocab, a, proc)),
            Box::new(resolve_term(vocab, b, proc)),
        ),
        RTerm::Sub(a, b) => Term::Sub(
            Box::new(resolve_term(vocab, a, proc)),
            Box::new(resolve_term(vocab, b, proc)),
        ),
    }
}

pub(crate) fn resolve_atom(vocab: &Vocab, a: &RAtom, proc: Option<(usize, &str)>) -> Atom {
    match a {
        RAtom::Const(true) => Atom::True,
        RAtom::Const(false) => Atom::False,
        RAtom::Bare(t) => Atom::eq(resolve_term(vocab, t, proc), Term::Lit(Value::Bool(true))),
        RAtom::Cmp(l, op, r) => {
            let l = resolve_term(vocab, l, proc);
            let r = resolve_term(vocab, r, proc);
            match op {
                CmpOp::Eq => Atom::eq(l, r),
                CmpOp::Lt => Atom::Lt(l, r),
                CmpOp::Le => Atom::Le(l, r),
                CmpOp::Gt => Atom::Gt(l, r),
                CmpOp::Ge => Atom::Ge(l, r),
            }
        }
    }
}

fn resolve_guard_raw(vocab: &Vocab, g: &RGuard, proc: Option<(usize, &str)>) -> Guard {
    match g {
        RGuard::Atom(a) => Guard::Atom(resolve_atom(vocab, a, proc)),
        RGuard::Not(x) => Guard::not(resolve_guard_raw(vocab, x, proc)),
        RGuard::And(a, b) => {
            Guard::and(resolve_guard_raw(vocab, a, proc), resolve_guard_raw(vocab, b, proc))
        }
        RGuard::Or(a, b) => {
            Guard::or(resolve_guard_raw(vocab, a, proc), resolve_guard_raw(vocab, b, proc))
        }
    }
}

struct Resolver {
    vocab: Vocab,
    decls: Vec<Decl>,
}

impl Resolver {
    fn invalid(&self, msg: impl Into<String>) -> LangError {
        LangError::Invalid(msg.into())
    }

    fn declare_group(
        &mut self,
        g: &RDeclGroup,
        owner: Option<(usize, &str)>,
    ) -> Result<(), LangError> {
        let sort = match &g.domain {
            RDomain::Bool => self.vocab.bool_sort(),
            RDomain::Values(vals) => {
                let sort_name = format!("{}_dom", g.names[0]);
                self.vocab.add_sort(&sort_name, vals.clone())?
            }
        };
        let kind = match owner {
            Some((i, _)) => VarKind::Local(i),
            None => VarKind::Shared,
        };
        let mut group_vars = Vec::new();
        for n in &g.names {
            let full = match owner {
                Some((_, pname)) => format!("{pname}.{n}"),
                None => n.clone(),
            };
            let v = self.vocab.add_var(&full, sort, kind)?;
            group_vars.push((n.clone(), v));
            self.decls.push(Decl { var: v, init: None });
        }
        for (name, rinit) in &g.inits {
            let &(_, var) = group_vars
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| self.invalid(format!("`{name}` is not declared in this group")))?;
            if self.decls.iter().any(|d| d.var == var && d.init.is_some()) {
                return Err(LangError::Invalid(format!("`{name}` is initialized twice")));
            }
            let init = self.resolve_init(var, rinit, owner)?;
            let decl = self.decls.iter_mut().find(|d| d.var == var).unwrap();
            decl.init = Some(init);
        }
        Ok(())
    }

    fn resolve_init(
        &mut self,
        target: VarId,
        rinit: &RTerm,
        owner: Option<(usize, &str)>,
    ) -> Result<Init, LangError> {
        let sort = self.vocab.sort_of(target);
        match rinit {
            RTerm::Lit(v) => {
                if self.vocab.value_index(sort, v).is_none() {
                    return Err(self.invalid(format!(
                        "initializer {} is outside the domain of {}",
                        v,
                        self.vocab.var_name(target)
                    )));
                }
                Ok(Init::Value(v.clone()))
            }
            RTerm::Name(n) => {
                let qualified = owner.map(|(_, p)| format!("{p}.{n}"));
                let src = qualified
                    .as_deref()
                    .and_then(|q| self.vocab.var(q))
                    .or_else(|| self.vocab.var(n));
                if let Some(src) = src {
                    if src == target {
                        return Err(self.invalid(format!(
                            "`{}` cannot mirror itself",
                            self.vocab.var_name(target)
                        )));
                    }
                    if self.vocab.sort_of(src) != sort {
                        return Err(self.invalid(format!(
                            "`{}` mirrors `{}` of a different domain",
                            self.vocab.var_name(target),
                            self.vocab.var_name(src)
                        )));
                    }
                    // A shared variable fixed to another's initial value is a
                    // shadow: read-only, used by guards to see the initial state.
                    if matches!(self.vocab.var_info(target).kind, VarKind::Shared) {
                        self.vocab.set_var_kind(target, VarKind::Shadow(src));
                    }
                    return Ok(Init::Mirror(src));
                }
                let v = Value::Label(n.clone());
                if self.vocab.value_index(sort, &v).is_some() {
                    Ok(Init::Value(v))
                } else {
                    Err(self.invalid(format!(
                        "initializer `{n}` is neither a variable nor a value of {}'s domain",
                        self.vocab.var_name(target)
                    )))
                }
            }
            _ => Err(self.invalid("initializers must be a value or a variable".to_string())),
        }
    }

    fn check_guard(&self, g: &Guard, ctx: &str) -> Result<(), LangError> {
        g.check(&self.vocab)
            .map_err(|e| LangError::Sort { context: ctx.to_string(), source: e })
    }

    /// Visibility of reads outside region guards: shared state and the
    /// process's own locals; no locations, no foreign locals.
    fn check_plain_reads(&self, vars: &[VarId], i: usize, ctx: &str) -> Result<(), LangError> {
        for &v in vars {
            let bad = match self.vocab.var_info(v).kind {
                VarKind::Shared | VarKind::Aux | VarKind::Shadow(_) => false,
                VarKind::Local(j) => j != i,
                VarKind::Location(_) => true,
            };
            if bad {
                return Err(self.invalid(format!(
                    "{ctx}: `{}` is not visible here",
                    self.vocab.var_name(v)
                )));
            }
        }
        Ok(())
    }

    fn check_writes(&self, targets: &[VarId], i: usize, ctx: &str) -> Result<(), LangError> {
        for (k, &v) in targets.iter().enumerate() {
            if targets[..k].contains(&v) {
                return Err(self.invalid(format!(
                    "{ctx}: `{}` is assigned twice in one step",
                    self.vocab.var_name(v)
                )));
            }
            let bad = match self.vocab.var_info(v).kind {
                VarKind::Shared | VarKind::Aux => false,
                VarKind::Local(j) => j != i,
                VarKind::Location(_) | VarKind::Shadow(_) => true,
            };
            if bad {
                return Err(self.invalid(format!(
                    "{ctx}: `{}` cannot be assigned here",
                    self.vocab.var_name(v)
                )));
            }
        }
        Ok(())
    }

    fn resolve_assign(
        &self,
        a: &RAssign,
        proc: (usize, &str),
        in_region: bool,
        ctx: &str,
    ) -> Result<(Vec<VarId>, Vec<Term>), LangError> {
        let mut targets = Vec::new();
        for t in &a.targets {
            match resolve_name(&self.vocab, t, Some(proc)) {
                Term::Var(v) => targets.push(v),
                _ => return Err(self.invalid(format!("{ctx}: unknown variable `{t}`"))),
            }
        }
        self.check_writes(&targets, proc.0, ctx)?;
        let mut exprs = Vec::new();
        for (t, e) in targets.iter().zip(&a.exprs) {
            let term = resolve_term(&self.vocab, e, Some(proc));
            crate::vocab::check_term(&term, self.vocab.sort_of(*t), &self.vocab)
                .map_err(|e| LangError::Sort { context: ctx.to_string(), source: e })?;
            if !in_region {
                let mut vars = Vec::new();
                term.vars(&mut vars);
                self.check_plain_reads(&vars, proc.0, ctx)?;
            }
            exprs.push(term);
        }
        Ok((targets, exprs))
    }

    fn resolve_stmts(
        &self,
        stmts: &[RStmt],
        proc: (usize, &str),
        in_region: bool,
        ctx: &str,
    ) -> Result<Vec<Stmt>, LangError> {
        let mut out = Vec::new();
        for s in stmts {
            match s {
                RStmt::Assign(a) => {
                    let (targets, exprs) = self.resolve_assign(a, proc, in_region, ctx)?;
                    out.push(Stmt::Assign { targets, exprs });
                }
                RStmt::If { guard, then_s, else_s } => {
                    let g = resolve_guard_raw(&self.vocab, guard, Some(proc));
                    self.check_guard(&g, ctx)?;
                    if !in_region {
                        let mut vars = Vec::new();
                        g.vars(&mut vars);
                        self.check_plain_reads(&vars, proc.0, ctx)?;
                    }
                    out.push(Stmt::If {
                        guard: g,
                        then_stmts: self.resolve_stmts(then_s, proc, in_region, ctx)?,
                        else_stmts: self.resolve_stmts(else_s, proc, in_region, ctx)?,
                    });
                }
            }
        }
        Ok(out)
    }

    fn label_ix(&self, rp: &RProcess, label: &str) -> Result<usize, LangError> {
        rp.instrs.iter().position(|(l, _)| l == label).ok_or_else(|| LangError::MissingLabel {
            process: rp.name.clone(),
            label: label.to_string(),
        })
    }

    fn resolve_block(
        &self,
        b: &RBlock,
        rp: &RProcess,
        proc: (usize, &str),
        in_region: bool,
        ctx: &str,
    ) -> Result<Block, LangError> {
        let stmts = self.resolve_stmts(&b.stmts, proc, in_region, ctx)?;
        let exit = match &b.exit {
            RExit::Fall => Exit::Fall,
            RExit::Goto(l) => Exit::Goto(self.label_ix(rp, l)?),
            RExit::Branch { guard, then_to, else_to } => {
                let g = resolve_guard_raw(&self.vocab, guard, Some(proc));
                self.check_guard(&g, ctx)?;
                if !in_region {
                    let mut vars = Vec::new();
                    g.vars(&mut vars);
                    self.check_plain_reads(&vars, proc.0, ctx)?;
                }
                Exit::Branch {
                    guard: g,
                    then_to: self.label_ix(rp, then_to)?,
                    else_to: self.label_ix(rp, else_to)?,
                }
            }
        };
        Ok(Block { stmts, exit })
    }

    fn resolve_instr(
        &self,
        r: &RInstr,
        rp: &RProcess,
        proc: (usize, &str),
        ctx: &str,
    ) -> Result<Instruction, LangError> {
        match r {
            RInstr::Assign(a) => {
                let (targets, exprs) = self.resolve_assign(a, proc, false, ctx)?;
                Ok(Instruction::Assign { targets, exprs })
            }
            RInstr::IfGoto { guard, then_to, else_to } => {
                let g = resolve_guard_raw(&self.vocab, guard, Some(proc));
                self.check_guard(&g, ctx)?;
                let mut vars = Vec::new();
                g.vars(&mut vars);
                self.check_plain_reads(&vars, proc.0, ctx)?;
                Ok(Instruction::IfGoto {
                    guard: g,
                    then_to: self.label_ix(rp, then_to)?,
                    else_to: self.label_ix(rp, else_to)?,
                })
            }
            RInstr::Goto(l) => Ok(Instruction::Goto { to: self.label_ix(rp, l)? }),
            RInstr::Block(b) => Ok(Instruction::Block(self.resolve_block(b, rp, proc, false, ctx)?)),
            RInstr::Ccr { guard, body } => {
                // Region guards see the whole state: synthesized guards talk
                // about locations and other processes' locals.
                let g = resolve_guard_raw(&self.vocab, guard, Some(proc));
                self.check_guard(&g, ctx)?;
                Ok(Instruction::Ccr {
                    guard: g,
                    body: self.resolve_block(body, rp, proc, true, ctx)?,
                })
            }
        }
    }
}

fn resolve(raw: RProgram) -> Result<Program, LangError> {
    let mut r = Resolver { vocab: Vocab::new(), decls: Vec::new() };

    for g in &raw.shared {
        r.declare_group(g, None)?;
    }
    for (i, rp) in raw.processes.iter().enumerate() {
        if raw.processes[..i].iter().any(|p| p.name == rp.name) {
            return Err(r.invalid(format!("duplicate process name `{}`", rp.name)));
        }
        for (k, (label, _)) in rp.instrs.iter().enumerate() {
            if rp.instrs[..k].iter().any(|(l, _)| l == label) {
                return Err(LangError::DuplicateLabel {
                    process: rp.name.clone(),
                    label: label.clone(),
                });
            }
        }
        let labels: Vec<Value> =
            rp.instrs.iter().map(|(l, _)| Value::Label(l.clone())).collect();
        let loc_sort = r.vocab.add_sort(&format!("{}_loc", rp.name), labels)?;
        r.vocab.add_var(&format!("loc{}", i + 1), loc_sort, VarKind::Location(i))?;
        for g in &rp.locals {
            r.declare_group(g, Some((i, &rp.name)))?;
        }
    }

    let mut processes = Vec::new();
    for (i, rp) in raw.processes.iter().enumerate() {
        let loc_var = r.vocab.var(&format!("loc{}", i + 1)).unwrap();
        let mut instructions = Vec::new();
        for (pos, (label, ri)) in rp.instrs.iter().enumerate() {
            let ctx = format!("process {} at `{label}`", rp.name);
            let inst = r.resolve_instr(ri, rp, (i, &rp.name), &ctx)?;
            let falls = match &inst {
                Instruction::Assign { .. } => true,
                Instruction::Block(b) | Instruction::Ccr { body: b, .. } => {
                    matches!(b.exit, Exit::Fall)
                }
                _ => false,
            };
            if falls && pos + 1 == rp.instrs.len() {
                return Err(r.invalid(format!(
                    "process {}: control falls off the end after `{label}`",
                    rp.name
                )));
            }
            instructions.push(inst);
        }
        processes.push(Process {
            name: rp.name.clone(),
            loc_var,
            labels: rp.instrs.iter().map(|(l, _)| l.clone()).collect(),
            instructions,
        });
    }

    Ok(Program { vocab: r.vocab, decls: r.decls, processes })
}

/// Parse a complete program from source text.
pub fn parse_program(text: &str) -> Result<Program, LangError> {
    let toks =
        lex(text).map_err(|(line, col, msg)| LangError::Syntax { line, col, msg })?;
    let mut cur = Cursor::new(toks);
    let raw = parse_raw(&mut cur)?;
    resolve(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mutex_skeleton() {
        let p = parse_program(
            "process P1 { n1: goto t1; t1: goto c1; c1: goto n1; }\n\
             process P2 { n2: goto t2; t2: goto c2; c2: goto n2; }",
        )
        .unwrap();
        assert_eq!(p.num_procs(), 2);
        assert_eq!(p.processes[0].labels, vec!["n1", "t1", "c1"]);
        assert!(p.vocab.var("loc1").is_some());
        assert!(p.vocab.var("loc2").is_some());
    }

    #[test]
    fn location_comparisons_resolve_labels() {
        let p = parse_program(
            "shared v : bool with v = F;\n\
             process P1 { a: when (loc1 = a) -> { v := T; goto a; } }",
        )
        .unwrap();
        match &p.processes[0].instructions[0] {
            Instruction::Ccr { guard, .. } => {
                let shown = guard.display(&p.vocab).to_string();
                assert_eq!(shown, "loc1 = a");
            }
            _ => panic!("expected a region"),
        }
    }

    #[test]
    fn foreign_local_is_invisible_outside_regions() {
        let err = parse_program(
            "process P1 { local y : {0,1} with y = 0;\n a: y := 1; b: goto b; }\n\
             process P2 { a: if (P1.y = 1) a, b; b: goto b; }",
        )
        .unwrap_err();
        assert!(matches!(err, LangError::Invalid(_)), "{err}");
    }

    #[test]
    fn region_guard_may_read_everything() {
        let p = parse_program(
            "process P1 { local y : {0,1} with y = 0;\n a: y := 1; b: goto b; }\n\
             process P2 { a: when (P1.y = 1 & loc1 = b) -> { goto b; } b: goto b; }",
        );
        assert!(p.is_ok(), "{p:?}");
    }

    #[test]
    fn unknown_label_in_guard_is_a_sort_error() {
        let err = parse_program(
            "shared v : {0,1} with v = 0;\n\
             process P1 { a: if (v = nowhere) a, a; }",
        )
        .unwrap_err();
        assert!(matches!(err, LangError::Sort { .. }), "{err}");
    }

    #[test]
    fn goto_to_missing_label_is_reported() {
        let err = parse_program("process P1 { a: goto b; }").unwrap_err();
        assert!(
            matches!(err, LangError::MissingLabel { ref label, .. } if label == "b"),
            "{err}"
        );
    }

    #[test]
    fn falling_off_the_end_is_rejected() {
        let err = parse_program(
            "shared v : {0,1} with v = 0;\nprocess P1 { a: v := 1; }",
        )
        .unwrap_err();
        assert!(matches!(err, LangError::Invalid(_)), "{err}");
    }

    #[test]
    fn duplicate_label_is_rejected() {
        let err = parse_program("process P1 { a: goto a; a: goto a; }").unwrap_err();
        assert!(matches!(err, LangError::DuplicateLabel { .. }), "{err}");
    }

    #[test]
    fn mirror_initializer_becomes_shadow() {
        let p = parse_program(
            "shared c : {0,1,2,3};\nshared c0 : {0,1,2,3} with c0 = c;\n\
             process P1 { a: goto a; }",
        )
        .unwrap();
        let c = p.vocab.var("c").unwrap();
        let c0 = p.vocab.var("c0").unwrap();
        assert_eq!(p.vocab.var_info(c0).kind, VarKind::Shadow(c));
        assert_eq!(p.decls.iter().find(|d| d.var == c0).unwrap().init, Some(Init::Mirror(c)));
    }

    #[test]
    fn range_domains_expand() {
        let p = parse_program(
            "shared v : {0..3} with v = 2;\nprocess P1 { a: goto a; }",
        )
        .unwrap();
        let v = p.vocab.var("v").unwrap();
        assert_eq!(p.vocab.domain_of_var(v).len(), 4);
    }

    #[test]
    fn boolean_sugar_in_guards() {
        let p = parse_program(
            "shared flag : bool with flag = F;\n\
             process P1 { a: if (!flag & true) a, b; b: flag := T; c: goto c; }",
        )
        .unwrap();
        match &p.processes[0].instructions[0] {
            Instruction::IfGoto { guard, .. } => {
                assert_eq!(guard.display(&p.vocab).to_string(), "!(flag = T) & true");
            }
            _ => panic!("expected if"),
        }
    }
}
