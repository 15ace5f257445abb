//! The concurrent-program DSL: abstract syntax, interleaving semantics, and the
//! explicit transition system.
//!
//! A program is a finite set of processes, each a sequence of labeled atomic
//! instructions over finite-domain variables.  A state is exactly a valuation
//! of every variable (locations included); the transition relation is the union
//! of per-process local moves.

pub(crate) mod parse;
pub(crate) mod print;

pub use parse::parse_program;

use indexmap::IndexSet;
use serde_json::json;
use thiserror::Error;

use crate::vocab::{EvalError, Guard, Term, Valuation, Value, VarId, Vocab, VocabError};

/// How a declared variable gets its initial value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Init {
    Value(Value),
    /// Initialized to another variable's (possibly environment-chosen) initial
    /// value; used for the shadow variables of input unification.
    Mirror(VarId),
}

/// One declared data variable (shared, local, auxiliary or shadow).  A
/// declaration without an initializer is an input: the environment picks any
/// domain value at start-up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decl {
    pub var: VarId,
    pub init: Option<Init>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Assign { targets: Vec<VarId>, exprs: Vec<Term> },
    If { guard: Guard, then_stmts: Vec<Stmt>, else_stmts: Vec<Stmt> },
}

/// How control leaves an atomic block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exit {
    /// Fall through to the next location in program order.
    Fall,
    Goto(usize),
    Branch { guard: Guard, then_to: usize, else_to: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub exit: Exit,
}

/// A labeled atomic instruction.  Location targets are indices into the owning
/// process's instruction list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    /// Simultaneous assignment; control falls through.
    Assign { targets: Vec<VarId>, exprs: Vec<Term> },
    IfGoto { guard: Guard, then_to: usize, else_to: usize },
    Goto { to: usize },
    /// User-defined atomic sequence.
    Block(Block),
    /// Conditional critical region: the body runs atomically when the guard
    /// holds; a false guard produces no transition.
    Ccr { guard: Guard, body: Block },
}

impl Instruction {
    pub fn is_ccr(&self) -> bool {
        matches!(self, Instruction::Ccr { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Process {
    pub name: String,
    pub loc_var: VarId,
    /// Instruction labels in program order; index n is the domain index of the
    /// location sort, so `valuation[loc_var]` doubles as the instruction index.
    pub labels: Vec<String>,
    pub instructions: Vec<Instruction>,
}

impl Process {
    pub fn label(&self, ix: usize) -> &str {
        &self.labels[ix]
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub vocab: Vocab,
    pub decls: Vec<Decl>,
    pub processes: Vec<Process>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("process {process}: duplicate label `{label}`")]
    DuplicateLabel { process: String, label: String },
    #[error("process {process}: unknown label `{label}`")]
    MissingLabel { process: String, label: String },
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("{context}: {source}")]
    Sort { context: String, source: EvalError },
    #[error("{0}")]
    Invalid(String),
    #[error("evaluating process {process} at `{label}` in state [{state}]: {source}")]
    Eval { state: String, process: String, label: String, source: EvalError },
    #[error("deadlock: {count} reachable state(s) have no outgoing transition, e.g. [{state}]")]
    Deadlock { count: usize, state: String },
}

impl Program {
    pub fn num_procs(&self) -> usize {
        self.processes.len()
    }

    pub fn has_ccrs(&self) -> bool {
        self.processes
            .iter()
            .any(|p| p.instructions.iter().any(Instruction::is_ccr))
    }

    /// All non-location variables, in declaration order.
    pub fn data_vars(&self) -> Vec<VarId> {
        self.decls.iter().map(|d| d.var).collect()
    }

    /// Input variables: declared without an initializer, so every value in
    /// their domain is a possible starting point.
    pub fn input_vars(&self) -> Vec<VarId> {
        self.decls
            .iter()
            .filter(|d| d.init.is_none())
            .map(|d| d.var)
            .collect()
    }

    pub fn process_index(&self, name: &str) -> Option<usize> {
        self.processes.iter().position(|p| p.name == name)
    }

    /// The set of initial states: one per assignment of input variables, with
    /// every process at its first location and every initializer applied.
    pub fn initial_valuations(&self) -> Result<Vec<Valuation>, LangError> {
        let mut base = Valuation::new(&self.vocab);
        let mut inputs = Vec::new();
        let mut mirrors = Vec::new();
        for d in &self.decls {
            match &d.init {
                Some(Init::Value(v)) => {
                    base.set(&self.vocab, d.var, v).map_err(|e| LangError::Sort {
                        context: format!("initializer of {}", self.vocab.var_name(d.var)),
                        source: e,
                    })?;
                }
                Some(Init::Mirror(src)) => mirrors.push((d.var, *src)),
                None => inputs.push(d.var),
            }
        }
        let mut out = Vec::new();
        for asg in self.vocab.enumerate_assignments(&inputs) {
            let mut v = base.clone();
            for (&var, &ix) in &asg {
                v.set_index(var, ix);
            }
            for &(var, src) in &mirrors {
                v.set_index(var, v.index(src));
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Execute one local move of process `i` from `val`.  `None` means the
    /// process is blocked (a conditional critical region with a false guard).
    pub fn step(&self, i: usize, val: &Valuation) -> Result<Option<Valuation>, EvalError> {
        let cur = val.index(self.processes[i].loc_var) as usize;
        self.step_at(i, cur, val)
    }

    /// Execute instruction `cur` of process `i` as if control were there,
    /// regardless of the valuation's own location value.
    pub fn step_at(&self, i: usize, cur: usize, val: &Valuation) -> Result<Option<Valuation>, EvalError> {
        let proc = &self.processes[i];
        let (next_val, next_ix) = match &proc.instructions[cur] {
            Instruction::Assign { targets, exprs } => {
                let mut nv = val.clone();
                self.run_parallel_assign(targets, exprs, val, &mut nv)?;
                (nv, cur + 1)
            }
            Instruction::IfGoto { guard, then_to, else_to } => {
                let t = if guard.eval(&self.vocab, val)? { *then_to } else { *else_to };
                (val.clone(), t)
            }
            Instruction::Goto { to } => (val.clone(), *to),
            Instruction::Block(b) => self.run_block(b, cur, val)?,
            Instruction::Ccr { guard, body } => {
                if !guard.eval(&self.vocab, val)? {
                    return Ok(None);
                }
                self.run_block(body, cur, val)?
            }
        };
        let mut nv = next_val;
        nv.set_index(proc.loc_var, next_ix as u8);
        Ok(Some(nv))
    }

    fn run_parallel_assign(
        &self,
        targets: &[VarId],
        exprs: &[Term],
        read: &Valuation,
        write: &mut Valuation,
    ) -> Result<(), EvalError> {
        let mut results = Vec::with_capacity(exprs.len());
        for (t, e) in targets.iter().zip(exprs) {
            let sort = self.vocab.sort_of(*t);
            results.push(crate::vocab::eval_term(e, sort, &self.vocab, read)?);
        }
        for (t, v) in targets.iter().zip(results) {
            write.set(&self.vocab, *t, &v)?;
        }
        Ok(())
    }

    fn run_stmts(&self, stmts: &[Stmt], val: &mut Valuation) -> Result<(), EvalError> {
        for s in stmts {
            match s {
                Stmt::Assign { targets, exprs } => {
                    let read = val.clone();
                    self.run_parallel_assign(targets, exprs, &read, val)?;
                }
                Stmt::If { guard, then_stmts, else_stmts } => {
                    if guard.eval(&self.vocab, val)? {
                        self.run_stmts(then_stmts, val)?;
                    } else {
                        self.run_stmts(else_stmts, val)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn run_block(
        &self,
        b: &Block,
        cur: usize,
        val: &Valuation,
    ) -> Result<(Valuation, usize), EvalError> {
        let mut nv = val.clone();
        self.run_stmts(&b.stmts, &mut nv)?;
        let next = match &b.exit {
            Exit::Fall => cur + 1,
            Exit::Goto(to) => *to,
            Exit::Branch { guard, then_to, else_to } => {
                if guard.eval(&self.vocab, &nv)? {
                    *then_to
                } else {
                    *else_to
                }
            }
        };
        Ok((nv, next))
    }
}

/// Explicit interleaving transition system: exactly the states reachable from
/// the initial set, with transitions tagged by the moving process.
#[derive(Debug, Clone)]
pub struct TransitionSystem {
    pub vocab: Vocab,
    pub num_procs: usize,
    pub states: IndexSet<Valuation>,
    pub initial: Vec<u32>,
    /// Sorted by (from, process, to).
    pub transitions: Vec<(u32, u8, u32)>,
    /// Per-state successor lists, same order as `transitions`.
    pub succs: Vec<Vec<(u8, u32)>>,
    pub deadlocks: Vec<u32>,
}

pub fn build_transition_system(
    p: &Program,
    initials: &[Valuation],
) -> Result<TransitionSystem, LangError> {
    let mut states: IndexSet<Valuation> = IndexSet::new();
    for v in initials {
        states.insert(v.clone());
    }
    let initial: Vec<u32> = (0..states.len() as u32).collect();
    let mut succs: Vec<Vec<(u8, u32)>> = Vec::new();
    let mut i = 0;
    while i < states.len() {
        let val = states.get_index(i).unwrap().clone();
        let mut row = Vec::new();
        for proc in 0..p.num_procs() {
            let stepped = p.step(proc, &val).map_err(|e| {
                let pr = &p.processes[proc];
                LangError::Eval {
                    state: val.render(&p.vocab),
                    process: pr.name.clone(),
                    label: pr.label(val.index(pr.loc_var) as usize).to_string(),
                    source: e,
                }
            })?;
            if let Some(nv) = stepped {
                let (ix, _) = states.insert_full(nv);
                row.push((proc as u8, ix as u32));
            }
        }
        succs.push(row);
        i += 1;
    }
    let mut transitions = Vec::new();
    for (from, row) in succs.iter().enumerate() {
        for &(proc, to) in row {
            transitions.push((from as u32, proc, to));
        }
    }
    let deadlocks: Vec<u32> = succs
        .iter()
        .enumerate()
        .filter(|(_, row)| row.is_empty())
        .map(|(i, _)| i as u32)
        .collect();
    Ok(TransitionSystem {
        vocab: p.vocab.clone(),
        num_procs: p.num_procs(),
        states,
        initial,
        transitions,
        succs,
        deadlocks,
    })
}

impl TransitionSystem {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: u32) -> &Valuation {
        self.states.get_index(i as usize).unwrap()
    }

    pub fn require_total(&self) -> Result<(), LangError> {
        if self.deadlocks.is_empty() {
            Ok(())
        } else {
            Err(LangError::Deadlock {
                count: self.deadlocks.len(),
                state: self.state(self.deadlocks[0]).render(&self.vocab),
            })
        }
    }

    pub fn to_model(&self) -> crate::logic::Model {
        crate::logic::Model::new(
            self.vocab.clone(),
            self.num_procs,
            self.states.iter().cloned().collect(),
            self.initial.clone(),
            self.transitions.clone(),
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        let vars: Vec<&str> = self.vocab.var_ids().map(|v| self.vocab.var_name(v)).collect();
        let states: Vec<serde_json::Value> = self
            .states
            .iter()
            .map(|s| {
                let m: serde_json::Map<String, serde_json::Value> = self
                    .vocab
                    .var_ids()
                    .map(|v| {
                        (
                            self.vocab.var_name(v).to_string(),
                            json!(s.get(&self.vocab, v).to_string()),
                        )
                    })
                    .collect();
                serde_json::Value::Object(m)
            })
            .collect();
        json!({
            "variables": vars,
            "states": states,
            "initial": self.initial,
            "transitions": self.transitions.iter().map(|&(a, p, b)| json!([a, p, b])).collect::<Vec<_>>(),
            "deadlocks": self.deadlocks,
        })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph ts {\n  rankdir=LR;\n  node [shape=box, fontname=\"monospace\"];\n");
        for (i, s) in self.states.iter().enumerate() {
            let label = s.render(&self.vocab).replace(", ", "\\n");
            let extra = if self.deadlocks.contains(&(i as u32)) {
                ", color=red"
            } else if self.initial.contains(&(i as u32)) {
                ", penwidth=2"
            } else {
                ""
            };
            out.push_str(&format!("  s{i} [label=\"s{i}\\n{label}\"{extra}];\n"));
        }
        for &(a, p, b) in &self.transitions {
            out.push_str(&format!("  s{a} -> s{b} [label=\"{}\"];\n", p as usize + 1));
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_process_straight_line() {
        let p = parse_program(
            "shared v : {0,1,2} with v = 0;\n\
             process P1 { a: v := v + 1; b: v := v + 1; halt: goto halt; }",
        )
        .unwrap();
        let init = p.initial_valuations().unwrap();
        assert_eq!(init.len(), 1);
        let ts = build_transition_system(&p, &init).unwrap();
        assert_eq!(ts.len(), 3);
        assert!(ts.deadlocks.is_empty());
        // final state self-loops on halt
        let last = ts.states.get_index(2).unwrap();
        let v = p.vocab.var("v").unwrap();
        assert_eq!(last.get(&p.vocab, v), &Value::Int(2));
    }

    #[test]
    fn two_process_diamond_interleaving() {
        let p = parse_program(
            "shared a, b : {0,1} with a = 0, b = 0;\n\
             process P1 { s: a := 1; halt: goto halt; }\n\
             process P2 { s: b := 1; halt: goto halt; }",
        )
        .unwrap();
        let ts = build_transition_system(&p, &p.initial_valuations().unwrap()).unwrap();
        // (0,0) -> (1,0) and (0,1) -> (1,1): the classic diamond
        assert_eq!(ts.len(), 4);
        assert_eq!(ts.transitions.len(), 8); // 2 per state incl. halt self-loops
    }

    #[test]
    fn frame_property_holds_on_every_transition() {
        let p = parse_program(
            "shared a, b : {0,1,2} with a = 0, b = 0;\n\
             process P1 { s: a := a + 1; t: if (a < 2) s, u; u: goto u; }\n\
             process P2 { s: b := 1; halt: goto halt; }",
        )
        .unwrap();
        let ts = build_transition_system(&p, &p.initial_valuations().unwrap()).unwrap();
        for &(from, proc, to) in &ts.transitions {
            let s = ts.state(from);
            let t = ts.state(to);
            for (j, pr) in p.processes.iter().enumerate() {
                if j != proc as usize {
                    assert_eq!(s.index(pr.loc_var), t.index(pr.loc_var), "location frame");
                }
            }
        }
    }

    #[test]
    fn ccr_with_false_guard_deadlocks() {
        let p = parse_program(
            "shared v : {0,1} with v = 0;\n\
             process P1 { a: when (v = 1) -> { v := 0; goto a; } }",
        )
        .unwrap();
        let ts = build_transition_system(&p, &p.initial_valuations().unwrap()).unwrap();
        assert_eq!(ts.deadlocks.len(), 1);
        assert!(matches!(ts.require_total(), Err(LangError::Deadlock { count: 1, .. })));
    }

    #[test]
    fn input_variable_enumerates_initial_states() {
        let p = parse_program(
            "shared c : {0,1,2,3};\nshared d : {0,1,2,3} with d = 0;\n\
             process P1 { a: d := c; halt: goto halt; }",
        )
        .unwrap();
        let init = p.initial_valuations().unwrap();
        assert_eq!(init.len(), 4);
        let c = p.vocab.var("c").unwrap();
        let vals: Vec<i64> = init
            .iter()
            .map(|v| v.get(&p.vocab, c).as_int().unwrap())
            .collect();
        assert_eq!(vals, vec![0, 1, 2, 3]);
    }

    #[test]
    fn reachable_overflow_is_reported_with_context() {
        let p = parse_program(
            "shared v : {0,1} with v = 1;\n\
             process P1 { a: v := v + 1; halt: goto halt; }",
        )
        .unwrap();
        let err = build_transition_system(&p, &p.initial_valuations().unwrap()).unwrap_err();
        match err {
            LangError::Eval { process, label, .. } => {
                assert_eq!(process, "P1");
                assert_eq!(label, "a");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn atomic_block_runs_as_one_transition() {
        let p = parse_program(
            "shared a, b : {0,1} with a = 0, b = 0;\n\
             process P1 { s: atomic { a := 1; b := 1; } halt: goto halt; }\n\
             process P2 { t: if (a = 1 & b = 0) bad, halt; bad: goto bad; halt: goto halt; }",
        )
        .unwrap();
        let ts = build_transition_system(&p, &p.initial_valuations().unwrap()).unwrap();
        // P2 can never observe a=1,b=0, so `bad` is unreachable.
        let p2 = &p.processes[1];
        let bad_ix = p2.label_index("bad").unwrap() as u8;
        assert!(ts.states.iter().all(|s| s.index(p2.loc_var) != bad_ix));
    }
}
