//! The program-semantics formula: a branching-time description of exactly the
//! computations a synchronized version of the program may exhibit.
//!
//! The formula says nothing about *which* moves are scheduled — only that any
//! move taken agrees with some instruction, that foreign locations are framed,
//! and that the system as a whole never halts.  Restricting moves further is
//! the synthesizer's job; models of `semantics ∧ specification` are therefore
//! precisely the admissible synchronized behaviors.
//!
//! Per-instruction effects are not expanded into value-by-value implications;
//! each conclusion carries an opaque [`StepId`] that the tableau and the model
//! checker resolve against this module's [`StepOracle`] with the concrete
//! pre-state in hand.

use crate::lang::{Exit, Instruction, LangError, Program};
use crate::logic::{to_nnf, Formula, StepId, StepOracle};
use crate::vocab::{Atom, EvalError, Valuation, Value};

#[derive(Debug, Clone)]
enum StepDef {
    /// Run instruction `ix` of process `proc` (assignment, jump block, or
    /// region body — the guard has already been established by the clause
    /// hypothesis).
    Exec { proc: usize, ix: usize },
    /// Resolved branch: data unchanged, the process's location becomes `to`.
    Jump { proc: usize, to: usize },
}

/// The generated formula, split by clause family, plus the step table that
/// gives the placeholders meaning.
#[derive(Debug, Clone)]
pub struct ProgramFormula {
    program: Program,
    steps: Vec<StepDef>,
    /// Per initial valuation: the valuation and its full-pin formula.
    pub init: Vec<(Valuation, Formula)>,
    /// A move of one process leaves every other process's location alone.
    pub frame: Vec<Formula>,
    /// Some process can always move.
    pub progress: Formula,
    /// One clause per instruction (two for a branch: one per outcome).
    pub instructions: Vec<Formula>,
}

impl ProgramFormula {
    pub fn invariants(&self) -> impl Iterator<Item = &Formula> {
        self.frame
            .iter()
            .chain(std::iter::once(&self.progress))
            .chain(self.instructions.iter())
    }

    pub fn invariant_conj(&self) -> Formula {
        Formula::conj(self.invariants().cloned().collect())
    }

    /// The complete formula for one initial valuation.
    pub fn at(&self, ix: usize) -> Formula {
        Formula::and(self.init[ix].1.clone(), self.invariant_conj())
    }

    pub fn clause_count(&self) -> usize {
        self.init.len() + self.frame.len() + 1 + self.instructions.len()
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    /// Human-readable meaning of a step placeholder, for formula dumps.
    pub fn describe_step(&self, id: StepId) -> String {
        match &self.steps[id.0 as usize] {
            StepDef::Exec { proc, ix } => {
                let p = &self.program.processes[*proc];
                format!("effect of {} at `{}`", p.name, p.label(*ix))
            }
            StepDef::Jump { proc, to } => {
                let p = &self.program.processes[*proc];
                format!("{} jumps to `{}`", p.name, p.label(*to))
            }
        }
    }

    pub fn describe_steps(&self) -> Vec<(StepId, String)> {
        (0..self.steps.len() as u32)
            .map(|i| (StepId(i), self.describe_step(StepId(i))))
            .collect()
    }
}

impl StepOracle for ProgramFormula {
    fn post(&self, id: StepId, pre: &Valuation) -> Option<Valuation> {
        match &self.steps[id.0 as usize] {
            StepDef::Exec { proc, ix } => match self.program.step_at(*proc, *ix, pre) {
                Ok(v) => v,
                Err(EvalError::PartialApplication { .. }) => None,
                Err(e) => {
                    debug_assert!(false, "unvalidated sort error in step: {e}");
                    None
                }
            },
            StepDef::Jump { proc, to } => {
                let mut v = pre.clone();
                v.set_index(self.program.processes[*proc].loc_var, *to as u8);
                Some(v)
            }
        }
    }
}

/// Every guard in the program must evaluate without leaving its domain on
/// every assignment to its variables; instruction effects may be partial,
/// guards may not.
fn validate_guard_totality(p: &Program) -> Result<(), LangError> {
    let mut guards = Vec::new();
    fn block_guards<'a>(b: &'a crate::lang::Block, out: &mut Vec<&'a crate::vocab::Guard>) {
        fn stmt_guards<'a>(s: &'a crate::lang::Stmt, out: &mut Vec<&'a crate::vocab::Guard>) {
            if let crate::lang::Stmt::If { guard, then_stmts, else_stmts } = s {
                out.push(guard);
                for s in then_stmts.iter().chain(else_stmts) {
                    stmt_guards(s, out);
                }
            }
        }
        for s in &b.stmts {
            stmt_guards(s, out);
        }
        if let Exit::Branch { guard, .. } = &b.exit {
            out.push(guard);
        }
    }
    for proc in &p.processes {
        for inst in &proc.instructions {
            match inst {
                Instruction::IfGoto { guard, .. } => guards.push(guard),
                Instruction::Block(b) => block_guards(b, &mut guards),
                Instruction::Ccr { guard, body } => {
                    guards.push(guard);
                    block_guards(body, &mut guards);
                }
                _ => {}
            }
        }
    }
    for g in guards {
        let mut vars = Vec::new();
        g.vars(&mut vars);
        for asg in p.vocab.enumerate_assignments(&vars) {
            let mut v = Valuation::new(&p.vocab);
            for (&var, &ix) in &asg {
                v.set_index(var, ix);
            }
            g.eval(&p.vocab, &v).map_err(|e| LangError::Sort {
                context: format!("guard `{}` is partial", g.display(&p.vocab)),
                source: e,
            })?;
        }
    }
    Ok(())
}

/// Build the semantics formula of `p`.  All clauses come out in negation
/// normal form, ready for the tableau.
pub fn generate(p: &Program) -> Result<ProgramFormula, LangError> {
    validate_guard_totality(p)?;
    let k = p.num_procs();
    let vocab = &p.vocab;

    let init: Vec<(Valuation, Formula)> = p
        .initial_valuations()?
        .into_iter()
        .map(|v| {
            let pin = Formula::conj(
                vocab
                    .var_ids()
                    .map(|var| Formula::atom(Atom::simple(var, v.get(vocab, var).clone())))
                    .collect(),
            );
            (v, pin)
        })
        .collect();

    let mut frame = Vec::new();
    for (i, pi) in p.processes.iter().enumerate() {
        for j in 0..k {
            if i == j {
                continue;
            }
            for l in &pi.labels {
                let at = Formula::atom(Atom::simple(pi.loc_var, Value::Label(l.clone())));
                frame.push(to_nnf(
                    &Formula::ag(Formula::implies(at.clone(), Formula::ax(j, at))),
                    k,
                ));
            }
        }
    }

    let progress = to_nnf(
        &Formula::ag(Formula::disj((0..k).map(|i| Formula::ex(i, Formula::tt())).collect())),
        k,
    );

    let mut steps = Vec::new();
    let mut instructions = Vec::new();
    for (j, proc) in p.processes.iter().enumerate() {
        for (ix, inst) in proc.instructions.iter().enumerate() {
            let at = Formula::atom(Atom::simple(proc.loc_var, Value::Label(proc.labels[ix].clone())));
            match inst {
                Instruction::Assign { .. } | Instruction::Goto { .. } | Instruction::Block(_) => {
                    let id = StepId(steps.len() as u32);
                    steps.push(StepDef::Exec { proc: j, ix });
                    instructions.push(to_nnf(
                        &Formula::ag(Formula::implies(
                            at,
                            Formula::ax(j, Formula::Step(id)),
                        )),
                        k,
                    ));
                }
                Instruction::IfGoto { guard, then_to, else_to } => {
                    let g = Formula::from_guard(guard);
                    let id_t = StepId(steps.len() as u32);
                    steps.push(StepDef::Jump { proc: j, to: *then_to });
                    let id_e = StepId(steps.len() as u32);
                    steps.push(StepDef::Jump { proc: j, to: *else_to });
                    instructions.push(to_nnf(
                        &Formula::ag(Formula::implies(
                            Formula::and(at.clone(), g.clone()),
                            Formula::ax(j, Formula::Step(id_t)),
                        )),
                        k,
                    ));
                    instructions.push(to_nnf(
                        &Formula::ag(Formula::implies(
                            Formula::and(at, Formula::not(g)),
                            Formula::ax(j, Formula::Step(id_e)),
                        )),
                        k,
                    ));
                }
                Instruction::Ccr { guard, .. } => {
                    let g = Formula::from_guard(guard);
                    let id = StepId(steps.len() as u32);
                    steps.push(StepDef::Exec { proc: j, ix });
                    instructions.push(to_nnf(
                        &Formula::ag(Formula::implies(
                            Formula::and(at.clone(), g.clone()),
                            Formula::ax(j, Formula::Step(id)),
                        )),
                        k,
                    ));
                    // a closed region admits no move at all
                    instructions.push(to_nnf(
                        &Formula::ag(Formula::implies(
                            Formula::and(at, Formula::not(g)),
                            Formula::ax(j, Formula::ff()),
                        )),
                        k,
                    ));
                }
            }
        }
    }

    Ok(ProgramFormula {
        program: p.clone(),
        steps,
        init,
        frame,
        progress,
        instructions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{build_transition_system, parse_program};
    use crate::logic::{is_nnf, model_check_with};

    fn demo() -> Program {
        parse_program(
            "shared v : {0, 1, 2} with v = 0;\n\
             process P1 { s: v := v + 1; t: if (v < 2) s, u; u: goto u; }\n\
             process P2 { a: v := 0; b: goto b; }",
        )
        .unwrap()
    }

    #[test]
    fn clause_inventory_matches_program_shape() {
        let p = demo();
        let pf = generate(&p).unwrap();
        assert_eq!(pf.init.len(), 1);
        // frame: P1 has 3 labels framed against P2's moves, P2 has 2 against P1
        assert_eq!(pf.frame.len(), 3 + 2);
        // instructions: assign + branch(2) + goto | assign + goto
        assert_eq!(pf.instructions.len(), 1 + 2 + 1 + 1 + 1);
        assert_eq!(pf.num_steps(), pf.instructions.len());
        assert!(pf.invariants().all(is_nnf));
        assert!(pf.init.iter().all(|(_, f)| is_nnf(f)));
    }

    #[test]
    fn oracle_posts_match_program_moves() {
        let p = demo();
        let pf = generate(&p).unwrap();
        let init = p.initial_valuations().unwrap().remove(0);
        // step 0 is P1's assignment at `s`
        let post = pf.post(StepId(0), &init).unwrap();
        let v = p.vocab.var("v").unwrap();
        assert_eq!(post.get(&p.vocab, v).as_int(), Some(1));
        let loc1 = p.vocab.var("loc1").unwrap();
        assert_eq!(post.index(loc1), 1);
    }

    #[test]
    fn undefined_arithmetic_has_no_post_state() {
        let p = demo();
        let pf = generate(&p).unwrap();
        let mut s = p.initial_valuations().unwrap().remove(0);
        let v = p.vocab.var("v").unwrap();
        s.set(&p.vocab, v, &crate::vocab::Value::Int(2)).unwrap();
        // v := v + 1 from v = 2 leaves {0,1,2}
        assert_eq!(pf.post(StepId(0), &s), None);
    }

    #[test]
    fn transition_system_satisfies_its_own_semantics() {
        let p = demo();
        let pf = generate(&p).unwrap();
        let ts = build_transition_system(&p, &p.initial_valuations().unwrap()).unwrap();
        ts.require_total().unwrap();
        let m = ts.to_model();
        let full = pf.at(0);
        let r = model_check_with(&m, &full, Some(&pf)).unwrap();
        assert!(r.holds, "program model violates its own semantics: {:?}", r.witness);
    }

    #[test]
    fn semantics_rejects_a_foreign_model() {
        // a model that moves P1 from `s` without performing the assignment
        let p = demo();
        let pf = generate(&p).unwrap();
        let init = p.initial_valuations().unwrap().remove(0);
        let loc1 = p.vocab.var("loc1").unwrap();
        let mut bad = init.clone();
        bad.set_index(loc1, 1); // loc moved but v unchanged
        let m = crate::logic::Model::new(
            p.vocab.clone(),
            2,
            vec![init.clone(), bad.clone()],
            vec![0],
            vec![(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 0)],
        );
        let r = model_check_with(&m, &pf.at(0), Some(&pf)).unwrap();
        assert!(!r.holds);
    }

    #[test]
    fn partial_guard_is_rejected_up_front() {
        let p = parse_program(
            "shared v : {0, 1, 2} with v = 0;\n\
             process P1 { a: if (v + 1 = 2) a, b; b: goto b; }",
        )
        .unwrap();
        let err = generate(&p).unwrap_err();
        assert!(matches!(err, LangError::Sort { .. }), "{err}");
    }

    #[test]
    fn region_semantics_forbids_moves_under_false_guards() {
        let p = parse_program(
            "shared v : {0, 1} with v = 0;\n\
             process P1 { a: when (v = 1) -> { v := 0; goto a; } }\n\
             process P2 { b: v := 1; c: goto c; }",
        )
        .unwrap();
        let pf = generate(&p).unwrap();
        // hand-build the correct model: P1 blocked until P2 sets v
        let loc1 = p.vocab.var("loc1").unwrap();
        let ts = build_transition_system(&p, &p.initial_valuations().unwrap()).unwrap();
        ts.require_total().unwrap();
        let good = model_check_with(&ts.to_model(), &pf.at(0), Some(&pf)).unwrap();
        assert!(good.holds);
        // now a model where P1 "moves" through the closed region: v=0 yet loc1 advances
        let init = p.initial_valuations().unwrap().remove(0);
        let mut cheat = init.clone();
        cheat.set_index(loc1, 0);
        let v = p.vocab.var("v").unwrap();
        // same state with v still 0 but treated as if region ran
        cheat.set_index(v, 0);
        let m = crate::logic::Model::new(
            p.vocab.clone(),
            2,
            vec![init.clone()],
            vec![0],
            vec![(0, 0, 0)],
        );
        let r = model_check_with(&m, &pf.at(0), Some(&pf)).unwrap();
        assert!(!r.holds, "self-loop via P1 pretends the closed region moved");
    }
}
