//! Exhaustive search for small explicit models of a specification.
//!
//! [`find_model`] answers the question "does this formula have a total model
//! with at most `max_states` states, each state labeled by a valuation of the
//! vocabulary?"  For each candidate size the question is encoded
//! propositionally — one-hot state labels, one edge bit per process and state
//! pair, one truth bit per subformula and state — and handed to a SAT solver,
//! so the search enumerates every labeled transition graph of that size.
//! Until and globally operators unroll level by level to the state count:
//! on a total model with `n` states both their least and greatest fixpoints
//! converge within `n` iterations, which makes the unrolled answer exact
//! rather than an approximation.
//!
//! The routine shares nothing with the tableau construction; it exists to
//! give a second, independently derived opinion on satisfiability verdicts
//! for formulas whose models are known to fit in a few states.

use std::collections::HashMap;

use thiserror::Error;
use varisat::{ExtendFormula, Lit, Solver};

use crate::logic::{to_nnf, Formula, Model};
use crate::vocab::{EvalError, Valuation, Vocab};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoundedError {
    #[error("step placeholders cannot be searched for")]
    StepUnsupported,
    #[error("atom evaluation failed: {0}")]
    Atom(#[from] EvalError),
}

/// A smallest total model of `f` with at most `max_states` states, or `None`
/// when no model of that size exists.  States are labeled from the full
/// valuation space of `vocab`; edges carry a process index below `num_procs`.
pub fn find_model(
    vocab: &Vocab,
    num_procs: usize,
    f: &Formula,
    max_states: usize,
) -> Result<Option<Model>, BoundedError> {
    let k = num_procs.max(1);
    let nnf = to_nnf(f, k);
    if contains_step(&nnf) {
        return Err(BoundedError::StepUnsupported);
    }
    let vals = all_valuations(vocab);
    for n in 1..=max_states {
        if let Some(m) = search_exact(vocab, k, &nnf, &vals, n)? {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

fn contains_step(f: &Formula) -> bool {
    match f {
        Formula::Step(_) => true,
        Formula::Atom(_) => false,
        Formula::Not(x)
        | Formula::AllNext(_, x)
        | Formula::ExNext(_, x)
        | Formula::AllNextAll(x)
        | Formula::ExNextAny(x)
        | Formula::AllFinally(x)
        | Formula::ExFinally(x)
        | Formula::AllGlobally(x)
        | Formula::ExGlobally(x) => contains_step(x),
        Formula::And(a, b)
        | Formula::Or(a, b)
        | Formula::Implies(a, b)
        | Formula::Iff(a, b)
        | Formula::AllUntil(a, b)
        | Formula::ExUntil(a, b) => contains_step(a) || contains_step(b),
    }
}

fn all_valuations(vocab: &Vocab) -> Vec<Valuation> {
    let vars: Vec<_> = vocab.var_ids().collect();
    vocab
        .enumerate_assignments(&vars)
        .into_iter()
        .map(|a| {
            let mut v = Valuation::new(vocab);
            for (var, ix) in a {
                v.set_index(var, ix);
            }
            v
        })
        .collect()
}

/// Clause store over plain signed integers; positive numbers are variables,
/// negation is sign flip.  Translated to the solver's literals at the end.
struct Enc<'a> {
    vocab: &'a Vocab,
    k: usize,
    n: usize,
    vals: &'a [Valuation],
    num_vars: i32,
    clauses: Vec<Vec<i32>>,
    /// `lab[s][w]`: state `s` carries valuation `w` (one-hot per state).
    lab: Vec<Vec<i32>>,
    /// `edge[s][i][t]`: process `i` moves from state `s` to state `t`.
    edge: Vec<Vec<Vec<i32>>>,
    memo: HashMap<Formula, Vec<i32>>,
}

impl Enc<'_> {
    fn fresh(&mut self) -> i32 {
        self.num_vars += 1;
        self.num_vars
    }

    fn clause(&mut self, lits: &[i32]) {
        self.clauses.push(lits.to_vec());
    }

    /// `out ↔ ⋁ (a ∧ b)` over the pairs.
    fn define_or_pairs(&mut self, out: i32, pairs: &[(i32, i32)]) {
        let mut back = vec![-out];
        for &(a, b) in pairs {
            self.clause(&[-a, -b, out]);
            let g = self.fresh();
            self.clause(&[-g, a]);
            self.clause(&[-g, b]);
            back.push(g);
        }
        self.clause(&back);
    }

    /// `out ↔ ⋀ (a → b)` over the pairs.
    fn define_and_impls(&mut self, out: i32, pairs: &[(i32, i32)]) {
        let mut back = vec![out];
        for &(a, b) in pairs {
            self.clause(&[-out, -a, b]);
            let g = self.fresh();
            self.clause(&[-g, a]);
            self.clause(&[-g, -b]);
            back.push(g);
        }
        self.clause(&back);
    }

    /// Edge/target-truth pairs out of `s`, for one process or for all.
    fn step_pairs(&self, s: usize, only: Option<usize>, target: &[i32]) -> Vec<(i32, i32)> {
        let mut pairs = Vec::new();
        for i in 0..self.k {
            if only.is_some_and(|p| p != i) {
                continue;
            }
            for t in 0..self.n {
                pairs.push((self.edge[s][i][t], target[t]));
            }
        }
        pairs
    }

    /// One truth variable per state for a normal-form subformula, with
    /// defining clauses in both directions so the assignment is forced by the
    /// labels and edges alone.
    fn truth(&mut self, f: &Formula) -> Result<Vec<i32>, BoundedError> {
        if let Some(v) = self.memo.get(f) {
            return Ok(v.clone());
        }
        let out = match f {
            Formula::Atom(a) => {
                let mut table = Vec::with_capacity(self.vals.len());
                for val in self.vals {
                    table.push(a.eval(self.vocab, val)?);
                }
                let mut vars = Vec::with_capacity(self.n);
                for _ in 0..self.n {
                    vars.push(self.fresh());
                }
                for s in 0..self.n {
                    for (w, &tt) in table.iter().enumerate() {
                        let forced = if tt { vars[s] } else { -vars[s] };
                        let l = self.lab[s][w];
                        self.clause(&[-l, forced]);
                    }
                }
                vars
            }
            Formula::Not(x) => {
                let inner = self.truth(x)?;
                let mut vars = Vec::with_capacity(self.n);
                for _ in 0..self.n {
                    vars.push(self.fresh());
                }
                for s in 0..self.n {
                    self.clause(&[-vars[s], -inner[s]]);
                    self.clause(&[vars[s], inner[s]]);
                }
                vars
            }
            Formula::And(a, b) => {
                let (ta, tb) = (self.truth(a)?, self.truth(b)?);
                let mut vars = Vec::with_capacity(self.n);
                for _ in 0..self.n {
                    vars.push(self.fresh());
                }
                for s in 0..self.n {
                    self.clause(&[-vars[s], ta[s]]);
                    self.clause(&[-vars[s], tb[s]]);
                    self.clause(&[vars[s], -ta[s], -tb[s]]);
                }
                vars
            }
            Formula::Or(a, b) => {
                let (ta, tb) = (self.truth(a)?, self.truth(b)?);
                let mut vars = Vec::with_capacity(self.n);
                for _ in 0..self.n {
                    vars.push(self.fresh());
                }
                for s in 0..self.n {
                    self.clause(&[vars[s], -ta[s]]);
                    self.clause(&[vars[s], -tb[s]]);
                    self.clause(&[-vars[s], ta[s], tb[s]]);
                }
                vars
            }
            Formula::ExNext(i, p) => {
                let tp = self.truth(p)?;
                let mut vars = Vec::with_capacity(self.n);
                for _ in 0..self.n {
                    vars.push(self.fresh());
                }
                for s in 0..self.n {
                    let pairs = self.step_pairs(s, Some(*i), &tp);
                    self.define_or_pairs(vars[s], &pairs);
                }
                vars
            }
            Formula::AllNext(i, p) => {
                let tp = self.truth(p)?;
                let mut vars = Vec::with_capacity(self.n);
                for _ in 0..self.n {
                    vars.push(self.fresh());
                }
                for s in 0..self.n {
                    let pairs = self.step_pairs(s, Some(*i), &tp);
                    self.define_and_impls(vars[s], &pairs);
                }
                vars
            }
            Formula::ExUntil(p, q) => self.unroll_until(false, p, q)?,
            Formula::AllUntil(p, q) => self.unroll_until(true, p, q)?,
            Formula::ExGlobally(p) => self.unroll_globally(false, p)?,
            Formula::AllGlobally(p) => self.unroll_globally(true, p)?,
            other => unreachable!("encoding runs on normal form, got {other:?}"),
        };
        self.memo.insert(f.clone(), out.clone());
        Ok(out)
    }

    /// Level `0` is the goal now; level `d` allows `d` more steps.  On a
    /// total `n`-state model the least fixpoint is reached by level `n - 1`.
    fn unroll_until(
        &mut self,
        universal: bool,
        p: &Formula,
        q: &Formula,
    ) -> Result<Vec<i32>, BoundedError> {
        let tp = self.truth(p)?;
        let tq = self.truth(q)?;
        let mut prev = tq.clone();
        for _ in 1..self.n {
            let mut cur = Vec::with_capacity(self.n);
            for s in 0..self.n {
                let y = self.fresh();
                let step = self.fresh();
                let pairs = self.step_pairs(s, None, &prev);
                if universal {
                    self.define_and_impls(step, &pairs);
                } else {
                    self.define_or_pairs(step, &pairs);
                }
                // y ↔ q ∨ (p ∧ step)
                self.clause(&[-tq[s], y]);
                self.clause(&[-tp[s], -step, y]);
                self.clause(&[-y, tq[s], tp[s]]);
                self.clause(&[-y, tq[s], step]);
                cur.push(y);
            }
            prev = cur;
        }
        Ok(prev)
    }

    /// Level `0` is the invariant now; level `d` sustains it for `d` more
    /// steps.  The greatest fixpoint is reached by level `n - 1` as well.
    fn unroll_globally(&mut self, universal: bool, p: &Formula) -> Result<Vec<i32>, BoundedError> {
        let tp = self.truth(p)?;
        let mut prev = tp.clone();
        for _ in 1..self.n {
            let mut cur = Vec::with_capacity(self.n);
            for s in 0..self.n {
                let z = self.fresh();
                let step = self.fresh();
                let pairs = self.step_pairs(s, None, &prev);
                if universal {
                    self.define_and_impls(step, &pairs);
                } else {
                    self.define_or_pairs(step, &pairs);
                }
                // z ↔ p ∧ step
                self.clause(&[-z, tp[s]]);
                self.clause(&[-z, step]);
                self.clause(&[z, -tp[s], -step]);
                cur.push(z);
            }
            prev = cur;
        }
        Ok(prev)
    }
}

fn search_exact(
    vocab: &Vocab,
    k: usize,
    nnf: &Formula,
    vals: &[Valuation],
    n: usize,
) -> Result<Option<Model>, BoundedError> {
    let nv = vals.len();
    let mut enc = Enc {
        vocab,
        k,
        n,
        vals,
        num_vars: 0,
        clauses: Vec::new(),
        lab: Vec::new(),
        edge: Vec::new(),
        memo: HashMap::new(),
    };
    for _ in 0..n {
        let mut row = Vec::with_capacity(nv);
        for _ in 0..nv {
            row.push(enc.fresh());
        }
        enc.lab.push(row);
    }
    for _ in 0..n {
        let mut per_proc = Vec::with_capacity(k);
        for _ in 0..k {
            let mut row = Vec::with_capacity(n);
            for _ in 0..n {
                row.push(enc.fresh());
            }
            per_proc.push(row);
        }
        enc.edge.push(per_proc);
    }
    for s in 0..n {
        let row = enc.lab[s].clone();
        enc.clause(&row);
        for w1 in 0..nv {
            for w2 in w1 + 1..nv {
                enc.clause(&[-row[w1], -row[w2]]);
            }
        }
        let mut out = Vec::with_capacity(k * n);
        for i in 0..k {
            out.extend_from_slice(&enc.edge[s][i]);
        }
        enc.clause(&out);
    }
    let root = enc.truth(nnf)?;
    enc.clause(&[root[0]]);

    let mut solver = Solver::new();
    for c in &enc.clauses {
        let lits: Vec<Lit> = c.iter().map(|&l| Lit::from_dimacs(l as isize)).collect();
        solver.add_clause(&lits);
    }
    let sat = solver.solve().expect("SAT solver failed");
    if !sat {
        return Ok(None);
    }
    let assignment = solver.model().expect("satisfiable without a model");
    let mut truth = vec![false; enc.num_vars as usize + 1];
    for lit in assignment {
        let d = lit.to_dimacs();
        if d > 0 {
            truth[d as usize] = true;
        }
    }
    let mut states = Vec::with_capacity(n);
    for s in 0..n {
        let w = (0..nv)
            .find(|&w| truth[enc.lab[s][w] as usize])
            .expect("one-hot label left unset");
        states.push(vals[w].clone());
    }
    let mut transitions = Vec::new();
    for s in 0..n {
        for i in 0..k {
            for t in 0..n {
                if truth[enc.edge[s][i][t] as usize] {
                    transitions.push((s as u32, i as u8, t as u32));
                }
            }
        }
    }
    Ok(Some(Model::new(vocab.clone(), k, states, vec![0], transitions)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{model_check, parse_spec};
    use crate::vocab::{Value, VarKind};

    fn vocab2x3() -> Vocab {
        let mut v = Vocab::new();
        let d = v
            .add_sort("d3", vec![Value::Int(0), Value::Int(1), Value::Int(2)])
            .unwrap();
        v.add_var("v1", d, VarKind::Shared).unwrap();
        v.add_var("v2", d, VarKind::Shared).unwrap();
        v
    }

    fn search(src: &str) -> (Formula, Option<Model>) {
        let vocab = vocab2x3();
        let f = parse_spec(src, &vocab).unwrap();
        let m = find_model(&vocab, 2, &f, 6).unwrap();
        (f, m)
    }

    #[test]
    fn found_models_satisfy_their_formulas() {
        for src in [
            "v1 = 0",
            "v1 = 0 & AF v1 = 2",
            "E[v1 = 0 U v1 = 2] & v2 = 1",
            "v1 = 0 & AG (v1 = 0 -> EX1 v1 = 1) & AG (v1 = 1 -> EX1 v1 = 0)",
            "EG v1 = 0 & EF v2 = 2",
            "v1 = 0 & AX1 v1 = 1 & EX2 v1 = 2",
            "A[v1 <= 1 U v2 = 2] | AG v1 = 0",
        ] {
            let (f, m) = search(src);
            let m = m.unwrap_or_else(|| panic!("no model found for {src}"));
            assert!(m.len() <= 6);
            let vocab = vocab2x3();
            assert!(
                model_check(&m, &f).unwrap().holds,
                "decoded model fails {}",
                f.display(&vocab)
            );
        }
    }

    #[test]
    fn contradictions_have_no_model_of_any_size() {
        for src in [
            "v1 = 0 & v1 = 1",
            "AX1 false & AX2 false",
            "EG v1 = 0 & AF v1 = 1",
            "v1 = 0 & AG (v1 = 0 -> AX1 v1 = 0 & AX2 v1 = 0) & AF v1 = 1",
            "A[v1 = 0 U v1 = 2] & AG v1 = 0",
            "EX1 (v1 = 0 & v1 = 2)",
        ] {
            let (_, m) = search(src);
            assert!(m.is_none(), "unexpected model for {src}");
        }
    }

    #[test]
    fn agrees_with_the_tableau_on_a_seeded_corpus() {
        use crate::corpus::{Sampler, NUM_PROCS};
        use crate::tableau::{BuildOptions, Tableau};
        let mut s = Sampler::new(0xA11CE);
        let (mut sat_n, mut unsat_n) = (0usize, 0usize);
        for i in 0..100 {
            let f = s.next_formula();
            let t = Tableau::build(
                &s.vocab,
                NUM_PROCS,
                std::slice::from_ref(&f),
                None,
                &BuildOptions::default(),
            )
            .unwrap_or_else(|e| panic!("tableau build failed on #{i}: {e}"));
            let found = find_model(&s.vocab, NUM_PROCS, &f, 6).unwrap();
            match &found {
                Some(m) => {
                    sat_n += 1;
                    assert!(
                        model_check(m, &f).unwrap().holds,
                        "decoded model fails #{i}: {}",
                        f.display(&s.vocab)
                    );
                }
                None => unsat_n += 1,
            }
            assert_eq!(
                t.is_satisfiable(),
                found.is_some(),
                "verdicts disagree on #{i}: {}",
                f.display(&s.vocab)
            );
        }
        assert!(sat_n > 0 && unsat_n > 0, "one-sided corpus: {sat_n} sat / {unsat_n} unsat");
    }

    #[test]
    fn the_smallest_size_wins() {
        // a forced three-phase cycle needs exactly three states
        let (_, m) = search(
            "v1 = 0 & AG ((v1 = 0 -> AX1 v1 = 1 & AX2 v1 = 1) \
             & (v1 = 1 -> AX1 v1 = 2 & AX2 v1 = 2) \
             & (v1 = 2 -> AX1 v1 = 0 & AX2 v1 = 0))",
        );
        assert_eq!(m.unwrap().len(), 3);
        let (_, m) = search("E[v1 = 0 U v1 = 2]");
        assert_eq!(m.unwrap().len(), 1);
    }
}
