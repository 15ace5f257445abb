//! Model extraction: turn a satisfiable tableau into a small total model
//! whose states carry full valuations, then make the state labels pairwise
//! distinct so guards can be read off them.
//!
//! The until formulas alive in the tableau are served round-robin: a model
//! state is a (tableau node, phase) pair, and the phase's until — when it sits
//! in the node's label unfulfilled — is discharged by walking rank-decreasing
//! edges to locally-fulfilled nodes before the phase advances.  Universal
//! untils descend on every successor, existential ones on a cheapest witness
//! path with all side branches moving on to the next phase immediately.  Other
//! untils in the labels survive these walks (next-state payloads carry them)
//! and are discharged when their own phase comes around.
//!
//! A guarded body is deterministic, so the walk keeps at most one move per
//! process out of each state; when that verifiably loses the formula (it can
//! for formulas nobody means to realize, like EX1 p & EX1 !p) the walk runs
//! again unrestricted.  Two extracted states can carry the same valuation;
//! such duplicates are folded onto one representative wherever the folded
//! graph still satisfies the formula, and a fresh auxiliary variable with
//! per-state values separates the duplicates that remain.  The final graph is
//! re-checked against the formula that produced the tableau — the extractor
//! never trusts its own construction.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::logic::{model_check_with, Formula, LogicError, Model, StepOracle};
use crate::tableau::{FId, Tableau};
use crate::vocab::{Valuation, Value, VarId, VarKind, Vocab};

#[derive(Debug, Error)]
pub enum ModelxError {
    #[error("cannot extract a model: the root is unsatisfiable")]
    Unsatisfiable,
    #[error("no completion of node {0}'s constraints yields a valuation")]
    NoCompletion(u32),
    #[error("extracted model fails its own specification: {0}")]
    Verification(String),
    #[error(transparent)]
    Check(#[from] LogicError),
}

/// A total model extracted from one tableau root, with enough bookkeeping to
/// synthesize guards from it.
#[derive(Debug, Clone)]
pub struct Extraction {
    /// The input vocabulary, extended by [`Extraction::aux`] when needed.
    pub vocab: Vocab,
    /// Disambiguating auxiliary variable, present iff valuations repeat.
    pub aux: Option<VarId>,
    /// Pairwise distinct state valuations over `vocab`.
    pub states: Vec<Valuation>,
    /// Initial state index (always 0, kept explicit for readers).
    pub initial: u32,
    /// Edges as (from, process, to), sorted.
    pub edges: Vec<(u32, u8, u32)>,
    /// The same graph over the unextended vocabulary; labels may repeat.
    pub base_model: Model,
    /// Per state: originating (tableau node, phase).
    pub origin: Vec<(u32, u32)>,
}

impl Extraction {
    /// The extracted graph over the extended vocabulary.
    pub fn to_model(&self, num_procs: usize) -> Model {
        Model::new(
            self.vocab.clone(),
            num_procs,
            self.states.clone(),
            vec![self.initial],
            self.edges.clone(),
        )
    }
}

/// Does this node still owe the until `e` something here?  Alive nodes
/// carrying `e` always have a rank; rank zero means fulfilled on the spot.
fn pending_rank(t: &Tableau, node: u32, e: FId) -> Option<u32> {
    if !t.node(node).key.forms.contains(&e) {
        return None;
    }
    let r = *t
        .ranks
        .get(&(node, e))
        .expect("alive node carrying an until must be ranked");
    if r > 0 {
        Some(r)
    } else {
        None
    }
}

/// Cheapest alive child of an OR node for obligation `e`: fulfilled-or-free
/// first (missing rank counts as zero), then by node id.
fn preferred_child(t: &Tableau, or: u32, e: Option<FId>) -> u32 {
    t.node(or)
        .children
        .iter()
        .copied()
        .filter(|&c| t.node(c).alive)
        .min_by_key(|&c| (e.and_then(|e| t.ranks.get(&(c, e)).copied()).unwrap_or(0), c))
        .expect("alive OR node has an alive child")
}

/// Cheapest *ranked* alive child, for descending a fulfillment walk.
fn ranked_child(t: &Tableau, or: u32, e: FId) -> Option<(u32, u32)> {
    t.node(or)
        .children
        .iter()
        .copied()
        .filter(|&c| t.node(c).alive)
        .filter_map(|c| t.ranks.get(&(c, e)).map(|&r| (r, c)))
        .min()
        .map(|(r, c)| (c, r))
}

fn complete_valuation(t: &Tableau, node: u32) -> Option<Valuation> {
    let key = &t.node(node).key;
    let mut val = Valuation::new(&t.vocab);
    for (&v, &ix) in &key.pin {
        val.set_index(v, ix);
    }
    let unpinned: Vec<VarId> =
        t.vocab.var_ids().filter(|v| !key.pin.contains_key(v)).collect();
    if unpinned.is_empty() {
        return Some(val);
    }
    let mut constraints = Vec::new();
    for &f in &key.forms {
        match t.formula(f) {
            Formula::Atom(a) => constraints.push((a.clone(), false)),
            Formula::Not(inner) => {
                if let Formula::Atom(a) = &**inner {
                    constraints.push((a.clone(), true));
                }
            }
            _ => {}
        }
    }
    for asg in t.vocab.enumerate_assignments(&unpinned) {
        let mut cand = val.clone();
        for (&v, &ix) in &asg {
            cand.set_index(v, ix);
        }
        let ok = constraints.iter().all(|(a, neg)| match a.eval(&t.vocab, &cand) {
            Ok(b) => b != *neg,
            Err(_) => *neg,
        });
        if ok {
            return Some(cand);
        }
    }
    None
}

/// Extract a model for one root of a satisfiable tableau and verify it
/// against the formula that produced that root.
pub fn extract(
    t: &Tableau,
    root: usize,
    formula: &Formula,
    oracle: Option<&dyn StepOracle>,
) -> Result<Extraction, ModelxError> {
    let root_or = t.roots[root];
    if !t.node(root_or).alive {
        return Err(ModelxError::Unsatisfiable);
    }
    let m = t.eventualities.len();

    // initial state: the root child owing least on its earliest until
    let first_rank = |c: u32| {
        t.eventualities
            .iter()
            .find(|&&e| t.node(c).key.forms.contains(&e))
            .map(|&e| t.ranks.get(&(c, e)).copied().unwrap_or(0))
            .unwrap_or(0)
    };
    let init_and = t
        .node(root_or)
        .children
        .iter()
        .copied()
        .filter(|&c| t.node(c).alive)
        .min_by_key(|&c| (first_rank(c), c))
        .expect("satisfiable root has an alive child");

    // a guarded body yields exactly one successor per process, so a model
    // meant for realization may keep at most one move per process out of each
    // state; formulas that genuinely need more (EX1 p & EX1 !p) get a second,
    // unrestricted pass
    let (mut origin, mut edges) = explore(t, init_and, m, true);
    let mut base_states = complete(t, &origin)?;
    let mut base_model = graph_model(t, &base_states, &edges);
    let verdict = model_check_with(&base_model, formula, oracle)?;
    if !verdict.holds {
        let (o2, e2) = explore(t, init_and, m, false);
        let s2 = complete(t, &o2)?;
        let m2 = graph_model(t, &s2, &e2);
        let v2 = model_check_with(&m2, formula, oracle)?;
        if !v2.holds {
            return Err(ModelxError::Verification(
                v2.witness
                    .map(|(s, v)| format!("state {s} [{v}]"))
                    .unwrap_or_else(|| "no witness reported".into()),
            ));
        }
        origin = o2;
        edges = e2;
        base_states = s2;
        base_model = m2;
    } else {
        // fold duplicate valuations onto one representative wherever the
        // folded graph still satisfies the formula; the stubborn duplicates
        // are the ones that earn the auxiliary variable below
        let mut dup_groups: BTreeMap<Vec<u8>, Vec<u32>> = BTreeMap::new();
        for (i, v) in base_states.iter().enumerate() {
            dup_groups.entry(v.indices().to_vec()).or_default().push(i as u32);
        }
        let mut repr: Vec<u32> = (0..base_states.len() as u32).collect();
        let mut accepted = false;
        for group in dup_groups.values().filter(|g| g.len() > 1) {
            let saved = repr.clone();
            for &s in group {
                repr[s as usize] = group[0];
            }
            let (_, e2, s2) = fold(&base_states, &edges, &origin, &repr);
            let m2 = graph_model(t, &s2, &e2);
            match model_check_with(&m2, formula, oracle) {
                Ok(v) if v.holds => accepted = true,
                _ => repr = saved,
            }
        }
        if accepted {
            let (o2, e2, s2) = fold(&base_states, &edges, &origin, &repr);
            base_model = graph_model(t, &s2, &e2);
            origin = o2;
            edges = e2;
            base_states = s2;
        }
    }

    // group states by valuation; groups of two or more need the auxiliary
    let mut groups: BTreeMap<Vec<u8>, Vec<u32>> = BTreeMap::new();
    for (i, v) in base_states.iter().enumerate() {
        groups.entry(v.indices().to_vec()).or_default().push(i as u32);
    }
    let max_group = groups.values().map(|g| g.len()).max().unwrap_or(0);
    if max_group <= 1 {
        return Ok(Extraction {
            vocab: t.vocab.clone(),
            aux: None,
            states: base_states,
            initial: 0,
            edges,
            base_model,
            origin,
        });
    }
    // within a group values need only be distinct; keeping 0 for the initial
    // state (like for all non-duplicates) makes the variable's starting value
    // 0 no matter which root was extracted
    let mut aux_value = vec![0u8; base_states.len()];
    for group in groups.values() {
        if group.len() > 1 {
            let mut next = 1u8;
            for &s in group {
                if s == 0 {
                    continue;
                }
                aux_value[s as usize] = next;
                next += 1;
            }
        }
    }
    let max_aux = *aux_value.iter().max().expect("nonempty state set");
    let mut vocab = t.vocab.clone();
    let domain: Vec<Value> = (0..=max_aux as i64).map(Value::Int).collect();
    let mut aux_name = String::from("x");
    while vocab.var(&aux_name).is_some() {
        aux_name.push('x');
    }
    let sort = vocab.add_sort(&format!("{aux_name}_dom"), domain).expect("aux domain");
    let aux = vocab.add_var(&aux_name, sort, VarKind::Aux).expect("aux var");
    let states: Vec<Valuation> = base_states
        .iter()
        .zip(&aux_value)
        .map(|(v, &x)| v.extended(x))
        .collect();
    Ok(Extraction {
        vocab,
        aux: Some(aux),
        states,
        initial: 0,
        edges,
        base_model,
        origin,
    })
}

/// Walk the tableau from the initial AND node, planning one target per
/// successor obligation (or per process when `deterministic`).
fn explore(
    t: &Tableau,
    init_and: u32,
    m: usize,
    deterministic: bool,
) -> (Vec<(u32, u32)>, Vec<(u32, u8, u32)>) {
    let mut index: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    let mut origin: Vec<(u32, u32)> = Vec::new();
    let mut edges: Vec<(u32, u8, u32)> = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    index.insert((init_and, 0), 0);
    origin.push((init_and, 0));
    queue.push_back((init_and, 0u32));
    while let Some((n, p)) = queue.pop_front() {
        let from = index[&(n, p)];
        let next_p = if m == 0 { 0 } else { (p + 1) % m as u32 };
        let obligation = if m == 0 {
            None
        } else {
            let e = t.eventualities[p as usize];
            pending_rank(t, n, e).map(|_| e)
        };
        // (process, chosen child, phase of the target, descends an obligation)
        let mut plan: Vec<(u8, u32, u32, bool)> = Vec::new();
        match obligation {
            None => {
                for &(proc, _, or) in &t.node(n).succs {
                    plan.push((proc, preferred_child(t, or, None), next_p, false));
                }
            }
            Some(e) => match t.formula(e) {
                Formula::AllUntil(_, _) => {
                    // descend on every branch; ranks strictly drop
                    for &(proc, _, or) in &t.node(n).succs {
                        let (c, _) = ranked_child(t, or, e)
                            .expect("universal until rides every successor");
                        plan.push((proc, c, p, true));
                    }
                }
                Formula::ExUntil(_, _) => {
                    // one witness path descends, side branches move on
                    let best = t
                        .node(n)
                        .succs
                        .iter()
                        .enumerate()
                        .filter_map(|(sx, &(_, _, or))| {
                            ranked_child(t, or, e).map(|(c, r)| (r, sx, c))
                        })
                        .min()
                        .expect("pending existential until has a ranked branch");
                    for (sx, &(proc, _, or)) in t.node(n).succs.iter().enumerate() {
                        if sx == best.1 {
                            plan.push((proc, best.2, p, true));
                        } else {
                            plan.push((proc, preferred_child(t, or, Some(e)), next_p, false));
                        }
                    }
                }
                _ => unreachable!("eventualities are untils"),
            },
        }
        if deterministic {
            // at most one move per process; obligation-descending branches win
            plan.sort_by_key(|&(proc, child, _, descend)| (proc, !descend, child));
            plan.dedup_by(|a, b| a.0 == b.0);
        }
        for (proc, child, phase, _) in plan {
            let to = *index.entry((child, phase)).or_insert_with(|| {
                let id = origin.len() as u32;
                origin.push((child, phase));
                queue.push_back((child, phase));
                id
            });
            edges.push((from, proc, to));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    (origin, edges)
}

fn complete(t: &Tableau, origin: &[(u32, u32)]) -> Result<Vec<Valuation>, ModelxError> {
    origin
        .iter()
        .map(|&(node, _)| complete_valuation(t, node).ok_or(ModelxError::NoCompletion(node)))
        .collect()
}

fn graph_model(t: &Tableau, states: &[Valuation], edges: &[(u32, u8, u32)]) -> Model {
    Model::new(t.vocab.clone(), t.num_procs, states.to_vec(), vec![0], edges.to_vec())
}

/// Redirect every edge target through `repr`, drop the out-edges of the
/// non-representatives, keep what stays reachable from state 0, and reindex.
fn fold(
    states: &[Valuation],
    edges: &[(u32, u8, u32)],
    origin: &[(u32, u32)],
    repr: &[u32],
) -> (Vec<(u32, u32)>, Vec<(u32, u8, u32)>, Vec<Valuation>) {
    let mut order: Vec<u32> = vec![0];
    let mut seen: std::collections::BTreeSet<u32> = std::iter::once(0).collect();
    let mut qi = 0;
    while qi < order.len() {
        let s = order[qi];
        qi += 1;
        for &(f, _, to) in edges {
            if f == s && seen.insert(repr[to as usize]) {
                order.push(repr[to as usize]);
            }
        }
    }
    let newix: BTreeMap<u32, u32> =
        order.iter().enumerate().map(|(i, &s)| (s, i as u32)).collect();
    let mut new_edges: Vec<(u32, u8, u32)> = edges
        .iter()
        .filter(|&&(f, _, _)| newix.contains_key(&f))
        .map(|&(f, p, to)| (newix[&f], p, newix[&repr[to as usize]]))
        .collect();
    new_edges.sort_unstable();
    new_edges.dedup();
    (
        order.iter().map(|&s| origin[s as usize]).collect(),
        new_edges,
        order.iter().map(|&s| states[s as usize].clone()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_spec;
    use crate::tableau::BuildOptions;

    fn vocab_v(n: i64) -> Vocab {
        let mut v = Vocab::new();
        let d = v.add_sort("d", (0..=n).map(Value::Int).collect()).unwrap();
        v.add_var("v", d, VarKind::Shared).unwrap();
        v
    }

    fn extract_formula(vocab: &Vocab, k: usize, src: &str) -> Extraction {
        let f = parse_spec(src, vocab).unwrap();
        let t = Tableau::build(vocab, k, &[f.clone()], None, &BuildOptions::default()).unwrap();
        extract(&t, 0, &f, None).unwrap()
    }

    #[test]
    fn witness_path_takes_the_cheapest_branch() {
        // from v=0 the until can finish immediately at v=2 or dawdle through
        // v=1; the extracted model must never visit v=1
        let vocab = vocab_v(2);
        let x = extract_formula(&vocab, 1, "v = 0 & E[(v = 0 | v = 1) U v = 2]");
        let visits_one = x
            .base_model
            .states
            .iter()
            .any(|s| *s.get(&x.base_model.vocab, VarId(0)) == Value::Int(1));
        assert!(!visits_one, "cheapest witness must skip v=1");
        let reaches_two = x
            .base_model
            .states
            .iter()
            .any(|s| *s.get(&x.base_model.vocab, VarId(0)) == Value::Int(2));
        assert!(reaches_two);
    }

    #[test]
    fn duplicate_valuations_get_the_auxiliary() {
        let vocab = vocab_v(2);
        // visits to v=1 and v=2 must alternate through v=0, so the two v=0
        // states carry different obligations and cannot fold into one
        let x = extract_formula(
            &vocab,
            1,
            "v = 0 & AG (AF v = 1 & AF v = 2) & AG ((v = 1 -> AX1 v = 0) & (v = 2 -> AX1 v = 0))",
        );
        assert!(x.aux.is_some());
        let aux = x.aux.unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for s in &x.states {
            assert!(seen.insert(s.indices().to_vec()), "states must be distinct");
        }
        assert!(x.vocab.var_name(aux).starts_with('x'));
        assert_eq!(x.base_model.states.len(), x.states.len());
    }

    #[test]
    fn one_move_per_process_per_state() {
        let vocab = vocab_v(2);
        // the existential witness and the plain EX1 true successor would
        // split into two process-1 moves from one state; a realizable model
        // keeps one
        let x = extract_formula(&vocab, 1, "v = 0 & EF v = 2 & AG EX1 true");
        let mut seen = std::collections::BTreeSet::new();
        for &(f, p, _) in &x.edges {
            assert!(seen.insert((f, p)), "state {f} moves twice for process {p}");
        }
    }

    #[test]
    fn unrealizable_branching_falls_back_to_plain_extraction() {
        let vocab = vocab_v(2);
        // no deterministic process has two distinct moves from one state, but
        // the formula is satisfiable and extraction must still serve it
        let x = extract_formula(&vocab, 1, "v = 0 & EX1 v = 1 & EX1 v = 2");
        let mut by: BTreeMap<(u32, u8), usize> = BTreeMap::new();
        for &(f, p, _) in &x.edges {
            *by.entry((f, p)).or_default() += 1;
        }
        assert!(by.values().any(|&n| n > 1), "some state needs both moves");
    }

    #[test]
    fn unsatisfiable_root_refuses_extraction() {
        let vocab = vocab_v(1);
        let f = parse_spec("v = 0 & v = 1", &vocab).unwrap();
        let t = Tableau::build(&vocab, 1, &[f.clone()], None, &BuildOptions::default()).unwrap();
        assert!(matches!(extract(&t, 0, &f, None), Err(ModelxError::Unsatisfiable)));
    }

    #[test]
    fn phases_serve_every_until() {
        let vocab = vocab_v(2);
        // two competing recurrences; the phase rotation must satisfy both,
        // which the built-in verification pass confirms
        let x = extract_formula(
            &vocab,
            1,
            "v = 0 & AG (AF v = 1 & AF v = 2) & AG ((v = 0 -> AX1 v = 1) & (v = 1 -> AX1 v = 2) & (v = 2 -> AX1 v = 0))",
        );
        assert!(x.base_model.states.len() >= 3);
    }

    #[test]
    fn program_model_extraction_round_trips() {
        let src = "process P1 { t: goto m; m: goto c; c: goto t; }
                   process P2 { t: goto m; m: goto c; c: goto t; }";
        let p = crate::lang::parse_program(src).unwrap();
        let phi = crate::phigen::generate(&p).unwrap();
        let spec = parse_spec("AG !(loc1 = c & loc2 = c) & AG EX1 true", &p.vocab).unwrap();
        let root = Formula::and(phi.at(0), spec);
        let t = Tableau::build(
            &p.vocab,
            p.num_procs(),
            &[root.clone()],
            Some(&phi),
            &BuildOptions::default(),
        )
        .unwrap();
        assert!(t.is_satisfiable());
        let x = extract(&t, 0, &root, Some(&phi)).unwrap();
        // every state pins both locations; labels are full program valuations
        assert!(x.base_model.states.len() >= 3);
        for (i, s) in x.base_model.states.iter().enumerate() {
            assert!(
                !x.base_model.succs(i as u32).is_empty(),
                "state {} [{}] must have a successor",
                i,
                s.render(&x.base_model.vocab)
            );
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let vocab = vocab_v(2);
        let a = extract_formula(&vocab, 2, "AG (AF v = 1 & AF v = 0)");
        let b = extract_formula(&vocab, 2, "AG (AF v = 1 & AF v = 0)");
        assert_eq!(a.edges, b.edges);
        assert_eq!(
            a.states.iter().map(|s| s.indices().to_vec()).collect::<Vec<_>>(),
            b.states.iter().map(|s| s.indices().to_vec()).collect::<Vec<_>>()
        );
    }
}
