//! Exhaustive interleaving simulator for compiled lock/condition-variable
//! programs.
//!
//! Each process advances through its current region's op list one micro-step
//! at a time; the simulator explores every interleaving of those micro-steps
//! from every initial valuation.  `Exec` runs the region through the
//! program's own step function, which re-tests the guard — so if the locking
//! ever lets the state change between guard test and body, the run is
//! reported as a violation rather than silently executed.
//!
//! On top of the explored graph the simulator reports deadlocks (states with
//! no move at all), starvation (a reachable state from which some process can
//! never execute a region again), and the data needed to compare the
//! compilation against the region program it came from: the set of reachable
//! valuations and the set of region-execution edges.  [`matches_program`]
//! does that comparison — the compiled program must reach exactly the region
//! program's states and execute exactly its transitions.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexSet;
use thiserror::Error;

use crate::codegen::{Compiled, CvId, Grain, LockId, Op};
use crate::lang::build_transition_system;
use crate::synth::Synthesis;
use crate::vocab::Valuation;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("evaluation failed in the simulator: {0}")]
    Eval(#[from] crate::vocab::EvalError),
    #[error("simulation exceeded {0} states")]
    Budget(usize),
    #[error("internal lock bookkeeping broke: {0}")]
    Internal(String),
    #[error(transparent)]
    Lang(#[from] crate::lang::LangError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ProcState {
    Run { loc: u8, pc: u16 },
    Waiting { loc: u8, resume: u16 },
    Reacquiring { loc: u8, resume: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct SimState {
    procs: Vec<(u8, u16, u8)>, // (loc, pc, mode) packed for cheap ordering
    owners: Vec<u8>,           // lock index -> owner + 1, 0 = free
    val: Valuation,
}

const MODE_RUN: u8 = 0;
const MODE_WAIT: u8 = 1;
const MODE_REACQ: u8 = 2;

fn unpack(t: (u8, u16, u8)) -> ProcState {
    match t.2 {
        MODE_RUN => ProcState::Run { loc: t.0, pc: t.1 },
        MODE_WAIT => ProcState::Waiting { loc: t.0, resume: t.1 },
        _ => ProcState::Reacquiring { loc: t.0, resume: t.1 },
    }
}

#[derive(Debug, Clone)]
pub struct SimReport {
    /// Interleaved micro-states explored.
    pub states: usize,
    /// Rendered examples of states with no move at all (empty means none).
    pub deadlocks: Vec<String>,
    /// Processes that can starve: from the rendered example state the process
    /// never executes a region again on any continuation.
    pub starved: BTreeMap<usize, String>,
    /// Guard-false-at-exec incidents; any entry means the locking is wrong.
    pub violations: Vec<String>,
    /// Valuations seen across all interleavings.
    pub valuations: BTreeSet<Valuation>,
    /// Region executions as (valuation before, process, valuation after).
    pub exec_edges: BTreeSet<(Valuation, u8, Valuation)>,
}

const STATE_BUDGET: usize = 1_000_000;

pub fn simulate(c: &Compiled, s: &Synthesis) -> Result<SimReport, SimError> {
    let p = &s.program;
    let lock_ix: BTreeMap<LockId, usize> =
        c.lock_order.iter().enumerate().map(|(i, &lk)| (lk, i)).collect();

    let mut states: IndexSet<SimState> = IndexSet::new();
    let mut queue = std::collections::VecDeque::new();
    for val in p.initial_valuations()? {
        let procs = p
            .processes
            .iter()
            .map(|pr| (val.index(pr.loc_var), 0u16, MODE_RUN))
            .collect();
        let st = SimState { procs, owners: vec![0; c.lock_order.len()], val };
        let (ix, fresh) = states.insert_full(st);
        if fresh {
            queue.push_back(ix as u32);
        }
    }

    let mut edges: Vec<(u32, u8, bool, u32)> = Vec::new();
    let mut deadlocks = Vec::new();
    let mut violations = Vec::new();
    while let Some(six) = queue.pop_front() {
        if states.len() > STATE_BUDGET {
            return Err(SimError::Budget(STATE_BUDGET));
        }
        let st = states.get_index(six as usize).unwrap().clone();
        let mut moved = false;
        for i in 0..st.procs.len() {
            for (is_exec, next) in proc_steps(c, s, &lock_ix, &st, i, &mut violations)? {
                moved = true;
                let (tix, fresh) = states.insert_full(next);
                if fresh {
                    queue.push_back(tix as u32);
                }
                edges.push((six, i as u8, is_exec, tix as u32));
            }
        }
        if !moved && deadlocks.len() < 3 {
            deadlocks.push(render_state(c, s, &st));
        }
    }

    // starvation: reverse-reach the states that still lead to an execution
    let n = states.len();
    let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(f, _, _, t) in &edges {
        rev[t as usize].push(f);
    }
    let mut starved = BTreeMap::new();
    for i in 0..p.processes.len() {
        let mut ok = vec![false; n];
        let mut stack: Vec<u32> = edges
            .iter()
            .filter(|&&(_, pr, ex, _)| ex && pr == i as u8)
            .map(|&(f, _, _, _)| f)
            .collect();
        for &f in &stack {
            ok[f as usize] = true;
        }
        while let Some(x) = stack.pop() {
            for &pre in &rev[x as usize] {
                if !ok[pre as usize] {
                    ok[pre as usize] = true;
                    stack.push(pre);
                }
            }
        }
        if let Some(bad) = ok.iter().position(|&b| !b) {
            starved.insert(i, render_state(c, s, states.get_index(bad).unwrap()));
        }
    }

    let mut valuations = BTreeSet::new();
    for st in &states {
        valuations.insert(st.val.clone());
    }
    let mut exec_edges = BTreeSet::new();
    for &(f, pr, ex, t) in &edges {
        if ex {
            exec_edges.insert((
                states.get_index(f as usize).unwrap().val.clone(),
                pr,
                states.get_index(t as usize).unwrap().val.clone(),
            ));
        }
    }

    Ok(SimReport {
        states: n,
        deadlocks,
        starved,
        violations,
        valuations,
        exec_edges,
    })
}

/// All enabled micro-steps of process `i` (0 or 1 of them; guards and locks
/// are the only branch points and both are deterministic given the state).
fn proc_steps(
    c: &Compiled,
    s: &Synthesis,
    lock_ix: &BTreeMap<LockId, usize>,
    st: &SimState,
    i: usize,
    violations: &mut Vec<String>,
) -> Result<Vec<(bool, SimState)>, SimError> {
    let p = &s.program;
    let monitor = |cv: CvId| match c.grain {
        Grain::Coarse => LockId::Global,
        Grain::Fine => LockId::Cv(cv.0, cv.1),
    };
    let mut out = Vec::new();
    match unpack(st.procs[i]) {
        ProcState::Waiting { .. } => {}
        ProcState::Reacquiring { loc, resume } => {
            let lk = monitor(CvId(i, loc as usize));
            let ix = lock_ix[&lk];
            if st.owners[ix] == 0 {
                let mut next = st.clone();
                next.owners[ix] = i as u8 + 1;
                next.procs[i] = (loc, resume, MODE_RUN);
                out.push((false, next));
            }
        }
        ProcState::Run { loc, pc } => {
            let ops = &c.ops[&(i, loc as usize)];
            let op = &ops[pc as usize];
            let advance = |next: &mut SimState, to: usize| {
                if to >= ops.len() {
                    let new_loc = next.val.index(p.processes[i].loc_var);
                    next.procs[i] = (new_loc, 0, MODE_RUN);
                } else {
                    next.procs[i] = (loc, to as u16, MODE_RUN);
                }
            };
            match op {
                Op::Acquire(lk) => {
                    let ix = lock_ix[&lk];
                    if st.owners[ix] == 0 {
                        let mut next = st.clone();
                        next.owners[ix] = i as u8 + 1;
                        advance(&mut next, pc as usize + 1);
                        out.push((false, next));
                    }
                }
                Op::Release(lk) => {
                    let ix = lock_ix[&lk];
                    if st.owners[ix] != i as u8 + 1 {
                        return Err(SimError::Internal(format!(
                            "{} releases a lock it does not hold",
                            p.processes[i].name
                        )));
                    }
                    let mut next = st.clone();
                    next.owners[ix] = 0;
                    advance(&mut next, pc as usize + 1);
                    out.push((false, next));
                }
                Op::Branch { on_true, on_false } => {
                    let g = &s.guards[&(i, loc as usize)];
                    let to = if g.eval(&p.vocab, &st.val)? { *on_true } else { *on_false };
                    let mut next = st.clone();
                    advance(&mut next, to);
                    out.push((false, next));
                }
                Op::Exec => match p.step_at(i, loc as usize, &st.val)? {
                    Some(nv) => {
                        let mut next = st.clone();
                        next.val = nv;
                        advance(&mut next, pc as usize + 1);
                        out.push((true, next));
                    }
                    None => violations.push(format!(
                        "{} at `{}`: guard failed at execution in {}",
                        p.processes[i].name,
                        p.processes[i].label(loc as usize),
                        render_state(c, s, st)
                    )),
                },
                Op::Wait { cv, resume } => {
                    let ix = lock_ix[&monitor(*cv)];
                    if st.owners[ix] != i as u8 + 1 {
                        return Err(SimError::Internal(format!(
                            "{} waits without the monitor",
                            p.processes[i].name
                        )));
                    }
                    let mut next = st.clone();
                    next.owners[ix] = 0;
                    next.procs[i] = (loc, *resume as u16, MODE_WAIT);
                    out.push((false, next));
                }
                Op::Signal(cv) => {
                    let mut next = st.clone();
                    let w = next.procs[cv.0];
                    if w.2 == MODE_WAIT && w.0 as usize == cv.1 {
                        next.procs[cv.0] = (w.0, w.1, MODE_REACQ);
                    }
                    advance(&mut next, pc as usize + 1);
                    out.push((false, next));
                }
            }
        }
    }
    Ok(out)
}

fn render_state(c: &Compiled, s: &Synthesis, st: &SimState) -> String {
    let p = &s.program;
    let mut parts = Vec::new();
    for (i, &t) in st.procs.iter().enumerate() {
        let name = &p.processes[i].name;
        let label = p.processes[i].label(t.0 as usize);
        parts.push(match unpack(t) {
            ProcState::Run { pc, .. } => format!("{name}@{label}+{pc}"),
            ProcState::Waiting { .. } => format!("{name}@{label} waiting"),
            ProcState::Reacquiring { .. } => format!("{name}@{label} waking"),
        });
    }
    let mut held = Vec::new();
    for (ix, &o) in st.owners.iter().enumerate() {
        if o != 0 {
            held.push(format!(
                "{}={}",
                crate::codegen::lock_name(&c.lock_order[ix], p),
                p.processes[o as usize - 1].name
            ));
        }
    }
    if !held.is_empty() {
        parts.push(format!("holding {}", held.join(", ")));
    }
    parts.push(format!("[{}]", st.val.render(&p.vocab)));
    parts.join("; ")
}

/// Compare a simulation against the region program it was compiled from:
/// same reachable valuations, same executed transitions, no deadlock, no
/// violations.  Starvation is reported by [`simulate`] but judged by the
/// caller, because a region program may legitimately block a process forever.
pub fn matches_program(report: &SimReport, s: &Synthesis) -> Result<Vec<String>, SimError> {
    let p = &s.program;
    let ts = build_transition_system(p, &p.initial_valuations()?)?;
    let mut problems = Vec::new();
    let want_states: BTreeSet<Valuation> = ts.states.iter().cloned().collect();
    if report.valuations != want_states {
        let extra = report.valuations.difference(&want_states).count();
        let missing = want_states.difference(&report.valuations).count();
        problems.push(format!(
            "reachable valuations differ: {extra} extra, {missing} missing"
        ));
    }
    let want_edges: BTreeSet<(Valuation, u8, Valuation)> = ts
        .transitions
        .iter()
        .map(|&(f, pr, t)| (ts.state(f).clone(), pr, ts.state(t).clone()))
        .collect();
    if report.exec_edges != want_edges {
        let extra = report.exec_edges.difference(&want_edges).count();
        let missing = want_edges.difference(&report.exec_edges).count();
        problems.push(format!("executed transitions differ: {extra} extra, {missing} missing"));
    }
    for d in &report.deadlocks {
        problems.push(format!("deadlock: {d}"));
    }
    for v in &report.violations {
        problems.push(format!("violation: {v}"));
    }
    Ok(problems)
}

/// Did deleting a signal change anything an exhaustive run can see?
pub fn mutation_detected(baseline: &SimReport, mutated: &SimReport) -> bool {
    (!mutated.deadlocks.is_empty() && baseline.deadlocks.is_empty())
        || mutated.starved.keys().any(|k| !baseline.starved.contains_key(k))
        || !mutated.violations.is_empty()
        || mutated.valuations != baseline.valuations
        || mutated.exec_edges != baseline.exec_edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::{compile, compile_without_signal, signal_sites};
    use crate::lang::parse_program;
    use crate::logic::{parse_spec, Formula};
    use crate::modelx::extract;
    use crate::phigen;
    use crate::synth::synthesize;
    use crate::tableau::{BuildOptions, Tableau};

    fn synth(src: &str, spec: &str) -> Synthesis {
        let p = parse_program(src).unwrap();
        let phi = phigen::generate(&p).unwrap();
        let f = parse_spec(spec, &p.vocab).unwrap();
        let root = Formula::and(phi.at(0), f);
        let t = Tableau::build(
            &p.vocab,
            p.num_procs(),
            &[root.clone()],
            Some(&phi),
            &BuildOptions::default(),
        )
        .unwrap();
        let x = extract(&t, 0, &root, Some(&phi)).unwrap();
        synthesize(&p, &[x]).unwrap()
    }

    fn mutex() -> Synthesis {
        synth(
            "process P1 { n: goto t; t: goto c; c: goto n; }
             process P2 { n: goto t; t: goto c; c: goto n; }",
            "AG !(loc1 = c & loc2 = c) \
             & AG (loc1 = t -> AF loc1 = c) & AG (loc2 = t -> AF loc2 = c) \
             & AG (loc1 = n -> EX1 loc1 = t) & AG (loc2 = n -> EX2 loc2 = t)",
        )
    }

    #[test]
    fn coarse_compilation_matches_the_region_program() {
        let s = mutex();
        let c = compile(&s, Grain::Coarse).unwrap();
        let r = simulate(&c, &s).unwrap();
        assert!(r.states > 0);
        let problems = matches_program(&r, &s).unwrap();
        assert!(problems.is_empty(), "{problems:?}");
        assert!(r.starved.is_empty(), "{:?}", r.starved);
    }

    #[test]
    fn fine_compilation_matches_the_region_program() {
        let s = mutex();
        let c = compile(&s, Grain::Fine).unwrap();
        let r = simulate(&c, &s).unwrap();
        let problems = matches_program(&r, &s).unwrap();
        assert!(problems.is_empty(), "{problems:?}");
        assert!(r.starved.is_empty(), "{:?}", r.starved);
    }

    #[test]
    fn deleting_some_signal_is_caught_by_the_simulator() {
        let s = mutex();
        let c = compile(&s, Grain::Coarse).unwrap();
        let baseline = simulate(&c, &s).unwrap();
        assert!(baseline.deadlocks.is_empty());
        let mut caught = 0;
        let sites = signal_sites(&c);
        for (site, cv) in &sites {
            let m = compile_without_signal(&s, Grain::Coarse, *site, *cv).unwrap();
            let r = simulate(&m, &s).unwrap();
            if mutation_detected(&baseline, &r) {
                caught += 1;
            }
        }
        assert!(caught > 0, "no deleted signal changed observable behavior");
    }
}
