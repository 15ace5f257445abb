//! The end-to-end driver: parse a program and a temporal specification, build
//! the tableau, extract models, synthesize guards, project them for
//! observability, optionally compile to lock-based code, and write artifacts.
//!
//! Every stage is deterministic, so two runs over the same inputs produce
//! byte-identical artifacts.  Failures map to distinct exit codes so scripts
//! can tell "your specification is unsatisfiable" (3) from "the tableau ran
//! out of budget" (4) from "the emitted program fails verification" (5).

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

use crate::codegen::{compile, lock_plan_json, render_process, Grain};
use crate::lang::{parse_program, Block, Instruction, LangError, Program, Stmt};
use crate::logic::{
    closure_size, parse_spec, program_satisfies, validate_process_indices, Formula, LogicError,
};
use crate::modelx::{extract, Extraction};
use crate::phigen::{generate, ProgramFormula};
use crate::sim::{matches_program, simulate};
use crate::synth::{check_observability, project_guards, synthesize, Observability, Synthesis};
use crate::tableau::{BuildOptions, Tableau, TableauError};
use crate::vocab::{Valuation, VarId, VarKind};

pub const PROGRAM_FILE: &str = "synchronized.cp";
pub const GUARDS_FILE: &str = "guards.json";
pub const REPORT_FILE: &str = "report.txt";
pub const LOCKPLAN_FILE: &str = "lockplan.json";

/// Which initial states the synthesized program must serve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Initializers fix one starting state (or one per uninitialized
    /// variable's value, all served by the same program).
    AllInit,
    /// Same semantics, but the run is announced as input-driven; without
    /// uninitialized variables it quietly behaves as `AllInit`.
    WithInputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Ccr,
    Coarse,
    Fine,
}

/// What to do about guards that read variables other processes own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsPolicy {
    /// Project to the strongest view that keeps the specification; fall back
    /// to unprojected guards (with an advisory) when projection loses it.
    Auto,
    /// Keep the guards and declare the variables they read shared instead.
    ForceShared,
    /// Project onto shared variables only, accepting that the blunt guards
    /// may trade liveness away; the report says what was lost.
    Limited,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub program: PathBuf,
    pub spec: PathBuf,
    pub mode: InitMode,
    pub target: Target,
    pub observability: ObsPolicy,
    pub dump_tableau: bool,
    pub dump_model: bool,
    pub dump_guards: bool,
    /// Tableau node budget; builds past this many nodes abort with exit 4.
    pub budget: usize,
    pub out_dir: PathBuf,
    /// Extract per-initial-state models on worker threads.  Outputs are
    /// joined in order, so this cannot change any artifact.
    pub parallel: bool,
}

impl PipelineConfig {
    pub fn new(program: PathBuf, spec: PathBuf, out_dir: PathBuf) -> Self {
        PipelineConfig {
            program,
            spec,
            mode: InitMode::AllInit,
            target: Target::Ccr,
            observability: ObsPolicy::Auto,
            dump_tableau: false,
            dump_model: false,
            dump_guards: false,
            budget: BuildOptions::default().budget,
            out_dir,
            parallel: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{0}")]
    Parse(String),
    #[error("specification inconsistent: {0}")]
    Inconsistent(String),
    #[error("tableau node budget exhausted after {0} nodes")]
    Budget(usize),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Internal(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io { .. } | PipelineError::Internal(_) => 1,
            PipelineError::Parse(_) => 2,
            PipelineError::Inconsistent(_) => 3,
            PipelineError::Budget(_) => 4,
            PipelineError::Verification(_) => 5,
        }
    }
}

#[derive(Debug)]
pub struct PipelineOutcome {
    /// File name to contents, exactly as written under the output directory.
    pub artifacts: BTreeMap<String, Vec<u8>>,
    pub notices: Vec<String>,
    pub report: String,
    pub program: Program,
    pub spec: Formula,
    pub synthesis: Synthesis,
    pub observability: Observability,
    /// False only under [`ObsPolicy::Limited`] when the blunted guards lost
    /// part of the specification; the caller should exit 5 then.
    pub spec_preserved: bool,
    pub tableau_nodes: usize,
    pub tableau_alive: usize,
    /// Largest closure size over the per-initial-state root formulas.
    pub closure: usize,
    /// Size of the full valuation space.
    pub valuations: u128,
    pub model_sizes: Vec<usize>,
}

/// Run from files and write every produced artifact under `out_dir` — also
/// the partial ones (tableau dumps) when a later stage fails.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    let read = |path: &PathBuf| {
        fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    };
    let program_src = read(&cfg.program)?;
    let spec_src = read(&cfg.spec)?;
    let mut arts = BTreeMap::new();
    let mut notices = Vec::new();
    let result = run_stages(cfg, &program_src, &spec_src, &mut arts, &mut notices);
    if !arts.is_empty() {
        fs::create_dir_all(&cfg.out_dir).map_err(|e| PipelineError::Io {
            path: cfg.out_dir.display().to_string(),
            msg: e.to_string(),
        })?;
        for (name, bytes) in &arts {
            let path = cfg.out_dir.join(name);
            fs::write(&path, bytes).map_err(|e| PipelineError::Io {
                path: path.display().to_string(),
                msg: e.to_string(),
            })?;
        }
    }
    result
}

/// Run on in-memory sources; artifacts are only returned, never written.
pub fn run_on_sources(
    cfg: &PipelineConfig,
    program_src: &str,
    spec_src: &str,
) -> Result<PipelineOutcome, PipelineError> {
    let mut arts = BTreeMap::new();
    let mut notices = Vec::new();
    run_stages(cfg, program_src, spec_src, &mut arts, &mut notices)
}

fn parse_inputs(program_src: &str, spec_src: &str) -> Result<(Program, Formula), PipelineError> {
    let p = parse_program(program_src)
        .map_err(|e| PipelineError::Parse(format!("program: {e}")))?;
    if spec_src.trim().is_empty() {
        return Err(PipelineError::Parse("specification: empty input".into()));
    }
    let spec = parse_spec(spec_src, &p.vocab)
        .map_err(|e| PipelineError::Parse(format!("specification: {e}")))?;
    validate_process_indices(&spec, p.num_procs())
        .map_err(|e| PipelineError::Parse(format!("specification: {e}")))?;
    Ok((p, spec))
}

fn run_extractions(
    t: &Tableau,
    roots: &[Formula],
    phi: &ProgramFormula,
    parallel: bool,
) -> Result<Vec<Extraction>, PipelineError> {
    let raw: Vec<Result<Extraction, _>> = if parallel && roots.len() > 1 {
        std::thread::scope(|sc| {
            let handles: Vec<_> = (0..roots.len())
                .map(|ix| sc.spawn(move || extract(t, ix, &roots[ix], Some(phi))))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("extraction thread panicked"))
                .collect()
        })
    } else {
        (0..roots.len()).map(|ix| extract(t, ix, &roots[ix], Some(phi))).collect()
    };
    raw.into_iter()
        .enumerate()
        .map(|(ix, r)| {
            r.map_err(|e| {
                PipelineError::Internal(format!("model extraction (initial state {ix}): {e}"))
            })
        })
        .collect()
}

fn extraction_json(x: &Extraction, from: &Valuation, base: &Program) -> serde_json::Value {
    json!({
        "from_initial": from.render(&base.vocab),
        "auxiliary": x.aux.map(|a| x.vocab.var_name(a).to_string()),
        "variables": x.vocab.var_ids().map(|v| x.vocab.var_name(v).to_string()).collect::<Vec<_>>(),
        "states": x.states.iter().map(|s| s.render(&x.vocab)).collect::<Vec<_>>(),
        "initial": x.initial,
        "edges": x.edges.iter().map(|&(f, p, t)| json!([f, p, t])).collect::<Vec<_>>(),
    })
}

fn guards_json(s: &Synthesis) -> serde_json::Value {
    let vocab = &s.program.vocab;
    json!({
        "version": 1,
        "auxiliary": s.aux.map(|a| vocab.var_name(a).to_string()),
        "shadows": s
            .shadows
            .iter()
            .map(|&(input, shadow)| {
                json!({
                    "input": vocab.var_name(input).to_string(),
                    "shadow": vocab.var_name(shadow).to_string(),
                })
            })
            .collect::<Vec<_>>(),
        "regions": s
            .guards
            .iter()
            .map(|(&(i, l), g)| {
                let p = &s.program.processes[i];
                json!({
                    "process": p.name,
                    "label": p.label(l),
                    "guard": g.display(vocab).to_string(),
                })
            })
            .collect::<Vec<_>>(),
    })
}

fn pretty(v: &serde_json::Value) -> Vec<u8> {
    let mut out = serde_json::to_string_pretty(v).expect("serializing an artifact");
    out.push('\n');
    out.into_bytes()
}

pub fn describe_observability(v: &Observability, p: &Program) -> String {
    match v {
        Observability::FullyShared => "fully-shared".into(),
        Observability::PerProcessObservable(set) => {
            let names: Vec<&str> =
                set.iter().map(|&i| p.processes[i].name.as_str()).collect();
            format!("per-process ({})", names.join(", "))
        }
        Observability::Limited => "limited".into(),
    }
}

fn block_guard_vars(b: &Block, out: &mut Vec<VarId>) {
    fn stmt(es: &Stmt, out: &mut Vec<VarId>) {
        if let Stmt::If { guard, then_stmts, else_stmts } = es {
            guard.vars(out);
            for s in then_stmts.iter().chain(else_stmts) {
                stmt(s, out);
            }
        }
    }
    for s in &b.stmts {
        stmt(s, out);
    }
    if let crate::lang::Exit::Branch { guard, .. } = &b.exit {
        guard.vars(out);
    }
}

fn instruction_guard_vars(ins: &Instruction, out: &mut Vec<VarId>) {
    match ins {
        Instruction::Assign { .. } | Instruction::Goto { .. } => {}
        Instruction::IfGoto { guard, .. } => guard.vars(out),
        Instruction::Block(b) => block_guard_vars(b, out),
        Instruction::Ccr { guard, body } => {
            guard.vars(out);
            block_guard_vars(body, out);
        }
    }
}

/// Variables a process's guards and region conditions read but do not own:
/// other processes' locations and locals.  Location variables are reclassified
/// as shared (their declarations are implicit, so nothing is reprinted);
/// locals keep their declaration and are only named in the advisory, since
/// their qualified names cannot move to the top level of the output.
fn promote_foreign_reads(s: &mut Synthesis) -> Vec<String> {
    let mut offending: Vec<VarId> = Vec::new();
    for (i, pr) in s.program.processes.iter().enumerate() {
        let mut vars = Vec::new();
        for ins in &pr.instructions {
            instruction_guard_vars(ins, &mut vars);
        }
        for v in vars {
            let foreign = match s.program.vocab.var_info(v).kind {
                VarKind::Location(j) | VarKind::Local(j) => j != i,
                _ => false,
            };
            if foreign {
                offending.push(v);
            }
        }
    }
    offending.sort_unstable();
    offending.dedup();
    let names: Vec<String> =
        offending.iter().map(|&v| s.program.vocab.var_name(v).to_string()).collect();
    for v in offending {
        if matches!(s.program.vocab.var_info(v).kind, VarKind::Location(_)) {
            s.program.vocab.set_var_kind(v, VarKind::Shared);
        }
    }
    names
}

fn run_stages(
    cfg: &PipelineConfig,
    program_src: &str,
    spec_src: &str,
    arts: &mut BTreeMap<String, Vec<u8>>,
    notices: &mut Vec<String>,
) -> Result<PipelineOutcome, PipelineError> {
    let (p, spec) = parse_inputs(program_src, spec_src)?;

    let inputs = p.input_vars();
    let effective = match (cfg.mode, inputs.is_empty()) {
        (InitMode::WithInputs, true) => {
            notices.push("with-inputs: no uninitialized variables, running as all-init".into());
            InitMode::AllInit
        }
        (InitMode::AllInit, false) => {
            let names: Vec<&str> = inputs.iter().map(|&v| p.vocab.var_name(v)).collect();
            notices.push(format!(
                "uninitialized variable(s) {}: every starting value becomes its own initial state",
                names.join(", ")
            ));
            InitMode::WithInputs
        }
        (m, _) => m,
    };

    let phi = generate(&p).map_err(|e| PipelineError::Parse(format!("program: {e}")))?;
    let initials =
        p.initial_valuations().map_err(|e| PipelineError::Parse(format!("program: {e}")))?;
    let roots: Vec<Formula> =
        (0..initials.len()).map(|ix| Formula::and(phi.at(ix), spec.clone())).collect();
    let closure =
        roots.iter().map(|r| closure_size(r, p.num_procs())).max().unwrap_or(0);
    let valuations: u128 =
        p.vocab.var_ids().map(|v| p.vocab.domain_of_var(v).len() as u128).product();

    let opts = BuildOptions { budget: cfg.budget };
    let t = Tableau::build(&p.vocab, p.num_procs(), &roots, Some(&phi), &opts).map_err(|e| {
        match e {
            TableauError::Budget { nodes } => PipelineError::Budget(nodes),
            other => PipelineError::Internal(format!("tableau: {other}")),
        }
    })?;
    if cfg.dump_tableau {
        arts.insert("tableau.dot".into(), t.to_dot().into_bytes());
        arts.insert("tableau.json".into(), pretty(&t.stats()));
    }
    let (tableau_nodes, tableau_alive) = (t.num_nodes(), t.num_alive());

    if !t.is_satisfiable() {
        let dead: Vec<String> = (0..roots.len())
            .filter(|&ix| !t.node(t.roots[ix]).alive)
            .map(|ix| format!("[{}]", initials[ix].render(&p.vocab)))
            .collect();
        return Err(PipelineError::Inconsistent(format!(
            "no model satisfies the specification from initial state(s) {}",
            dead.join(", ")
        )));
    }

    let extractions = run_extractions(&t, &roots, &phi, cfg.parallel)?;
    if cfg.dump_model {
        let models: Vec<serde_json::Value> = extractions
            .iter()
            .zip(&initials)
            .map(|(x, from)| extraction_json(x, from, &p))
            .collect();
        arts.insert("models.json".into(), pretty(&json!(models)));
    }
    let model_sizes: Vec<usize> = extractions.iter().map(|x| x.states.len()).collect();

    let s = synthesize(&p, &extractions)
        .map_err(|e| PipelineError::Internal(format!("synthesis: {e}")))?;

    let verdict = check_observability(&s.program)
        .map_err(|e| PipelineError::Internal(format!("observability: {e}")))?;
    let obs_str = describe_observability(&verdict, &p);
    let (final_s, guard_note) = match cfg.observability {
        ObsPolicy::Auto => match project_guards(&s, &verdict) {
            Ok(proj) => {
                let ok = program_satisfies(&proj.program, &spec)
                    .map(|r| r.holds)
                    .unwrap_or(false);
                if ok {
                    (proj, format!("projected to the {obs_str} view"))
                } else {
                    notices.push(format!(
                        "guards left unprojected: the {obs_str} view loses required behaviour; \
                         control and local variables they read must reside in shared memory"
                    ));
                    (s, format!("left unprojected (the {obs_str} view loses required behaviour)"))
                }
            }
            Err(e) => {
                notices.push(format!(
                    "guards left unprojected ({e}); control and local variables they read \
                     must reside in shared memory"
                ));
                (s, format!("left unprojected ({e})"))
            }
        },
        ObsPolicy::ForceShared => {
            let mut s2 = s;
            let promoted = promote_foreign_reads(&mut s2);
            let note = if promoted.is_empty() {
                "left as synthesized; they read shared state only".to_string()
            } else {
                notices.push(format!(
                    "promoted to shared memory for guard evaluation: {}",
                    promoted.join(", ")
                ));
                format!("left as synthesized; shared-memory requirement: {}", promoted.join(", "))
            };
            (s2, note)
        }
        ObsPolicy::Limited => {
            let proj = project_guards(&s, &Observability::Limited)
                .map_err(|e| PipelineError::Verification(format!("projection: {e}")))?;
            (proj, "projected onto shared variables only".to_string())
        }
    };

    arts.insert(PROGRAM_FILE.into(), final_s.program.to_source().into_bytes());
    arts.insert(GUARDS_FILE.into(), pretty(&guards_json(&final_s)));
    if cfg.dump_guards {
        arts.insert("guards-detail.json".into(), pretty(&final_s.rows_json()));
    }

    let oracle = program_satisfies(&final_s.program, &spec);
    let (holds, oracle_line) = match &oracle {
        Ok(r) if r.holds => (true, "oracle: PASS".to_string()),
        Ok(r) => {
            let w = r.witness.as_ref().expect("a failed check names a witness");
            (false, format!("oracle: FAIL from initial state [{}]", w.1))
        }
        Err(e) => (false, format!("oracle: FAIL ({e})")),
    };

    let mut lines = Vec::new();
    lines.push(format!("program: {}", cfg.program.display()));
    lines.push(format!("specification: {}", cfg.spec.display()));
    lines.push(format!(
        "target: {}",
        match cfg.target {
            Target::Ccr => "conditional critical regions",
            Target::Coarse => "coarse-grained locks",
            Target::Fine => "fine-grained locks",
        }
    ));
    lines.push(format!(
        "mode: {} ({} initial state{})",
        match effective {
            InitMode::AllInit => "all-init",
            InitMode::WithInputs => "with-inputs",
        },
        initials.len(),
        if initials.len() == 1 { "" } else { "s" }
    ));
    lines.push(format!("tableau: {tableau_nodes} nodes, {tableau_alive} alive; satisfiable"));
    let bound = if closure >= 128 { u128::MAX } else { valuations.saturating_mul(1u128 << closure) };
    lines.push(format!("node bound: {tableau_nodes} <= {valuations} * 2^{closure} = {bound}"));
    lines.push(format!(
        "model sizes: {}",
        model_sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", ")
    ));
    lines.push(format!(
        "auxiliary variable: {}",
        final_s
            .aux
            .map(|a| final_s.program.vocab.var_name(a).to_string())
            .unwrap_or_else(|| "none".into())
    ));
    lines.push(format!("observability: {obs_str}"));
    lines.push(format!("guards: {guard_note}"));
    lines.push(oracle_line);

    let mut sim_failure: Option<String> = None;
    if holds && cfg.target != Target::Ccr {
        let grain = if cfg.target == Target::Coarse { Grain::Coarse } else { Grain::Fine };
        let c = compile(&final_s, grain)
            .map_err(|e| PipelineError::Internal(format!("lock compilation: {e}")))?;
        for (i, pr) in final_s.program.processes.iter().enumerate() {
            arts.insert(format!("{}.sync", pr.name), render_process(&c, &final_s, i).into_bytes());
        }
        arts.insert(LOCKPLAN_FILE.into(), lock_plan_json(&c, &final_s).into_bytes());
        let rep = simulate(&c, &final_s)
            .map_err(|e| PipelineError::Internal(format!("simulation: {e}")))?;
        let mismatches = matches_program(&rep, &final_s)
            .map_err(|e| PipelineError::Internal(format!("simulation: {e}")))?;
        lines.push(format!(
            "locks: {} mutex(es), {} condition variable(s)",
            c.lock_order.len(),
            c.condvars.len()
        ));
        lines.push(format!(
            "simulation: {} interleaved states, {} deadlock(s), {} violation(s), {} starved",
            rep.states,
            rep.deadlocks.len(),
            rep.violations.len(),
            rep.starved.len()
        ));
        let mut faults = Vec::new();
        faults.extend(rep.deadlocks.iter().map(|d| format!("deadlock at {d}")));
        faults.extend(rep.violations.iter().map(|v| format!("violation: {v}")));
        faults.extend(mismatches.iter().map(|m| format!("mismatch: {m}")));
        for f in &faults {
            lines.push(format!("  - {f}"));
        }
        for (i, st) in &rep.starved {
            notices.push(format!(
                "{} can starve under adversarial wake-ups (from [{st}])",
                final_s.program.processes[*i].name
            ));
        }
        if !faults.is_empty() {
            sim_failure = Some(faults.join("; "));
        }
    } else if cfg.target != Target::Ccr {
        lines.push("locks: compilation skipped, the region program already fails".into());
    }

    if !notices.is_empty() {
        lines.push("notices:".into());
        for n in notices.iter() {
            lines.push(format!("  - {n}"));
        }
    }
    if !final_s.warnings.is_empty() {
        lines.push("warnings:".into());
        for w in &final_s.warnings {
            lines.push(format!("  - {w}"));
        }
    }
    let report = format!("{}\n", lines.join("\n"));
    arts.insert(REPORT_FILE.into(), report.clone().into_bytes());

    if let Some(detail) = sim_failure {
        return Err(PipelineError::Verification(format!("lock-based code: {detail}")));
    }
    if !holds && cfg.observability != ObsPolicy::Limited {
        let detail = match &oracle {
            Ok(r) => format!(
                "the emitted program fails the specification from initial state [{}]",
                r.witness.as_ref().expect("a failed check names a witness").1
            ),
            Err(e) => format!("the emitted program fails verification: {e}"),
        };
        return Err(PipelineError::Verification(detail));
    }
    if !holds {
        notices.push(
            "the limited projection lost part of the specification; see the report".into(),
        );
    }

    Ok(PipelineOutcome {
        artifacts: arts.clone(),
        notices: notices.clone(),
        report,
        program: p,
        spec,
        synthesis: final_s,
        observability: verdict,
        spec_preserved: holds,
        tableau_nodes,
        tableau_alive,
        closure,
        valuations,
        model_sizes,
    })
}

#[derive(Debug)]
pub struct VerifyReport {
    pub holds: bool,
    pub detail: String,
}

/// Check an already-synchronized program against a specification, reporting
/// deadlocks with a stuck state instead of failing opaquely.
pub fn verify_program(program_src: &str, spec_src: &str) -> Result<VerifyReport, PipelineError> {
    let (p, spec) = parse_inputs(program_src, spec_src)?;
    match program_satisfies(&p, &spec) {
        Ok(r) if r.holds => Ok(VerifyReport { holds: true, detail: "PASS".into() }),
        Ok(r) => {
            let w = r.witness.expect("a failed check names a witness");
            Ok(VerifyReport {
                holds: false,
                detail: format!("FAIL: violated from initial state [{}]", w.1),
            })
        }
        Err(LogicError::Lang(LangError::Deadlock { count, state })) => Ok(VerifyReport {
            holds: false,
            detail: format!(
                "FAIL: deadlock, {count} reachable state(s) without a move, e.g. [{state}]"
            ),
        }),
        Err(LogicError::Lang(e)) => Err(PipelineError::Parse(format!("program: {e}"))),
        Err(e) => Err(PipelineError::Internal(format!("verification: {e}"))),
    }
}

/// Render the formula a program compiles to: step legend, frame and
/// instruction clauses, the progress clause, and the per-initial-state pins.
pub fn dump_phi(program_src: &str) -> Result<String, PipelineError> {
    let p =
        parse_program(program_src).map_err(|e| PipelineError::Parse(format!("program: {e}")))?;
    let phi = generate(&p).map_err(|e| PipelineError::Parse(format!("program: {e}")))?;
    let vocab = &p.vocab;
    let mut out = String::new();
    out.push_str("steps:\n");
    for (id, desc) in phi.describe_steps() {
        out.push_str(&format!("  @step{}: {desc}\n", id.0));
    }
    out.push_str("frame clauses:\n");
    for f in &phi.frame {
        out.push_str(&format!("  {}\n", f.display(vocab)));
    }
    out.push_str("instruction clauses:\n");
    for f in &phi.instructions {
        out.push_str(&format!("  {}\n", f.display(vocab)));
    }
    out.push_str(&format!("progress: {}\n", phi.progress.display(vocab)));
    out.push_str("initial states:\n");
    for (val, f) in &phi.init {
        out.push_str(&format!("  [{}]: {}\n", val.render(vocab), f.display(vocab)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MUTEX: &str = "process P1 { t: goto m; m: goto c; c: goto t; }
                         process P2 { t: goto m; m: goto c; c: goto t; }";
    const MUTEX_SPEC: &str = "AG !(loc1 = c & loc2 = c) & AG EX1 true";

    fn config() -> PipelineConfig {
        PipelineConfig::new("program.cp".into(), "spec.lctl".into(), "out".into())
    }

    #[test]
    fn the_driver_synthesizes_reports_and_stays_deterministic() {
        let mut cfg = config();
        cfg.target = Target::Fine;
        cfg.dump_tableau = true;
        cfg.dump_model = true;
        cfg.dump_guards = true;
        let run = || run_on_sources(&cfg, MUTEX, MUTEX_SPEC).unwrap();
        let out = run();
        assert!(out.spec_preserved);
        for name in [
            PROGRAM_FILE,
            GUARDS_FILE,
            REPORT_FILE,
            LOCKPLAN_FILE,
            "P1.sync",
            "P2.sync",
            "tableau.dot",
            "tableau.json",
            "models.json",
            "guards-detail.json",
        ] {
            assert!(out.artifacts.contains_key(name), "missing {name}");
        }
        assert!(out.report.contains("oracle: PASS"), "{}", out.report);
        assert!(out.tableau_nodes > 0 && out.tableau_alive > 0);
        let again = run();
        assert_eq!(out.artifacts, again.artifacts, "artifacts must be byte-identical");
    }

    #[test]
    fn emitted_programs_re_parse_and_re_verify() {
        let out = run_on_sources(&config(), MUTEX, MUTEX_SPEC).unwrap();
        let src = String::from_utf8(out.artifacts[PROGRAM_FILE].clone()).unwrap();
        let report = verify_program(&src, MUTEX_SPEC).unwrap();
        assert!(report.holds, "{}", report.detail);
    }

    #[test]
    fn parallel_extraction_changes_no_artifact() {
        let src = "shared c : {0,1};
                   shared v : {0,1} with v = 0;
                   process P1 { a: v := c; h: goto h; }
                   process P2 { b: goto b; }";
        let spec = "AF loc1 = h";
        let cfg = config();
        let serial = run_on_sources(&cfg, src, spec).unwrap();
        let mut cfg2 = config();
        cfg2.parallel = true;
        let parallel = run_on_sources(&cfg2, src, spec).unwrap();
        assert_eq!(serial.artifacts, parallel.artifacts);
        assert_eq!(serial.model_sizes.len(), 2, "one model per starting value of c");
    }

    #[test]
    fn uninitialized_variables_announce_the_input_mode() {
        let src = "shared c : {0,1};
                   shared v : {0,1} with v = 0;
                   process P1 { a: v := c; h: goto h; }
                   process P2 { b: goto b; }";
        let out = run_on_sources(&config(), src, "AF loc1 = h").unwrap();
        assert!(out.notices.iter().any(|n| n.contains("uninitialized variable(s) c")));
        let mut cfg = config();
        cfg.mode = InitMode::WithInputs;
        let out = run_on_sources(&cfg, MUTEX, MUTEX_SPEC).unwrap();
        assert!(out.notices.iter().any(|n| n.contains("running as all-init")));
    }

    #[test]
    fn a_contradictory_specification_is_inconsistent() {
        let err = run_on_sources(&config(), MUTEX, "loc1 = c").unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("specification inconsistent"), "{err}");
    }

    #[test]
    fn a_tiny_node_budget_aborts_with_its_own_exit_code() {
        let mut cfg = config();
        cfg.budget = 5;
        let err = run_on_sources(&cfg, MUTEX, MUTEX_SPEC).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(matches!(err, PipelineError::Budget(_)), "{err}");
    }

    #[test]
    fn an_empty_specification_is_a_parse_error() {
        for src in ["", "   \n\t"] {
            let err = run_on_sources(&config(), MUTEX, src).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{err}");
        }
    }

    #[test]
    fn verify_reports_deadlocks_with_the_stuck_state() {
        let stuck = "shared v : {0,1} with v = 0;
                     process P1 { a: when (v = 1) -> { goto a; } }";
        let report = verify_program(stuck, "AG true").unwrap();
        assert!(!report.holds);
        assert!(report.detail.contains("deadlock"), "{}", report.detail);
        assert!(report.detail.contains("v=0"), "{}", report.detail);

        let fine = "shared turn : {0,1} with turn = 0;
                    process P1 { n: when (turn = 0) -> { goto c; } c: turn := 1; x: goto n; }
                    process P2 { n: when (turn = 1) -> { goto c; } c: turn := 0; x: goto n; }";
        let report = verify_program(fine, "AG !(loc1 = c & loc2 = c)").unwrap();
        assert!(report.holds, "{}", report.detail);
    }

    #[test]
    fn run_pipeline_writes_the_artifact_files() {
        let dir = std::env::temp_dir().join(format!("tausynth-pipe-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        let ppath = dir.join("in.cp");
        let spath = dir.join("in.lctl");
        fs::write(&ppath, MUTEX).unwrap();
        fs::write(&spath, MUTEX_SPEC).unwrap();
        let mut cfg = PipelineConfig::new(ppath, spath, dir.join("out"));
        cfg.target = Target::Coarse;
        let out = run_pipeline(&cfg).unwrap();
        for name in out.artifacts.keys() {
            let path = cfg.out_dir.join(name);
            assert_eq!(fs::read(&path).unwrap(), out.artifacts[name], "{name}");
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn the_formula_dump_names_every_piece() {
        let text = dump_phi(MUTEX).unwrap();
        for section in ["steps:", "frame clauses:", "instruction clauses:", "progress:", "initial states:"] {
            assert!(text.contains(section), "missing {section}");
        }
        assert!(text.contains("@step0"), "{text}");
    }
}
