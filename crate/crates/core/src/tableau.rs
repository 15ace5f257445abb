//! AND/OR tableau deciding satisfiability of normal-form specifications over
//! finite valuations.
//!
//! OR nodes hold a set of pending formulas; alpha/beta decomposition grows a
//! temporary tree whose leaves become AND nodes.  An AND node keeps every
//! formula seen on its decomposition path (so untils remain visible for the
//! fulfillment rules) and a *pin*: the partial valuation collected from simple
//! atoms, which are routed out of the label as they appear.  Successors arise
//! one per existential next-state formula, carrying that formula's body plus
//! the bodies of all universal next-state formulas of the same process; step
//! placeholders in a payload are resolved against the oracle into a full pin
//! of the successor valuation.  Nodes are hash-consed, so the structure is a
//! graph and construction terminates.
//!
//! After construction, nodes die by local inconsistency, by losing the
//! successors they need (every AND child of an OR, any OR successor of an
//! AND), or by carrying an until that can no longer be fulfilled; fulfillment
//! stages double as the ranks that model extraction minimizes over.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use indexmap::IndexSet;
use serde_json::json;
use thiserror::Error;

use crate::logic::{classify, to_nnf, Formula, Rule, StepOracle};
use crate::vocab::{Valuation, VarId, Vocab};

/// Interned formula handle, ordered by interning time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Or,
    And,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeKey {
    pub kind: NodeKind,
    pub forms: BTreeSet<FId>,
    /// Values forced by simple atoms, one domain index per variable.
    pub pin: BTreeMap<VarId, u8>,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub key: NodeKey,
    pub alive: bool,
    /// AND children of an OR node.
    pub children: Vec<u32>,
    /// Successors of an AND node: (process, existential formula, target OR).
    pub succs: Vec<(u8, FId, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableauError {
    #[error("node budget exhausted after {nodes} nodes")]
    Budget { nodes: usize },
    #[error("step placeholder reached without a step oracle")]
    MissingOracle,
    #[error("step placeholder under a partially pinned node")]
    PartialPin,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub budget: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { budget: 200_000 }
    }
}

#[derive(Debug)]
pub struct Tableau {
    pub vocab: Vocab,
    pub num_procs: usize,
    pool: IndexSet<Formula>,
    nodes: Vec<Node>,
    pub roots: Vec<u32>,
    /// Distinct untils occurring in alive labels, in interning order; their
    /// order fixes the phase sequence of extracted models.
    pub eventualities: Vec<FId>,
    /// Fulfillment stage of each (alive AND node, eventuality).
    pub ranks: BTreeMap<(u32, FId), u32>,
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

struct Builder<'a> {
    vocab: &'a Vocab,
    k: usize,
    oracle: Option<&'a dyn StepOracle>,
    budget: usize,
    pool: IndexSet<Formula>,
    nodes: Vec<Node>,
    index: HashMap<NodeKey, u32>,
    queue: VecDeque<u32>,
    rules: HashMap<FId, CRule>,
}

#[derive(Debug, Clone)]
enum CRule {
    Alpha(Vec<FId>),
    Beta(Vec<FId>),
    Elementary,
}

/// Outcome of inspecting one formula against a pin.
enum Fate {
    True,
    False,
    Pin(VarId, u8),
    Keep,
}

/// A label under construction: kept formulas, decomposition history, pin.
#[derive(Clone)]
struct Label {
    forms: BTreeSet<FId>,
    hist: BTreeSet<FId>,
    pin: BTreeMap<VarId, u8>,
}

impl<'a> Builder<'a> {
    fn intern(&mut self, f: Formula) -> FId {
        let (i, _) = self.pool.insert_full(f);
        FId(i as u32)
    }

    fn form(&self, id: FId) -> &Formula {
        self.pool.get_index(id.0 as usize).unwrap()
    }

    fn rule(&mut self, id: FId) -> CRule {
        if let Some(r) = self.rules.get(&id) {
            return r.clone();
        }
        let f = self.form(id).clone();
        let r = match classify(&f, self.k) {
            Rule::Elementary => CRule::Elementary,
            Rule::Alpha(parts) => {
                CRule::Alpha(parts.into_iter().map(|p| self.intern(p)).collect())
            }
            Rule::Beta(parts) => CRule::Beta(parts.into_iter().map(|p| self.intern(p)).collect()),
        };
        self.rules.insert(id, r.clone());
        r
    }

    /// A valuation agreeing with the pin (unpinned variables are arbitrary;
    /// callers only evaluate atoms whose variables are covered).
    fn pin_valuation(&self, pin: &BTreeMap<VarId, u8>) -> Valuation {
        let mut v = Valuation::new(self.vocab);
        for (&var, &ix) in pin {
            v.set_index(var, ix);
        }
        v
    }

    /// Route a formula against a pin: simple atoms become pin entries,
    /// determined atoms evaluate away, everything else is kept.
    fn fate(&self, id: FId, pin: &BTreeMap<VarId, u8>) -> Fate {
        let f = self.form(id);
        match f {
            Formula::Atom(a) => {
                if *a == crate::vocab::Atom::True {
                    return Fate::True;
                }
                if *a == crate::vocab::Atom::False {
                    return Fate::False;
                }
                if let Some((v, value)) = a.as_simple() {
                    return match self.vocab.value_index(self.vocab.sort_of(v), value) {
                        Some(ix) => Fate::Pin(v, ix),
                        None => Fate::False, // literal outside the domain
                    };
                }
                let mut vars = Vec::new();
                a.vars(&mut vars);
                if vars.iter().all(|v| pin.contains_key(v)) {
                    let val = self.pin_valuation(pin);
                    return match a.eval(self.vocab, &val) {
                        Ok(true) => Fate::True,
                        // partial arithmetic cannot witness an atom
                        Ok(false) | Err(_) => Fate::False,
                    };
                }
                // an equality pins its variable side once the other side is
                // determined
                if let crate::vocab::Atom::Eq(l, r) = a {
                    for (side, other) in [(l, r), (r, l)] {
                        if let crate::vocab::Term::Var(v) = side {
                            if !pin.contains_key(v) {
                                let mut ovars = Vec::new();
                                other.vars(&mut ovars);
                                if ovars.iter().all(|x| pin.contains_key(x)) {
                                    let val = self.pin_valuation(pin);
                                    let sort = self.vocab.sort_of(*v);
                                    return match crate::vocab::eval_term(
                                        other, sort, self.vocab, &val,
                                    ) {
                                        Ok(value) => {
                                            match self.vocab.value_index(sort, &value) {
                                                Some(ix) => Fate::Pin(*v, ix),
                                                None => Fate::False,
                                            }
                                        }
                                        Err(_) => Fate::False,
                                    };
                                }
                            }
                        }
                    }
                }
                Fate::Keep
            }
            Formula::Not(inner) => {
                if let Formula::Atom(a) = &**inner {
                    let mut vars = Vec::new();
                    a.vars(&mut vars);
                    if vars.iter().all(|v| pin.contains_key(v)) {
                        let val = self.pin_valuation(pin);
                        return match a.eval(self.vocab, &val) {
                            Ok(true) => Fate::False,
                            Ok(false) => Fate::True,
                            // the atom is false here, so its negation holds
                            Err(_) => Fate::True,
                        };
                    }
                }
                Fate::Keep
            }
            _ => Fate::Keep,
        }
    }

    /// Add formulas to a label, routing atoms into the pin and re-examining
    /// kept atoms whenever the pin grows.  `false` means contradiction.
    fn add_all(&mut self, label: &mut Label, init: Vec<FId>) -> bool {
        let mut work = init;
        while let Some(id) = work.pop() {
            if label.hist.contains(&id) || label.forms.contains(&id) {
                continue;
            }
            match self.fate(id, &label.pin) {
                Fate::True => {}
                Fate::False => return false,
                Fate::Keep => {
                    label.forms.insert(id);
                }
                Fate::Pin(v, ix) => {
                    match label.pin.get(&v) {
                        Some(&old) if old == ix => {}
                        Some(_) => return false,
                        None => {
                            label.pin.insert(v, ix);
                            // atoms already kept may now be determined
                            let affected: Vec<FId> = label
                                .forms
                                .iter()
                                .copied()
                                .filter(|&f| self.mentions_var(f, v))
                                .collect();
                            for f in &affected {
                                label.forms.remove(f);
                            }
                            work.extend(affected);
                        }
                    }
                }
            }
        }
        true
    }

    fn mentions_var(&self, id: FId, v: VarId) -> bool {
        match self.form(id) {
            Formula::Atom(a) => {
                let mut vars = Vec::new();
                a.vars(&mut vars);
                vars.contains(&v)
            }
            Formula::Not(inner) => {
                if let Formula::Atom(a) = &**inner {
                    let mut vars = Vec::new();
                    a.vars(&mut vars);
                    vars.contains(&v)
                } else {
                    false
                }
            }
            _ => false,
        }
    }

    /// Kept atoms may still be jointly unsatisfiable; enumerate the
    /// assignments of their unpinned variables.
    fn has_completion(&self, label: &Label) -> bool {
        let mut atoms = Vec::new();
        let mut vars = Vec::new();
        for &id in &label.forms {
            let (a, neg) = match self.form(id) {
                Formula::Atom(a) => (a.clone(), false),
                Formula::Not(inner) => match &**inner {
                    Formula::Atom(a) => (a.clone(), true),
                    _ => continue,
                },
                _ => continue,
            };
            a.vars(&mut vars);
            atoms.push((a, neg));
        }
        if atoms.is_empty() {
            return true;
        }
        vars.retain(|v| !label.pin.contains_key(v));
        vars.sort_unstable();
        vars.dedup();
        for asg in self.vocab.enumerate_assignments(&vars) {
            let mut val = self.pin_valuation(&label.pin);
            for (&var, &ix) in &asg {
                val.set_index(var, ix);
            }
            let ok = atoms.iter().all(|(a, neg)| match a.eval(self.vocab, &val) {
                Ok(b) => b != *neg,
                Err(_) => *neg,
            });
            if ok {
                return true;
            }
        }
        false
    }

    fn get_or_create(&mut self, key: NodeKey) -> Result<(u32, bool), TableauError> {
        if let Some(&id) = self.index.get(&key) {
            return Ok((id, false));
        }
        if self.nodes.len() >= self.budget {
            return Err(TableauError::Budget { nodes: self.nodes.len() });
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { key: key.clone(), alive: true, children: Vec::new(), succs: Vec::new() });
        self.index.insert(key, id);
        self.queue.push_back(id);
        Ok((id, true))
    }

    /// Create (or find) the OR node for a successor payload.  `None` when the
    /// payload is contradictory on its own.
    fn make_or(&mut self, payload: Vec<FId>) -> Result<Option<u32>, TableauError> {
        let mut label = Label { forms: BTreeSet::new(), hist: BTreeSet::new(), pin: BTreeMap::new() };
        if !self.add_all(&mut label, payload) {
            return Ok(None);
        }
        if !self.has_completion(&label) {
            return Ok(None);
        }
        let key = NodeKey { kind: NodeKind::Or, forms: label.forms, pin: label.pin };
        let (id, _) = self.get_or_create(key)?;
        Ok(Some(id))
    }

    /// Decompose an OR node into AND leaves.
    fn expand_or(&mut self, id: u32) -> Result<(), TableauError> {
        let start = Label {
            forms: self.nodes[id as usize].key.forms.clone(),
            hist: BTreeSet::new(),
            pin: self.nodes[id as usize].key.pin.clone(),
        };
        let mut stack = vec![start];
        let mut leaves = Vec::new();
        while let Some(mut label) = stack.pop() {
            // pick the oldest undecomposed formula
            let pick = label
                .forms
                .iter()
                .copied()
                .find(|&f| !matches!(self.rule(f), CRule::Elementary));
            match pick {
                Some(f) => {
                    label.forms.remove(&f);
                    label.hist.insert(f);
                    match self.rule(f) {
                        CRule::Alpha(parts) => {
                            if self.add_all(&mut label, parts) {
                                stack.push(label);
                            }
                        }
                        CRule::Beta(parts) => {
                            // a branch that adds nothing new (its part is
                            // already true or present) subsumes the others
                            let mut branches = Vec::new();
                            let mut subsumed = None;
                            for p in parts {
                                let mut branch = label.clone();
                                if self.add_all(&mut branch, vec![p]) {
                                    if branch.forms == label.forms && branch.pin == label.pin {
                                        subsumed = Some(branch);
                                        break;
                                    }
                                    branches.push(branch);
                                }
                            }
                            match subsumed {
                                Some(b) => stack.push(b),
                                None => stack.extend(branches),
                            }
                        }
                        CRule::Elementary => unreachable!(),
                    }
                }
                None => {
                    // leaf; force at least one successor so models are total
                    let has_ex =
                        label.forms.iter().any(|&f| matches!(self.form(f), Formula::ExNext(_, _)));
                    if !has_ex {
                        let inj = Formula::disj(
                            (0..self.k).map(|i| Formula::ex(i, Formula::tt())).collect(),
                        );
                        let inj = self.intern(inj);
                        if !label.hist.contains(&inj) {
                            if self.add_all(&mut label, vec![inj]) {
                                stack.push(label);
                            }
                            continue;
                        }
                    }
                    if self.has_completion(&label) {
                        leaves.push(label);
                    }
                }
            }
        }
        let mut children = Vec::new();
        for leaf in leaves {
            let mut forms = leaf.hist;
            forms.extend(leaf.forms);
            let key = NodeKey { kind: NodeKind::And, forms, pin: leaf.pin };
            let (cid, _) = self.get_or_create(key)?;
            if !children.contains(&cid) {
                children.push(cid);
            }
        }
        if children.is_empty() {
            self.nodes[id as usize].alive = false;
        }
        self.nodes[id as usize].children = children;
        Ok(())
    }

    fn subst_step(&self, f: &Formula, pre: &Valuation) -> Result<Formula, TableauError> {
        Ok(match f {
            Formula::Step(id) => {
                let oracle = self.oracle.ok_or(TableauError::MissingOracle)?;
                match oracle.post(*id, pre) {
                    Some(post) => Formula::conj(
                        self.vocab
                            .var_ids()
                            .map(|v| {
                                Formula::atom(crate::vocab::Atom::simple(
                                    v,
                                    post.get(self.vocab, v).clone(),
                                ))
                            })
                            .collect(),
                    ),
                    None => Formula::ff(),
                }
            }
            Formula::Atom(_) => f.clone(),
            Formula::Not(x) => Formula::not(self.subst_step(x, pre)?),
            Formula::And(a, b) => {
                Formula::and(self.subst_step(a, pre)?, self.subst_step(b, pre)?)
            }
            Formula::Or(a, b) => Formula::or(self.subst_step(a, pre)?, self.subst_step(b, pre)?),
            // steps never sit under nested temporal structure in a payload
            other => other.clone(),
        })
    }

    fn contains_step(f: &Formula) -> bool {
        match f {
            Formula::Step(_) => true,
            Formula::Not(x) => Self::contains_step(x),
            Formula::And(a, b) | Formula::Or(a, b) => {
                Self::contains_step(a) || Self::contains_step(b)
            }
            _ => false,
        }
    }

    /// Build the successors of an AND node: one OR node per existential
    /// next-state formula, its payload extended by all same-process universal
    /// bodies.  A contradictory payload kills the node.
    fn expand_and(&mut self, id: u32) -> Result<(), TableauError> {
        let key = self.nodes[id as usize].key.clone();
        let mut pre: Option<Valuation> = None;
        let mut succs = Vec::new();
        for &f in &key.forms {
            let (i, body) = match self.form(f) {
                Formula::ExNext(i, body) => (*i, (**body).clone()),
                _ => continue,
            };
            let mut payload_forms = vec![body];
            for &g in &key.forms {
                if let Formula::AllNext(j, b) = self.form(g) {
                    if *j == i {
                        payload_forms.push((**b).clone());
                    }
                }
            }
            let mut payload = Vec::new();
            for pf in payload_forms {
                let pf = if Self::contains_step(&pf) {
                    if pre.is_none() {
                        if key.pin.len() < self.vocab.num_vars() {
                            return Err(TableauError::PartialPin);
                        }
                        let mut v = Valuation::new(self.vocab);
                        for (&var, &ix) in &key.pin {
                            v.set_index(var, ix);
                        }
                        pre = Some(v);
                    }
                    self.subst_step(&pf, pre.as_ref().unwrap())?
                } else {
                    pf
                };
                payload.push(self.intern(pf));
            }
            match self.make_or(payload)? {
                Some(target) => succs.push((i as u8, f, target)),
                None => {
                    self.nodes[id as usize].alive = false;
                    self.nodes[id as usize].succs.clear();
                    return Ok(());
                }
            }
        }
        self.nodes[id as usize].succs = succs;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Deletion
// ---------------------------------------------------------------------------

impl Tableau {
    pub fn node(&self, id: u32) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_alive(&self) -> usize {
        self.nodes.iter().filter(|n| n.alive).count()
    }

    pub fn formula(&self, id: FId) -> &Formula {
        self.pool.get_index(id.0 as usize).unwrap()
    }

    pub fn find_formula(&self, f: &Formula) -> Option<FId> {
        self.pool.get_index_of(f).map(|i| FId(i as u32))
    }

    /// Satisfiable iff every root survived deletion.
    pub fn is_satisfiable(&self) -> bool {
        self.roots.iter().all(|&r| self.nodes[r as usize].alive)
    }

    fn prune_structure(&mut self) -> bool {
        let mut changed = false;
        loop {
            let mut round = false;
            for id in 0..self.nodes.len() {
                if !self.nodes[id].alive {
                    continue;
                }
                let dead = match self.nodes[id].key.kind {
                    NodeKind::Or => {
                        self.nodes[id].children.iter().all(|&c| !self.nodes[c as usize].alive)
                    }
                    NodeKind::And => {
                        self.nodes[id].succs.is_empty()
                            || self.nodes[id]
                                .succs
                                .iter()
                                .any(|&(_, _, t)| !self.nodes[t as usize].alive)
                    }
                };
                if dead {
                    self.nodes[id].alive = false;
                    round = true;
                }
            }
            if !round {
                break;
            }
            changed = true;
        }
        changed
    }

    fn collect_eventualities(&self) -> Vec<FId> {
        let mut set = BTreeSet::new();
        for n in &self.nodes {
            if !n.alive || n.key.kind != NodeKind::And {
                continue;
            }
            for &f in &n.key.forms {
                if matches!(self.formula(f), Formula::AllUntil(_, _) | Formula::ExUntil(_, _)) {
                    set.insert(f);
                }
            }
        }
        set.into_iter().collect()
    }

    /// Does the pin alone force this (negated) atom?  Routing moves exactly
    /// such formulas out of labels, so fulfillment checks must look here.
    fn entailed(&self, f: &Formula, pin: &BTreeMap<VarId, u8>) -> bool {
        let (a, neg) = match f {
            Formula::Atom(a) => (a, false),
            Formula::Not(inner) => match &**inner {
                Formula::Atom(a) => (a, true),
                _ => return false,
            },
            _ => return false,
        };
        let mut vars = Vec::new();
        a.vars(&mut vars);
        if !vars.iter().all(|v| pin.contains_key(v)) {
            return false;
        }
        let mut val = Valuation::new(&self.vocab);
        for (&var, &ix) in pin {
            val.set_index(var, ix);
        }
        match a.eval(&self.vocab, &val) {
            Ok(b) => b != neg,
            Err(_) => neg,
        }
    }

    /// Fulfillment stages of an until over the current alive graph: stage 0
    /// where the target formula holds locally (in the label or forced by the
    /// pin), then one expansion step at a time.  Universal untils need every
    /// successor covered, existential ones some successor.
    fn fulfillment(&self, e: FId) -> BTreeMap<u32, u32> {
        let (universal, q) = match self.formula(e) {
            Formula::AllUntil(_, q) => (true, (**q).clone()),
            Formula::ExUntil(_, q) => (false, (**q).clone()),
            _ => unreachable!("eventualities are untils"),
        };
        let qid = self.find_formula(&q);
        let mut rank: BTreeMap<u32, u32> = BTreeMap::new();
        for (id, n) in self.nodes.iter().enumerate() {
            if n.alive
                && n.key.kind == NodeKind::And
                && n.key.forms.contains(&e)
                && (qid.is_some_and(|q| n.key.forms.contains(&q))
                    || self.entailed(&q, &n.key.pin))
            {
                rank.insert(id as u32, 0);
            }
        }
        let mut stage = 0u32;
        loop {
            stage += 1;
            let mut added = Vec::new();
            for (id, n) in self.nodes.iter().enumerate() {
                let id = id as u32;
                if !n.alive
                    || n.key.kind != NodeKind::And
                    || !n.key.forms.contains(&e)
                    || rank.contains_key(&id)
                {
                    continue;
                }
                let covered = |&(_, _, t): &(u8, FId, u32)| {
                    let or = &self.nodes[t as usize];
                    or.alive
                        && or
                            .children
                            .iter()
                            .any(|&c| self.nodes[c as usize].alive && rank.contains_key(&c))
                };
                let ok = if universal {
                    !n.succs.is_empty() && n.succs.iter().all(covered)
                } else {
                    n.succs.iter().any(covered)
                };
                if ok {
                    added.push(id);
                }
            }
            if added.is_empty() {
                break;
            }
            for id in added {
                rank.insert(id, stage);
            }
        }
        rank
    }

    fn run_deletion(&mut self) {
        loop {
            let mut changed = self.prune_structure();
            for e in self.collect_eventualities() {
                let fulfilled = self.fulfillment(e);
                for id in 0..self.nodes.len() {
                    let n = &self.nodes[id];
                    if n.alive
                        && n.key.kind == NodeKind::And
                        && n.key.forms.contains(&e)
                        && !fulfilled.contains_key(&(id as u32))
                    {
                        self.nodes[id].alive = false;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        self.eventualities = self.collect_eventualities();
        self.ranks.clear();
        for &e in &self.eventualities.clone() {
            for (id, r) in self.fulfillment(e) {
                self.ranks.insert((id, e), r);
            }
        }
    }

    /// Build the tableau for the conjunction-of-roots problem: every root
    /// formula gets its own OR node and all must be satisfiable at once for
    /// the verdict to be positive (used with one root per initial valuation).
    pub fn build(
        vocab: &Vocab,
        num_procs: usize,
        roots: &[Formula],
        oracle: Option<&dyn StepOracle>,
        options: &BuildOptions,
    ) -> Result<Tableau, TableauError> {
        let mut b = Builder {
            vocab,
            k: num_procs.max(1),
            oracle,
            budget: options.budget,
            pool: IndexSet::new(),
            nodes: Vec::new(),
            index: HashMap::new(),
            queue: VecDeque::new(),
            rules: HashMap::new(),
        };
        let mut root_ids = Vec::new();
        for root in roots {
            let nf = to_nnf(root, b.k);
            let fid = b.intern(nf);
            match b.make_or(vec![fid])? {
                Some(id) => root_ids.push(id),
                None => {
                    // contradictory root: keep a permanently dead stand-in
                    let key = NodeKey {
                        kind: NodeKind::Or,
                        forms: BTreeSet::new(),
                        pin: BTreeMap::new(),
                    };
                    let dead = b.nodes.len() as u32;
                    b.nodes.push(Node {
                        key,
                        alive: false,
                        children: Vec::new(),
                        succs: Vec::new(),
                    });
                    root_ids.push(dead);
                }
            }
        }
        while let Some(id) = b.queue.pop_front() {
            if !b.nodes[id as usize].alive {
                continue;
            }
            match b.nodes[id as usize].key.kind {
                NodeKind::Or => b.expand_or(id)?,
                NodeKind::And => b.expand_and(id)?,
            }
        }
        let mut t = Tableau {
            vocab: vocab.clone(),
            num_procs: b.k,
            pool: b.pool,
            nodes: b.nodes,
            roots: root_ids,
            eventualities: Vec::new(),
            ranks: BTreeMap::new(),
        };
        t.run_deletion();
        Ok(t)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph tableau {\n  node [fontname=\"monospace\"];\n");
        for (id, n) in self.nodes.iter().enumerate() {
            let shape = match n.key.kind {
                NodeKind::Or => "ellipse",
                NodeKind::And => "box",
            };
            let mut lines = Vec::new();
            for (&v, &ix) in &n.key.pin {
                lines.push(format!(
                    "{}={}",
                    self.vocab.var_name(v),
                    self.vocab.domain_of_var(v)[ix as usize]
                ));
            }
            for &f in &n.key.forms {
                lines.push(self.formula(f).display(&self.vocab).to_string());
            }
            let color = if n.alive { "" } else { ", color=gray, fontcolor=gray" };
            let label = lines.join("\\n").replace('"', "\\\"");
            out.push_str(&format!(
                "  n{id} [shape={shape}, label=\"{kind}{id}\\n{label}\"{color}];\n",
                kind = match n.key.kind {
                    NodeKind::Or => "or",
                    NodeKind::And => "and",
                }
            ));
        }
        for (id, n) in self.nodes.iter().enumerate() {
            for &c in &n.children {
                out.push_str(&format!("  n{id} -> n{c};\n"));
            }
            for &(p, _, t) in &n.succs {
                out.push_str(&format!("  n{id} -> n{t} [label=\"{}\"];\n", p as usize + 1));
            }
        }
        out.push_str("  root [shape=point];\n");
        for &r in &self.roots {
            out.push_str(&format!("  root -> n{r};\n"));
        }
        out.push_str("}\n");
        out
    }

    pub fn stats(&self) -> serde_json::Value {
        let or_nodes = self
            .nodes
            .iter()
            .filter(|n| n.key.kind == NodeKind::Or)
            .count();
        json!({
            "nodes": self.num_nodes(),
            "alive": self.num_alive(),
            "or_nodes": or_nodes,
            "and_nodes": self.num_nodes() - or_nodes,
            "distinct_formulas": self.pool.len(),
            "eventualities": self.eventualities.len(),
            "satisfiable": self.is_satisfiable(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_spec;
    use crate::vocab::{Value, VarKind};

    fn vocab1() -> Vocab {
        let mut v = Vocab::new();
        let d = v.add_sort("d", vec![Value::Int(0), Value::Int(1)]).unwrap();
        v.add_var("v", d, VarKind::Shared).unwrap();
        v
    }

    fn sat(vocab: &Vocab, k: usize, src: &str) -> bool {
        let f = parse_spec(src, vocab).unwrap();
        Tableau::build(vocab, k, &[f], None, &BuildOptions::default())
            .unwrap()
            .is_satisfiable()
    }

    #[test]
    fn propositional_basics() {
        let v = vocab1();
        assert!(sat(&v, 1, "v = 0"));
        assert!(!sat(&v, 1, "v = 0 & v = 1"));
        assert!(sat(&v, 1, "v = 0 | v = 1"));
        assert!(!sat(&v, 1, "false"));
        assert!(sat(&v, 1, "!(v = 0)"));
        assert!(!sat(&v, 1, "!(v = 0) & !(v = 1)"));
    }

    #[test]
    fn next_state_conflicts() {
        let v = vocab1();
        assert!(sat(&v, 1, "EX1 v = 1 & AX1 v = 1"));
        assert!(!sat(&v, 1, "EX1 v = 1 & AX1 v = 0"));
        assert!(sat(&v, 2, "EX1 v = 1 & AX2 v = 0"));
        // universal-only constraints are satisfiable via the other process
        assert!(sat(&v, 2, "AX1 false"));
        // ...but with one process totality forces a successor
        assert!(!sat(&v, 1, "AX1 false"));
    }

    #[test]
    fn eventually_of_unsatisfiable_is_unsatisfiable() {
        let v = vocab1();
        assert!(!sat(&v, 1, "AF false"));
        assert!(!sat(&v, 1, "AF (v = 0 & v = 1)"));
        assert!(sat(&v, 1, "AF v = 1"));
        assert!(!sat(&v, 2, "EF (v = 0 & v = 1)"));
    }

    #[test]
    fn globally_pins_every_state() {
        let v = vocab1();
        assert!(sat(&v, 1, "AG v = 0"));
        assert!(!sat(&v, 1, "AG v = 0 & AF v = 1"));
        assert!(!sat(&v, 1, "AG v = 0 & EF v = 1"));
        assert!(sat(&v, 1, "AG v = 0 & AF v = 0"));
        assert!(!sat(&v, 2, "EG v = 0 & AF v = 1"));
        assert!(sat(&v, 2, "EG v = 0 & EF v = 1"));
    }

    #[test]
    fn until_with_unreachable_target_dies() {
        let v = vocab1();
        assert!(sat(&v, 1, "A[v = 0 U v = 1]"));
        assert!(!sat(&v, 1, "A[v = 0 U v = 1] & AG v = 0"));
        assert!(sat(&v, 1, "E[v = 0 U v = 1] & EG v = 0"));
    }

    #[test]
    fn budget_is_honored() {
        let v = vocab1();
        let f = parse_spec("AG (v = 0 -> EX1 v = 1) & AG (v = 1 -> EX1 v = 0) & v = 0", &v).unwrap();
        let err = Tableau::build(&v, 1, &[f], None, &BuildOptions { budget: 2 }).unwrap_err();
        assert!(matches!(err, TableauError::Budget { .. }));
    }

    #[test]
    fn multiple_roots_must_all_survive() {
        let v = vocab1();
        let f1 = parse_spec("v = 0 & AG EX1 true", &v).unwrap();
        let f2 = parse_spec("v = 1 & AF false", &v).unwrap();
        let t =
            Tableau::build(&v, 1, &[f1.clone(), f2], None, &BuildOptions::default()).unwrap();
        assert!(!t.is_satisfiable());
        let t = Tableau::build(&v, 1, &[f1.clone(), f1], None, &BuildOptions::default()).unwrap();
        assert!(t.is_satisfiable());
    }

    #[test]
    fn construction_is_deterministic() {
        let v = vocab1();
        let f = parse_spec("AG (v = 0 -> EX1 v = 1) & A[v = 0 U v = 1] & v = 0", &v).unwrap();
        let a = Tableau::build(&v, 1, &[f.clone()], None, &BuildOptions::default()).unwrap();
        let b = Tableau::build(&v, 1, &[f], None, &BuildOptions::default()).unwrap();
        assert_eq!(a.to_dot(), b.to_dot());
        assert_eq!(a.ranks, b.ranks);
    }

    fn program_sat(src: &str, spec: &str) -> bool {
        let p = crate::lang::parse_program(src).unwrap();
        let phi = crate::phigen::generate(&p).unwrap();
        let f = parse_spec(spec, &p.vocab).unwrap();
        let roots: Vec<Formula> = (0..phi.init.len())
            .map(|ix| Formula::and(phi.at(ix), f.clone()))
            .collect();
        Tableau::build(&p.vocab, p.num_procs(), &roots, Some(&phi), &BuildOptions::default())
            .unwrap()
            .is_satisfiable()
    }

    #[test]
    fn program_semantics_joins_the_specification() {
        let src = "shared v : {0..1} with v = 0;
                   process P1 { a: v := 1; b: goto b; }
                   process P2 { c: goto c; }";
        // blocking P1 forever keeps v at 0
        assert!(program_sat(src, "AG v = 0"));
        // ...but not when the specification forces P1 to its last label
        assert!(!program_sat(src, "AG v = 0 & AF loc1 = b"));
        assert!(program_sat(src, "AF loc1 = b"));
        assert!(program_sat(src, "AF v = 1 & AG (loc1 = b -> v = 1)"));
        // v can never rise before P1's assignment runs
        assert!(!program_sat(src, "v = 1"));
        assert!(!program_sat(src, "EF (v = 1 & loc1 = a)"));
    }

    #[test]
    fn scheduling_freedom_is_the_synthesizer_slack() {
        // two loops through a critical label c; no synchronization in the text
        let src = "process P1 { t: goto m; m: goto c; c: goto t; }
                   process P2 { t: goto m; m: goto c; c: goto t; }";
        // some scheduling avoids simultaneous presence at c
        assert!(program_sat(src, "AG !(loc1 = c & loc2 = c)"));
        // keeping only process 1 schedulable forever is one such scheduling
        assert!(program_sat(src, "AG !(loc1 = c & loc2 = c) & AG EX1 true"));
        // but both processes always schedulable forces a collision: from
        // (m, m) every move reaches a state whose forced next step collides
        assert!(!program_sat(
            src,
            "AG !(loc1 = c & loc2 = c) & AG EX1 true & AG EX2 true"
        ));
        // with no constraint both-schedulable is fine
        assert!(program_sat(src, "AG EX1 true & AG EX2 true"));
    }

    #[test]
    fn ranks_follow_distance_to_fulfillment() {
        // v counts 0 -> 1 via EX chain; AF (v = 1) fulfilled later on the
        // 0-node than on the 1-node
        let v = vocab1();
        let f = parse_spec("v = 0 & AG (v = 0 -> AX1 v = 1) & AF v = 1", &v).unwrap();
        let t = Tableau::build(&v, 1, &[f], None, &BuildOptions::default()).unwrap();
        assert!(t.is_satisfiable());
        assert_eq!(t.eventualities.len(), 1);
        let e = t.eventualities[0];
        let ranks: Vec<u32> = t.ranks.iter().filter(|((_, ev), _)| *ev == e).map(|(_, &r)| r).collect();
        assert!(ranks.contains(&0), "{ranks:?}");
        assert!(ranks.iter().any(|&r| r > 0), "{ranks:?}");
    }
}
