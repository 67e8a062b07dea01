//! Metastability graph of ESCs and its collapse onto a single time scale.
//!
//! Nodes are ESCs `v` with `L(v) > α`; an edge `v → w` carries
//! `p(v,w) = Σ R(v,u)/R(v)` over the mutants `u ∈ V_mut(v)` whose fixation
//! leads (through the `ln K` dynamics) to `w`. On the `L` time scale only the
//! nodes with `L(v) ≥ L` are visible; shorter-lived nodes are summed out by
//! solving the absorbing chain they form.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::AnalysisError;
use crate::esc::{certify_esc, EscDescriptor, EscRejection, StabilityDegree};
use crate::lnk::{esc_after_fixation, Termination};
use crate::model::{TraitGraphModel, TraitSet};
use crate::rates::{exit_law, ExitLaw};

/// Largest vertex count for exhaustive subset enumeration.
pub const EXHAUSTIVE_LIMIT: usize = 15;

/// A mutant whose fixation does not lead to a unique new ESC.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierIssue {
    pub mutant: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetaNode {
    pub resident: TraitSet,
    pub descriptor: EscDescriptor,
    pub stability_degree: StabilityDegree,
    /// `R(v)`; `None` for absorbing nodes.
    pub exit_rate: Option<f64>,
    pub exit_law: Option<ExitLaw>,
    /// Set when construction halted at this node; it then has no edges.
    pub frontier_invalid: Option<FrontierIssue>,
}

impl MetaNode {
    pub fn is_absorbing(&self) -> bool {
        self.stability_degree == StabilityDegree::Infinite
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetaEdge {
    pub from: usize,
    pub to: usize,
    pub probability: f64,
    /// Contributing mutants `u` with `R(v,u)`.
    pub mutants: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetastabilityGraph {
    /// Sorted by resident set.
    pub nodes: Vec<MetaNode>,
    /// Sorted by `(from, to)`.
    pub edges: Vec<MetaEdge>,
}

struct Outgoing {
    exit: Option<ExitLaw>,
    targets: Vec<(usize, f64, f64, TraitSet)>,
    invalid: Option<FrontierIssue>,
}

fn outgoing(model: &TraitGraphModel, esc: &EscDescriptor) -> Result<Outgoing, AnalysisError> {
    if esc.is_absorbing() {
        return Ok(Outgoing { exit: None, targets: Vec::new(), invalid: None });
    }
    let law = exit_law(model, esc)?;
    let mut targets = Vec::new();
    let mut invalid = None;
    for t in &law.per_trait {
        let after = esc_after_fixation(model, esc, t.target)?;
        match after.target() {
            Some(target) => targets.push((t.target, t.rate, law.fixation_split[&t.target], target.clone())),
            None => {
                invalid = Some(FrontierIssue { mutant: t.target, termination: after.trajectory.termination });
                targets.clear();
                break;
            }
        }
    }
    Ok(Outgoing { exit: Some(law), targets, invalid })
}

fn certify_node(model: &TraitGraphModel, set: &TraitSet) -> Result<EscDescriptor, AnalysisError> {
    certify_esc(model, set).map_err(|r| r.to_error(model, set))
}

/// Build the metastability graph, either as the closure of `seed` under
/// `w ↦ v_ESC(v,w)` or, without a seed, from every ESC among all trait subsets.
pub fn build_meta_graph(
    model: &TraitGraphModel,
    seed: Option<&TraitSet>,
) -> Result<MetastabilityGraph, AnalysisError> {
    let mut known: BTreeMap<TraitSet, EscDescriptor> = BTreeMap::new();
    match seed {
        Some(s) => {
            known.insert(s.clone(), certify_node(model, s)?);
        }
        None => {
            let n = model.n();
            if n > EXHAUSTIVE_LIMIT {
                return Err(AnalysisError::Precondition(format!(
                    "exhaustive enumeration needs at most {EXHAUSTIVE_LIMIT} vertices, got {n}; give a seed"
                )));
            }
            let found: Vec<Option<EscDescriptor>> = (1u64..1 << n)
                .into_par_iter()
                .map(|mask| {
                    let set = TraitSet::from_mask(mask);
                    match certify_esc(model, &set) {
                        Ok(esc) => Ok(Some(esc)),
                        Err(EscRejection::Assumption(e)) => Err(e),
                        Err(_) => Ok(None),
                    }
                })
                .collect::<Result<_, _>>()?;
            for esc in found.into_iter().flatten() {
                known.insert(esc.resident.clone(), esc);
            }
        }
    }

    let mut done: BTreeMap<TraitSet, Outgoing> = BTreeMap::new();
    let mut frontier: Vec<TraitSet> = known.keys().cloned().collect();
    while !frontier.is_empty() {
        let results: Vec<(TraitSet, Outgoing)> = frontier
            .par_iter()
            .map(|s| outgoing(model, &known[s]).map(|o| (s.clone(), o)))
            .collect::<Result<_, _>>()?;
        let mut next = BTreeSet::new();
        for (s, out) in results {
            for (_, _, _, target) in &out.targets {
                if !known.contains_key(target) && !next.contains(target) {
                    next.insert(target.clone());
                }
            }
            done.insert(s, out);
        }
        for s in &next {
            known.insert(s.clone(), certify_node(model, s)?);
        }
        frontier = next.into_iter().collect();
    }

    let index: BTreeMap<&TraitSet, usize> = known.keys().enumerate().map(|(i, s)| (s, i)).collect();
    let mut edges: BTreeMap<(usize, usize), MetaEdge> = BTreeMap::new();
    for (s, out) in &done {
        let from = index[s];
        for (mutant, rate, split, target) in &out.targets {
            let to = index[target];
            let e = edges
                .entry((from, to))
                .or_insert_with(|| MetaEdge { from, to, probability: 0.0, mutants: Vec::new() });
            e.probability += split;
            e.mutants.push((*mutant, *rate));
        }
    }
    let nodes = known
        .into_iter()
        .map(|(s, esc)| {
            let out = done.remove(&s).expect("every node expanded");
            MetaNode {
                resident: s,
                stability_degree: esc.stability_degree,
                exit_rate: out.exit.as_ref().map(|l| l.exit_rate),
                exit_law: out.exit,
                frontier_invalid: out.invalid,
                descriptor: esc,
            }
        })
        .collect();
    Ok(MetastabilityGraph { nodes, edges: edges.into_values().collect() })
}

impl MetastabilityGraph {
    pub fn node_index(&self, set: &TraitSet) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.resident.cmp(set)).ok()
    }

    pub fn out_edges(&self, i: usize) -> impl Iterator<Item = &MetaEdge> {
        self.edges.iter().filter(move |e| e.from == i)
    }

    pub fn probability(&self, from: &TraitSet, to: &TraitSet) -> f64 {
        match (self.node_index(from), self.node_index(to)) {
            (Some(i), Some(j)) => self.out_edges(i).find(|e| e.to == j).map_or(0.0, |e| e.probability),
            _ => 0.0,
        }
    }

    /// `S^L`: nodes with stability degree exactly `level`.
    pub fn level_set(&self, level: u32) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].stability_degree == StabilityDegree::Finite(level))
            .collect()
    }

    /// Finite stability degrees present, ascending.
    pub fn levels(&self) -> Vec<u32> {
        self.nodes
            .iter()
            .filter_map(|n| n.stability_degree.finite())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn has_frontier_invalid(&self) -> bool {
        self.nodes.iter().any(|n| n.frontier_invalid.is_some())
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            succ[e.from].push(e.to);
        }
        succ
    }

    pub fn to_json(&self, model: &TraitGraphModel) -> Value {
        let set = |s: &TraitSet| s.iter().map(|v| model.id(v).to_string()).collect::<Vec<_>>();
        json!({
            "alpha": model.alpha(),
            "nodes": self.nodes.iter().map(|n| json!({
                "resident": set(&n.resident),
                "stability_degree": n.stability_degree,
                "exit_rate": n.exit_rate,
                "frontier_invalid": n.frontier_invalid.as_ref().map(|f| json!({
                    "mutant": model.id(f.mutant),
                    "termination": f.termination.label(),
                })),
                "esc": n.descriptor.to_json(model),
            })).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|e| json!({
                "from": set(&self.nodes[e.from].resident),
                "to": set(&self.nodes[e.to].resident),
                "p": e.probability,
                "mutants": e.mutants.iter().map(|(u, r)| json!({"trait": model.id(*u), "rate": r})).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_dot(&self, model: &TraitGraphModel) -> String {
        let mut out = String::from("digraph g_esc {\n  rankdir=LR;\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let rate = n.exit_rate.map_or("-".to_string(), |r| format!("{r:.6e}"));
            let style = if n.frontier_invalid.is_some() { ", style=dashed" } else { "" };
            let _ = writeln!(
                out,
                "  n{i} [label=\"{}\\nL={}\\nR={rate}\"{style}];",
                model.format_set(&n.resident),
                n.stability_degree
            );
        }
        for e in &self.edges {
            let _ = writeln!(out, "  n{} -> n{} [label=\"p={:.6}\"];", e.from, e.to, e.probability);
        }
        out.push_str("}\n");
        out
    }
}

/// Outcome of the no-trapping check at level `L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoCycleVerdict {
    pub level: u32,
    pub holds: bool,
    /// Closed class of short-lived nodes reachable from `S^L` (node indices).
    pub witness: Option<Vec<usize>>,
    /// Nodes with `L(v) < L` reachable from `S^L` before any node with `L(v) ≥ L`.
    pub transient: Vec<usize>,
}

impl NoCycleVerdict {
    pub fn describe(&self, meta: &MetastabilityGraph, model: &TraitGraphModel) -> String {
        match &self.witness {
            None => format!("holds for L = {}", self.level),
            Some(w) => format!(
                "fails for L = {}: closed class {}",
                self.level,
                w.iter().map(|&i| model.format_set(&meta.nodes[i].resident)).collect::<Vec<_>>().join(" ")
            ),
        }
    }
}

fn is_short_lived(node: &MetaNode, level: u32) -> bool {
    matches!(node.stability_degree, StabilityDegree::Finite(l) if l < level)
}

/// From every `S^L` node the chain must reach `{L(v) ≥ L}` almost surely.
/// That fails exactly when a closed class of `{L(v) < L}` nodes is reachable.
pub fn check_no_cycles(
    meta: &MetastabilityGraph,
    model: &TraitGraphModel,
    level: u32,
) -> Result<NoCycleVerdict, AnalysisError> {
    if f64::from(level) <= model.alpha() {
        return Err(AnalysisError::Precondition(format!(
            "level {level} must exceed alpha = {}",
            model.alpha()
        )));
    }
    let succ = meta.successors();
    let short = |i: usize| is_short_lived(&meta.nodes[i], level);

    let mut seen = vec![false; meta.nodes.len()];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for s in meta.level_set(level) {
        for &j in &succ[s] {
            if short(j) && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        for &j in &succ[i] {
            if short(j) && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    let transient: Vec<usize> = (0..meta.nodes.len()).filter(|&i| seen[i]).collect();

    // forward closure inside the transient set; `escapes` if a long-lived node is hit
    let reach = |start: usize| -> (BTreeSet<usize>, bool) {
        let mut r = BTreeSet::from([start]);
        let mut stack = vec![start];
        let mut escapes = false;
        while let Some(i) = stack.pop() {
            for &j in &succ[i] {
                if !short(j) {
                    escapes = true;
                } else if r.insert(j) {
                    stack.push(j);
                }
            }
        }
        (r, escapes)
    };
    let closures: BTreeMap<usize, (BTreeSet<usize>, bool)> =
        transient.iter().map(|&i| (i, reach(i))).collect();
    // a node whose closure escapes nowhere and is strongly connected is a closed class
    let witness = transient.iter().find_map(|&i| {
        let (r, escapes) = &closures[&i];
        let closed = !escapes && r.iter().all(|j| closures[j].0.contains(&i));
        closed.then(|| r.iter().copied().collect::<Vec<_>>())
    });
    Ok(NoCycleVerdict { level, holds: witness.is_none(), witness, transient })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LScaleNode {
    /// Index into the metastability graph.
    pub meta_index: usize,
    pub resident: TraitSet,
    pub stability_degree: StabilityDegree,
    pub exit_rate: Option<f64>,
    /// `L(v) > L`: frozen on this time scale.
    pub absorbing: bool,
    pub frontier_invalid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LScaleEdge {
    pub from: usize,
    pub to: usize,
    /// `p^L(v,w)`
    pub probability: f64,
    /// `R(v) p^L(v,w)`
    pub rate: f64,
}

/// `G^L` on `∪_{L' ≥ L} S^{L'}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LScaleGraph {
    pub level: u32,
    pub nodes: Vec<LScaleNode>,
    pub edges: Vec<LScaleEdge>,
}

/// Collapse onto the `L` time scale by solving `(I − Q) x = r` over the
/// transient short-lived nodes.
pub fn build_l_scale_graph(
    meta: &MetastabilityGraph,
    model: &TraitGraphModel,
    level: u32,
) -> Result<LScaleGraph, AnalysisError> {
    let verdict = check_no_cycles(meta, model, level)?;
    if !verdict.holds {
        return Err(AnalysisError::AssumptionFailed(verdict.describe(meta, model)));
    }
    let visible: Vec<usize> = (0..meta.nodes.len())
        .filter(|&i| match meta.nodes[i].stability_degree {
            StabilityDegree::Finite(l) => l >= level,
            StabilityDegree::Infinite => true,
        })
        .collect();
    let vis_pos: BTreeMap<usize, usize> = visible.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let tr = &verdict.transient;
    let tr_pos: BTreeMap<usize, usize> = tr.iter().enumerate().map(|(k, &i)| (i, k)).collect();

    // x(i, j): probability that the chain started at transient i first enters visible j
    let (nt, nv) = (tr.len(), visible.len());
    let mut a = DMatrix::<f64>::identity(nt, nt);
    let mut r = DMatrix::<f64>::zeros(nt, nv);
    for e in &meta.edges {
        if let Some(&ti) = tr_pos.get(&e.from) {
            if let Some(&tj) = tr_pos.get(&e.to) {
                a[(ti, tj)] -= e.probability;
            } else if let Some(&vj) = vis_pos.get(&e.to) {
                r[(ti, vj)] += e.probability;
            }
        }
    }
    let x = if nt == 0 {
        r
    } else {
        a.lu().solve(&r).ok_or_else(|| {
            AnalysisError::AssumptionFailed(format!("absorption system singular at level {level}"))
        })?
    };

    let nodes: Vec<LScaleNode> = visible
        .iter()
        .map(|&i| {
            let n = &meta.nodes[i];
            LScaleNode {
                meta_index: i,
                resident: n.resident.clone(),
                stability_degree: n.stability_degree,
                exit_rate: n.exit_rate,
                absorbing: n.stability_degree != StabilityDegree::Finite(level),
                frontier_invalid: n.frontier_invalid.is_some(),
            }
        })
        .collect();
    let mut edges = Vec::new();
    for s in meta.level_set(level) {
        let mut p = vec![0.0; nv];
        for e in meta.out_edges(s) {
            if let Some(&vj) = vis_pos.get(&e.to) {
                p[vj] += e.probability;
            } else if let Some(&ti) = tr_pos.get(&e.to) {
                for (vj, pj) in p.iter_mut().enumerate() {
                    *pj += e.probability * x[(ti, vj)];
                }
            }
        }
        let rate = meta.nodes[s].exit_rate.unwrap_or(0.0);
        for (vj, &pj) in p.iter().enumerate() {
            if pj > 0.0 {
                edges.push(LScaleEdge { from: vis_pos[&s], to: vj, probability: pj, rate: rate * pj });
            }
        }
    }
    Ok(LScaleGraph { level, nodes, edges })
}

impl LScaleGraph {
    pub fn node_index(&self, set: &TraitSet) -> Option<usize> {
        self.nodes.iter().position(|n| &n.resident == set)
    }

    pub fn probability(&self, from: &TraitSet, to: &TraitSet) -> f64 {
        match (self.node_index(from), self.node_index(to)) {
            (Some(i), Some(j)) => {
                self.edges.iter().find(|e| e.from == i && e.to == j).map_or(0.0, |e| e.probability)
            }
            _ => 0.0,
        }
    }

    pub fn to_json(&self, model: &TraitGraphModel) -> Value {
        let set = |s: &TraitSet| s.iter().map(|v| model.id(v).to_string()).collect::<Vec<_>>();
        json!({
            "level": self.level,
            "nodes": self.nodes.iter().map(|n| json!({
                "resident": set(&n.resident),
                "stability_degree": n.stability_degree,
                "exit_rate": n.exit_rate,
                "absorbing": n.absorbing,
                "frontier_invalid": n.frontier_invalid,
            })).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|e| json!({
                "from": set(&self.nodes[e.from].resident),
                "to": set(&self.nodes[e.to].resident),
                "p": e.probability,
                "rate": e.rate,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_dot(&self, model: &TraitGraphModel) -> String {
        let mut out = format!("digraph g_l{} {{\n  rankdir=LR;\n", self.level);
        for (i, n) in self.nodes.iter().enumerate() {
            let shape = if n.absorbing { "doublecircle" } else { "ellipse" };
            let _ = writeln!(
                out,
                "  n{i} [label=\"{}\\nL={}\", shape={shape}];",
                model.format_set(&n.resident),
                n.stability_degree
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"p={:.6}\\nR={:.6e}\"];",
                e.from, e.to, e.probability, e.rate
            );
        }
        out.push_str("}\n");
        out
    }
}

/// One jump of the multi-scale chain. The waiting time is in units of
/// `1/(K μ_K^exponent)`; times with different exponents are not comparable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpStep {
    pub from: TraitSet,
    pub to: TraitSet,
    pub waiting_time: f64,
    pub exponent: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpChainEnd {
    StepsExhausted,
    Absorbing,
    FrontierInvalid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpChainSample {
    pub start: TraitSet,
    pub steps: Vec<JumpStep>,
    pub end: JumpChainEnd,
}

/// Sample up to `steps` jumps from `start` with a ChaCha8 stream seeded by `seed`.
pub fn sample_jump_chain(
    meta: &MetastabilityGraph,
    start: &TraitSet,
    steps: usize,
    seed: u64,
) -> Result<JumpChainSample, AnalysisError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_jump_chain_with(meta, start, steps, &mut rng)
}

pub fn sample_jump_chain_with<R: Rng>(
    meta: &MetastabilityGraph,
    start: &TraitSet,
    steps: usize,
    rng: &mut R,
) -> Result<JumpChainSample, AnalysisError> {
    let mut current = meta.node_index(start).ok_or_else(|| {
        AnalysisError::Precondition(format!("{start} is not a node of the metastability graph"))
    })?;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let node = &meta.nodes[current];
        let (Some(rate), StabilityDegree::Finite(l)) = (node.exit_rate, node.stability_degree) else {
            return Ok(JumpChainSample { start: start.clone(), steps: out, end: JumpChainEnd::Absorbing });
        };
        if node.frontier_invalid.is_some() {
            return Ok(JumpChainSample { start: start.clone(), steps: out, end: JumpChainEnd::FrontierInvalid });
        }
        let waiting_time = -(1.0 - rng.random::<f64>()).ln() / rate;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = None;
        let edges: Vec<&MetaEdge> = meta.out_edges(current).collect();
        for e in &edges {
            acc += e.probability;
            if u < acc {
                next = Some(e.to);
                break;
            }
        }
        // rounding in the cumulative sum
        let next = next.unwrap_or_else(|| edges.last().expect("non-absorbing node has edges").to);
        out.push(JumpStep {
            from: node.resident.clone(),
            to: meta.nodes[next].resident.clone(),
            waiting_time,
            exponent: l,
        });
        current = next;
    }
    Ok(JumpChainSample { start: start.clone(), steps: out, end: JumpChainEnd::StepsExhausted })
}
