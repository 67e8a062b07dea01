//! Trait-graph model: parameters, JSON config, distances and shortest paths.
//!
//! Vertices are stored by dense index in declaration order. Distances are
//! directed breadth-first distances, precomputed for all vertex pairs.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Assumption, ModelError};
use crate::tolerances::Tolerances;

/// Sorted, duplicate-free set of vertex indices. Used for resident sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct TraitSet(Vec<usize>);

impl TraitSet {
    pub fn new(items: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = items.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        TraitSet(v)
    }

    pub fn singleton(v: usize) -> Self {
        TraitSet(vec![v])
    }

    pub fn from_mask(mask: u64) -> Self {
        TraitSet((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn with(&self, v: usize) -> Self {
        TraitSet::new(self.0.iter().copied().chain(std::iter::once(v)))
    }

    pub fn is_subset(&self, other: &TraitSet) -> bool {
        self.iter().all(|v| other.contains(v))
    }
}

impl FromIterator<usize> for TraitSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        TraitSet::new(iter)
    }
}

/// Sequence `(γ₀,…,γ_ℓ)` whose consecutive pairs are graph edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MutationPath(Vec<usize>);

impl MutationPath {
    pub fn new(model: &TraitGraphModel, vertices: Vec<usize>) -> Result<Self, AnalysisError> {
        if vertices.is_empty() {
            return Err(AnalysisError::InvalidPath("empty vertex sequence".into()));
        }
        for &v in &vertices {
            model.check_index(v)?;
        }
        for pair in vertices.windows(2) {
            if model.mutation(pair[0], pair[1]) <= 0.0 {
                return Err(AnalysisError::InvalidPath(format!(
                    "{} -> {} is not an edge",
                    model.id(pair[0]),
                    model.id(pair[1])
                )));
            }
        }
        Ok(MutationPath(vertices))
    }

    /// Number of edges `|γ|`.
    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    /// True for the length-0 path consisting of a single vertex.
    pub fn is_empty(&self) -> bool {
        self.0.len() == 1
    }

    pub fn vertices(&self) -> &[usize] {
        &self.0
    }

    pub fn start(&self) -> usize {
        self.0[0]
    }

    pub fn end(&self) -> usize {
        *self.0.last().expect("paths are nonempty")
    }

    /// Suffix `(γ_i,…,γ_ℓ)`.
    pub fn suffix(&self, i: usize) -> MutationPath {
        MutationPath(self.0[i..].to_vec())
    }
}

/// Edge entry of the JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub from: String,
    pub to: String,
    pub m: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub undirected: bool,
}

/// Competition block: `{"equal": κ}` or a nested map `c[v][w]` (missing entries are 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CompetitionConfig {
    Equal { equal: f64 },
    Matrix(BTreeMap<String, BTreeMap<String, f64>>),
}

/// JSON model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeConfig>,
    pub birth: BTreeMap<String, f64>,
    pub death: BTreeMap<String, f64>,
    pub competition: CompetitionConfig,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

/// Validated, immutable trait-graph model.
#[derive(Debug, Clone, PartialEq)]
pub struct TraitGraphModel {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    labels: BTreeMap<String, String>,
    birth: Vec<f64>,
    death: Vec<f64>,
    competition: Vec<f64>,
    equal_competition: Option<f64>,
    out_edges: Vec<Vec<(usize, f64)>>,
    in_edges: Vec<Vec<(usize, f64)>>,
    alpha: f64,
    dist: Vec<Option<u32>>,
}

/// Parse and validate a JSON model document.
pub fn load_model(document: &str) -> Result<TraitGraphModel, ModelError> {
    let cfg: ModelConfig =
        serde_json::from_str(document).map_err(|e| ModelError::Parse(e.to_string()))?;
    TraitGraphModel::from_config(&cfg)
}

/// Read and validate a model file.
pub fn load_model_file(path: impl AsRef<Path>) -> Result<TraitGraphModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Parse(format!("{}: {e}", path.display())))?;
    load_model(&text)
}

impl TraitGraphModel {
    pub fn from_config(cfg: &ModelConfig) -> Result<Self, ModelError> {
        let tol = Tolerances::DEFAULT;
        let n = cfg.vertices.len();
        if n == 0 {
            return Err(ModelError::Parse("model declares no vertices".into()));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, id) in cfg.vertices.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(ModelError::DuplicateVertex(id.clone()));
            }
        }
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| ModelError::UnknownVertex(id.to_string()))
        };

        for key in cfg.birth.keys().chain(cfg.death.keys()).chain(cfg.labels.keys()) {
            lookup(key)?;
        }
        let mut birth = vec![0.0; n];
        let mut death = vec![0.0; n];
        for (i, id) in cfg.vertices.iter().enumerate() {
            birth[i] = *cfg
                .birth
                .get(id)
                .ok_or(ModelError::MissingParameter { field: "birth", vertex: id.clone() })?;
            death[i] = *cfg
                .death
                .get(id)
                .ok_or(ModelError::MissingParameter { field: "death", vertex: id.clone() })?;
            if !(birth[i] > 0.0 && birth[i].is_finite()) {
                return Err(ModelError::assumption(
                    Assumption::PositiveBirth,
                    format!("b({id}) = {}", birth[i]),
                ));
            }
            if !(death[i] >= 0.0 && death[i].is_finite()) {
                return Err(ModelError::assumption(
                    Assumption::NonNegativeDeath,
                    format!("d({id}) = {}", death[i]),
                ));
            }
        }

        let mut competition = vec![0.0; n * n];
        let equal_competition = match &cfg.competition {
            CompetitionConfig::Equal { equal } => {
                competition.iter_mut().for_each(|c| *c = *equal);
                Some(*equal)
            }
            CompetitionConfig::Matrix(rows) => {
                for (v, row) in rows {
                    let vi = lookup(v)?;
                    for (w, &c) in row {
                        competition[vi * n + lookup(w)?] = c;
                    }
                }
                None
            }
        };
        for v in 0..n {
            for w in 0..n {
                let c = competition[v * n + w];
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(ModelError::assumption(
                        Assumption::NonNegativeCompetition,
                        format!("c({},{}) = {c}", cfg.vertices[v], cfg.vertices[w]),
                    ));
                }
            }
            if competition[v * n + v] <= 0.0 {
                return Err(ModelError::assumption(
                    Assumption::PositiveSelfCompetition,
                    format!("c({0},{0}) = {1}", cfg.vertices[v], competition[v * n + v]),
                ));
            }
        }

        let mut kernel: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for e in &cfg.edges {
            let (a, b) = (lookup(&e.from)?, lookup(&e.to)?);
            if a == b {
                return Err(ModelError::assumption(
                    Assumption::NoSelfMutation,
                    format!("m({0},{0}) = {1}", e.from, e.m),
                ));
            }
            if !(e.m > 0.0 && e.m <= 1.0 + tol.kernel_sum) {
                return Err(ModelError::assumption(
                    Assumption::KernelMatchesEdges,
                    format!("edge {} -> {} has m = {}", e.from, e.to, e.m),
                ));
            }
            let mut insert = |x: usize, y: usize| {
                if kernel[x].insert(y, e.m).is_some() {
                    Err(ModelError::DuplicateEdge {
                        from: cfg.vertices[x].clone(),
                        to: cfg.vertices[y].clone(),
                    })
                } else {
                    Ok(())
                }
            };
            insert(a, b)?;
            if e.undirected {
                insert(b, a)?;
            }
        }
        for (v, row) in kernel.iter().enumerate() {
            let total: f64 = row.values().sum();
            if !row.is_empty() && (total - 1.0).abs() > tol.kernel_sum {
                return Err(ModelError::assumption(
                    Assumption::KernelNormalised,
                    format!("sum_w m({}, w) = {total}", cfg.vertices[v]),
                ));
            }
        }

        let alpha = cfg.alpha;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ModelError::assumption(Assumption::PositiveAlpha, format!("alpha = {alpha}")));
        }
        if (alpha - alpha.round()).abs() <= tol.alpha_integer {
            return Err(ModelError::assumption(
                Assumption::NonIntegerAlpha,
                format!("alpha = {alpha}"),
            ));
        }

        let out_edges: Vec<Vec<(usize, f64)>> =
            kernel.iter().map(|row| row.iter().map(|(&w, &m)| (w, m)).collect()).collect();
        let mut in_edges = vec![Vec::new(); n];
        for (v, row) in out_edges.iter().enumerate() {
            for &(w, m) in row {
                in_edges[w].push((v, m));
            }
        }

        let mut dist = vec![None; n * n];
        for s in 0..n {
            let mut queue = VecDeque::from([s]);
            dist[s * n + s] = Some(0);
            while let Some(x) = queue.pop_front() {
                let dx = dist[s * n + x].expect("queued vertices have a distance");
                for &(y, _) in &out_edges[x] {
                    if dist[s * n + y].is_none() {
                        dist[s * n + y] = Some(dx + 1);
                        queue.push_back(y);
                    }
                }
            }
        }

        Ok(TraitGraphModel {
            ids: cfg.vertices.clone(),
            index,
            labels: cfg.labels.clone(),
            birth,
            death,
            competition,
            equal_competition,
            out_edges,
            in_edges,
            alpha,
            dist,
        })
    }

    /// Canonical config: every edge listed once per direction.
    pub fn to_config(&self) -> ModelConfig {
        let n = self.n();
        let competition = match self.equal_competition {
            Some(k) => CompetitionConfig::Equal { equal: k },
            None => CompetitionConfig::Matrix(
                (0..n)
                    .map(|v| {
                        let row = (0..n)
                            .filter(|&w| self.competition(v, w) != 0.0)
                            .map(|w| (self.ids[w].clone(), self.competition(v, w)))
                            .collect();
                        (self.ids[v].clone(), row)
                    })
                    .collect(),
            ),
        };
        ModelConfig {
            vertices: self.ids.clone(),
            edges: (0..n)
                .flat_map(|v| {
                    self.out_edges[v].iter().map(move |&(w, m)| EdgeConfig {
                        from: self.ids[v].clone(),
                        to: self.ids[w].clone(),
                        m,
                        undirected: false,
                    })
                })
                .collect(),
            birth: (0..n).map(|v| (self.ids[v].clone(), self.birth[v])).collect(),
            death: (0..n).map(|v| (self.ids[v].clone(), self.death[v])).collect(),
            competition,
            alpha: self.alpha,
            labels: self.labels.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_config()).expect("config serialises")
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn id(&self, v: usize) -> &str {
        &self.ids[v]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn label(&self, v: usize) -> Option<&str> {
        self.labels.get(&self.ids[v]).map(String::as_str)
    }

    pub fn vertex(&self, id: &str) -> Result<usize, ModelError> {
        self.index.get(id).copied().ok_or_else(|| ModelError::UnknownVertex(id.to_string()))
    }

    /// Parse a comma-separated list of vertex ids into a set.
    pub fn parse_set(&self, list: &str) -> Result<TraitSet, ModelError> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| self.vertex(s))
            .collect::<Result<Vec<_>, _>>()
            .map(TraitSet::new)
    }

    pub fn format_set(&self, set: &TraitSet) -> String {
        let ids: Vec<&str> = set.iter().map(|v| self.id(v)).collect();
        format!("{{{}}}", ids.join(","))
    }

    pub fn format_path(&self, path: &MutationPath) -> String {
        let ids: Vec<&str> = path.vertices().iter().map(|&v| self.id(v)).collect();
        format!("({})", ids.join(","))
    }

    pub(crate) fn check_index(&self, v: usize) -> Result<(), AnalysisError> {
        if v < self.n() {
            Ok(())
        } else {
            Err(AnalysisError::VertexOutOfRange(v))
        }
    }

    pub(crate) fn check_set(&self, set: &TraitSet) -> Result<(), AnalysisError> {
        if set.is_empty() {
            return Err(AnalysisError::EmptyResidents);
        }
        set.iter().try_for_each(|v| self.check_index(v))
    }

    pub fn birth(&self, v: usize) -> f64 {
        self.birth[v]
    }

    pub fn death(&self, v: usize) -> f64 {
        self.death[v]
    }

    /// Net growth rate `r(v) = b(v) − d(v)`.
    pub fn growth(&self, v: usize) -> f64 {
        self.birth[v] - self.death[v]
    }

    pub fn competition(&self, v: usize, w: usize) -> f64 {
        self.competition[v * self.n() + w]
    }

    /// `m(v,w)`, zero off the edge set.
    pub fn mutation(&self, v: usize, w: usize) -> f64 {
        self.out_edges[v]
            .binary_search_by_key(&w, |&(x, _)| x)
            .map(|i| self.out_edges[v][i].1)
            .unwrap_or(0.0)
    }

    /// Total mutation mass `Σ_w m(v,w)`, either 0 or 1.
    pub fn mutation_mass(&self, v: usize) -> f64 {
        self.out_edges[v].iter().map(|&(_, m)| m).sum()
    }

    pub fn out_edges(&self, v: usize) -> &[(usize, f64)] {
        &self.out_edges[v]
    }

    pub fn in_edges(&self, v: usize) -> &[(usize, f64)] {
        &self.in_edges[v]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `⌊α⌋`.
    pub fn floor_alpha(&self) -> u32 {
        self.alpha.floor() as u32
    }

    /// `μ_K = K^(−1/α)`.
    pub fn mutation_probability(&self, k: f64) -> f64 {
        k.powf(-1.0 / self.alpha)
    }

    pub fn is_equal_competition(&self) -> Option<f64> {
        self.equal_competition
    }

    /// Directed distance between two vertices, `None` when unreachable.
    pub fn distance(&self, from: usize, to: usize) -> Option<u32> {
        self.dist[from * self.n() + to]
    }

    /// Distances from a vertex set to every vertex.
    pub fn distances_from(&self, source: &TraitSet) -> Vec<Option<u32>> {
        (0..self.n())
            .map(|w| source.iter().filter_map(|v| self.distance(v, w)).min())
            .collect()
    }
}

/// `d(source, target)`: minimum directed distance, `None` for unreachable.
pub fn graph_distance(
    model: &TraitGraphModel,
    source: &TraitSet,
    target: usize,
) -> Result<Option<u32>, AnalysisError> {
    model.check_set(source)?;
    model.check_index(target)?;
    Ok(source.iter().filter_map(|v| model.distance(v, target)).min())
}

/// All shortest paths from `source` to `target`, lexicographically ordered by vertex index.
pub fn shortest_paths(
    model: &TraitGraphModel,
    source: &TraitSet,
    target: usize,
) -> Result<Vec<MutationPath>, AnalysisError> {
    let dist = graph_distance(model, source, target)?;
    let Some(d) = dist else {
        return Err(AnalysisError::Unreachable {
            source_set: model.format_set(source),
            target: model.id(target).to_string(),
        });
    };
    let layer = model.distances_from(source);
    let mut out = Vec::new();
    let mut stack = vec![target];
    collect_backwards(model, &layer, d, &mut stack, &mut out);
    out.sort();
    Ok(out)
}

fn collect_backwards(
    model: &TraitGraphModel,
    layer: &[Option<u32>],
    level: u32,
    stack: &mut Vec<usize>,
    out: &mut Vec<MutationPath>,
) {
    if level == 0 {
        out.push(MutationPath(stack.iter().rev().copied().collect()));
        return;
    }
    let current = *stack.last().expect("stack holds the current vertex");
    for &(u, _) in model.in_edges(current) {
        if layer[u] == Some(level - 1) {
            stack.push(u);
            collect_backwards(model, layer, level - 1, stack, out);
            stack.pop();
        }
    }
}

impl fmt::Display for TraitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}
