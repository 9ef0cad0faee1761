use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A DAG over feature indices with derived parent sets, roots and a
/// topological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct CausalGraph {
    names: Vec<String>,
    parents: Vec<Vec<usize>>,
    order: Vec<usize>,
    edge_p_values: BTreeMap<(usize, usize), f64>,
    /// Set when discovery had to accept a sink whose independence test was
    /// rejected at the configured level.
    pub forced_sink: bool,
}

impl CausalGraph {
    /// Build from `(parent, child)` pairs. Fails on out-of-range indices,
    /// self-loops or cycles.
    pub fn new(names: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let m = names.len();
        let mut parents = vec![Vec::new(); m];
        for &(p, c) in edges {
            if p >= m || c >= m {
                return Err(Error::InvalidInput(format!(
                    "edge ({p}, {c}) outside {m} nodes"
                )));
            }
            if p == c {
                return Err(Error::InvalidInput(format!("self-loop on node {p}")));
            }
            if !parents[c].contains(&p) {
                parents[c].push(p);
            }
        }
        parents.iter_mut().for_each(|ps| ps.sort_unstable());
        let order = topological_order(&parents)
            .ok_or_else(|| Error::InvalidInput("edge set contains a cycle".into()))?;
        Ok(Self {
            names,
            parents,
            order,
            edge_p_values: BTreeMap::new(),
            forced_sink: false,
        })
    }

    pub fn empty(names: Vec<String>) -> Self {
        Self::new(names, &[]).expect("edgeless graph is acyclic")
    }

    pub fn with_p_values(mut self, p: BTreeMap<(usize, usize), f64>) -> Self {
        self.edge_p_values = p;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parents(&self, j: usize) -> &[usize] {
        &self.parents[j]
    }

    pub fn is_root(&self, j: usize) -> bool {
        self.parents[j].is_empty()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&j| self.is_root(j)).collect()
    }

    pub fn dependents(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&j| !self.is_root(j)).collect()
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// `(parent, child)` pairs sorted by child then parent.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect()
    }

    pub fn edge_p_value(&self, parent: usize, child: usize) -> Option<f64> {
        self.edge_p_values.get(&(parent, child)).copied()
    }

    /// Human-readable `parent -> child` lines.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (p, c) in self.edges() {
            let _ = writeln!(s, "{} -> {}", self.names[p], self.names[c]);
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Kahn's algorithm, always releasing the lowest-index ready node first.
fn topological_order(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let m = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); m];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..m).filter(|&j| indegree[j] == 0).collect();
    let mut order = Vec::with_capacity(m);
    while let Some(j) = ready.pop_first() {
        order.push(j);
        for &c in &children[j] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    (order.len() == m).then_some(order)
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    parent: String,
    child: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    p_value: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<String>,
    edges: Vec<EdgeRecord>,
    roots: Vec<String>,
    topological_order: Vec<String>,
    #[serde(default)]
    forced_sink: bool,
}

impl From<CausalGraph> for GraphFile {
    fn from(g: CausalGraph) -> Self {
        GraphFile {
            edges: g
                .edges()
                .into_iter()
                .map(|(p, c)| EdgeRecord {
                    parent: g.names[p].clone(),
                    child: g.names[c].clone(),
                    p_value: g.edge_p_value(p, c),
                })
                .collect(),
            roots: g.roots().into_iter().map(|j| g.names[j].clone()).collect(),
            topological_order: g.order.iter().map(|&j| g.names[j].clone()).collect(),
            forced_sink: g.forced_sink,
            nodes: g.names,
        }
    }
}

impl TryFrom<GraphFile> for CausalGraph {
    type Error = Error;

    fn try_from(file: GraphFile) -> Result<Self> {
        let index = |name: &str| {
            file.nodes.iter().position(|n| n == name).ok_or_else(|| {
                Error::InvalidInput(format!("edge references unknown node '{name}'"))
            })
        };
        let mut edges = Vec::new();
        let mut p_values = BTreeMap::new();
        for e in &file.edges {
            let (p, c) = (index(&e.parent)?, index(&e.child)?);
            edges.push((p, c));
            if let Some(v) = e.p_value {
                p_values.insert((p, c), v);
            }
        }
        let mut g = CausalGraph::new(file.nodes.clone(), &edges)?.with_p_values(p_values);
        g.forced_sink = file.forced_sink;
        Ok(g)
    }
}
