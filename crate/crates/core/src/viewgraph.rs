//! The view-graph: frames with absolute orientations as nodes, validated
//! relative orientations as edges, plus windowed subgraph extraction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::so3::Rot3;

/// A validated relative orientation measurement on edge (j, k), j < k,
/// chaining as R_k = R_j · R_jk.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeData {
    pub r_jk: Rot3,
    pub inlier_count: usize,
    pub is_loop: bool,
}

/// Nodes keyed by dense frame ids assigned in arrival order. Node 0 carries
/// the gauge and always holds the identity orientation.
#[derive(Debug, Clone, Default)]
pub struct ViewGraph {
    nodes: BTreeMap<u64, Rot3>,
    edges: BTreeMap<(u64, u64), EdgeData>,
    adj: BTreeMap<u64, BTreeSet<u64>>,
}

/// Optimization window over the most recent frames.
///
/// `anchors` are the nodes outside the window that share an edge with it;
/// they stay frozen during a windowed solve and pin it to the global
/// estimate. When the whole graph fits in the window there are no anchors
/// and `pinned` names the earliest window node as the frozen gauge instead.
#[derive(Debug, Clone)]
pub struct LocalSubgraph {
    pub window: Vec<u64>,
    pub anchors: Vec<u64>,
    /// Every graph edge with at least one endpoint in the window.
    pub edges: Vec<(u64, u64, EdgeData)>,
    /// Orientation snapshot of window and anchor nodes at extraction time.
    pub orientations: BTreeMap<u64, Rot3>,
    pub pinned: Option<u64>,
}

impl ViewGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.nodes.keys().copied()
    }

    pub fn orientation(&self, id: u64) -> Option<&Rot3> {
        self.nodes.get(&id)
    }

    pub fn edge(&self, j: u64, k: u64) -> Option<&EdgeData> {
        self.edges.get(&(j, k))
    }

    pub fn edges(&self) -> impl Iterator<Item = (u64, u64, &EdgeData)> {
        self.edges.iter().map(|(&(j, k), d)| (j, k, d))
    }

    pub fn neighbors(&self, id: u64) -> impl Iterator<Item = u64> + '_ {
        self.adj.get(&id).into_iter().flatten().copied()
    }

    /// Inserts the next node. Ids are dense and arrival-ordered, so `id`
    /// must equal the current node count; frame 0 is forced to identity.
    pub fn add_node(&mut self, id: u64, r_init: Rot3) -> Result<()> {
        if self.nodes.contains_key(&id) {
            return Err(Error::invalid(format!("node {id} already exists")));
        }
        if id != self.nodes.len() as u64 {
            return Err(Error::invalid(format!(
                "node ids are dense and arrival-ordered: expected {}, got {id}",
                self.nodes.len()
            )));
        }
        let r = if id == 0 { Rot3::identity() } else { r_init };
        self.nodes.insert(id, r);
        self.adj.entry(id).or_default();
        Ok(())
    }

    /// Stores edge (j, k). An existing edge is replaced only when the new
    /// measurement has a strictly higher inlier count.
    pub fn add_edge(&mut self, j: u64, k: u64, data: EdgeData) -> Result<()> {
        if j >= k {
            return Err(Error::invalid(format!("edge requires j < k, got ({j}, {k})")));
        }
        if !self.nodes.contains_key(&j) || !self.nodes.contains_key(&k) {
            return Err(Error::invalid(format!("edge ({j}, {k}) references a missing node")));
        }
        match self.edges.get_mut(&(j, k)) {
            Some(existing) => {
                if data.inlier_count > existing.inlier_count {
                    *existing = data;
                }
            }
            None => {
                self.edges.insert((j, k), data);
                self.adj.get_mut(&j).unwrap().insert(k);
                self.adj.get_mut(&k).unwrap().insert(j);
            }
        }
        Ok(())
    }

    /// Overwrites a node's orientation. The gauge node 0 only accepts the
    /// identity.
    pub fn set_orientation(&mut self, id: u64, r: Rot3) -> Result<()> {
        if id == 0 && r != Rot3::identity() {
            return Err(Error::invalid("node 0 is the gauge and stays at identity"));
        }
        match self.nodes.get_mut(&id) {
            Some(slot) => {
                *slot = r;
                Ok(())
            }
            None => Err(Error::invalid(format!("no node {id}"))),
        }
    }

    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.nodes.keys().next() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen.len() == self.nodes.len()
    }

    /// Extracts the optimization window: the last `window_size` nodes, their
    /// frozen neighbors, and every edge touching the window. Pure function
    /// of (graph, window_size).
    pub fn local_subgraph(&self, window_size: usize) -> LocalSubgraph {
        let window: Vec<u64> = {
            // Ids are dense, so the newest window is a contiguous key range.
            let n = self.nodes.len() as u64;
            let start = n.saturating_sub(window_size.max(1) as u64);
            self.nodes.range(start..).map(|(&id, _)| id).collect()
        };
        let in_window: BTreeSet<u64> = window.iter().copied().collect();

        let mut anchors = BTreeSet::new();
        let mut edge_keys = BTreeSet::new();
        for &w in &window {
            for v in self.neighbors(w) {
                if !in_window.contains(&v) {
                    anchors.insert(v);
                }
                let key = (w.min(v), w.max(v));
                edge_keys.insert(key);
            }
        }
        let edges: Vec<(u64, u64, EdgeData)> = edge_keys
            .into_iter()
            .map(|(j, k)| (j, k, self.edges[&(j, k)].clone()))
            .collect();

        let mut orientations = BTreeMap::new();
        for &id in window.iter().chain(anchors.iter()) {
            orientations.insert(id, self.nodes[&id]);
        }
        let pinned = if anchors.is_empty() {
            window.first().copied()
        } else {
            None
        };
        LocalSubgraph {
            window,
            anchors: anchors.into_iter().collect(),
            edges,
            orientations,
            pinned,
        }
    }

    /// Debug dump: `NODE id qw qx qy qz` rows then
    /// `EDGE j k qw qx qy qz inliers loop_flag` rows, sorted.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, r) in &self.nodes {
            out.push_str(&format!("NODE {id} {}\n", r.format_quat()));
        }
        for ((j, k), d) in &self.edges {
            out.push_str(&format!(
                "EDGE {j} {k} {} {} {}\n",
                d.r_jk.format_quat(),
                d.inlier_count,
                u8::from(d.is_loop)
            ));
        }
        out
    }

    /// Parses the `dump` format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut g = ViewGraph::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| Error::parse("<graph>", lineno + 1, msg);
            match toks[0] {
                "NODE" if toks.len() == 6 => {
                    let id: u64 = toks[1].parse().map_err(|_| bad("bad node id"))?;
                    let r = Rot3::parse_quat(&toks[2..6].join(" "))
                        .map_err(|e| bad(&e.to_string()))?;
                    g.add_node(id, r).map_err(|e| bad(&e.to_string()))?;
                }
                "EDGE" if toks.len() == 9 => {
                    let j: u64 = toks[1].parse().map_err(|_| bad("bad edge id"))?;
                    let k: u64 = toks[2].parse().map_err(|_| bad("bad edge id"))?;
                    let r = Rot3::parse_quat(&toks[3..7].join(" "))
                        .map_err(|e| bad(&e.to_string()))?;
                    let inliers: usize = toks[7].parse().map_err(|_| bad("bad inlier count"))?;
                    let is_loop = match toks[8] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(bad("loop flag must be 0 or 1")),
                    };
                    g.add_edge(
                        j,
                        k,
                        EdgeData {
                            r_jk: r,
                            inlier_count: inliers,
                            is_loop,
                        },
                    )
                    .map_err(|e| bad(&e.to_string()))?;
                }
                _ => return Err(bad("expected NODE or EDGE row")),
            }
        }
        Ok(g)
    }
}
