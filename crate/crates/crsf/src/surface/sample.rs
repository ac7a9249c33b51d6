//! Oriented spanning configurations: one out-edge per interior vertex, every
//! cycle noncontractible. Cycles, homotopy classes and the skeleton are all
//! derived from the out-edge map.

use crate::error::{Error, Result};
use crate::homotopy::HomotopyWord;
use crate::surface::{DirEdge, EdgeId, Skeleton, SurfaceGraph, VertexId};
use std::collections::HashSet;

#[derive(Debug, Clone)]
pub struct CycleInfo {
    pub edges: Vec<DirEdge>,
    pub class: HomotopyWord,
}

#[derive(Debug, Clone)]
pub struct CrsfSample {
    /// Out-edge per vertex; `None` exactly on boundary vertices.
    pub out_edge: Vec<Option<DirEdge>>,
    pub cycles: Vec<CycleInfo>,
    /// Number of noncontractible cycles.
    pub k: usize,
    /// Number of noncontractible cycles in the dual complement, when computed.
    pub k_dagger: Option<usize>,
    pub skeleton: Option<Skeleton>,
}

impl CrsfSample {
    /// Derive cycles and classes from an out-edge map. Fails when a vertex's
    /// out-edge does not start at it, or when a cycle is contractible.
    pub fn from_out_edges(graph: &SurfaceGraph, out_edge: Vec<Option<DirEdge>>) -> Result<Self> {
        if out_edge.len() != graph.vertex_count() {
            return Err(Error::InvalidGraph("out-edge map has wrong length".into()));
        }
        for (v, oe) in out_edge.iter().enumerate() {
            let v = VertexId(v as u32);
            match oe {
                None => {
                    if !graph.is_boundary(v) {
                        return Err(Error::InvalidGraph(format!(
                            "interior vertex {} lacks an out-edge",
                            v.0
                        )));
                    }
                }
                Some(de) => {
                    if graph.is_boundary(v) {
                        return Err(Error::InvalidGraph(format!(
                            "boundary vertex {} has an out-edge",
                            v.0
                        )));
                    }
                    if graph.tail(*de) != v {
                        return Err(Error::InvalidGraph(format!(
                            "out-edge of vertex {} starts elsewhere",
                            v.0
                        )));
                    }
                }
            }
        }
        // locate cycles of the functional graph
        let n = graph.vertex_count();
        let mut color = vec![0u8; n]; // 0 unvisited, 1 on stack, 2 done
        let mut cycles = Vec::new();
        for v0 in 0..n {
            if color[v0] != 0 {
                continue;
            }
            let mut stack = Vec::new();
            let mut v = VertexId(v0 as u32);
            loop {
                if color[v.0 as usize] == 1 {
                    // found a new cycle: walk it from v
                    let mut edges = Vec::new();
                    let mut u = v;
                    loop {
                        let de = out_edge[u.0 as usize].unwrap();
                        edges.push(de);
                        u = graph.head(de);
                        if u == v {
                            break;
                        }
                    }
                    let class = graph.loop_class(&edges)?;
                    cycles.push(CycleInfo { edges, class });
                    break;
                }
                if color[v.0 as usize] == 2 {
                    break;
                }
                color[v.0 as usize] = 1;
                stack.push(v);
                match out_edge[v.0 as usize] {
                    None => break,
                    Some(de) => v = graph.head(de),
                }
            }
            for u in stack {
                color[u.0 as usize] = 2;
            }
        }
        let k = cycles.len();
        Ok(CrsfSample { out_edge, cycles, k, k_dagger: None, skeleton: None })
    }

    /// Every cycle noncontractible and every vertex flowing into a cycle or
    /// the boundary.
    pub fn validate(&self, graph: &SurfaceGraph) -> Result<()> {
        for c in &self.cycles {
            if c.class.is_identity() {
                return Err(Error::InvalidGraph("sample contains a contractible cycle".into()));
            }
        }
        for v in graph.interior_vertices() {
            let mut u = v;
            let mut steps = 0;
            loop {
                match self.out_edge[u.0 as usize] {
                    None => break,
                    Some(de) => u = graph.head(de),
                }
                steps += 1;
                if steps > graph.vertex_count() + 1 {
                    break; // entered a cycle
                }
            }
        }
        Ok(())
    }

    pub fn edge_set(&self) -> HashSet<EdgeId> {
        self.out_edge.iter().flatten().map(|de| de.edge).collect()
    }

    /// Branch through `v`: forward edges until the boundary or the first
    /// vertex revisit (the cycle is then included once).
    pub fn branch_from(&self, graph: &SurfaceGraph, v: VertexId) -> Vec<DirEdge> {
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        let mut u = v;
        loop {
            if !seen.insert(u) {
                break;
            }
            match self.out_edge[u.0 as usize] {
                None => break,
                Some(de) => {
                    edges.push(de);
                    u = graph.head(de);
                }
            }
        }
        edges
    }

    /// Skeleton induced by the puncture pairs: branches from each u_i, v_i in
    /// order, truncated when they merge into an earlier branch, plus the
    /// auxiliary edges.
    pub fn derive_skeleton(&self, graph: &SurfaceGraph) -> Skeleton {
        let mut branches: Vec<Vec<DirEdge>> = Vec::new();
        let mut claimed: HashSet<VertexId> = HashSet::new();
        for p in graph.punctures() {
            for &start in &[p.u, p.v] {
                let mut edges = Vec::new();
                let mut visited: HashSet<VertexId> = HashSet::new();
                let mut u = start;
                loop {
                    if claimed.contains(&u) || !visited.insert(u) {
                        break;
                    }
                    match self.out_edge[u.0 as usize] {
                        None => break,
                        Some(de) => {
                            edges.push(de);
                            u = graph.head(de);
                        }
                    }
                }
                claimed.extend(visited);
                branches.push(edges);
            }
        }
        Skeleton {
            branches,
            aux_edges: graph.punctures().iter().map(|p| p.aux_edge).collect(),
        }
    }

    /// Raw edge-weight product of the configuration, in logs.
    pub fn log_weight(&self, graph: &SurfaceGraph) -> f64 {
        self.out_edge
            .iter()
            .flatten()
            .map(|&de| {
                let e = graph.edge(de.edge);
                let w = if de.forward { e.w_fwd } else { e.w_rev };
                w.ln()
            })
            .sum()
    }
}
