//! Contractibility notions for rooted loops: the plain homotopy class, the
//! chronological simple-loop decomposition, and the path-relative variant.

use crate::error::{Error, Result};
use crate::homotopy::HomotopyWord;
use crate::surface::{DirEdge, SurfaceGraph, VertexId};

/// One simple loop peeled off during chronological erasure.
#[derive(Debug, Clone)]
pub struct SimpleLoop {
    pub root: VertexId,
    pub edges: Vec<DirEdge>,
    pub class: HomotopyWord,
}

/// Chronological loop-erasure of a closed walk, rooted at the tail of its
/// first edge. Returns every simple loop in the order it closed; their
/// concatenation in this order exhausts the walk.
pub fn chronological_decomposition(
    graph: &SurfaceGraph,
    loop_edges: &[DirEdge],
) -> Result<Vec<SimpleLoop>> {
    if loop_edges.is_empty() {
        return Err(Error::NotClosed);
    }
    let root = graph.tail(loop_edges[0]);
    if graph.head(*loop_edges.last().unwrap()) != root {
        return Err(Error::NotClosed);
    }

    // Self-avoiding prefix as (vertex, incoming edge index into `loop_edges`).
    let mut path: Vec<VertexId> = vec![root];
    let mut path_edges: Vec<DirEdge> = Vec::new();
    let mut out = Vec::new();
    for &de in loop_edges {
        if graph.tail(de) != *path.last().unwrap() {
            return Err(Error::NotClosed);
        }
        let h = graph.head(de);
        if let Some(k) = path.iter().position(|&v| v == h) {
            let mut edges: Vec<DirEdge> = path_edges.split_off(k);
            edges.push(de);
            path.truncate(k + 1);
            let class = graph.loop_class(&edges)?;
            out.push(SimpleLoop { root: h, edges, class });
        } else {
            path.push(h);
            path_edges.push(de);
        }
    }
    if path.len() != 1 {
        return Err(Error::NotClosed);
    }
    Ok(out)
}

/// A rooted loop is Wilson contractible when every simple loop of its
/// chronological decomposition has the identity class.
pub fn is_wilson_contractible(graph: &SurfaceGraph, loop_edges: &[DirEdge]) -> Result<bool> {
    Ok(chronological_decomposition(graph, loop_edges)?
        .iter()
        .all(|l| l.class.is_identity()))
}

/// Rotate a closed edge walk so it starts at the k-th edge.
pub fn rotate_loop(loop_edges: &[DirEdge], k: usize) -> Vec<DirEdge> {
    let mut v = Vec::with_capacity(loop_edges.len());
    v.extend_from_slice(&loop_edges[k..]);
    v.extend_from_slice(&loop_edges[..k]);
    v
}

/// Contractibility relative to an ordered family of paths: re-root the loop at
/// the first point (in path order, then within-path chronology) where the
/// family meets the loop, and test Wilson contractibility there. A loop
/// disjoint from every path is not eta-contractible by convention.
pub fn is_eta_contractible(
    graph: &SurfaceGraph,
    loop_edges: &[DirEdge],
    paths: &[&[VertexId]],
) -> Result<bool> {
    if loop_edges.is_empty() {
        return Err(Error::NotClosed);
    }
    let support: Vec<VertexId> = loop_edges.iter().map(|&de| graph.tail(de)).collect();
    let mut root_vertex = None;
    'outer: for path in paths {
        for &v in path.iter() {
            if support.contains(&v) {
                root_vertex = Some(v);
                break 'outer;
            }
        }
    }
    let Some(v) = root_vertex else {
        return Ok(false);
    };
    let k = support.iter().position(|&u| u == v).unwrap();
    is_wilson_contractible(graph, &rotate_loop(loop_edges, k))
}

/// Canonical representative of an unrooted loop: the lexicographically
/// minimal rotation of its (edge id, direction) sequence.
pub fn canonical_rotation(loop_edges: &[DirEdge]) -> Vec<DirEdge> {
    let n = loop_edges.len();
    let mut best = 0;
    for k in 1..n {
        for i in 0..n {
            let a = loop_edges[(k + i) % n];
            let b = loop_edges[(best + i) % n];
            match a.cmp(&b) {
                std::cmp::Ordering::Less => {
                    best = k;
                    break;
                }
                std::cmp::Ordering::Greater => break,
                std::cmp::Ordering::Equal => continue,
            }
        }
    }
    rotate_loop(loop_edges, best)
}
