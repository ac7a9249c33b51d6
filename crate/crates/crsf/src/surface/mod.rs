//! Weighted directed graphs embedded on a surface as a combinatorial map,
//! with fundamental-group labels on the edges.

mod contract;
mod sample;
mod temperley;

pub use contract::{
    canonical_rotation, chronological_decomposition, is_eta_contractible, is_wilson_contractible,
    rotate_loop, SimpleLoop,
};
pub use sample::{CrsfSample, CycleInfo};
pub use temperley::{
    complement_components, dual_complement_cycles, is_temperleyan, ComplementComponent, DualCycle,
    Skeleton,
};

use crate::error::{Error, Result};
use crate::homotopy::{GroupKind, HomotopyWord};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaceId(pub u32);

/// One traversal direction of an undirected edge record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DirEdge {
    pub edge: EdgeId,
    pub forward: bool,
}

impl DirEdge {
    pub fn fwd(edge: EdgeId) -> Self {
        DirEdge { edge, forward: true }
    }
    pub fn rev(edge: EdgeId) -> Self {
        DirEdge { edge, forward: false }
    }
    pub fn reversed(self) -> Self {
        DirEdge { edge: self.edge, forward: !self.forward }
    }
}

/// Topological type of the surface plus the group its words live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub genus: u32,
    pub boundary_components: u32,
    pub group: GroupKind,
}

impl SurfaceSpec {
    /// Closed torus, annuli, and any bordered surface are accepted. The sphere
    /// and closed surfaces of genus >= 2 are rejected; the latter would need a
    /// solution to the word problem beyond free reduction.
    pub fn new(genus: u32, boundary_components: u32) -> Result<Self> {
        match (genus, boundary_components) {
            (0, 0) => Err(Error::UnsupportedSurface("sphere".into())),
            (1, 0) => Ok(SurfaceSpec {
                genus,
                boundary_components,
                group: GroupKind::TorusZ2,
            }),
            (g, 0) if g >= 2 => Err(Error::ClosedHigherGenus),
            (g, b) => Ok(SurfaceSpec {
                genus: g,
                boundary_components: b,
                group: GroupKind::Free { rank: 2 * g + b - 1 },
            }),
        }
    }

    pub fn euler_characteristic(&self) -> i64 {
        2 - 2 * self.genus as i64 - self.boundary_components as i64
    }

    /// Number of punctures: |chi| on surfaces with chi <= 0, none otherwise.
    pub fn puncture_count(&self) -> u32 {
        (-self.euler_characteristic()).max(0) as u32
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertexInfo {
    pub pos: [f64; 2],
    pub boundary: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeInfo {
    pub tail: VertexId,
    pub head: VertexId,
    /// Weight of tail -> head; 0 disables that direction.
    pub w_fwd: f64,
    /// Weight of head -> tail.
    pub w_rev: f64,
    /// Crossing word picked up traversing tail -> head.
    pub word: HomotopyWord,
    /// Auxiliary puncture edges carry weight 0 and never appear in walks.
    pub aux: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceKind {
    Disc,
    /// Touches a boundary circle of the surface; exempt from the disc rules.
    Boundary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaceInfo {
    pub kind: FaceKind,
    /// Directed boundary walk with the face on the left.
    pub walk: Vec<DirEdge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Puncture {
    pub u: VertexId,
    pub v: VertexId,
    pub aux_edge: EdgeId,
}

/// An immutable embedded graph. All topology queries are pure.
#[derive(Debug, Clone)]
pub struct SurfaceGraph {
    pub spec: SurfaceSpec,
    /// Side lengths of the identification rectangle, if sides are identified.
    pub polygon: Option<[f64; 2]>,
    vertices: Vec<VertexInfo>,
    edges: Vec<EdgeInfo>,
    faces: Vec<FaceInfo>,
    punctures: Vec<Puncture>,
    /// Positive-probability moves per vertex: (edge, transition probability).
    out_moves: Vec<Vec<(DirEdge, f64)>>,
    out_total: Vec<f64>,
    /// face containing each directed edge: [edge][forward as usize].
    side_face: Vec<[Option<FaceId>; 2]>,
}

impl SurfaceGraph {
    pub fn build(
        spec: SurfaceSpec,
        polygon: Option<[f64; 2]>,
        vertices: Vec<VertexInfo>,
        edges: Vec<EdgeInfo>,
        faces: Vec<FaceInfo>,
        punctures: Vec<Puncture>,
    ) -> Result<SurfaceGraph> {
        let nv = vertices.len();
        let mut out_moves = vec![Vec::new(); nv];
        let mut out_total = vec![0.0; nv];
        for (i, e) in edges.iter().enumerate() {
            let id = EdgeId(i as u32);
            if e.tail.0 as usize >= nv || e.head.0 as usize >= nv {
                return Err(Error::InvalidGraph(format!("edge {i} references missing vertex")));
            }
            if e.w_fwd < 0.0 || e.w_rev < 0.0 {
                return Err(Error::InvalidGraph(format!("edge {i} has negative weight")));
            }
            if e.aux && (e.w_fwd != 0.0 || e.w_rev != 0.0) {
                return Err(Error::InvalidGraph(format!("aux edge {i} must have zero weight")));
            }
            if e.w_fwd > 0.0 {
                out_moves[e.tail.0 as usize].push((DirEdge::fwd(id), e.w_fwd));
                out_total[e.tail.0 as usize] += e.w_fwd;
            }
            if e.w_rev > 0.0 {
                out_moves[e.head.0 as usize].push((DirEdge::rev(id), e.w_rev));
                out_total[e.head.0 as usize] += e.w_rev;
            }
        }
        for (v, info) in vertices.iter().enumerate() {
            if info.boundary && out_total[v] != 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "boundary vertex {v} has positive outgoing weight"
                )));
            }
            if !info.boundary && out_total[v] <= 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "interior vertex {v} has no outgoing weight"
                )));
            }
        }
        // normalize to transition probabilities
        for v in 0..nv {
            let t = out_total[v];
            for m in out_moves[v].iter_mut() {
                m.1 /= t;
            }
        }

        let mut side_face = vec![[None, None]; edges.len()];
        if !faces.is_empty() {
            for (fi, f) in faces.iter().enumerate() {
                if f.walk.is_empty() {
                    return Err(Error::InvalidGraph(format!("face {fi} has empty walk")));
                }
                for (k, de) in f.walk.iter().enumerate() {
                    let e = &edges[de.edge.0 as usize];
                    let head = if de.forward { e.head } else { e.tail };
                    let next = f.walk[(k + 1) % f.walk.len()];
                    let ne = &edges[next.edge.0 as usize];
                    let ntail = if next.forward { ne.tail } else { ne.head };
                    if head != ntail {
                        return Err(Error::InvalidGraph(format!(
                            "face {fi} walk breaks at position {k}"
                        )));
                    }
                    let slot = &mut side_face[de.edge.0 as usize][de.forward as usize];
                    if slot.is_some() {
                        return Err(Error::InvalidGraph(format!(
                            "directed edge {:?} appears in two face walks",
                            de
                        )));
                    }
                    *slot = Some(FaceId(fi as u32));
                }
            }
            for (i, sides) in side_face.iter().enumerate() {
                if sides[0].is_none() || sides[1].is_none() {
                    return Err(Error::InvalidGraph(format!(
                        "edge {i} is missing from the face rotation system"
                    )));
                }
            }
        }

        let g = SurfaceGraph {
            spec,
            polygon,
            vertices,
            edges,
            faces,
            punctures,
            out_moves,
            out_total,
            side_face,
        };

        if !g.faces.is_empty() {
            for fi in 0..g.faces.len() {
                let f = &g.faces[fi];
                if f.kind == FaceKind::Disc {
                    let w = g.loop_class(&f.walk)?;
                    if !w.is_identity() {
                        return Err(Error::InvalidGraph(format!(
                            "disc face {fi} has nontrivial boundary word {w}"
                        )));
                    }
                }
            }
            // Euler characteristic of the compactified surface. Each boundary
            // circle contributes one wired vertex (already counted) and one arc.
            let chi = g.vertices.len() as i64 - g.edges.len() as i64
                - g.spec.boundary_components as i64
                + g.faces.len() as i64;
            if chi != g.spec.euler_characteristic() {
                return Err(Error::InvalidGraph(format!(
                    "embedding has Euler characteristic {chi}, surface needs {}",
                    g.spec.euler_characteristic()
                )));
            }
        }

        if g.punctures.len() as u32 != g.spec.puncture_count() {
            return Err(Error::InvalidGraph(format!(
                "surface needs {} punctures, graph provides {}",
                g.spec.puncture_count(),
                g.punctures.len()
            )));
        }
        for (i, p) in g.punctures.iter().enumerate() {
            let e = &g.edges[p.aux_edge.0 as usize];
            if !e.aux {
                return Err(Error::InvalidGraph(format!("puncture {i} edge is not auxiliary")));
            }
            let ok = (e.tail == p.u && e.head == p.v) || (e.tail == p.v && e.head == p.u);
            if !ok {
                return Err(Error::InvalidGraph(format!("puncture {i} edge does not join u,v")));
            }
            if !g.faces.is_empty() {
                let f1 = g.side_face[p.aux_edge.0 as usize][0].unwrap();
                let f2 = g.side_face[p.aux_edge.0 as usize][1].unwrap();
                if f1 == f2
                    || g.faces[f1.0 as usize].kind != FaceKind::Disc
                    || g.faces[f2.0 as usize].kind != FaceKind::Disc
                {
                    return Err(Error::InvalidGraph(format!(
                        "puncture {i} edge must split its face into two discs"
                    )));
                }
            }
        }
        Ok(g)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }
    pub fn vertex(&self, v: VertexId) -> &VertexInfo {
        &self.vertices[v.0 as usize]
    }
    pub fn edge(&self, e: EdgeId) -> &EdgeInfo {
        &self.edges[e.0 as usize]
    }
    pub fn face(&self, f: FaceId) -> &FaceInfo {
        &self.faces[f.0 as usize]
    }
    pub fn faces(&self) -> impl Iterator<Item = (FaceId, &FaceInfo)> {
        self.faces.iter().enumerate().map(|(i, f)| (FaceId(i as u32), f))
    }
    pub fn punctures(&self) -> &[Puncture] {
        &self.punctures
    }
    pub fn vertices(&self) -> impl Iterator<Item = (VertexId, &VertexInfo)> {
        self.vertices.iter().enumerate().map(|(i, v)| (VertexId(i as u32), v))
    }
    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &EdgeInfo)> {
        self.edges.iter().enumerate().map(|(i, e)| (EdgeId(i as u32), e))
    }
    pub fn is_boundary(&self, v: VertexId) -> bool {
        self.vertices[v.0 as usize].boundary
    }
    pub fn interior_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertices.len() as u32).map(VertexId).filter(|&v| !self.is_boundary(v))
    }
    pub fn boundary_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertices.len() as u32).map(VertexId).filter(|&v| self.is_boundary(v))
    }

    pub fn tail(&self, de: DirEdge) -> VertexId {
        let e = &self.edges[de.edge.0 as usize];
        if de.forward {
            e.tail
        } else {
            e.head
        }
    }
    pub fn head(&self, de: DirEdge) -> VertexId {
        let e = &self.edges[de.edge.0 as usize];
        if de.forward {
            e.head
        } else {
            e.tail
        }
    }
    pub fn word(&self, de: DirEdge) -> HomotopyWord {
        let e = &self.edges[de.edge.0 as usize];
        if de.forward {
            e.word.clone()
        } else {
            e.word.inverse()
        }
    }

    /// Transition probability of a directed move. Zero if the move is disabled.
    pub fn transition_prob(&self, de: DirEdge) -> f64 {
        let t = self.tail(de);
        let e = &self.edges[de.edge.0 as usize];
        let w = if de.forward { e.w_fwd } else { e.w_rev };
        if w == 0.0 {
            0.0
        } else {
            w / self.out_total[t.0 as usize]
        }
    }

    pub fn out_moves(&self, v: VertexId) -> &[(DirEdge, f64)] {
        &self.out_moves[v.0 as usize]
    }

    pub fn out_weight_total(&self, v: VertexId) -> f64 {
        self.out_total[v.0 as usize]
    }

    /// Face on the left of a directed edge.
    pub fn side_face(&self, de: DirEdge) -> Option<FaceId> {
        self.side_face[de.edge.0 as usize][de.forward as usize]
    }

    pub fn identity(&self) -> HomotopyWord {
        HomotopyWord::identity(self.spec.group)
    }

    /// Product of crossing words along a closed edge walk.
    pub fn loop_class(&self, edges: &[DirEdge]) -> Result<HomotopyWord> {
        if edges.is_empty() {
            return Err(Error::NotClosed);
        }
        for k in 0..edges.len() {
            let next = edges[(k + 1) % edges.len()];
            if self.head(edges[k]) != self.tail(next) {
                return Err(Error::NotClosed);
            }
        }
        let mut w = self.identity();
        for &de in edges {
            w = w.compose(&self.word(de))?;
        }
        Ok(w)
    }

    /// Word accumulated along an (open) edge path.
    pub fn path_word(&self, edges: &[DirEdge]) -> Result<HomotopyWord> {
        let mut w = self.identity();
        for &de in edges {
            w = w.compose(&self.word(de))?;
        }
        Ok(w)
    }

    /// Product of transition probabilities along a set of directed edges.
    /// Edges occurring more than once are counted once.
    pub fn log_q(&self, edges: &[DirEdge]) -> f64 {
        let mut seen = std::collections::HashSet::new();
        let mut s = 0.0;
        for &de in edges {
            if seen.insert(de) {
                s += self.transition_prob(de).ln();
            }
        }
        s
    }

    /// Vertex sequence of an edge path starting at `start`.
    pub fn path_vertices(&self, start: VertexId, edges: &[DirEdge]) -> Vec<VertexId> {
        let mut vs = vec![start];
        for &de in edges {
            debug_assert_eq!(self.tail(de), *vs.last().unwrap());
            vs.push(self.head(de));
        }
        vs
    }

    /// Euclidean position, useful for scale systems and rendering.
    pub fn pos(&self, v: VertexId) -> [f64; 2] {
        self.vertices[v.0 as usize].pos
    }
}
