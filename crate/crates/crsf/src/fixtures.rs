//! Built-in graph constructions: wired grids and discs, tori, a one-holed
//! torus, and small special-purpose instances. Faces are traced from an
//! explicit rotation system so the combinatorial-map validation applies to
//! every fixture.

use crate::error::Result;
use crate::homotopy::HomotopyWord;
use crate::surface::{
    DirEdge, EdgeId, EdgeInfo, FaceInfo, FaceKind, Puncture, SurfaceGraph, SurfaceSpec, VertexId,
    VertexInfo,
};
use std::collections::HashMap;

pub struct FixtureBuilder {
    vertices: Vec<VertexInfo>,
    edges: Vec<EdgeInfo>,
    rotations: HashMap<VertexId, Vec<DirEdge>>,
}

impl FixtureBuilder {
    pub fn new() -> Self {
        FixtureBuilder { vertices: Vec::new(), edges: Vec::new(), rotations: HashMap::new() }
    }

    pub fn vertex(&mut self, pos: [f64; 2], boundary: bool) -> VertexId {
        self.vertices.push(VertexInfo { pos, boundary });
        VertexId(self.vertices.len() as u32 - 1)
    }

    pub fn edge(
        &mut self,
        tail: VertexId,
        head: VertexId,
        w_fwd: f64,
        w_rev: f64,
        word: HomotopyWord,
        aux: bool,
    ) -> EdgeId {
        self.edges.push(EdgeInfo { tail, head, w_fwd, w_rev, word, aux });
        EdgeId(self.edges.len() as u32 - 1)
    }

    /// Counterclockwise cyclic order of outgoing directions at a vertex.
    pub fn rotation(&mut self, v: VertexId, order: Vec<DirEdge>) {
        self.rotations.insert(v, order);
    }

    fn trace_faces(&self) -> Vec<FaceInfo> {
        // position of each outgoing direction inside its rotation
        let mut pos: HashMap<DirEdge, usize> = HashMap::new();
        for order in self.rotations.values() {
            for (i, &de) in order.iter().enumerate() {
                pos.insert(de, i);
            }
        }
        let tail = |de: DirEdge| {
            let e = &self.edges[de.edge.0 as usize];
            if de.forward {
                e.tail
            } else {
                e.head
            }
        };
        let head = |de: DirEdge| {
            let e = &self.edges[de.edge.0 as usize];
            if de.forward {
                e.head
            } else {
                e.tail
            }
        };
        // next edge of the face on the left: clockwise successor of the
        // reversed edge around the head vertex
        let next = |de: DirEdge| -> DirEdge {
            let v = head(de);
            let order = &self.rotations[&v];
            let i = pos[&de.reversed()];
            order[(i + order.len() - 1) % order.len()]
        };

        let mut seen: HashMap<DirEdge, bool> = HashMap::new();
        let mut faces = Vec::new();
        for e in 0..self.edges.len() as u32 {
            for d in [DirEdge::fwd(EdgeId(e)), DirEdge::rev(EdgeId(e))] {
                if seen.contains_key(&d) {
                    continue;
                }
                let mut walk = Vec::new();
                let mut cur = d;
                loop {
                    seen.insert(cur, true);
                    walk.push(cur);
                    cur = next(cur);
                    if cur == d {
                        break;
                    }
                }
                let kind = if walk.iter().any(|&de| {
                    self.vertices[tail(de).0 as usize].boundary
                        || self.vertices[head(de).0 as usize].boundary
                }) {
                    FaceKind::Boundary
                } else {
                    FaceKind::Disc
                };
                faces.push(FaceInfo { kind, walk });
            }
        }
        faces
    }

    pub fn finish(
        self,
        spec: SurfaceSpec,
        polygon: Option<[f64; 2]>,
        punctures: Vec<Puncture>,
    ) -> Result<SurfaceGraph> {
        let faces = self.trace_faces();
        SurfaceGraph::build(spec, polygon, self.vertices, self.edges, faces, punctures)
    }

    pub fn finish_no_faces(
        self,
        spec: SurfaceSpec,
        polygon: Option<[f64; 2]>,
    ) -> Result<SurfaceGraph> {
        SurfaceGraph::build(spec, polygon, self.vertices, self.edges, Vec::new(), Vec::new())
    }
}

impl Default for FixtureBuilder {
    fn default() -> Self {
        Self::new()
    }
}

/// The two-interior-vertex chain `L - x - y - R` with wired ends, embedded as
/// an annulus. All transition probabilities are 1/2.
pub fn chain_graph() -> SurfaceGraph {
    let spec = SurfaceSpec::new(0, 2).unwrap();
    let id = HomotopyWord::identity(spec.group);
    let mut b = FixtureBuilder::new();
    let l = b.vertex([0.0, 0.0], true);
    let x = b.vertex([1.0, 0.0], false);
    let y = b.vertex([2.0, 0.0], false);
    let r = b.vertex([3.0, 0.0], true);
    let e0 = b.edge(l, x, 0.0, 1.0, id.clone(), false);
    let e1 = b.edge(x, y, 1.0, 1.0, id.clone(), false);
    let e2 = b.edge(y, r, 1.0, 0.0, id, false);
    b.rotation(l, vec![DirEdge::fwd(e0)]);
    b.rotation(x, vec![DirEdge::fwd(e1), DirEdge::rev(e0)]);
    b.rotation(y, vec![DirEdge::fwd(e2), DirEdge::rev(e1)]);
    b.rotation(r, vec![DirEdge::rev(e2)]);
    b.finish(spec, None, Vec::new()).expect("chain fixture")
}

/// One interior vertex joined to `k >= 2` wired vertices with the given
/// weights. Every branch is a single edge.
pub fn star_graph(weights: &[f64]) -> SurfaceGraph {
    assert!(weights.len() >= 2);
    let spec = SurfaceSpec::new(0, weights.len() as u32).unwrap();
    let id = HomotopyWord::identity(spec.group);
    let mut b = FixtureBuilder::new();
    let x = b.vertex([0.0, 0.0], false);
    let mut rot = Vec::new();
    for (i, &w) in weights.iter().enumerate() {
        let ang = 2.0 * std::f64::consts::PI * i as f64 / weights.len() as f64;
        let v = b.vertex([ang.cos(), ang.sin()], true);
        let e = b.edge(x, v, w, 0.0, id.clone(), false);
        b.rotation(v, vec![DirEdge::rev(e)]);
        rot.push(DirEdge::fwd(e));
    }
    b.rotation(x, rot);
    b.finish_no_faces(spec, None).expect("star fixture")
}

/// n x n grid of interior vertices with a single wired boundary vertex; every
/// missing grid neighbor becomes an edge to the wired vertex. Unit weights.
pub fn wired_grid(n: usize) -> SurfaceGraph {
    assert!(n >= 1);
    let spec = SurfaceSpec::new(0, 1).unwrap();
    let id = HomotopyWord::identity(spec.group);
    let mut b = FixtureBuilder::new();
    let vid = |i: usize, j: usize| VertexId((i + j * n) as u32);
    for j in 0..n {
        for i in 0..n {
            b.vertex([i as f64, j as f64], false);
        }
    }
    let w = b.vertex([n as f64 / 2.0 - 0.5, -2.0], true);

    // grid edges
    let mut east: HashMap<(usize, usize), EdgeId> = HashMap::new();
    let mut north: HashMap<(usize, usize), EdgeId> = HashMap::new();
    for j in 0..n {
        for i in 0..n {
            if i + 1 < n {
                east.insert((i, j), b.edge(vid(i, j), vid(i + 1, j), 1.0, 1.0, id.clone(), false));
            }
            if j + 1 < n {
                north.insert((i, j), b.edge(vid(i, j), vid(i, j + 1), 1.0, 1.0, id.clone(), false));
            }
        }
    }
    // wired edges, one per missing neighbor, keyed by (vertex, direction)
    let mut wired: HashMap<(usize, usize, u8), EdgeId> = HashMap::new();
    for j in 0..n {
        for i in 0..n {
            if i + 1 == n {
                wired.insert((i, j, 0), b.edge(vid(i, j), w, 1.0, 0.0, id.clone(), false));
            }
            if j + 1 == n {
                wired.insert((i, j, 1), b.edge(vid(i, j), w, 1.0, 0.0, id.clone(), false));
            }
            if i == 0 {
                wired.insert((i, j, 2), b.edge(vid(i, j), w, 1.0, 0.0, id.clone(), false));
            }
            if j == 0 {
                wired.insert((i, j, 3), b.edge(vid(i, j), w, 1.0, 0.0, id.clone(), false));
            }
        }
    }
    // rotations: E, N, W, S slots counterclockwise
    for j in 0..n {
        for i in 0..n {
            let slot = |dir: u8| -> DirEdge {
                match dir {
                    0 if i + 1 < n => DirEdge::fwd(east[&(i, j)]),
                    1 if j + 1 < n => DirEdge::fwd(north[&(i, j)]),
                    2 if i > 0 => DirEdge::rev(east[&(i - 1, j)]),
                    3 if j > 0 => DirEdge::rev(north[&(i, j - 1)]),
                    d => DirEdge::fwd(wired[&(i, j, d)]),
                }
            };
            b.rotation(vid(i, j), vec![slot(0), slot(1), slot(2), slot(3)]);
        }
    }
    // wired vertex: attachments counterclockwise around the grid, reversed
    let mut ccw: Vec<DirEdge> = Vec::new();
    for i in 0..n {
        ccw.push(DirEdge::rev(wired[&(i, 0, 3)]));
    }
    for j in 0..n {
        ccw.push(DirEdge::rev(wired[&(n - 1, j, 0)]));
    }
    for i in (0..n).rev() {
        ccw.push(DirEdge::rev(wired[&(i, n - 1, 1)]));
    }
    for j in (0..n).rev() {
        ccw.push(DirEdge::rev(wired[&(0, j, 2)]));
    }
    ccw.reverse();
    b.rotation(w, ccw);
    b.finish(spec, None, Vec::new()).expect("wired grid fixture")
}

/// n x n square-lattice torus with unit weights. For n = 2 the graph has
/// parallel edges; every row and column wrap carries the respective generator.
pub fn torus_grid(n: usize) -> SurfaceGraph {
    torus_grid_weighted(n, |_, _, _| 1.0)
}

/// Torus grid with custom weights: `weight(i, j, dir)` with dir 0 = east edge
/// out of (i,j), 1 = north edge out of (i,j). Both directions of an edge get
/// the same weight.
pub fn torus_grid_weighted(n: usize, weight: impl Fn(usize, usize, u8) -> f64) -> SurfaceGraph {
    assert!(n >= 2);
    let spec = SurfaceSpec::new(1, 0).unwrap();
    let mut b = FixtureBuilder::new();
    let vid = |i: usize, j: usize| VertexId(((i % n) + (j % n) * n) as u32);
    for j in 0..n {
        for i in 0..n {
            b.vertex([i as f64, j as f64], false);
        }
    }
    let mut east: HashMap<(usize, usize), EdgeId> = HashMap::new();
    let mut north: HashMap<(usize, usize), EdgeId> = HashMap::new();
    for j in 0..n {
        for i in 0..n {
            let we = weight(i, j, 0);
            let wn = weight(i, j, 1);
            let ew = if i + 1 == n { HomotopyWord::torus(1, 0) } else { HomotopyWord::torus(0, 0) };
            let nw = if j + 1 == n { HomotopyWord::torus(0, 1) } else { HomotopyWord::torus(0, 0) };
            east.insert((i, j), b.edge(vid(i, j), vid(i + 1, j), we, we, ew, false));
            north.insert((i, j), b.edge(vid(i, j), vid(i, j + 1), wn, wn, nw, false));
        }
    }
    for j in 0..n {
        for i in 0..n {
            b.rotation(
                vid(i, j),
                vec![
                    DirEdge::fwd(east[&(i, j)]),
                    DirEdge::fwd(north[&(i, j)]),
                    DirEdge::rev(east[&((i + n - 1) % n, j)]),
                    DirEdge::rev(north[&(i, (j + n - 1) % n)]),
                ],
            );
        }
    }
    b.finish(spec, Some([n as f64, n as f64]), Vec::new()).expect("torus fixture")
}

/// Torus grid with a wired hole in the seam-crossing face and one puncture.
///
/// The square whose corners wrap both directions is the only face whose
/// boundary word fails to reduce in the free group, so the hole lives there;
/// its four corner vertices are wired to the boundary vertex. The puncture
/// pair is (0,0),(1,0) with the auxiliary edge through the face above them.
pub fn holed_torus(n: usize) -> SurfaceGraph {
    assert!(n >= 3);
    let spec = SurfaceSpec::new(1, 1).unwrap();
    let id = HomotopyWord::identity(spec.group);
    let a = HomotopyWord::letter(1);
    let bw = HomotopyWord::letter(2);
    let mut b = FixtureBuilder::new();
    let vid = |i: usize, j: usize| VertexId(((i % n) + (j % n) * n) as u32);
    for j in 0..n {
        for i in 0..n {
            b.vertex([i as f64, j as f64], false);
        }
    }
    let w = b.vertex([n as f64 - 0.5, n as f64 - 0.5], true);
    let mut east: HashMap<(usize, usize), EdgeId> = HashMap::new();
    let mut north: HashMap<(usize, usize), EdgeId> = HashMap::new();
    for j in 0..n {
        for i in 0..n {
            let ew = if i + 1 == n { a.clone() } else { id.clone() };
            let nw = if j + 1 == n { bw.clone() } else { id.clone() };
            east.insert((i, j), b.edge(vid(i, j), vid(i + 1, j), 1.0, 1.0, ew, false));
            north.insert((i, j), b.edge(vid(i, j), vid(i, j + 1), 1.0, 1.0, nw, false));
        }
    }
    // hole face corners: (n-1,n-1), (0,n-1), (0,0), (n-1,0)
    let hole = [(n - 1, n - 1), (0, n - 1), (0, 0), (n - 1, 0)];
    let mut spoke: HashMap<(usize, usize), EdgeId> = HashMap::new();
    for &(i, j) in &hole {
        spoke.insert((i, j), b.edge(vid(i, j), w, 1.0, 0.0, id.clone(), false));
    }
    // puncture: u = (0,0), v = (1,0), auxiliary edge through the face above
    let u = vid(0, 0);
    let v = vid(1, 0);
    let aux = b.edge(u, v, 0.0, 0.0, id.clone(), true);

    for j in 0..n {
        for i in 0..n {
            let mut rot = vec![
                DirEdge::fwd(east[&(i, j)]),
                DirEdge::fwd(north[&(i, j)]),
                DirEdge::rev(east[&((i + n - 1) % n, j)]),
                DirEdge::rev(north[&(i, (j + n - 1) % n)]),
            ];
            // hole spoke points into the seam-crossing face, i.e. diagonally
            // away from the grid interior at each hole corner
            if let Some(&s) = spoke.get(&(i, j)) {
                let sl = DirEdge::fwd(s);
                match (i, j) {
                    // between W and S slots (toward lower-left copy of the face)
                    (0, 0) => rot.insert(3, sl),
                    // between S and E: lower-right
                    (a2, 0) if a2 == n - 1 => rot.insert(4, sl),
                    // between N and W: upper-left
                    (0, _b2) => rot.insert(2, sl),
                    // between E and N: upper-right
                    _ => rot.insert(1, sl),
                }
            }
            // puncture auxiliary edge lies inside the face above (0,0)-(1,0),
            // leaving u toward the upper-right and v toward the upper-left
            if (i, j) == (0, 0) {
                let p = rot.iter().position(|&d| d == DirEdge::fwd(north[&(0, 0)])).unwrap();
                rot.insert(p, DirEdge::fwd(aux));
            }
            if (i, j) == (1, 0) {
                let p = rot.iter().position(|&d| d == DirEdge::fwd(north[&(1, 0)])).unwrap();
                rot.insert(p + 1, DirEdge::rev(aux));
            }
            b.rotation(vid(i, j), rot);
        }
    }
    // W sits inside the seam-crossing square; counterclockwise around it the
    // corners read lower-left, lower-right, upper-right, upper-left.
    b.rotation(
        w,
        vec![
            DirEdge::rev(spoke[&(n - 1, n - 1)]),
            DirEdge::rev(spoke[&(0, n - 1)]),
            DirEdge::rev(spoke[&(0, 0)]),
            DirEdge::rev(spoke[&(n - 1, 0)]),
        ],
    );
    b.finish(
        spec,
        Some([n as f64, n as f64]),
        vec![Puncture { u, v, aux_edge: aux }],
    )
    .expect("holed torus fixture")
}

/// Ring of `n` vertices on an annulus, each wired to both boundary circles,
/// with one ring edge crossing the identification seam. Unit weights.
pub fn annulus_ring(n: usize) -> SurfaceGraph {
    assert!(n >= 3);
    let spec = SurfaceSpec::new(0, 2).unwrap();
    let id = HomotopyWord::identity(spec.group);
    let a = HomotopyWord::letter(1);
    let mut b = FixtureBuilder::new();
    let mut ring = Vec::new();
    for k in 0..n {
        ring.push(b.vertex([k as f64, 0.5], false));
    }
    let w_in = b.vertex([n as f64 / 2.0, 0.0], true);
    let w_out = b.vertex([n as f64 / 2.0, 1.0], true);
    let mut ring_edges = Vec::new();
    for k in 0..n {
        let word = if k + 1 == n { a.clone() } else { id.clone() };
        ring_edges.push(b.edge(ring[k], ring[(k + 1) % n], 1.0, 1.0, word, false));
    }
    let mut down = Vec::new();
    let mut up = Vec::new();
    for k in 0..n {
        down.push(b.edge(ring[k], w_in, 1.0, 0.0, id.clone(), false));
        up.push(b.edge(ring[k], w_out, 1.0, 0.0, id.clone(), false));
    }
    for k in 0..n {
        b.rotation(
            ring[k],
            vec![
                DirEdge::fwd(ring_edges[k]),
                DirEdge::fwd(up[k]),
                DirEdge::rev(ring_edges[(k + n - 1) % n]),
                DirEdge::fwd(down[k]),
            ],
        );
    }
    b.rotation(w_in, (0..n).map(|k| DirEdge::rev(down[k])).collect());
    b.rotation(w_out, (0..n).rev().map(|k| DirEdge::rev(up[k])).collect());
    b.finish(spec, Some([n as f64, f64::INFINITY]), Vec::new()).expect("annulus fixture")
}

/// Lattice ball wired at its exit layer: all integer points within `radius`
/// of `center` stay interior, every edge leaving the ball is redirected to a
/// single wired vertex. Used by the concentric-scale apparatus; built without
/// a face table.
pub fn disc_ball(center: [f64; 2], radius: f64) -> SurfaceGraph {
    let spec = SurfaceSpec::new(0, 1).unwrap();
    let id = HomotopyWord::identity(spec.group);
    let r_int = radius.ceil() as i64 + 1;
    let inside = |i: i64, j: i64| {
        let dx = i as f64 - center[0];
        let dy = j as f64 - center[1];
        (dx * dx + dy * dy).sqrt() <= radius
    };
    let mut b = FixtureBuilder::new();
    let mut ids: HashMap<(i64, i64), VertexId> = HashMap::new();
    for j in -r_int..=r_int {
        for i in -r_int..=r_int {
            if inside(i, j) {
                ids.insert((i, j), b.vertex([i as f64, j as f64], false));
            }
        }
    }
    let w = b.vertex([center[0], center[1] - radius - 2.0], true);
    let mut keys: Vec<(i64, i64)> = ids.keys().copied().collect();
    keys.sort();
    for &(i, j) in &keys {
        let v = ids[&(i, j)];
        for (di, dj) in [(1i64, 0i64), (0, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if let Some(&u) = ids.get(&(ni, nj)) {
                b.edge(v, u, 1.0, 1.0, id.clone(), false);
            } else {
                b.edge(v, w, 1.0, 0.0, id.clone(), false);
            }
        }
        for (di, dj) in [(-1i64, 0i64), (0, -1)] {
            if ids.get(&(i + di, j + dj)).is_none() {
                b.edge(v, w, 1.0, 0.0, id.clone(), false);
            }
        }
    }
    b.finish_no_faces(spec, None).expect("disc ball fixture")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_validate() {
        chain_graph();
        star_graph(&[1.0, 2.0, 3.0]);
        for n in 1..=5 {
            wired_grid(n);
        }
        for n in 2..=4 {
            torus_grid(n);
        }
        holed_torus(3);
        holed_torus(4);
        annulus_ring(4);
        disc_ball([0.5, 0.5], 3.2);
    }

    #[test]
    fn chain_transitions() {
        let g = chain_graph();
        let x = VertexId(1);
        let moves = g.out_moves(x);
        assert_eq!(moves.len(), 2);
        for &(_, p) in moves {
            assert!((p - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn torus_face_words_are_trivial() {
        let g = torus_grid(3);
        assert_eq!(g.face_count(), 9);
        for (_, f) in g.faces() {
            assert!(g.loop_class(&f.walk).unwrap().is_identity());
        }
    }

    #[test]
    fn holed_torus_counts() {
        let g = holed_torus(3);
        // 9 grid vertices + wired; 18 grid edges + 4 spokes + 1 aux
        assert_eq!(g.vertex_count(), 10);
        assert_eq!(g.edge_count(), 23);
        assert_eq!(g.spec.euler_characteristic(), -1);
        assert_eq!(g.punctures().len(), 1);
    }
}
