//! Cutting the surface along a skeleton, the all-annuli test, and the
//! noncontractible cycles of the dual complement.

use crate::error::{Error, Result};
use crate::homotopy::{GroupKind, HomotopyWord};
use crate::surface::{DirEdge, EdgeId, FaceId, FaceKind, SurfaceGraph, VertexId};
use std::collections::{HashMap, HashSet, VecDeque};

/// Branches grown from the puncture-adjacent vertex pairs plus the auxiliary
/// puncture edges. On surfaces without punctures the skeleton is empty.
#[derive(Debug, Clone, Default)]
pub struct Skeleton {
    /// Branch edge paths, in the order they were grown.
    pub branches: Vec<Vec<DirEdge>>,
    pub aux_edges: Vec<EdgeId>,
}

impl Skeleton {
    pub fn edge_set(&self) -> HashSet<EdgeId> {
        let mut s: HashSet<EdgeId> = self.aux_edges.iter().copied().collect();
        for b in &self.branches {
            s.extend(b.iter().map(|de| de.edge));
        }
        s
    }

    pub fn branch_vertices(&self, graph: &SurfaceGraph) -> Vec<Vec<VertexId>> {
        self.branches
            .iter()
            .enumerate()
            .map(|(i, b)| {
                if b.is_empty() {
                    // an empty branch still anchors its start vertex
                    let p = &graph.punctures()[i / 2];
                    vec![if i % 2 == 0 { p.u } else { p.v }]
                } else {
                    graph.path_vertices(graph.tail(b[0]), b)
                }
            })
            .collect()
    }
}

/// One piece of the surface cut along the skeleton (and along the boundary
/// faces), as a closed-up subsurface.
#[derive(Debug, Clone)]
pub struct ComplementComponent {
    pub faces: Vec<FaceId>,
    pub euler_characteristic: i64,
    pub boundary_circles: usize,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }
    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let r = self.find(self.parent[x]);
            self.parent[x] = r;
            r
        } else {
            x
        }
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Group the disc faces across edges that are neither in the skeleton nor on
/// the boundary, and compute each component's Euler characteristic as a
/// closed-up subsurface (skeleton and boundary edges count as cut).
pub fn complement_components(
    graph: &SurfaceGraph,
    skeleton: &Skeleton,
) -> Result<Vec<ComplementComponent>> {
    let cut: HashSet<EdgeId> = skeleton.edge_set();
    for e in &cut {
        if e.0 as usize >= graph.edge_count() {
            return Err(Error::UnknownSkeletonEdge(e.0));
        }
    }

    let nf = graph.face_count();
    if nf == 0 {
        return Err(Error::InvalidGraph("graph has no face structure".into()));
    }
    let disc: Vec<bool> =
        (0..nf).map(|i| graph.face(FaceId(i as u32)).kind == FaceKind::Disc).collect();

    // A side (face, position) is glued when its edge is uncut and the opposite
    // side also belongs to a disc face.
    let glued = |de: DirEdge| -> bool {
        if cut.contains(&de.edge) {
            return false;
        }
        let this = graph.side_face(de).expect("validated map");
        let other = graph.side_face(de.reversed()).expect("validated map");
        disc[this.0 as usize] && disc[other.0 as usize]
    };

    let mut faces_ds = DisjointSet::new(nf);
    for (fi, f) in graph.faces() {
        if !disc[fi.0 as usize] {
            continue;
        }
        for &de in &f.walk {
            if glued(de) {
                let other = graph.side_face(de.reversed()).unwrap();
                faces_ds.union(fi.0 as usize, other.0 as usize);
            }
        }
    }

    let mut groups: HashMap<usize, Vec<FaceId>> = HashMap::new();
    for fi in 0..nf {
        if disc[fi] {
            let r = faces_ds.find(fi);
            groups.entry(r).or_default().push(FaceId(fi as u32));
        }
    }

    let mut comps: Vec<ComplementComponent> = groups
        .into_values()
        .map(|faces| cut_component(graph, &faces, &glued))
        .collect::<Result<_>>()?;
    comps.sort_by_key(|c| c.faces.iter().min().copied());
    Ok(comps)
}

/// Euler characteristic and boundary circles of one face group, computed on
/// the cut complex: glued edges are identified, cut edges stay as two free
/// sides, and vertices are split into corner orbits.
fn cut_component(
    graph: &SurfaceGraph,
    faces: &[FaceId],
    glued: &dyn Fn(DirEdge) -> bool,
) -> Result<ComplementComponent> {
    // corner k of a face sits at the head of walk edge k
    let mut corner_base: HashMap<FaceId, usize> = HashMap::new();
    let mut total_corners = 0usize;
    for &f in faces {
        corner_base.insert(f, total_corners);
        total_corners += graph.face(f).walk.len();
    }
    let corner_id = |f: FaceId, k: usize| -> usize {
        corner_base[&f] + k % graph.face(f).walk.len()
    };
    let mut corners = DisjointSet::new(total_corners);

    let mut glued_edges: HashSet<EdgeId> = HashSet::new();
    let mut free_sides: Vec<(FaceId, usize)> = Vec::new();
    // position of each directed edge inside its face walk
    let mut side_pos: HashMap<DirEdge, (FaceId, usize)> = HashMap::new();
    for &f in faces {
        for (k, &de) in graph.face(f).walk.iter().enumerate() {
            side_pos.insert(de, (f, k));
        }
    }

    for &f in faces {
        let walk = &graph.face(f).walk;
        let n = walk.len();
        for (k, &de) in walk.iter().enumerate() {
            if glued(de) {
                glued_edges.insert(de.edge);
                let (f2, j) = side_pos[&de.reversed()];
                // head corner of de meets the pre-corner of its reverse
                let n2 = graph.face(f2).walk.len();
                corners.union(corner_id(f, k), corner_id(f2, (j + n2 - 1) % n2));
                corners.union(corner_id(f, (k + n - 1) % n), corner_id(f2, j));
            } else {
                free_sides.push((f, k));
            }
        }
    }

    let mut orbits = HashSet::new();
    for c in 0..total_corners {
        orbits.insert(corners.find(c));
    }
    let v = orbits.len() as i64;
    let e = glued_edges.len() as i64 + free_sides.len() as i64;
    let fcount = faces.len() as i64;
    let chi = v - e + fcount;

    // Trace the free sides into boundary circles: from the end corner of a
    // free side, rotate through glued sides until the next free side out.
    let mut next_free: HashMap<(FaceId, usize), (FaceId, usize)> = HashMap::new();
    for &(f, k) in &free_sides {
        let mut cf = f;
        let mut ck = (k + 1) % graph.face(f).walk.len();
        let mut steps = 0usize;
        loop {
            let de = graph.face(cf).walk[ck];
            if !glued(de) {
                next_free.insert((f, k), (cf, ck));
                break;
            }
            let (f2, j) = side_pos[&de.reversed()];
            cf = f2;
            ck = (j + 1) % graph.face(f2).walk.len();
            steps += 1;
            if steps > total_corners + 1 {
                return Err(Error::InvalidGraph("boundary trace failed".into()));
            }
        }
    }
    let mut seen: HashSet<(FaceId, usize)> = HashSet::new();
    let mut circles = 0usize;
    for &s in &free_sides {
        if seen.contains(&s) {
            continue;
        }
        circles += 1;
        let mut cur = s;
        while seen.insert(cur) {
            cur = next_free[&cur];
        }
    }

    let mut fs = faces.to_vec();
    fs.sort();
    Ok(ComplementComponent { faces: fs, euler_characteristic: chi, boundary_circles: circles })
}

/// A skeleton is Temperleyan when every complement component is an annulus,
/// i.e. has Euler characteristic zero.
pub fn is_temperleyan(graph: &SurfaceGraph, skeleton: &Skeleton) -> Result<bool> {
    Ok(complement_components(graph, skeleton)?
        .iter()
        .all(|c| c.euler_characteristic == 0))
}

#[derive(Debug, Clone)]
pub struct DualCycle {
    pub faces: Vec<FaceId>,
    pub class: HomotopyWord,
}

/// Noncontractible cycles left in the dual complement of a sample.
///
/// Dual edges cross the primal edges absent from the sample (auxiliary edges
/// excluded); degree-one dual vertices are peeled until only cycles remain.
/// Every remaining cycle must be noncontractible, otherwise the construction
/// reports a diagnostic error.
pub fn dual_complement_cycles(
    graph: &SurfaceGraph,
    used_edges: &HashSet<EdgeId>,
) -> Result<(usize, Vec<DualCycle>)> {
    if graph.face_count() == 0 {
        return Err(Error::InvalidGraph("graph has no face structure".into()));
    }
    let centers = face_centers(graph);
    // dual edge: (face from, face to, word, primal edge) for each direction
    let mut adj: Vec<Vec<(usize, FaceId, HomotopyWord)>> = vec![Vec::new(); graph.face_count()];
    let mut alive: Vec<bool> = Vec::new();
    let mut ends: Vec<(FaceId, FaceId)> = Vec::new();
    for (eid, e) in graph.edges() {
        if e.aux || used_edges.contains(&eid) {
            continue;
        }
        let f1 = graph
            .side_face(DirEdge::fwd(eid))
            .ok_or_else(|| Error::InvalidGraph("edge missing from rotation system".into()))?;
        let f2 = graph.side_face(DirEdge::rev(eid)).unwrap();
        let w = dual_word(graph, &centers, f1, f2)?;
        let idx = alive.len();
        alive.push(true);
        ends.push((f1, f2));
        adj[f1.0 as usize].push((idx, f2, w.clone()));
        adj[f2.0 as usize].push((idx, f1, w.inverse()));
    }

    let mut degree: Vec<usize> = vec![0; graph.face_count()];
    for (f1, f2) in &ends {
        degree[f1.0 as usize] += 1;
        degree[f2.0 as usize] += 1;
    }
    let mut queue: VecDeque<usize> =
        (0..graph.face_count()).filter(|&f| degree[f] == 1).collect();
    while let Some(f) = queue.pop_front() {
        if degree[f] != 1 {
            continue;
        }
        let Some(&(idx, to, _)) = adj[f].iter().find(|(i, _, _)| alive[*i]) else {
            continue;
        };
        alive[idx] = false;
        degree[f] -= 1;
        degree[to.0 as usize] -= 1;
        if degree[to.0 as usize] == 1 {
            queue.push_back(to.0 as usize);
        }
    }

    // remaining structure must be a disjoint union of cycles
    for f in 0..graph.face_count() {
        if degree[f] != 0 && degree[f] != 2 {
            return Err(Error::InvalidGraph(format!(
                "dual complement 2-core has a vertex of degree {} (face {f})",
                degree[f]
            )));
        }
    }

    let mut visited_edge: Vec<bool> = alive.iter().map(|a| !a).collect();
    let mut cycles = Vec::new();
    for f0 in 0..graph.face_count() {
        if degree[f0] != 2 {
            continue;
        }
        let Some(&(start_idx, _, _)) = adj[f0].iter().find(|(i, _, _)| alive[*i] && !visited_edge[*i])
        else {
            continue;
        };
        let _ = start_idx;
        let mut faces = Vec::new();
        let mut word = graph.identity();
        let mut cur = FaceId(f0 as u32);
        loop {
            faces.push(cur);
            let &(idx, to, ref w) = adj[cur.0 as usize]
                .iter()
                .find(|(i, _, _)| alive[*i] && !visited_edge[*i])
                .expect("degree-2 core");
            visited_edge[idx] = true;
            word = word.compose(w)?;
            cur = to;
            if cur.0 as usize == f0 {
                break;
            }
        }
        cycles.push(DualCycle { faces, class: word });
    }

    if cycles.iter().any(|c| c.class.is_identity()) {
        return Err(Error::ContractibleDualResidue);
    }
    Ok((cycles.len(), cycles))
}

/// Positions of face centers inside the fundamental polygon, produced by
/// unwrapping each face walk from its first vertex.
fn face_centers(graph: &SurfaceGraph) -> Vec<[f64; 2]> {
    let poly = graph.polygon;
    graph
        .faces()
        .map(|(_, f)| {
            let mut p = graph.pos(graph.tail(f.walk[0]));
            let mut sum = [0.0, 0.0];
            let mut n = 0.0;
            for &de in &f.walk {
                sum[0] += p[0];
                sum[1] += p[1];
                n += 1.0;
                let d = edge_displacement(graph, de, poly);
                p[0] += d[0];
                p[1] += d[1];
            }
            let mut c = [sum[0] / n, sum[1] / n];
            if let Some([lx, ly]) = poly {
                c[0] = c[0].rem_euclid(lx);
                c[1] = c[1].rem_euclid(ly);
            }
            c
        })
        .collect()
}

/// Geometric displacement of a directed edge in the universal cover.
fn edge_displacement(graph: &SurfaceGraph, de: DirEdge, poly: Option<[f64; 2]>) -> [f64; 2] {
    let t = graph.pos(graph.tail(de));
    let h = graph.pos(graph.head(de));
    let mut d = [h[0] - t[0], h[1] - t[1]];
    if let Some([lx, ly]) = poly {
        // shift head by the translation that makes the segment short
        d[0] -= lx * (d[0] / lx).round();
        d[1] -= ly * (d[1] / ly).round();
    }
    d
}

/// Word picked up by a dual step between two adjacent face centers: the
/// translation bringing the target center nearest to the source.
fn dual_word(
    graph: &SurfaceGraph,
    centers: &[[f64; 2]],
    from: FaceId,
    to: FaceId,
) -> Result<HomotopyWord> {
    let Some([lx, ly]) = graph.polygon else {
        return Ok(graph.identity());
    };
    let a = centers[from.0 as usize];
    let b = centers[to.0 as usize];
    let kx = ((b[0] - a[0]) / lx).round() as i64;
    let ky = ((b[1] - a[1]) / ly).round() as i64;
    match graph.spec.group {
        GroupKind::TorusZ2 => Ok(HomotopyWord::Torus(-kx, -ky)),
        GroupKind::Free { .. } => {
            // grid geometry keeps dual steps within one seam crossing
            if kx.abs() + ky.abs() > 1 {
                return Err(Error::InvalidGraph(
                    "dual step crosses more than one identified side".into(),
                ));
            }
            let w = match (kx, ky) {
                (0, 0) => return Ok(graph.identity()),
                (1, 0) => HomotopyWord::letter(-1),
                (-1, 0) => HomotopyWord::letter(1),
                (0, 1) => HomotopyWord::letter(-2),
                (0, -1) => HomotopyWord::letter(2),
                _ => unreachable!(),
            };
            Ok(w)
        }
    }
}
