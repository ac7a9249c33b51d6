//! Concentric-scale apparatus for a pair of disjoint loop-erased paths on a
//! wired disc: the unnormalized measures over truncated pairs, their
//! marginals, the h-transform, the induced one-scale Markov chain, and the
//! separation predicates. Everything is evaluated by exact summation.

use crate::error::{Error, Result};
use crate::exactdist::ray_crossing;
use crate::linalg::{log_det_i_minus, spectral_bound, GreenTracker};
use crate::loopmeasure::{marginal_initial, KillMode, MassEngine};
use crate::surface::{DirEdge, SurfaceGraph, VertexId};
use nalgebra::{Complex, DMatrix};
use std::collections::{HashMap, HashSet};

/// Nested balls B_n = B(origin, 2^n delta) around a marked origin, with the
/// pair of neighboring start vertices. The graph must be wired so that
/// leaving B_N means hitting the boundary vertex.
pub struct ScaleSystem<'g> {
    pub graph: &'g SurfaceGraph,
    pub origin: [f64; 2],
    pub delta: f64,
    pub n_max: u32,
    pub starts: (VertexId, VertexId),
    pub pair_cap: usize,
}

impl<'g> ScaleSystem<'g> {
    pub fn new(
        graph: &'g SurfaceGraph,
        origin: [f64; 2],
        delta: f64,
        n_max: u32,
        starts: (VertexId, VertexId),
    ) -> Result<ScaleSystem<'g>> {
        let sys = ScaleSystem { graph, origin, delta, n_max, starts, pair_cap: 4_000_000 };
        // B_N must lie inside the wired domain: every interior vertex outside
        // B_N would break the identification of scale-N exits with absorption
        for v in graph.interior_vertices() {
            if !sys.in_ball(v, n_max) {
                return Err(Error::InvalidGraph(
                    "interior vertex outside the outermost ball".into(),
                ));
            }
        }
        Ok(sys)
    }

    pub fn radius(&self, n: f64) -> f64 {
        self.delta * 2f64.powf(n)
    }

    pub fn dist_origin(&self, v: VertexId) -> f64 {
        let p = self.graph.pos(v);
        ((p[0] - self.origin[0]).powi(2) + (p[1] - self.origin[1]).powi(2)).sqrt()
    }

    pub fn in_ball(&self, v: VertexId, n: u32) -> bool {
        self.dist_origin(v) <= self.radius(n as f64)
    }

    /// Interior vertices of B_n.
    pub fn ball_domain(&self, n: u32) -> HashSet<VertexId> {
        self.graph.interior_vertices().filter(|&v| self.in_ball(v, n)).collect()
    }
}

/// A pair of edge paths from the two marked starts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PathPair {
    pub edges1: Vec<DirEdge>,
    pub edges2: Vec<DirEdge>,
}

impl PathPair {
    pub fn vertices(&self, sys: &ScaleSystem) -> (Vec<VertexId>, Vec<VertexId>) {
        (
            sys.graph.path_vertices(sys.starts.0, &self.edges1),
            sys.graph.path_vertices(sys.starts.1, &self.edges2),
        )
    }

    pub fn is_disjoint(&self, sys: &ScaleSystem) -> bool {
        let (v1, v2) = self.vertices(sys);
        let s1: HashSet<VertexId> = v1.into_iter().collect();
        v2.iter().all(|v| !s1.contains(v))
    }

    /// Membership in the scale-n state space: both paths self-avoiding,
    /// stopped exactly at their first vertex outside B_n, mutually disjoint.
    pub fn in_scale_space(&self, sys: &ScaleSystem, n: u32) -> bool {
        if !self.is_disjoint(sys) {
            return false;
        }
        let (v1, v2) = self.vertices(sys);
        for vs in [&v1, &v2] {
            if vs.len() < 2 {
                return false;
            }
            let inner = &vs[..vs.len() - 1];
            if !inner.iter().all(|&v| sys.in_ball(v, n)) {
                return false;
            }
            if sys.in_ball(*vs.last().unwrap(), n) && !sys.graph.is_boundary(*vs.last().unwrap())
            {
                return false;
            }
            let set: HashSet<VertexId> = vs.iter().copied().collect();
            if set.len() != vs.len() {
                return false;
            }
        }
        true
    }

    /// Truncate both paths at their first exit of B_n.
    pub fn truncate(&self, sys: &ScaleSystem, n: u32) -> Result<PathPair> {
        let cut = |start: VertexId, edges: &[DirEdge]| -> Result<Vec<DirEdge>> {
            let vs = sys.graph.path_vertices(start, edges);
            for (i, &v) in vs.iter().enumerate() {
                if !sys.in_ball(v, n) || sys.graph.is_boundary(v) {
                    return Ok(edges[..i].to_vec());
                }
            }
            Err(Error::NeverExits)
        };
        Ok(PathPair {
            edges1: cut(sys.starts.0, &self.edges1)?,
            edges2: cut(sys.starts.1, &self.edges2)?,
        })
    }
}

/// Three-piece split of one path: edges up to the first exit of B_m, the
/// middle, and the edges after the last visit to B_n.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Per path: (first-exit edge index, last-visit edge index).
    pub splits: [(usize, usize); 2],
}

pub fn decompose(sys: &ScaleSystem, pair: &PathPair, m: u32, n: u32) -> Result<Decomposition> {
    let split_one = |start: VertexId, edges: &[DirEdge]| -> Result<(usize, usize)> {
        let vs = sys.graph.path_vertices(start, edges);
        let first_exit = vs
            .iter()
            .position(|&v| !sys.in_ball(v, m))
            .ok_or(Error::NeverExits)?;
        let last_visit = vs
            .iter()
            .rposition(|&v| sys.in_ball(v, n))
            .map(|i| i + 1)
            .unwrap_or(0);
        // edge ranges: [0, first_exit), [first_exit, last_visit), [last_visit, ..)
        Ok((first_exit, last_visit.max(first_exit)))
    };
    Ok(Decomposition {
        splits: [
            split_one(sys.starts.0, &pair.edges1)?,
            split_one(sys.starts.1, &pair.edges2)?,
        ],
    })
}

/// Piece accessors; recomposition is the concatenation of the three ranges.
pub fn pieces<'a>(
    pair: &'a PathPair,
    d: &Decomposition,
) -> ([&'a [DirEdge]; 2], [&'a [DirEdge]; 2], [&'a [DirEdge]; 2]) {
    let (a1, b1) = d.splits[0];
    let (a2, b2) = d.splits[1];
    (
        [&pair.edges1[..a1], &pair.edges2[..a2]],
        [&pair.edges1[a1..b1], &pair.edges2[a2..b2]],
        [&pair.edges1[b1..], &pair.edges2[b2..]],
    )
}

/// Mass of loops inside B_m with nonzero winding about the origin, with a
/// certified error below `tol`. Fourier average of twisted log-determinants:
/// the全 mass minus the zero-winding part recovered from R equally spaced
/// phases, the aliasing error bounded through the minimal winding length.
pub fn winding_mass_nonzero(sys: &ScaleSystem, m: u32, tol: f64) -> Result<f64> {
    let domain = sys.ball_domain(m);
    let verts: Vec<VertexId> = {
        let mut v: Vec<VertexId> = domain.iter().copied().collect();
        v.sort();
        v
    };
    let idx: HashMap<VertexId, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let nv = verts.len();
    if nv == 0 {
        return Ok(0.0);
    }
    // transitions and cut crossings inside the ball
    let mut rows: Vec<Vec<(f64, u32)>> = vec![Vec::new(); nv];
    let mut crossings: Vec<Vec<i64>> = vec![Vec::new(); nv];
    for (i, &v) in verts.iter().enumerate() {
        for &(de, p) in sys.graph.out_moves(v) {
            if let Some(&j) = idx.get(&sys.graph.head(de)) {
                rows[i].push((p, j as u32));
                crossings[i].push(ray_crossing(
                    sys.origin,
                    sys.graph.pos(v),
                    sys.graph.pos(sys.graph.head(de)),
                ));
            }
        }
    }
    let beta = spectral_bound(&rows, 64);
    if beta >= 1.0 {
        return Err(Error::InvalidGraph("ball domain admits no killing".into()));
    }
    let g0 = minimal_winding_length(&rows, &crossings)?;
    let Some(g0) = g0 else {
        // no winding loop exists at all within the ball
        return Ok(0.0);
    };
    // choose the number of phases so aliasing is certifiably below tol
    let mut r_nodes = 4usize;
    let alias = |r: usize| -> f64 {
        let len = (g0 * r) as f64;
        2.0 * nv as f64 / len * beta.powf(len) / (1.0 - beta)
    };
    while alias(r_nodes) > tol && r_nodes < 1 << 20 {
        r_nodes *= 2;
    }

    let mut q0 = DMatrix::zeros(nv, nv);
    for (i, row) in rows.iter().enumerate() {
        for &(p, j) in row {
            q0[(i, j as usize)] += p;
        }
    }
    let total = -{
        let qc = q0.map(|x| Complex::new(x, 0.0));
        log_det_i_minus(&qc).re
    };
    let mut zero_part = 0.0;
    for r in 0..r_nodes {
        let theta = 2.0 * std::f64::consts::PI * r as f64 / r_nodes as f64;
        let mut q = DMatrix::<Complex<f64>>::zeros(nv, nv);
        for (i, row) in rows.iter().enumerate() {
            for (k, &(p, j)) in row.iter().enumerate() {
                let c = crossings[i][k] as f64;
                let phase = Complex::new(0.0, theta * c).exp();
                q[(i, j as usize)] += phase * p;
            }
        }
        zero_part += -log_det_i_minus(&q).re;
    }
    zero_part /= r_nodes as f64;
    Ok((total - zero_part).max(0.0))
}

/// Length of the shortest closed walk with nonzero net crossing, found by a
/// search on the cut cover with the offset band wide enough to certify the
/// minimum.
fn minimal_winding_length(
    rows: &[Vec<(f64, u32)>],
    crossings: &[Vec<i64>],
) -> Result<Option<usize>> {
    const K: i64 = 32;
    let nv = rows.len();
    let mut best: Option<usize> = None;
    for s in 0..nv {
        // BFS over (vertex, offset)
        let mut dist: HashMap<(usize, i64), usize> = HashMap::new();
        let mut queue = std::collections::VecDeque::new();
        dist.insert((s, 0), 0);
        queue.push_back((s, 0i64));
        while let Some((v, c)) = queue.pop_front() {
            let d = dist[&(v, c)];
            if let Some(b) = best {
                if d + 1 >= b {
                    continue;
                }
            }
            for (k, &(_, j)) in rows[v].iter().enumerate() {
                let c2 = c + crossings[v][k];
                if c2.abs() > K {
                    continue;
                }
                let j = j as usize;
                if j == s && c2 != 0 {
                    let cand = d + 1;
                    if best.map_or(true, |b| cand < b) {
                        best = Some(cand);
                    }
                    continue;
                }
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry((j, c2)) {
                    e.insert(d + 1);
                    queue.push_back((j, c2));
                }
            }
        }
    }
    if let Some(b) = best {
        if b as i64 >= K {
            return Err(Error::InvalidGraph("winding girth exceeds the certified band".into()));
        }
    }
    Ok(best)
}

/// log of the unnormalized scale-m measure: the independent truncated-pair
/// law, reweighted by minus the mass of non-surrounding loops in B_m meeting
/// both paths. Returns None for pairs outside the scale-m space.
pub fn log_lambda_m(sys: &ScaleSystem, pair: &PathPair, m: u32) -> Result<Option<f64>> {
    if !pair.in_scale_space(sys, m) {
        return Ok(None);
    }
    let (v1, v2) = pair.vertices(sys);
    let mu1 = marginal_initial(sys.graph, sys.starts.0, &pair.edges1, KillMode::Exit)?;
    let mu2 = marginal_initial(sys.graph, sys.starts.1, &pair.edges2, KillMode::Exit)?;
    let domain = sys.ball_domain(m);
    let mut engine = MassEngine::new(sys.graph, KillMode::Exit);
    let m1 = engine.log_mass_hitting(&domain, &v1)?;
    let m2 = engine.log_mass_hitting(&domain, &v2)?;
    let mut joint = v1.clone();
    joint.extend_from_slice(&v2);
    let m12 = engine.log_mass_hitting(&domain, &joint)?;
    let hit_both = m1 + m2 - m12;
    let w = winding_mass_nonzero(sys, m, 1e-12)?;
    Ok(Some(mu1.ln() + mu2.ln() - hit_both + w))
}

/// Enumerate every full pair (both paths run to the wired boundary)
/// extending the given prefix pair, reporting log lambda_N for each.
pub fn for_each_full_pair<F: FnMut(&PathPair, f64)>(
    sys: &ScaleSystem,
    prefix: &PathPair,
    w_n: f64,
    mut f: F,
) -> Result<()> {
    let graph = sys.graph;
    let interior: Vec<VertexId> = graph.interior_vertices().collect();
    let n = graph.vertex_count();
    let idx: HashMap<VertexId, usize> = (0..n).map(|i| (VertexId(i as u32), i)).collect();
    let mut q = DMatrix::zeros(n, n);
    for &v in &interior {
        for &(de, p) in graph.out_moves(v) {
            let h = graph.head(de);
            if !graph.is_boundary(h) {
                q[(idx[&v], idx[&h])] += p;
            }
        }
    }
    let mut active = vec![false; n];
    for &v in &interior {
        active[idx[&v]] = true;
    }
    let tracker = GreenTracker::new(&q, active).ok_or(Error::ZeroDenominator("tracker"))?;

    let mut nodes = 0usize;

    // replay a fixed prefix path through the tracker, accumulating logs
    fn absorb_prefix(
        graph: &SurfaceGraph,
        tracker: &mut GreenTracker,
        start: VertexId,
        edges: &[DirEdge],
        log_acc: &mut f64,
    ) -> Result<()> {
        let vs = graph.path_vertices(start, edges);
        for (i, &v) in vs.iter().enumerate() {
            if graph.is_boundary(v) {
                break;
            }
            if !tracker.is_active(v.0 as usize) {
                return Err(Error::IncompatiblePaths("prefix revisits a vertex".into()));
            }
            *log_acc += tracker.green_diag(v.0 as usize).ln();
            tracker.remove(v.0 as usize);
            if i < edges.len() {
                *log_acc += graph.transition_prob(edges[i]).ln();
            }
        }
        Ok(())
    }

    // depth-first extension of path 2 once path 1 is complete
    #[allow(clippy::too_many_arguments)]
    fn extend2<F: FnMut(&PathPair, f64)>(
        sys: &ScaleSystem,
        tracker: &GreenTracker,
        pair: &mut PathPair,
        tip: VertexId,
        log_acc: f64,
        w_n: f64,
        nodes: &mut usize,
        f: &mut F,
    ) -> Result<()> {
        *nodes += 1;
        if *nodes > sys.pair_cap {
            return Err(Error::EnumerationCapExceeded { cap: sys.pair_cap });
        }
        let graph = sys.graph;
        for &(de, p) in graph.out_moves(tip) {
            let h = graph.head(de);
            if graph.is_boundary(h) {
                pair.edges2.push(de);
                f(pair, log_acc + p.ln() + w_n);
                pair.edges2.pop();
                continue;
            }
            if !tracker.is_active(h.0 as usize) {
                continue;
            }
            let mut t2 = tracker.clone();
            let mut acc = log_acc + p.ln() + t2.green_diag(h.0 as usize).ln();
            t2.remove(h.0 as usize);
            let _ = &mut acc;
            pair.edges2.push(de);
            extend2(sys, &t2, pair, h, acc, w_n, nodes, f)?;
            pair.edges2.pop();
        }
        Ok(())
    }

    // depth-first extension of path 1, then hand off to path 2
    #[allow(clippy::too_many_arguments)]
    fn extend1<F: FnMut(&PathPair, f64)>(
        sys: &ScaleSystem,
        tracker: &GreenTracker,
        pair: &mut PathPair,
        tip: VertexId,
        log_acc: f64,
        prefix2: &[DirEdge],
        w_n: f64,
        nodes: &mut usize,
        f: &mut F,
    ) -> Result<()> {
        *nodes += 1;
        if *nodes > sys.pair_cap {
            return Err(Error::EnumerationCapExceeded { cap: sys.pair_cap });
        }
        let graph = sys.graph;
        for &(de, p) in graph.out_moves(tip) {
            let h = graph.head(de);
            pair.edges1.push(de);
            if graph.is_boundary(h) {
                // path 1 complete: absorb path 2's prefix, then extend it
                let mut t2 = tracker.clone();
                let mut acc = log_acc + p.ln();
                match absorb_prefix(graph, &mut t2, sys.starts.1, prefix2, &mut acc) {
                    Ok(()) => {
                        let v2 = graph.path_vertices(sys.starts.1, prefix2);
                        let tip2 = *v2.last().unwrap();
                        extend2(sys, &t2, pair, tip2, acc, w_n, nodes, f)?;
                    }
                    Err(Error::IncompatiblePaths(_)) => {}
                    Err(e) => {
                        pair.edges1.pop();
                        return Err(e);
                    }
                }
            } else if tracker.is_active(h.0 as usize) {
                let mut t2 = tracker.clone();
                let acc = log_acc + p.ln() + t2.green_diag(h.0 as usize).ln();
                t2.remove(h.0 as usize);
                extend1(sys, &t2, pair, h, acc, prefix2, w_n, nodes, f)?;
            }
            pair.edges1.pop();
        }
        Ok(())
    }

    // absorb path 1's prefix and run
    let mut t0 = tracker;
    let mut acc = 0.0;
    let v1 = graph.path_vertices(sys.starts.0, &prefix.edges1);
    // remove prefix-1 vertices, keep logs; prefix may already end on the boundary
    absorb_prefix(graph, &mut t0, sys.starts.0, &prefix.edges1, &mut acc)?;
    let mut pair = prefix.clone();
    let tip1 = *v1.last().unwrap();
    if graph.is_boundary(tip1) {
        let mut t2 = t0.clone();
        match absorb_prefix(graph, &mut t2, sys.starts.1, &prefix.edges2, &mut acc) {
            Ok(()) => {
                let v2 = graph.path_vertices(sys.starts.1, &prefix.edges2);
                let tip2 = *v2.last().unwrap();
                if graph.is_boundary(tip2) {
                    f(&pair, acc + w_n);
                } else {
                    extend2(sys, &t2, &mut pair, tip2, acc, w_n, &mut nodes, &mut f)?;
                }
            }
            Err(Error::IncompatiblePaths(_)) => {}
            Err(e) => return Err(e),
        }
    } else {
        extend1(sys, &t0, &mut pair, tip1, acc, &prefix.edges2, w_n, &mut nodes, &mut f)?;
    }
    Ok(())
}

/// Marginal of the scale-n measure on a coarser pair: the sum of lambda_n
/// over all scale-n extensions.
pub fn lambda_marginal(sys: &ScaleSystem, n: u32, pair: &PathPair) -> Result<f64> {
    if n == sys.n_max {
        let w_n = winding_mass_nonzero(sys, n, 1e-12)?;
        let mut total = 0.0;
        for_each_full_pair(sys, pair, w_n, |_, log_l| total += log_l.exp())?;
        return Ok(total);
    }
    let mut total = 0.0;
    for ext in enumerate_scale_pairs(sys, n, Some(pair))? {
        if let Some(l) = log_lambda_m(sys, &ext, n)? {
            total += l.exp();
        }
    }
    Ok(total)
}

/// h-transform value: lambda_N marginal over lambda_m, measuring the residual
/// cost of the disjointness constraint beyond scale m.
pub fn h_value(sys: &ScaleSystem, pair: &PathPair, m: u32) -> Result<f64> {
    let lm = log_lambda_m(sys, pair, m)?
        .ok_or_else(|| Error::IncompatiblePaths("pair not in the scale space".into()))?;
    let ln_marg = lambda_marginal(sys, sys.n_max, pair)?;
    if ln_marg == 0.0 {
        return Err(Error::ZeroDenominator("lambda marginal"));
    }
    Ok(ln_marg / lm.exp())
}

/// Transition probability of the scale chain from a scale-m pair to a
/// scale-(m+1) extension: the lambda ratio times the h ratio.
pub fn transition_prob(
    sys: &ScaleSystem,
    pair_m: &PathPair,
    pair_next: &PathPair,
) -> Result<f64> {
    let m = scale_of(sys, pair_m)?;
    if scale_of(sys, pair_next)? != m + 1 {
        return Err(Error::IncompatiblePaths("not a one-scale extension".into()));
    }
    if pair_next.edges1[..pair_m.edges1.len()] != pair_m.edges1
        || pair_next.edges2[..pair_m.edges2.len()] != pair_m.edges2
    {
        return Err(Error::IncompatiblePaths("pair does not extend the state".into()));
    }
    let lm = log_lambda_m(sys, pair_m, m)?
        .ok_or_else(|| Error::IncompatiblePaths("state not in scale space".into()))?;
    let ln = log_lambda_m(sys, pair_next, m + 1)?
        .ok_or_else(|| Error::IncompatiblePaths("extension not in scale space".into()))?;
    let hm = h_value(sys, pair_m, m)?;
    let hn = h_value(sys, pair_next, m + 1)?;
    if hm == 0.0 {
        return Err(Error::ZeroDenominator("h value"));
    }
    Ok((ln - lm).exp() * hn / hm)
}

/// Smallest n with the pair in the scale-n space.
pub fn scale_of(sys: &ScaleSystem, pair: &PathPair) -> Result<u32> {
    for n in 1..=sys.n_max {
        if pair.in_scale_space(sys, n) {
            return Ok(n);
        }
    }
    Err(Error::IncompatiblePaths("pair fits no scale".into()))
}

/// All disjoint pairs truncated at their first exit of B_n, optionally
/// extending a given prefix pair.
pub fn enumerate_scale_pairs(
    sys: &ScaleSystem,
    n: u32,
    prefix: Option<&PathPair>,
) -> Result<Vec<PathPair>> {
    let graph = sys.graph;
    let mut out = Vec::new();
    let mut nodes = 0usize;

    // extend one path until it exits B_n
    fn extend_path(
        sys: &ScaleSystem,
        n: u32,
        start: VertexId,
        edges: &mut Vec<DirEdge>,
        blocked: &HashSet<VertexId>,
        nodes: &mut usize,
        out: &mut Vec<Vec<DirEdge>>,
    ) -> Result<()> {
        *nodes += 1;
        if *nodes > sys.pair_cap {
            return Err(Error::EnumerationCapExceeded { cap: sys.pair_cap });
        }
        let graph = sys.graph;
        let vs = graph.path_vertices(start, edges);
        let tip = *vs.last().unwrap();
        if !sys.in_ball(tip, n) || graph.is_boundary(tip) {
            out.push(edges.clone());
            return Ok(());
        }
        for &(de, _) in graph.out_moves(tip) {
            let h = graph.head(de);
            if blocked.contains(&h) || vs.contains(&h) {
                continue;
            }
            edges.push(de);
            extend_path(sys, n, start, edges, blocked, nodes, out)?;
            edges.pop();
        }
        Ok(())
    }

    let (p1, p2) = match prefix {
        Some(p) => (p.edges1.clone(), p.edges2.clone()),
        None => (Vec::new(), Vec::new()),
    };
    let mut firsts = Vec::new();
    {
        let blocked: HashSet<VertexId> =
            graph.path_vertices(sys.starts.1, &p2).into_iter().collect();
        let mut e1 = p1.clone();
        extend_path(sys, n, sys.starts.0, &mut e1, &blocked, &mut nodes, &mut firsts)?;
    }
    for e1 in firsts {
        let blocked: HashSet<VertexId> =
            graph.path_vertices(sys.starts.0, &e1).into_iter().collect();
        let mut seconds = Vec::new();
        let mut e2 = p2.clone();
        extend_path(sys, n, sys.starts.1, &mut e2, &blocked, &mut nodes, &mut seconds)?;
        for e2 in seconds {
            let pair = PathPair { edges1: e1.clone(), edges2: e2.clone() };
            if pair.in_scale_space(sys, n) {
                out.push(pair);
            }
        }
    }
    Ok(out)
}

/// Partition function of the scale-n measure.
pub fn partition_function(sys: &ScaleSystem, n: u32) -> Result<f64> {
    if n == sys.n_max {
        let w_n = winding_mass_nonzero(sys, n, 1e-12)?;
        let mut total = 0.0;
        let empty = PathPair { edges1: Vec::new(), edges2: Vec::new() };
        for_each_full_pair(sys, &empty, w_n, |pair, log_l| {
            // only disjoint pairs belong to the measure; the enumeration
            // already guarantees this by removing visited vertices
            let _ = pair;
            total += log_l.exp();
        })?;
        return Ok(total);
    }
    let mut total = 0.0;
    for pair in enumerate_scale_pairs(sys, n, None)? {
        if let Some(l) = log_lambda_m(sys, &pair, n)? {
            total += l.exp();
        }
    }
    Ok(total)
}

/// Scale constants for the separation predicates. The in-scale constant is
/// stated in two different forms in different places, so it is a parameter.
#[derive(Debug, Clone, Copy)]
pub struct SepParams {
    /// Required separation at scale n in units of 2^n delta.
    pub c_sep: f64,
    /// Inner radius of the test annulus, as an exponent offset below n.
    pub inner_offset: f64,
    /// Separation for the suffix predicate in units of 2^n delta.
    pub c_dot: f64,
    /// Cross-piece separation in units of 2^m delta.
    pub c_mid: f64,
}

impl Default for SepParams {
    fn default() -> Self {
        SepParams { c_sep: 0.125, inner_offset: 0.5, c_dot: 0.5, c_mid: 0.25 }
    }
}

fn min_distance(graph: &SurfaceGraph, a: &[VertexId], b: &[VertexId]) -> f64 {
    let mut best = f64::INFINITY;
    for &u in a {
        for &v in b {
            let pu = graph.pos(u);
            let pv = graph.pos(v);
            let d = ((pu[0] - pv[0]).powi(2) + (pu[1] - pv[1]).powi(2)).sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Distance of the two paths restricted to the annulus below scale n.
pub fn sep_n(sys: &ScaleSystem, pair: &PathPair, n: u32, params: &SepParams) -> bool {
    let (v1, v2) = pair.vertices(sys);
    let lo = sys.radius(n as f64 - params.inner_offset);
    let hi = sys.radius(n as f64);
    let restrict = |vs: &[VertexId]| -> Vec<VertexId> {
        vs.iter()
            .copied()
            .filter(|&v| {
                let d = sys.dist_origin(v);
                d > lo && d <= hi
            })
            .collect()
    };
    min_distance(sys.graph, &restrict(&v1), &restrict(&v2)) >= params.c_sep * sys.radius(n as f64)
}

/// Separation of the suffix pieces just outside scale n.
pub fn dot_sep(sys: &ScaleSystem, suffixes: (&[VertexId], &[VertexId]), n: u32, params: &SepParams) -> bool {
    let lo = sys.radius(n as f64);
    let hi = sys.radius(n as f64 + 0.5);
    let restrict = |vs: &[VertexId]| -> Vec<VertexId> {
        vs.iter()
            .copied()
            .filter(|&v| {
                let d = sys.dist_origin(v);
                d > lo && d <= hi
            })
            .collect()
    };
    min_distance(sys.graph, &restrict(suffixes.0), &restrict(suffixes.1))
        >= params.c_dot * sys.radius(n as f64)
}

/// The three-region predicate on a full pair: separated before m, separated
/// after n, middle confined to the scale annulus and away from the other path.
pub fn sep_mn(
    sys: &ScaleSystem,
    pair: &PathPair,
    m: u32,
    n: u32,
    params: &SepParams,
) -> Result<bool> {
    let d = decompose(sys, pair, m, n)?;
    let (v1, v2) = pair.vertices(sys);
    let (a1, b1) = d.splits[0];
    let (a2, b2) = d.splits[1];
    // middle pieces confined to the annulus A(2^{m-1}, 2^{n+1})
    let lo = sys.radius(m as f64 - 1.0);
    let hi = sys.radius(n as f64 + 1.0);
    let mid1 = &v1[a1..=b1.min(v1.len() - 1)];
    let mid2 = &v2[a2..=b2.min(v2.len() - 1)];
    for &v in mid1.iter().chain(mid2.iter()) {
        let r = sys.dist_origin(v);
        if r < lo || r > hi {
            return Ok(false);
        }
    }
    let trunc = pair.truncate(sys, m)?;
    if !sep_n(sys, &trunc, m, params) {
        return Ok(false);
    }
    if !dot_sep(sys, (&v1[b1..], &v2[b2..]), n, params) {
        return Ok(false);
    }
    let c = params.c_mid * sys.radius(m as f64);
    if min_distance(sys.graph, mid1, &v2) < c || min_distance(sys.graph, mid2, &v1) < c {
        return Ok(false);
    }
    Ok(true)
}
