//! The rooted loop measure and everything computed from it: Green values with
//! either kill rule, masses of loops hitting a path, exact branch densities,
//! pair factorization, marginal identities, and a Poisson loop-soup sampler.
//!
//! Masses of loop classes are evaluated through products of Green values over
//! shrinking domains; the independent length-truncated sums live in
//! [`crate::exactdist`].

use crate::error::{Error, Result};
use crate::exactdist::{
    exact_branch_law, loop_mass_enumerated, Branch, BranchEnd, LoopEnumSpec, SapChain, SapOptions,
};
use crate::linalg::{green_matrix, GreenTracker};
use crate::surface::{is_temperleyan, DirEdge, Skeleton, SurfaceGraph, VertexId};
use crate::walk::LoopRecord;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::collections::{HashMap, HashSet};

/// How a loop-measure domain kills the walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KillMode {
    /// Killed on leaving the allowed set.
    Exit,
    /// Killed on leaving the allowed set or closing a noncontractible loop.
    ExitOrNoncontractible,
}

/// Restriction of the loop measure: loops confined to `allowed` under the
/// given kill rule.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub allowed: HashSet<VertexId>,
    pub kill: KillMode,
}

impl DomainSpec {
    /// All interior vertices.
    pub fn interior(graph: &SurfaceGraph, kill: KillMode) -> Self {
        DomainSpec { allowed: graph.interior_vertices().collect(), kill }
    }
    pub fn without(&self, removed: &[VertexId]) -> Self {
        let mut allowed = self.allowed.clone();
        for v in removed {
            allowed.remove(v);
        }
        DomainSpec { allowed, kill: self.kill }
    }
}

/// log of the rooted mass q(loop)/|loop|.
pub fn rooted_loop_mass(graph: &SurfaceGraph, edges: &[DirEdge]) -> Result<f64> {
    if edges.is_empty() {
        return Err(Error::NotClosed);
    }
    graph.loop_class(edges)?; // validates closure
    let log_q: f64 = edges.iter().map(|&de| graph.transition_prob(de).ln()).sum();
    Ok(log_q - (edges.len() as f64).ln())
}

/// log of the unrooted mass: (number of distinct rotations) * q / |loop|.
/// Simple loops give exactly q; a loop repeating a pattern p times has
/// |loop|/p distinct rotations.
pub fn unrooted_loop_mass(graph: &SurfaceGraph, edges: &[DirEdge]) -> Result<f64> {
    let rooted = rooted_loop_mass(graph, edges)?;
    let n = edges.len();
    let mut period = n;
    'outer: for p in 1..n {
        if n % p != 0 {
            continue;
        }
        for i in 0..n {
            if edges[i] != edges[(i + p) % n] {
                continue 'outer;
            }
        }
        period = p;
        break;
    }
    let rotations = n / (n / period); // = period
    debug_assert_eq!(rotations, period);
    Ok(rooted + (rotations as f64).ln())
}

fn vertex_mask(vs: impl IntoIterator<Item = VertexId>) -> u128 {
    let mut m = 0u128;
    for v in vs {
        assert!(v.0 < 128, "mass engine supports up to 128 vertices");
        m |= 1u128 << v.0;
    }
    m
}

/// Green value g(A, x): expected visits to x before the kill rule fires.
pub fn g_value(graph: &SurfaceGraph, domain: &DomainSpec, x: VertexId) -> Result<f64> {
    if !domain.allowed.contains(&x) {
        return Err(Error::VertexOutsideDomain(x.0));
    }
    match domain.kill {
        KillMode::Exit => {
            let verts: Vec<VertexId> = sorted(&domain.allowed);
            let idx: HashMap<VertexId, usize> =
                verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let n = verts.len();
            let mut q = DMatrix::zeros(n, n);
            for (i, &v) in verts.iter().enumerate() {
                for &(de, p) in graph.out_moves(v) {
                    if let Some(&j) = idx.get(&graph.head(de)) {
                        q[(i, j)] += p;
                    }
                }
            }
            let g = green_matrix(&q).ok_or(Error::ZeroDenominator("green matrix"))?;
            Ok(g[(idx[&x], idx[&x])])
        }
        KillMode::ExitOrNoncontractible => {
            let opts = SapOptions {
                domain: Some(domain.allowed.clone()),
                targets: HashSet::new(),
                noncontractible: true,
                state_cap: crate::exactdist::DEFAULT_STATE_CAP,
            };
            let chain = SapChain::build(graph, x, &opts)?;
            Ok(chain.root_green())
        }
    }
}

/// First-return probability f(A, x), solved independently of `g_value`
/// (first passage rather than expected visits). g = 1 / (1 - f).
pub fn f_value(graph: &SurfaceGraph, domain: &DomainSpec, x: VertexId) -> Result<f64> {
    if !domain.allowed.contains(&x) {
        return Err(Error::VertexOutsideDomain(x.0));
    }
    match domain.kill {
        KillMode::Exit => {
            // u(v) = P_v(hit x before leaving A); f = sum_first_step p * u
            let verts: Vec<VertexId> =
                sorted(&domain.allowed).into_iter().filter(|&v| v != x).collect();
            let idx: HashMap<VertexId, usize> =
                verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let n = verts.len();
            let mut q = DMatrix::zeros(n, n);
            let mut b = DVector::zeros(n);
            for (i, &v) in verts.iter().enumerate() {
                for &(de, p) in graph.out_moves(v) {
                    let h = graph.head(de);
                    if h == x {
                        b[i] += p;
                    } else if let Some(&j) = idx.get(&h) {
                        q[(i, j)] += p;
                    }
                }
            }
            let u = crate::linalg::solve_dense(&q, &b)
                .ok_or(Error::ZeroDenominator("first return solve"))?;
            let mut f = 0.0;
            for &(de, p) in graph.out_moves(x) {
                let h = graph.head(de);
                if h == x {
                    f += p;
                } else if let Some(&j) = idx.get(&h) {
                    f += p * u[j];
                }
            }
            Ok(f)
        }
        KillMode::ExitOrNoncontractible => {
            let opts = SapOptions {
                domain: Some(domain.allowed.clone()),
                targets: HashSet::new(),
                noncontractible: true,
                state_cap: crate::exactdist::DEFAULT_STATE_CAP,
            };
            let chain = SapChain::build(graph, x, &opts)?;
            Ok(chain.root_return_probability())
        }
    }
}

fn sorted(s: &HashSet<VertexId>) -> Vec<VertexId> {
    let mut v: Vec<VertexId> = s.iter().copied().collect();
    v.sort();
    v
}

/// Computes masses of hit classes as sums of log Green values over shrinking
/// domains, caching the noncontractible-kill values by (domain, vertex).
pub struct MassEngine<'g> {
    graph: &'g SurfaceGraph,
    kill: KillMode,
    nc_cache: HashMap<(u128, u32), f64>,
}

impl<'g> MassEngine<'g> {
    pub fn new(graph: &'g SurfaceGraph, kill: KillMode) -> Self {
        MassEngine { graph, kill, nc_cache: HashMap::new() }
    }

    /// log Lambda({loops in `domain` that hit the ordered vertex list}),
    /// where in noncontractible-kill mode the class is further restricted to
    /// loops contractible relative to the given order.
    pub fn log_mass_hitting(
        &mut self,
        domain: &HashSet<VertexId>,
        ordered: &[VertexId],
    ) -> Result<f64> {
        match self.kill {
            KillMode::Exit => {
                let verts = sorted(domain);
                let idx: HashMap<VertexId, usize> =
                    verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
                let n = verts.len();
                let mut q = DMatrix::zeros(n, n);
                for (i, &v) in verts.iter().enumerate() {
                    for &(de, p) in self.graph.out_moves(v) {
                        if let Some(&j) = idx.get(&self.graph.head(de)) {
                            q[(i, j)] += p;
                        }
                    }
                }
                let mut tracker = GreenTracker::new(&q, vec![true; n])
                    .ok_or(Error::ZeroDenominator("green tracker"))?;
                let mut total = 0.0;
                for &x in ordered {
                    let Some(&i) = idx.get(&x) else { continue };
                    if !tracker.is_active(i) {
                        continue;
                    }
                    total += tracker.green_diag(i).ln();
                    tracker.remove(i);
                }
                Ok(total)
            }
            KillMode::ExitOrNoncontractible => {
                let mut dom = domain.clone();
                let mut mask = vertex_mask(dom.iter().copied());
                let mut total = 0.0;
                for &x in ordered {
                    if !dom.contains(&x) {
                        continue;
                    }
                    let key = (mask, x.0);
                    let g = match self.nc_cache.get(&key) {
                        Some(&g) => g,
                        None => {
                            let d = DomainSpec { allowed: dom.clone(), kill: self.kill };
                            let g = g_value(self.graph, &d, x)?;
                            self.nc_cache.insert(key, g);
                            g
                        }
                    };
                    total += g.ln();
                    dom.remove(&x);
                    mask &= !(1u128 << x.0);
                }
                Ok(total)
            }
        }
    }
}

/// log Lambda of loops in the domain intersecting the path, with the filter
/// choosing the kill rule: `Exit` counts every loop, the noncontractible kill
/// restricts to loops contractible relative to the path.
pub fn log_mass_intersecting(
    graph: &SurfaceGraph,
    path_vertices: &[VertexId],
    domain: &DomainSpec,
) -> Result<f64> {
    MassEngine::new(graph, domain.kill).log_mass_hitting(&domain.allowed, path_vertices)
}

/// Vertices of a branch that collect Green factors: all but the absorbing
/// endpoint (for cycle-ended branches the repeated closing vertex).
pub fn factor_vertices(graph: &SurfaceGraph, branch: &Branch) -> Vec<VertexId> {
    let vs = branch.vertices(graph);
    vs[..branch.edges.len()].to_vec()
}

/// Exact probability that an ordered family of loop-erased branches comes out
/// of sequential sampling: q(union of edges) times the exponential of the
/// appropriate loop mass. `Exit` mode is the tree case (branches must end on
/// the boundary); the noncontractible mode is the surface case.
pub fn density_lerw(graph: &SurfaceGraph, branches: &[Branch], kill: KillMode) -> Result<f64> {
    let mut engine = MassEngine::new(graph, kill);
    let mut domain: HashSet<VertexId> = graph.interior_vertices().collect();
    let mut log_p = 0.0;
    let mut all_edges: Vec<DirEdge> = Vec::new();
    for b in branches {
        if kill == KillMode::Exit && b.end == BranchEnd::Cycle {
            return Err(Error::IncompatiblePaths(
                "cycle-ended branch in exit-only mode".into(),
            ));
        }
        let fv = factor_vertices(graph, b);
        for v in &fv {
            if !domain.contains(v) {
                return Err(Error::IncompatiblePaths(format!(
                    "branch revisits vertex {}",
                    v.0
                )));
            }
        }
        log_p += engine.log_mass_hitting(&domain, &fv)?;
        for v in fv {
            domain.remove(&v);
        }
        all_edges.extend_from_slice(&b.edges);
    }
    log_p += graph.log_q(&all_edges);
    Ok(log_p.exp())
}

/// log Lambda_domain(I(path1) and I(path2)): the mass of loops meeting both
/// paths, by inclusion-exclusion over hit classes. Paths must be disjoint.
pub fn pair_rn_factor(
    graph: &SurfaceGraph,
    path1: &[VertexId],
    path2: &[VertexId],
    domain: &DomainSpec,
) -> Result<f64> {
    if path1.iter().any(|v| path2.contains(v)) {
        return Err(Error::PathsNotDisjoint);
    }
    let mut engine = MassEngine::new(graph, domain.kill);
    let m1 = engine.log_mass_hitting(&domain.allowed, path1)?;
    let m2 = engine.log_mass_hitting(&domain.allowed, path2)?;
    let mut joint: Vec<VertexId> = path1.to_vec();
    joint.extend_from_slice(path2);
    let m12 = engine.log_mass_hitting(&domain.allowed, &joint)?;
    Ok(m1 + m2 - m12)
}

/// P(walk from `from` escapes to the kill rule before hitting `forbidden`),
/// with the first step counted (returns to `from` itself count as hits when
/// `from` is in the forbidden set).
pub fn escape_probability(
    graph: &SurfaceGraph,
    from: VertexId,
    forbidden: &HashSet<VertexId>,
    kill: KillMode,
) -> Result<f64> {
    match kill {
        KillMode::Exit => {
            let transient: Vec<VertexId> = graph
                .interior_vertices()
                .filter(|v| !forbidden.contains(v))
                .collect();
            let idx: HashMap<VertexId, usize> =
                transient.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let n = transient.len();
            let mut q = DMatrix::zeros(n, n);
            let mut b = DVector::zeros(n);
            for (i, &v) in transient.iter().enumerate() {
                for &(de, p) in graph.out_moves(v) {
                    let h = graph.head(de);
                    if graph.is_boundary(h) {
                        b[i] += p;
                    } else if let Some(&j) = idx.get(&h) {
                        q[(i, j)] += p;
                    }
                }
            }
            let u = crate::linalg::solve_dense(&q, &b)
                .ok_or(Error::ZeroDenominator("escape solve"))?;
            let mut esc = 0.0;
            for &(de, p) in graph.out_moves(from) {
                let h = graph.head(de);
                if graph.is_boundary(h) {
                    esc += p;
                } else if let Some(&j) = idx.get(&h) {
                    esc += p * u[j];
                }
            }
            Ok(esc)
        }
        KillMode::ExitOrNoncontractible => {
            let opts = SapOptions {
                domain: None,
                targets: forbidden.clone(),
                noncontractible: true,
                state_cap: crate::exactdist::DEFAULT_STATE_CAP,
            };
            let law = exact_branch_law(graph, from, &opts)?;
            Ok(law
                .entries
                .iter()
                .filter(|(b, _)| b.end != BranchEnd::Target)
                .map(|(_, p)| p)
                .sum())
        }
    }
}

/// P(the walk from `from` first hits `absorbing` (or the boundary) exactly at
/// `target`), first step counted.
pub fn hit_location_probability(
    graph: &SurfaceGraph,
    from: VertexId,
    absorbing: &HashSet<VertexId>,
    target: VertexId,
) -> Result<f64> {
    let transient: Vec<VertexId> =
        graph.interior_vertices().filter(|v| !absorbing.contains(v)).collect();
    let idx: HashMap<VertexId, usize> =
        transient.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let n = transient.len();
    let mut q = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (i, &v) in transient.iter().enumerate() {
        for &(de, p) in graph.out_moves(v) {
            let h = graph.head(de);
            if h == target {
                b[i] += p;
            } else if let Some(&j) = idx.get(&h) {
                q[(i, j)] += p;
            }
        }
    }
    let u =
        crate::linalg::solve_dense(&q, &b).ok_or(Error::ZeroDenominator("hit location solve"))?;
    let mut out = 0.0;
    for &(de, p) in graph.out_moves(from) {
        let h = graph.head(de);
        if h == target {
            out += p;
        } else if let Some(&j) = idx.get(&h) {
            out += p * u[j];
        }
    }
    Ok(out)
}

/// P(eta is an initial segment of the branch from its start): the marginal
/// identity q(eta) e^(mass of loops meeting eta) P(tip escapes eta).
pub fn marginal_initial(
    graph: &SurfaceGraph,
    start: VertexId,
    eta_edges: &[DirEdge],
    kill: KillMode,
) -> Result<f64> {
    let verts = graph.path_vertices(start, eta_edges);
    let tip = *verts.last().unwrap();
    if graph.is_boundary(tip) {
        // a full branch; the escape factor is 1 and the mass skips the tip
        let mut engine = MassEngine::new(graph, kill);
        let interior: HashSet<VertexId> = graph.interior_vertices().collect();
        let m = engine.log_mass_hitting(&interior, &verts[..verts.len() - 1])?;
        return Ok((graph.log_q(eta_edges) + m).exp());
    }
    let mut engine = MassEngine::new(graph, kill);
    let interior: HashSet<VertexId> = graph.interior_vertices().collect();
    let m = engine.log_mass_hitting(&interior, &verts)?;
    let forb: HashSet<VertexId> = verts.iter().copied().collect();
    let esc = escape_probability(graph, tip, &forb, kill)?;
    Ok((graph.log_q(eta_edges) + m).exp() * esc)
}

/// P(eta_plus, ending on the boundary, is a terminal segment of the branch):
/// q(eta+) e^(mass meeting eta+) P(walk hits eta+ or boundary first at its
/// first vertex).
pub fn marginal_terminal(
    graph: &SurfaceGraph,
    start: VertexId,
    eta_plus_start: VertexId,
    eta_plus_edges: &[DirEdge],
) -> Result<f64> {
    let verts = graph.path_vertices(eta_plus_start, eta_plus_edges);
    let tip = *verts.last().unwrap();
    if !graph.is_boundary(tip) {
        return Err(Error::IncompatiblePaths("terminal segment must end on the boundary".into()));
    }
    let mut engine = MassEngine::new(graph, KillMode::Exit);
    let interior: HashSet<VertexId> = graph.interior_vertices().collect();
    let m = engine.log_mass_hitting(&interior, &verts[..verts.len() - 1])?;
    let absorbing: HashSet<VertexId> =
        verts[..verts.len() - 1].iter().copied().collect();
    let hit = hit_location_probability(graph, start, &absorbing, eta_plus_start)?;
    Ok((graph.log_q(eta_plus_edges) + m).exp() * hit)
}

/// P(eta_minus initial and eta_plus terminal simultaneously):
/// q(eta-) q(eta+) e^(mass meeting their union) P(walk from the tip of eta-
/// first hits the union (or boundary) at the start of eta+).
pub fn marginal_both(
    graph: &SurfaceGraph,
    start: VertexId,
    eta_minus: &[DirEdge],
    eta_plus_start: VertexId,
    eta_plus: &[DirEdge],
) -> Result<f64> {
    let vm = graph.path_vertices(start, eta_minus);
    let vp = graph.path_vertices(eta_plus_start, eta_plus);
    let tip_minus = *vm.last().unwrap();
    let mut engine = MassEngine::new(graph, KillMode::Exit);
    let interior: HashSet<VertexId> = graph.interior_vertices().collect();
    let mut union_verts = vm.clone();
    union_verts.extend(vp[..vp.len() - 1].iter().copied());
    let m = engine.log_mass_hitting(&interior, &union_verts)?;
    let absorbing: HashSet<VertexId> = union_verts.iter().copied().collect();
    let hit = hit_location_probability(graph, tip_minus, &absorbing, eta_plus_start)?;
    let mut all_edges = eta_minus.to_vec();
    all_edges.extend_from_slice(eta_plus);
    Ok((graph.log_q(&all_edges) + m).exp() * hit)
}

/// P(Y = gamma | eta initial segment of Y): the conditional density
/// q(gamma minus eta) e^(mass in the eta-removed domain meeting gamma) over
/// the escape probability of eta's tip.
pub fn conditional_given_initial(
    graph: &SurfaceGraph,
    start: VertexId,
    eta_edges: &[DirEdge],
    gamma: &Branch,
    kill: KillMode,
) -> Result<f64> {
    if gamma.edges[..eta_edges.len()] != *eta_edges {
        return Err(Error::IncompatiblePaths("gamma does not extend eta".into()));
    }
    let ve = graph.path_vertices(start, eta_edges);
    let eta_set: HashSet<VertexId> = ve.iter().copied().collect();
    let rest_edges = &gamma.edges[eta_edges.len()..];
    let domain: HashSet<VertexId> =
        graph.interior_vertices().filter(|v| !eta_set.contains(v)).collect();
    let fv = factor_vertices(graph, gamma);
    let rest_vs: Vec<VertexId> =
        fv.into_iter().filter(|v| !eta_set.contains(v)).collect();
    let mut engine = MassEngine::new(graph, kill);
    let m = engine.log_mass_hitting(&domain, &rest_vs)?;
    let esc = escape_probability(graph, *ve.last().unwrap(), &eta_set, kill)?;
    if esc == 0.0 {
        return Err(Error::ZeroDenominator("escape probability"));
    }
    Ok((graph.log_q(rest_edges) + m).exp() / esc)
}

/// Joint law of a conditioned pair, both sides of the comparison: the left
/// side is P(eta_i initial segments of Y_i | branches disjoint) computed from
/// formulas, assembled as
/// e^(-mass meeting both) / P(disjoint) * prod P(eta_i initial) * correction,
/// with the correction the exact conditional avoidance probability evaluated
/// by enumerating the first walk's loop erasure.
pub fn conditioned_pair_initial(
    graph: &SurfaceGraph,
    starts: (VertexId, VertexId),
    eta1: &[DirEdge],
    eta2: &[DirEdge],
    p_disjoint: f64,
) -> Result<f64> {
    let v1 = graph.path_vertices(starts.0, eta1);
    let v2 = graph.path_vertices(starts.1, eta2);
    if v1.iter().any(|v| v2.contains(v)) {
        return Err(Error::PathsNotDisjoint);
    }
    let domain = DomainSpec::interior(graph, KillMode::Exit);
    let factor = pair_rn_factor(graph, &v1, &v2, &domain)?;
    let m1 = marginal_initial(graph, starts.0, eta1, KillMode::Exit)?;
    let m2 = marginal_initial(graph, starts.1, eta2, KillMode::Exit)?;

    // exact conditional avoidance term: walk 1 from tip1 avoiding the union,
    // then walk 2 avoiding the union and the realized loop erasure of walk 1
    let union: HashSet<VertexId> = v1.iter().chain(v2.iter()).copied().collect();
    let set1: HashSet<VertexId> = v1.iter().copied().collect();
    let set2: HashSet<VertexId> = v2.iter().copied().collect();
    let tip1 = *v1.last().unwrap();
    let tip2 = *v2.last().unwrap();
    let esc1_own = escape_probability(graph, tip1, &set1, KillMode::Exit)?;
    let esc2_own = escape_probability(graph, tip2, &set2, KillMode::Exit)?;
    // numerator: sum over loop erasures gamma'_1 of walk 1 (avoiding the
    // union) of P(walk 2 avoids the union and gamma'_1 until the boundary)
    let opts = SapOptions {
        domain: None,
        targets: union.clone(),
        noncontractible: false,
        state_cap: crate::exactdist::DEFAULT_STATE_CAP,
    };
    let law1 = exact_branch_law(graph, tip1, &opts)?;
    let mut numer = 0.0;
    for (b, pb) in &law1.entries {
        if b.end != BranchEnd::Boundary {
            continue;
        }
        let mut forb = union.clone();
        forb.extend(b.sap_vertices(graph));
        let esc2 = escape_probability(graph, tip2, &forb, KillMode::Exit)?;
        numer += pb * esc2;
    }
    let denom = esc1_own * esc2_own;
    if denom == 0.0 || p_disjoint == 0.0 {
        return Err(Error::ZeroDenominator("pair conditioning"));
    }
    Ok((-factor).exp() / p_disjoint * m1 * m2 * (numer / denom))
}

/// Conditional density of the completed pair given disjointness and the
/// initial segments: q of the extensions, the loop mass in the eta-removed
/// domain meeting the full union, over the avoidance probability.
pub fn conditioned_pair_terminal(
    graph: &SurfaceGraph,
    starts: (VertexId, VertexId),
    eta1: &[DirEdge],
    eta2: &[DirEdge],
    gamma1: &Branch,
    gamma2: &Branch,
) -> Result<f64> {
    let v1 = graph.path_vertices(starts.0, eta1);
    let v2 = graph.path_vertices(starts.1, eta2);
    let union: HashSet<VertexId> = v1.iter().chain(v2.iter()).copied().collect();
    if gamma1.edges[..eta1.len()] != *eta1 || gamma2.edges[..eta2.len()] != *eta2 {
        return Err(Error::IncompatiblePaths("completions do not extend the segments".into()));
    }
    let g1v = factor_vertices(graph, gamma1);
    let g2v = factor_vertices(graph, gamma2);
    if g1v.iter().any(|v| g2v.contains(v)) {
        return Err(Error::PathsNotDisjoint);
    }
    let domain: HashSet<VertexId> =
        graph.interior_vertices().filter(|v| !union.contains(v)).collect();
    let mut ordered: Vec<VertexId> =
        g1v.iter().copied().filter(|v| !union.contains(v)).collect();
    ordered.extend(g2v.iter().copied().filter(|v| !union.contains(v)));
    let mut engine = MassEngine::new(graph, KillMode::Exit);
    let m = engine.log_mass_hitting(&domain, &ordered)?;
    let rest1 = &gamma1.edges[eta1.len()..];
    let rest2 = &gamma2.edges[eta2.len()..];
    let mut edges = rest1.to_vec();
    edges.extend_from_slice(rest2);

    // avoidance probability: walk 1 then walk 2, both to the boundary
    let tip1 = *v1.last().unwrap();
    let tip2 = *v2.last().unwrap();
    let opts = SapOptions {
        domain: None,
        targets: union.clone(),
        noncontractible: false,
        state_cap: crate::exactdist::DEFAULT_STATE_CAP,
    };
    let law1 = exact_branch_law(graph, tip1, &opts)?;
    let mut denom = 0.0;
    for (bb, pb) in &law1.entries {
        if bb.end != BranchEnd::Boundary {
            continue;
        }
        let mut forb = union.clone();
        forb.extend(bb.sap_vertices(graph));
        denom += pb * escape_probability(graph, tip2, &forb, KillMode::Exit)?;
    }
    if denom == 0.0 {
        return Err(Error::ZeroDenominator("pair avoidance"));
    }
    Ok((graph.log_q(&edges) + m).exp() / denom)
}

/// The surface marginal of the skeleton pair, with its certified band.
///
/// Returns `(value, log_band)`: the estimate of
/// P(eta_i initial segments of the skeleton branches | all-annuli) built from
/// q, the relative-contractible loop mass and the compatible-completion
/// probability; the true value is within a factor e^(log_band). The band is
/// the enumerated mass of loops meeting the union that traverse at least one
/// generator-labelled edge (an upper bound for the mass of contractible loops
/// with noncontractible support meeting the union).
pub fn surface_pair_marginal(
    graph: &SurfaceGraph,
    starts: (VertexId, VertexId),
    eta1: &[DirEdge],
    eta2: &[DirEdge],
    p_temperleyan: f64,
) -> Result<(f64, f64)> {
    let v1 = graph.path_vertices(starts.0, eta1);
    let v2 = graph.path_vertices(starts.1, eta2);
    if v1.iter().any(|v| v2.contains(v)) {
        return Err(Error::PathsNotDisjoint);
    }
    let interior: HashSet<VertexId> = graph.interior_vertices().collect();
    let mut engine = MassEngine::new(graph, KillMode::ExitOrNoncontractible);
    let mut ordered = v1.clone();
    ordered.extend_from_slice(&v2);
    let mass = engine.log_mass_hitting(&interior, &ordered)?;
    let mut edges = eta1.to_vec();
    edges.extend_from_slice(eta2);
    let log_q = graph.log_q(&edges);

    // compatible completions achieving the all-annuli event
    let union: HashSet<VertexId> = ordered.iter().copied().collect();
    let tip1 = *v1.last().unwrap();
    let tip2 = *v2.last().unwrap();
    let aux: Vec<_> = graph.punctures().iter().map(|p| p.aux_edge).collect();
    let mut p_compat = 0.0;
    let opts1 = SapOptions {
        domain: None,
        targets: union.clone(),
        noncontractible: true,
        state_cap: crate::exactdist::DEFAULT_STATE_CAP,
    };
    let law1 = exact_branch_law(graph, tip1, &opts1)?;
    for (b1, p1) in &law1.entries {
        let mut targets2 = union.clone();
        targets2.extend(b1.sap_vertices(graph));
        let opts2 = SapOptions {
            domain: None,
            targets: targets2,
            noncontractible: true,
            state_cap: crate::exactdist::DEFAULT_STATE_CAP,
        };
        let law2 = exact_branch_law(graph, tip2, &opts2)?;
        for (b2, p2) in &law2.entries {
            let mut br1 = eta1.to_vec();
            br1.extend_from_slice(&b1.edges);
            let mut br2 = eta2.to_vec();
            br2.extend_from_slice(&b2.edges);
            let skel = Skeleton { branches: vec![br1, br2], aux_edges: aux.clone() };
            if is_temperleyan(graph, &skel)? {
                p_compat += p1 * p2;
            }
       }
    }
    if p_temperleyan == 0.0 {
        return Err(Error::ZeroDenominator("all-annuli probability"));
    }
    let value = (log_q + mass).exp() / p_temperleyan * p_compat;

    // certified band: loops meeting the union that use a labelled edge
    let hit1: HashSet<VertexId> = v1.iter().copied().collect();
    let hit2: HashSet<VertexId> = v2.iter().copied().collect();
    let hit_union: HashSet<VertexId> = hit1.union(&hit2).copied().collect();
    let band = labelled_loop_mass(graph, &interior, &hit_union)?;
    Ok((value, band))
}

/// Enumerated mass of loops in `domain` that hit `hits` and traverse at least
/// one edge with a nontrivial crossing word, tail bound included.
pub fn labelled_loop_mass(
    graph: &SurfaceGraph,
    domain: &HashSet<VertexId>,
    hits: &HashSet<VertexId>,
) -> Result<f64> {
    // the enumerator filters on vertex sets, so loops through labelled edges
    // are over-approximated by loops through the labelled-edge endpoints;
    // the bound stays valid
    let mut labelled: HashSet<VertexId> = HashSet::new();
    for (eid, e) in graph.edges() {
        if !e.word.is_identity() {
            let _ = eid;
            labelled.insert(e.tail);
            labelled.insert(e.head);
        }
    }
    if labelled.is_empty() {
        return Ok(0.0);
    }
    let spec = LoopEnumSpec {
        domain: domain.clone(),
        hit_all: vec![hits.clone(), labelled],
        winding: None,
        tail_target: 1e-11,
    };
    let sum = loop_mass_enumerated(graph, &spec)?;
    Ok(sum.mass + sum.tail_bound)
}

/// A Poisson realization of the loop soup on a domain.
#[derive(Debug, Clone)]
pub struct SoupOptions {
    pub kill: KillMode,
    /// Attempt budget for one conditioned excursion.
    pub excursion_budget: usize,
    /// Step budget within one excursion attempt.
    pub step_budget: usize,
}

impl Default for SoupOptions {
    fn default() -> Self {
        SoupOptions { kill: KillMode::Exit, excursion_budget: 10_000_000, step_budget: 10_000_000 }
    }
}

fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    let l = (-lambda).exp();
    let mut k = 0usize;
    let mut p = 1.0;
    loop {
        p *= rng.gen::<f64>();
        if p <= l {
            return k;
        }
        k += 1;
    }
}

fn sample_logarithmic<R: Rng + ?Sized>(f: f64, rng: &mut R) -> usize {
    // P(d = k) = f^k / (k * -ln(1-f))
    let norm = -(1.0 - f).ln();
    let mut u: f64 = rng.gen::<f64>() * norm;
    let mut k = 1usize;
    let mut term = f;
    loop {
        let w = term / k as f64;
        if u < w || k > 100_000 {
            return k;
        }
        u -= w;
        term *= f;
        k += 1;
    }
}

/// One conditioned excursion from `x` back to `x` inside `domain`, rejecting
/// walks that escape (or, under the surface kill, close a noncontractible
/// loop or return with the wrong word).
fn sample_excursion<R: Rng + ?Sized>(
    graph: &SurfaceGraph,
    domain: &HashSet<VertexId>,
    x: VertexId,
    f: f64,
    opts: &SoupOptions,
    rng: &mut R,
) -> Result<Vec<DirEdge>> {
    'attempt: for _ in 0..opts.excursion_budget {
        let mut edges: Vec<DirEdge> = Vec::new();
        // loop-erasure state for the surface kill rule
        let mut path: Vec<VertexId> = vec![x];
        let mut words = vec![graph.identity()];
        for _ in 0..opts.step_budget {
            let tip = *path.last().unwrap();
            let de = crate::walk::step(graph, tip, rng)?;
            let h = graph.head(de);
            if h != x && !domain.contains(&h) {
                continue 'attempt;
            }
            edges.push(de);
            let w = words.last().unwrap().compose(&graph.word(de))?;
            if let Some(k) = path.iter().position(|&v| v == h) {
                if w != words[k] {
                    if opts.kill == KillMode::ExitOrNoncontractible {
                        continue 'attempt;
                    }
                    // exit-only mode never inspects words
                }
                path.truncate(k + 1);
                words.truncate(k + 1);
                if h == x {
                    return Ok(edges);
                }
            } else {
                path.push(h);
                words.push(w);
            }
        }
        continue 'attempt;
    }
    Err(Error::ExcursionBudget { budget: opts.excursion_budget, vertex: x.0, f })
}

/// Sample a loop soup on the domain by the rooted-vertex decomposition: for
/// each vertex in order, a Poisson(log g) number of loops, each built from a
/// logarithmic number of conditioned excursions; roots are then forgotten.
pub fn sample_loop_soup<R: Rng + ?Sized>(
    graph: &SurfaceGraph,
    domain: &DomainSpec,
    opts: &SoupOptions,
    rng: &mut R,
) -> Result<Vec<LoopRecord>> {
    let mut order = sorted(&domain.allowed);
    order.sort();
    let mut soup = Vec::new();
    let mut remaining: HashSet<VertexId> = domain.allowed.clone();
    for &x in &order {
        let d = DomainSpec { allowed: remaining.clone(), kill: domain.kill };
        let g = g_value(graph, &d, x)?;
        let f = 1.0 - 1.0 / g;
        let lambda = g.ln();
        if lambda > 0.0 {
            let n_loops = sample_poisson(lambda, rng);
            for _ in 0..n_loops {
                let d_exc = sample_logarithmic(f, rng);
                let mut edges = Vec::new();
                for _ in 0..d_exc {
                    edges.extend(sample_excursion(graph, &remaining, x, f, opts, rng)?);
                }
                let edges = crate::surface::canonical_rotation(&edges);
                let log_q = edges.iter().map(|&e| graph.transition_prob(e).ln()).sum();
                let class = graph.loop_class(&edges)?;
                soup.push(LoopRecord { root: graph.tail(edges[0]), edges, log_q, class });
            }
        }
        remaining.remove(&x);
    }
    Ok(soup)
}

/// Group the return excursions of a Wilson run into unrooted loops: at every
/// branch vertex the excursions are assembled along the cycles of a uniform
/// random permutation, reproducing the Poisson decomposition of the erased
/// loops.
pub fn group_run_excursions<R: Rng + ?Sized>(
    graph: &SurfaceGraph,
    excursions: &[Vec<Vec<DirEdge>>],
    rng: &mut R,
) -> Vec<LoopRecord> {
    let mut out = Vec::new();
    for exc in excursions {
        let d = exc.len();
        if d == 0 {
            continue;
        }
        let mut perm: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let mut seen = vec![false; d];
        for s in 0..d {
            if seen[s] {
                continue;
            }
            let mut edges = Vec::new();
            let mut i = s;
            loop {
                seen[i] = true;
                edges.extend(exc[i].iter().copied());
                i = perm[i];
                if i == s {
                    break;
                }
            }
            let edges = crate::surface::canonical_rotation(&edges);
            let log_q = edges.iter().map(|&e| graph.transition_prob(e).ln()).sum();
            let class = graph.loop_class(&edges).expect("excursions close");
            out.push(LoopRecord { root: graph.tail(edges[0]), edges, log_q, class });
        }
    }
    out
}

/// Mean count of matching loops per realization with a normal 95% interval.
pub fn empirical_mass<F: Fn(&LoopRecord) -> bool>(
    realizations: &[Vec<LoopRecord>],
    predicate: F,
) -> Result<(f64, f64)> {
    if realizations.is_empty() {
        return Err(Error::EmptySamples);
    }
    let counts: Vec<f64> =
        realizations.iter().map(|r| r.iter().filter(|l| predicate(l)).count() as f64).collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, 1.96 * (var / n).sqrt()))
}
