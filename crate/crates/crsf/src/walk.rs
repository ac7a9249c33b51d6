//! The weighted random walk on a surface graph and its chronological loop
//! erasure, including the stopping rule that ends a branch when a
//! noncontractible simple loop closes.

use crate::error::{Error, Result};
use crate::homotopy::HomotopyWord;
use crate::surface::{DirEdge, SurfaceGraph, VertexId};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::HashSet;

/// Reproducible stream: one generator per (seed, job) pair.
pub fn rng_stream(seed: u64, job: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(job);
    rng
}

/// One weighted step out of an interior vertex.
pub fn step<R: Rng + ?Sized>(graph: &SurfaceGraph, v: VertexId, rng: &mut R) -> Result<DirEdge> {
    let moves = graph.out_moves(v);
    if moves.is_empty() {
        return Err(Error::StepFromBoundary(v.0));
    }
    let mut u: f64 = rng.gen();
    for &(de, p) in moves {
        u -= p;
        if u < 0.0 {
            return Ok(de);
        }
    }
    Ok(moves.last().unwrap().0)
}

/// When a loop-erased walk should stop.
#[derive(Debug, Clone, Default)]
pub struct StopSpec {
    /// Stop on hitting any boundary vertex.
    pub boundary: bool,
    /// Stop on hitting any vertex of this set.
    pub targets: HashSet<VertexId>,
    /// Stop when a noncontractible simple loop closes.
    pub noncontractible: bool,
    /// Guard against malformed inputs; walks this long abort with an error.
    pub step_cap: u64,
}

impl StopSpec {
    pub fn wilson(targets: HashSet<VertexId>) -> Self {
        StopSpec { boundary: true, targets, noncontractible: true, step_cap: default_step_cap() }
    }
    pub fn to_boundary() -> Self {
        StopSpec {
            boundary: true,
            targets: HashSet::new(),
            noncontractible: false,
            step_cap: default_step_cap(),
        }
    }
    pub fn to_noncontractible() -> Self {
        StopSpec {
            boundary: false,
            targets: HashSet::new(),
            noncontractible: true,
            step_cap: default_step_cap(),
        }
    }
}

pub fn default_step_cap() -> u64 {
    100_000_000
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    HitBoundary(VertexId),
    HitTarget(VertexId),
    ClosedNoncontractible,
}

/// A rooted loop erased during a walk.
#[derive(Debug, Clone)]
pub struct LoopRecord {
    pub root: VertexId,
    pub edges: Vec<DirEdge>,
    /// log of the product of transition probabilities along the loop.
    pub log_q: f64,
    pub class: HomotopyWord,
}

impl LoopRecord {
    pub fn len(&self) -> usize {
        self.edges.len()
    }
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
    pub fn support(&self, graph: &SurfaceGraph) -> HashSet<VertexId> {
        self.edges.iter().map(|&de| graph.tail(de)).collect()
    }
}

/// Everything a loop-erased run produces: the final self-avoiding branch (plus
/// the closing edge if it ended in a cycle), the erased loops in chronological
/// order, and the per-branch-vertex return excursions of the raw walk.
#[derive(Debug, Clone)]
pub struct LerwRun {
    pub start: VertexId,
    /// Self-avoiding part of the branch.
    pub path_edges: Vec<DirEdge>,
    /// Closing edge when the run stopped on a noncontractible cycle.
    pub closing_edge: Option<DirEdge>,
    pub reason: StopReason,
    pub erased: Vec<LoopRecord>,
    /// Raw walk trajectory (every step taken).
    pub trajectory: Vec<DirEdge>,
    /// For each final path vertex, the raw-walk excursions that returned to it
    /// while it was the tip, in chronological order.
    pub excursions: Vec<Vec<Vec<DirEdge>>>,
}

impl LerwRun {
    /// Branch edges including the closing edge, if any.
    pub fn branch_edges(&self) -> Vec<DirEdge> {
        let mut v = self.path_edges.clone();
        v.extend(self.closing_edge);
        v
    }

    /// Vertices of the self-avoiding part.
    pub fn path_vertices(&self, graph: &SurfaceGraph) -> Vec<VertexId> {
        graph.path_vertices(self.start, &self.path_edges)
    }

    /// The noncontractible cycle closed at the end, if any.
    pub fn cycle_edges(&self, graph: &SurfaceGraph) -> Option<Vec<DirEdge>> {
        let close = self.closing_edge?;
        let target = graph.head(close);
        let verts = self.path_vertices(graph);
        let k = verts.iter().position(|&v| v == target).expect("closing edge lands on the path");
        let mut cyc = self.path_edges[k..].to_vec();
        cyc.push(close);
        Some(cyc)
    }
}

/// Run a loop-erased random walk from `start` until the stop rule fires.
///
/// The walk keeps the current self-avoiding path together with the crossing
/// word accumulated when each path vertex was last entered. Stepping onto a
/// path vertex compares words: equal words close a contractible simple loop,
/// which is erased and recorded; unequal words close a noncontractible one,
/// which ends the run when the stop rule asks for it.
pub fn run_lerw<R: Rng + ?Sized>(
    graph: &SurfaceGraph,
    start: VertexId,
    stop: &StopSpec,
    rng: &mut R,
) -> Result<LerwRun> {
    if graph.is_boundary(start) {
        return Err(Error::StepFromBoundary(start.0));
    }
    let mut path: Vec<VertexId> = vec![start];
    let mut path_edges: Vec<DirEdge> = Vec::new();
    let mut words: Vec<HomotopyWord> = vec![graph.identity()];
    let mut erased: Vec<LoopRecord> = Vec::new();
    let mut trajectory: Vec<DirEdge> = Vec::new();
    // per-path-vertex excursion records; erased vertices drop theirs
    let mut excursions: Vec<Vec<Vec<DirEdge>>> = vec![Vec::new()];
    // raw-walk index at which each path vertex last stood as the tip
    let mut tip_since: Vec<usize> = vec![0];

    let mut steps: u64 = 0;
    loop {
        let tip = *path.last().unwrap();
        let de = step(graph, tip, rng)?;
        trajectory.push(de);
        steps += 1;
        if steps > stop.step_cap {
            return Err(Error::StepCapExceeded { cap: stop.step_cap, start: start.0 });
        }
        let h = graph.head(de);
        let w = words.last().unwrap().compose(&graph.word(de))?;

        if let Some(k) = path.iter().position(|&v| v == h) {
            if w == words[k] {
                // contractible return: erase the simple loop
                let mut loop_edges: Vec<DirEdge> = path_edges.split_off(k);
                loop_edges.push(de);
                let log_q = loop_edges.iter().map(|&e| graph.transition_prob(e).ln()).sum();
                let class = graph.loop_class(&loop_edges)?;
                debug_assert!(class.is_identity());
                erased.push(LoopRecord { root: h, edges: loop_edges, log_q, class });
                path.truncate(k + 1);
                words.truncate(k + 1);
                excursions.truncate(k + 1);
                // the chunk since this vertex last was the tip is one excursion
                let chunk = trajectory[tip_since[k]..].to_vec();
                excursions[k].push(chunk);
                tip_since.truncate(k + 1);
                tip_since[k] = trajectory.len();
                continue;
            }
            // noncontractible closure
            if stop.noncontractible {
                return Ok(LerwRun {
                    start,
                    path_edges,
                    closing_edge: Some(de),
                    reason: StopReason::ClosedNoncontractible,
                    erased,
                    trajectory,
                    excursions,
                });
            }
            // walks that ignore noncontractible closures erase them anyway,
            // keeping the path self-avoiding; the record keeps the true class
            let mut loop_edges: Vec<DirEdge> = path_edges.split_off(k);
            loop_edges.push(de);
            let log_q = loop_edges.iter().map(|&e| graph.transition_prob(e).ln()).sum();
            let class = graph.loop_class(&loop_edges)?;
            erased.push(LoopRecord { root: h, edges: loop_edges, log_q, class });
            path.truncate(k + 1);
            words.truncate(k + 1);
            // word bookkeeping restarts from the stored word at the root
            excursions.truncate(k + 1);
            let chunk = trajectory[tip_since[k]..].to_vec();
            excursions[k].push(chunk);
            tip_since.truncate(k + 1);
            tip_since[k] = trajectory.len();
            continue;
        }

        // fresh vertex
        path.push(h);
        path_edges.push(de);
        words.push(w);
        excursions.push(Vec::new());
        tip_since.push(trajectory.len());

        if stop.boundary && graph.is_boundary(h) {
            return Ok(LerwRun {
                start,
                path_edges,
                closing_edge: None,
                reason: StopReason::HitBoundary(h),
                erased,
                trajectory,
                excursions,
            });
        }
        if stop.targets.contains(&h) {
            return Ok(LerwRun {
                start,
                path_edges,
                closing_edge: None,
                reason: StopReason::HitTarget(h),
                erased,
                trajectory,
                excursions,
            });
        }
    }
}

/// Replay chronological erasure over a recorded trajectory; used to check
/// that a run's record is reproducible.
pub fn replay_erasure(
    graph: &SurfaceGraph,
    start: VertexId,
    trajectory: &[DirEdge],
    noncontractible_stop: bool,
) -> Result<(Vec<DirEdge>, Option<DirEdge>, Vec<LoopRecord>)> {
    let mut path: Vec<VertexId> = vec![start];
    let mut path_edges: Vec<DirEdge> = Vec::new();
    let mut words: Vec<HomotopyWord> = vec![graph.identity()];
    let mut erased: Vec<LoopRecord> = Vec::new();
    for &de in trajectory {
        let h = graph.head(de);
        let w = words.last().unwrap().compose(&graph.word(de))?;
        if let Some(k) = path.iter().position(|&v| v == h) {
            if w != words[k] && noncontractible_stop {
                return Ok((path_edges, Some(de), erased));
            }
            let mut loop_edges: Vec<DirEdge> = path_edges.split_off(k);
            loop_edges.push(de);
            let log_q = loop_edges.iter().map(|&e| graph.transition_prob(e).ln()).sum();
            let class = graph.loop_class(&loop_edges)?;
            erased.push(LoopRecord { root: h, edges: loop_edges, log_q, class });
            path.truncate(k + 1);
            words.truncate(k + 1);
        } else {
            path.push(h);
            path_edges.push(de);
            words.push(w);
        }
    }
    Ok((path_edges, None, erased))
}

/// Monte Carlo estimate of a rectangle-crossing probability: walks started in
/// the start ball, success when the target ball is hit before leaving the
/// rectangle. Returns the minimum estimate over start vertices with a normal
/// 95% half-width. Diagnostic only.
#[derive(Debug, Clone, Copy)]
pub struct RectangleSpec {
    /// Lower-left corner.
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
    pub start_center: [f64; 2],
    pub start_radius: f64,
    pub target_center: [f64; 2],
    pub target_radius: f64,
}

impl RectangleSpec {
    /// The reference proportions: a 3:1 rectangle with start and target balls
    /// on the long axis, scaled by `c` and translated to `at`.
    pub fn standard(at: [f64; 2], c: f64) -> Self {
        RectangleSpec {
            origin: at,
            width: 0.3 * c,
            height: 0.1 * c,
            start_center: [at[0] + 0.05 * c, at[1] + 0.05 * c],
            start_radius: 0.025 * c,
            target_center: [at[0] + 0.25 * c, at[1] + 0.05 * c],
            target_radius: 0.025 * c,
        }
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.origin[0]
            && p[0] <= self.origin[0] + self.width
            && p[1] >= self.origin[1]
            && p[1] <= self.origin[1] + self.height
    }
}

#[derive(Debug, Clone)]
pub struct CrossingEstimate {
    /// Minimum success frequency over start vertices.
    pub estimate: f64,
    pub half_width_95: f64,
    pub per_start: Vec<(VertexId, f64)>,
    pub samples_per_start: usize,
}

pub fn crossing_probability_estimate(
    graph: &SurfaceGraph,
    rect: &RectangleSpec,
    n: usize,
    seed: u64,
) -> Result<CrossingEstimate> {
    let dist2 = |p: [f64; 2], c: [f64; 2]| {
        let dx = p[0] - c[0];
        let dy = p[1] - c[1];
        dx * dx + dy * dy
    };
    let starts: Vec<VertexId> = graph
        .interior_vertices()
        .filter(|&v| dist2(graph.pos(v), rect.start_center) <= rect.start_radius.powi(2))
        .collect();
    if starts.is_empty() {
        return Err(Error::EmptyBall("start"));
    }
    let in_target =
        |v: VertexId| dist2(graph.pos(v), rect.target_center) <= rect.target_radius.powi(2);
    if !graph.vertices().any(|(v, _)| in_target(v)) {
        return Err(Error::EmptyBall("target"));
    }

    let mut per_start = Vec::new();
    let mut min_est = f64::INFINITY;
    for (job, &s) in starts.iter().enumerate() {
        let mut rng = rng_stream(seed, job as u64);
        let mut hits = 0usize;
        for _ in 0..n {
            let mut v = s;
            loop {
                if in_target(v) {
                    hits += 1;
                    break;
                }
                if !rect.contains(graph.pos(v)) || graph.is_boundary(v) {
                    break;
                }
                v = graph.head(step(graph, v, &mut rng)?);
            }
        }
        let p = hits as f64 / n as f64;
        per_start.push((s, p));
        min_est = min_est.min(p);
    }
    let hw = 1.96 * (min_est * (1.0 - min_est) / n as f64).sqrt();
    Ok(CrossingEstimate { estimate: min_est, half_width_95: hw, per_start, samples_per_start: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{chain_graph, star_graph, torus_grid};

    #[test]
    fn step_single_out_edge() {
        let g = star_graph(&[1.0, 1.0]);
        // interior vertex 0 has two edges; a one-edge vertex needs a custom star
        let g1 = star_graph(&[2.0, 3.0]);
        let mut rng = rng_stream(1, 0);
        for _ in 0..10 {
            let de = step(&g1, VertexId(0), &mut rng).unwrap();
            assert_eq!(g1.tail(de), VertexId(0));
        }
        drop(g);
    }

    #[test]
    fn step_frequencies_match_weights() {
        let g = star_graph(&[1.0, 3.0]);
        let mut rng = rng_stream(2, 0);
        let n = 100_000;
        let mut c0 = 0;
        for _ in 0..n {
            let de = step(&g, VertexId(0), &mut rng).unwrap();
            if g.head(de) == VertexId(1) {
                c0 += 1;
            }
        }
        let p = c0 as f64 / n as f64;
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((p - 0.25).abs() < 3.0 * sigma, "p = {p}");
    }

    #[test]
    fn step_from_boundary_errors() {
        let g = chain_graph();
        let mut rng = rng_stream(3, 0);
        assert!(step(&g, VertexId(0), &mut rng).is_err());
    }

    #[test]
    fn torus_lerw_always_closes_noncontractible() {
        let g = torus_grid(3);
        for job in 0..50 {
            let mut rng = rng_stream(4, job);
            let run = run_lerw(&g, VertexId(job as u32 % 9), &StopSpec::wilson(Default::default()), &mut rng)
                .unwrap();
            assert_eq!(run.reason, StopReason::ClosedNoncontractible);
            let cyc = run.cycle_edges(&g).unwrap();
            assert!(!g.loop_class(&cyc).unwrap().is_identity());
        }
    }

    #[test]
    fn replay_reproduces_record() {
        let g = torus_grid(3);
        let mut rng = rng_stream(5, 0);
        let run = run_lerw(&g, VertexId(0), &StopSpec::wilson(Default::default()), &mut rng).unwrap();
        let (path, closing, erased) = replay_erasure(&g, run.start, &run.trajectory, true).unwrap();
        assert_eq!(path, run.path_edges);
        assert_eq!(closing, run.closing_edge);
        assert_eq!(erased.len(), run.erased.len());
        for (a, b) in erased.iter().zip(run.erased.iter()) {
            assert_eq!(a.edges, b.edges);
            assert_eq!(a.class, b.class);
        }
    }

    #[test]
    fn q_factorizes_over_branch_and_loops() {
        let g = torus_grid(3);
        for job in 0..20 {
            let mut rng = rng_stream(6, job);
            let run = run_lerw(&g, VertexId(2), &StopSpec::wilson(Default::default()), &mut rng).unwrap();
            let log_q_traj: f64 =
                run.trajectory.iter().map(|&e| g.transition_prob(e).ln()).sum();
            let log_q_branch: f64 =
                run.branch_edges().iter().map(|&e| g.transition_prob(e).ln()).sum();
            let log_q_loops: f64 = run.erased.iter().map(|l| l.log_q).sum();
            assert!((log_q_traj - log_q_branch - log_q_loops).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_under_fixed_stream() {
        let g = torus_grid(3);
        let mut r1 = rng_stream(9, 7);
        let mut r2 = rng_stream(9, 7);
        let a = run_lerw(&g, VertexId(1), &StopSpec::wilson(Default::default()), &mut r1).unwrap();
        let b = run_lerw(&g, VertexId(1), &StopSpec::wilson(Default::default()), &mut r2).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.path_edges, b.path_edges);
    }

    #[test]
    fn excursions_concatenate_to_removed_walk() {
        // the raw trajectory splits into: excursions at final path vertices,
        // in order, interleaved with the branch edges
        let g = torus_grid(3);
        for job in 0..10 {
            let mut rng = rng_stream(10, job);
            let run =
                run_lerw(&g, VertexId(4), &StopSpec::wilson(Default::default()), &mut rng).unwrap();
            let mut rebuilt: Vec<DirEdge> = Vec::new();
            let branch = run.branch_edges();
            for (k, exc) in run.excursions.iter().enumerate() {
                for chunk in exc {
                    rebuilt.extend(chunk.iter().copied());
                }
                if k < branch.len() {
                    rebuilt.push(branch[k]);
                }
            }
            assert_eq!(rebuilt, run.trajectory);
        }
    }
}
