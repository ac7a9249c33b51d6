//! CRSF samplers: the wired law via iterated loop-erased walks, the
//! Temperleyan law via skeleton-first rejection, the dual-reweighted law via
//! importance weights, and the cell-based vertex ordering.

use crate::error::{Error, Result};
use crate::surface::{CrsfSample, DirEdge, Skeleton, SurfaceGraph, VertexId};
use crate::walk::{run_lerw, LoopRecord, StopSpec};
use rand::Rng;
use std::collections::HashSet;

/// A full sampler run: the sample plus the erased-loop material of every
/// branch, in branch order.
#[derive(Debug, Clone)]
pub struct WilsonRun {
    pub sample: CrsfSample,
    pub erased: Vec<LoopRecord>,
    /// Per-branch-vertex return excursions (concatenated across branches).
    pub excursions: Vec<Vec<Vec<DirEdge>>>,
}

/// Sample the wired CRSF law by running loop-erased walks from every vertex
/// in the given order (default: ascending vertex id), each stopped on the
/// boundary, the previously sampled part, or a noncontractible closure.
pub fn sample_wired_crsf<R: Rng + ?Sized>(
    graph: &SurfaceGraph,
    order: Option<&[VertexId]>,
    rng: &mut R,
) -> Result<WilsonRun> {
    let default_order: Vec<VertexId> = graph.interior_vertices().collect();
    let order = order.unwrap_or(&default_order);
    let mut out_edge: Vec<Option<DirEdge>> = vec![None; graph.vertex_count()];
    let mut sampled: HashSet<VertexId> = HashSet::new();
    let mut erased = Vec::new();
    let mut excursions = Vec::new();
    let mut run_one = |start: VertexId,
                       sampled: &mut HashSet<VertexId>,
                       out_edge: &mut Vec<Option<DirEdge>>,
                       erased: &mut Vec<LoopRecord>,
                       excursions: &mut Vec<Vec<Vec<DirEdge>>>,
                       rng: &mut R|
     -> Result<Vec<DirEdge>> {
        let stop = StopSpec::wilson(sampled.clone());
        let run = run_lerw(graph, start, &stop, rng)?;
        let branch = run.branch_edges();
        let verts = run.path_vertices(graph);
        for (i, &de) in branch.iter().enumerate() {
            out_edge[verts[i].0 as usize] = Some(de);
        }
        sampled.extend(verts.iter().copied());
        erased.extend(run.erased.iter().cloned());
        excursions.extend(run.excursions.iter().cloned());
        Ok(branch)
    };
    for &v in order {
        if sampled.contains(&v) || graph.is_boundary(v) {
            continue;
        }
        run_one(v, &mut sampled, &mut out_edge, &mut erased, &mut excursions, rng)?;
    }
    // any interior vertex missed by the order still needs a branch
    for v in graph.interior_vertices() {
        if !sampled.contains(&v) {
            run_one(v, &mut sampled, &mut out_edge, &mut erased, &mut excursions, rng)?;
        }
    }
    let sample = CrsfSample::from_out_edges(graph, out_edge)?;
    Ok(WilsonRun { sample, erased, excursions })
}

#[derive(Debug, Clone)]
pub struct TemperleyanOutcome {
    pub sample: CrsfSample,
    pub attempts: usize,
}

/// Skeleton-first rejection sampling of the Temperleyan law: grow the
/// branches from the puncture pairs in order, accept if the skeleton cuts the
/// surface into annuli, then fill in the rest with the wired sampler.
pub fn sample_temperleyan<R: Rng + ?Sized>(
    graph: &SurfaceGraph,
    max_attempts: usize,
    rng: &mut R,
) -> Result<TemperleyanOutcome> {
    if max_attempts == 0 {
        return Err(Error::RejectionBudgetExceeded { budget: 0, rate: 0.0 });
    }
    for attempt in 1..=max_attempts {
        let mut out_edge: Vec<Option<DirEdge>> = vec![None; graph.vertex_count()];
        let mut sampled: HashSet<VertexId> = HashSet::new();
        let mut branches = Vec::new();
        for p in graph.punctures() {
            for &start in &[p.u, p.v] {
                if sampled.contains(&start) {
                    branches.push(Vec::new());
                    continue;
                }
                let stop = StopSpec::wilson(sampled.clone());
                let run = run_lerw(graph, start, &stop, rng)?;
                let branch = run.branch_edges();
                let verts = run.path_vertices(graph);
                for (i, &de) in branch.iter().enumerate() {
                    out_edge[verts[i].0 as usize] = Some(de);
                }
                sampled.extend(verts);
                branches.push(branch);
            }
        }
        let skeleton = Skeleton {
            branches,
            aux_edges: graph.punctures().iter().map(|p| p.aux_edge).collect(),
        };
        if !crate::surface::is_temperleyan(graph, &skeleton)? {
            continue;
        }
        // accepted: complete with the standard sampler
        for v in graph.interior_vertices() {
            if sampled.contains(&v) {
                continue;
            }
            let stop = StopSpec::wilson(sampled.clone());
            let run = run_lerw(graph, v, &stop, rng)?;
            let branch = run.branch_edges();
            let verts = run.path_vertices(graph);
            for (i, &de) in branch.iter().enumerate() {
                out_edge[verts[i].0 as usize] = Some(de);
            }
            sampled.extend(verts);
        }
        let mut sample = CrsfSample::from_out_edges(graph, out_edge)?;
        sample.skeleton = Some(skeleton);
        return Ok(TemperleyanOutcome { sample, attempts: attempt });
    }
    Err(Error::RejectionBudgetExceeded { budget: max_attempts, rate: 0.0 })
}

/// Self-normalized importance estimate of a dual-reweighted expectation from
/// Temperleyan samples carrying dual cycle counts. Returns the estimate and
/// the effective sample size.
pub fn ptemp_estimate<F: Fn(&CrsfSample) -> f64>(
    samples: &[CrsfSample],
    f: F,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut den2 = 0.0;
    for s in samples {
        let kd = s.k_dagger.expect("samples must carry dual cycle counts") as f64;
        let w = kd.exp2();
        num += w * f(s);
        den += w;
        den2 += w * w;
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator("importance weights"));
    }
    Ok((num / den, den * den / den2))
}

/// Cell-based sampling order around a center: at stage j the plane is split
/// into square cells of side (r/2) 6^{-j}; each cell contributes the vertex
/// of the j-th neighborhood of `region` farthest from the center (ties to the
/// lowest id). Duplicates keep their first occurrence.
pub fn good_algorithm_order(
    graph: &SurfaceGraph,
    region: &HashSet<VertexId>,
    center: [f64; 2],
    r: f64,
    j_max: usize,
) -> Result<Vec<VertexId>> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let mut order: Vec<VertexId> = Vec::new();
    let mut seen: HashSet<VertexId> = HashSet::new();
    for j in 1..=j_max {
        let radius = r * 0.5f64.powi(j as i32);
        // vertices within `radius` of the region
        let haloed: Vec<VertexId> = graph
            .interior_vertices()
            .filter(|&v| {
                region
                    .iter()
                    .any(|&u| dist(graph.pos(v), graph.pos(u)) <= radius)
            })
            .collect();
        let cell = (r / 2.0) * 6.0f64.powi(-(j as i32));
        let mut best: std::collections::HashMap<(i64, i64), VertexId> =
            std::collections::HashMap::new();
        for &v in &haloed {
            let p = graph.pos(v);
            let key = ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
            let better = match best.get(&key) {
                None => true,
                Some(&u) => {
                    let du = dist(graph.pos(u), center);
                    let dv = dist(p, center);
                    dv > du || (dv == du && v < u)
                }
            };
            if better {
                best.insert(key, v);
            }
        }
        let mut stage: Vec<VertexId> = best.into_values().collect();
        stage.sort();
        for v in stage {
            if seen.insert(v) {
                order.push(v);
            }
        }
    }
    Ok(order)
}

/// Attach the dual complement cycle count to a sample.
pub fn with_dual_count(graph: &SurfaceGraph, mut sample: CrsfSample) -> Result<CrsfSample> {
    let (kd, _) = crate::surface::dual_complement_cycles(graph, &sample.edge_set())?;
    sample.k_dagger = Some(kd);
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{star_graph, torus_grid, wired_grid};
    use crate::walk::rng_stream;

    #[test]
    fn star_sample_is_deterministic_support() {
        let g = star_graph(&[1.0, 1.0, 2.0]);
        let mut rng = rng_stream(11, 0);
        let run = sample_wired_crsf(&g, None, &mut rng).unwrap();
        assert_eq!(run.sample.k, 0);
        assert!(run.sample.out_edge[0].is_some());
    }

    #[test]
    fn torus_sample_satisfies_invariants() {
        let g = torus_grid(3);
        for job in 0..20 {
            let mut rng = rng_stream(12, job);
            let run = sample_wired_crsf(&g, None, &mut rng).unwrap();
            run.sample.validate(&g).unwrap();
            assert!(run.sample.k >= 1);
            // cycles share one primitive class up to sign and are disjoint
            let c0 = &run.sample.cycles[0].class;
            assert_eq!(c0.is_primitive_torus(), Some(true));
            let mut seen: HashSet<VertexId> = HashSet::new();
            for c in &run.sample.cycles {
                assert!(c.class == *c0 || c.class == c0.inverse());
                for &de in &c.edges {
                    assert!(seen.insert(g.tail(de)));
                }
            }
        }
    }

    #[test]
    fn grid_sample_is_spanning_tree() {
        let g = wired_grid(3);
        let mut rng = rng_stream(13, 0);
        let run = sample_wired_crsf(&g, None, &mut rng).unwrap();
        assert_eq!(run.sample.k, 0);
        assert_eq!(run.sample.edge_set().len(), 9);
    }

    #[test]
    fn good_order_single_vertex_dedups() {
        let g = wired_grid(3);
        let region: HashSet<VertexId> = [VertexId(4)].into_iter().collect();
        let order = good_algorithm_order(&g, &region, [1.0, 1.0], 2.0, 4).unwrap();
        assert_eq!(order, vec![VertexId(4)]);
    }

    #[test]
    fn good_order_deterministic() {
        let g = wired_grid(4);
        let region: HashSet<VertexId> = g.interior_vertices().collect();
        let a = good_algorithm_order(&g, &region, [1.5, 1.5], 3.0, 3).unwrap();
        let b = good_algorithm_order(&g, &region, [1.5, 1.5], 3.0, 3).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn ptemp_constant_functional_is_one() {
        let g = torus_grid(2);
        let mut rng = rng_stream(14, 0);
        let mut samples = Vec::new();
        for _ in 0..50 {
            let run = sample_wired_crsf(&g, None, &mut rng).unwrap();
            samples.push(with_dual_count(&g, run.sample).unwrap());
        }
        let (est, ess) = ptemp_estimate(&samples, |_| 1.0).unwrap();
        assert!((est - 1.0).abs() < 1e-14);
        assert!(ess > 1.0);
    }
}
