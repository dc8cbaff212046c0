//! Loop-closure validation and application.
//!
//! A candidate is a non-adjacent frame pair with fresh correspondences. It
//! is validated geometrically: the robust relative-rotation estimator runs
//! warm-started from the current orientation estimates, and the candidate
//! survives only if its inlier support clears the acceptance threshold.
//! An accepted closure becomes a loop-flagged edge and triggers one global
//! averaging pass over the whole graph.

use crate::error::{Error, Result};
use crate::relrot::{ransac_relrot, CorrSet, RelRotConfig};
use crate::rotavg::{solve_global, GlobalReport, IrlsConfig};
use crate::viewgraph::{EdgeData, ViewGraph};

/// Candidate revisit between frames j < k.
#[derive(Debug, Clone)]
pub struct LoopCandidate {
    pub j: u64,
    pub k: u64,
    pub corr: CorrSet,
}

/// Result of geometric validation.
#[derive(Debug, Clone)]
pub enum LoopValidation {
    /// Edge ready for insertion: chaining convention, loop flag set.
    Accepted(EdgeData),
    /// Support below threshold or no model found; not an error.
    Rejected { inliers: usize, reason: String },
}

/// Validates a candidate against the current graph state.
///
/// The estimator is initialized from the relative orientation the graph
/// already implies for (j, k), so a genuine revisit converges even under
/// accumulated drift while an aliased match has to beat the threshold on
/// its own. Acceptance requires strictly more inliers than
/// `theta_matches`.
pub fn validate_loop(
    g: &ViewGraph,
    cand: &LoopCandidate,
    cfg: &RelRotConfig,
    theta_matches: usize,
) -> Result<LoopValidation> {
    if cand.j >= cand.k {
        return Err(Error::invalid(format!(
            "loop candidate needs j < k, got ({}, {})",
            cand.j, cand.k
        )));
    }
    let r_j = g
        .orientation(cand.j)
        .ok_or_else(|| Error::invalid(format!("loop endpoint {} is not in the graph", cand.j)))?;
    let r_k = g
        .orientation(cand.k)
        .ok_or_else(|| Error::invalid(format!("loop endpoint {} is not in the graph", cand.k)))?;
    // Estimator convention maps j-frame bearings onto k-frame bearings,
    // the inverse of the stored chaining edge.
    let r_init = r_k.relative(r_j);

    let result = match ransac_relrot(&cand.corr, &r_init, cfg) {
        Ok(r) => r,
        Err(Error::NoModel(msg)) => {
            return Ok(LoopValidation::Rejected { inliers: 0, reason: msg });
        }
        Err(Error::InsufficientCorrespondences { have, need }) => {
            return Ok(LoopValidation::Rejected {
                inliers: 0,
                reason: format!("{have} correspondences, minimal sample needs {need}"),
            });
        }
        Err(e) => return Err(e),
    };
    let inliers = result.inliers.len();
    if inliers > theta_matches {
        Ok(LoopValidation::Accepted(EdgeData {
            r_jk: result.r_jk.inverse(),
            inlier_count: inliers,
            is_loop: true,
        }))
    } else {
        Ok(LoopValidation::Rejected {
            inliers,
            reason: format!("support {inliers} does not exceed threshold {theta_matches}"),
        })
    }
}

/// Inserts an accepted loop edge and runs one global averaging pass.
/// Re-inserting an identical edge is a no-op apart from the solve, which
/// starts at its own fixed point and stays there.
pub fn close_loop(
    g: &mut ViewGraph,
    j: u64,
    k: u64,
    edge: EdgeData,
    irls: &IrlsConfig,
) -> Result<GlobalReport> {
    g.add_edge(j, k, edge)?;
    solve_global(g, irls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bearing::BearingVec;
    use crate::so3::{geodesic_angle, Rot3};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_in_cone(rng: &mut ChaCha8Rng, half_angle: f64) -> Vector3<f64> {
        // Uniform direction within the forward cone about +z.
        let cos_min = half_angle.cos();
        let c = cos_min + rng.random::<f64>() * (1.0 - cos_min);
        let s = (1.0 - c * c).sqrt();
        let phi = rng.random::<f64>() * std::f64::consts::TAU;
        Vector3::new(s * phi.cos(), s * phi.sin(), c)
    }

    fn small_step(rng: &mut ChaCha8Rng, scale: f64) -> Rot3 {
        let axis = Vector3::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        )
        .normalize();
        Rot3::exp(&(axis * scale)).unwrap()
    }

    /// Pure-rotation correspondences consistent with the relative rotation
    /// between the two true orientations.
    fn loop_corr(rng: &mut ChaCha8Rng, r_j: &Rot3, r_k: &Rot3, n: usize) -> CorrSet {
        let r_c = r_k.relative(r_j);
        let mut c = CorrSet::new();
        while c.len() < n {
            let f = unit_in_cone(rng, 0.35);
            let fp = r_c.rotate(&f);
            if fp.z > 0.05 {
                c.push(BearingVec::new(f).unwrap(), BearingVec::new(fp).unwrap());
            }
        }
        c
    }

    /// Chain with a slight consistent odometry bias so drift accumulates,
    /// plus the true orientations.
    fn drifted_chain(rng: &mut ChaCha8Rng, n: u64, bias: f64) -> (ViewGraph, Vec<Rot3>) {
        let mut truth = vec![Rot3::identity()];
        let mut g = ViewGraph::new();
        g.add_node(0, Rot3::identity()).unwrap();
        let bias_rot = Rot3::exp(&Vector3::new(0.0, bias, 0.0)).unwrap();
        for i in 1..n {
            let step = small_step(rng, 0.04);
            let r = truth.last().unwrap().compose(&step);
            truth.push(r);
            let measured = step.compose(&bias_rot);
            let prev = *g.orientation(i - 1).unwrap();
            g.add_node(i, prev.compose(&measured)).unwrap();
            g.add_edge(i - 1, i, EdgeData { r_jk: measured, inlier_count: 120, is_loop: false })
                .unwrap();
        }
        (g, truth)
    }

    fn max_node_error(g: &ViewGraph, truth: &[Rot3]) -> f64 {
        truth
            .iter()
            .enumerate()
            .map(|(i, t)| geodesic_angle(g.orientation(i as u64).unwrap(), t))
            .fold(0.0, f64::max)
    }

    #[test]
    fn genuine_loop_validates_and_reduces_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let (mut g, truth) = drifted_chain(&mut rng, 15, 2e-3);
        let drift_before = max_node_error(&g, &truth);
        assert!(drift_before > 5e-3, "chain should have drifted, got {drift_before}");

        let (j, k) = (0u64, 14u64);
        let corr = loop_corr(&mut rng, &truth[j as usize], &truth[k as usize], 80);
        let cand = LoopCandidate { j, k, corr };
        let cfg = RelRotConfig { seed: 7, ..RelRotConfig::default() };
        let v = validate_loop(&g, &cand, &cfg, 50).unwrap();
        let edge = match v {
            LoopValidation::Accepted(e) => e,
            LoopValidation::Rejected { inliers, reason } => {
                panic!("genuine loop rejected with {inliers} inliers: {reason}")
            }
        };
        assert!(edge.is_loop);
        assert!(edge.inlier_count > 50);
        // The validated edge matches the true relative orientation, not the
        // drifted estimate.
        let true_edge = truth[j as usize].relative(&truth[k as usize]);
        assert!(geodesic_angle(&edge.r_jk, &true_edge) < 1e-4);

        close_loop(&mut g, j, k, edge, &IrlsConfig::default()).unwrap();
        let drift_after = max_node_error(&g, &truth);
        assert!(
            drift_after < 0.5 * drift_before,
            "closure should cut drift: {drift_before} -> {drift_after}"
        );
    }

    #[test]
    fn junk_correspondences_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let (g, _) = drifted_chain(&mut rng, 10, 1e-3);
        let mut corr = CorrSet::new();
        for _ in 0..60 {
            let f = unit_in_cone(&mut rng, 0.6);
            let fp = unit_in_cone(&mut rng, 0.6);
            corr.push(BearingVec::new(f).unwrap(), BearingVec::new(fp).unwrap());
        }
        let cand = LoopCandidate { j: 0, k: 9, corr };
        let cfg = RelRotConfig { seed: 11, ..RelRotConfig::default() };
        match validate_loop(&g, &cand, &cfg, 50).unwrap() {
            LoopValidation::Rejected { inliers, .. } => assert!(inliers <= 50),
            LoopValidation::Accepted(_) => panic!("random matches must not validate"),
        }
    }

    #[test]
    fn support_below_threshold_is_rejected_even_if_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let (g, truth) = drifted_chain(&mut rng, 10, 1e-3);
        // Perfectly consistent, but 40 correspondences can never clear a
        // threshold of 100.
        let corr = loop_corr(&mut rng, &truth[0], &truth[9], 40);
        let cand = LoopCandidate { j: 0, k: 9, corr };
        match validate_loop(&g, &cand, &RelRotConfig::default(), 100).unwrap() {
            LoopValidation::Rejected { inliers, .. } => assert!(inliers <= 40),
            LoopValidation::Accepted(_) => panic!("insufficient support must reject"),
        }
    }

    #[test]
    fn tiny_candidate_is_rejected_not_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let (g, truth) = drifted_chain(&mut rng, 8, 1e-3);
        let corr = loop_corr(&mut rng, &truth[0], &truth[7], 3);
        let cand = LoopCandidate { j: 0, k: 7, corr };
        let cfg = RelRotConfig::default();
        match validate_loop(&g, &cand, &cfg, 50).unwrap() {
            LoopValidation::Rejected { .. } => {}
            LoopValidation::Accepted(_) => panic!("3 correspondences cannot validate"),
        }
    }

    #[test]
    fn missing_endpoint_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let (g, truth) = drifted_chain(&mut rng, 5, 1e-3);
        let corr = loop_corr(&mut rng, &truth[0], &truth[4], 20);
        let cand = LoopCandidate { j: 0, k: 99, corr };
        assert!(validate_loop(&g, &cand, &RelRotConfig::default(), 10).is_err());
    }

    #[test]
    fn consistent_graph_is_a_fixed_point_of_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        // Zero bias: estimates equal truth exactly.
        let (mut g, truth) = drifted_chain(&mut rng, 12, 0.0);
        let before: Vec<Rot3> = (0..12).map(|i| *g.orientation(i).unwrap()).collect();
        let edge = EdgeData {
            r_jk: truth[0].relative(&truth[11]),
            inlier_count: 200,
            is_loop: true,
        };
        close_loop(&mut g, 0, 11, edge, &IrlsConfig::default()).unwrap();
        for (i, b) in before.iter().enumerate() {
            assert!(geodesic_angle(g.orientation(i as u64).unwrap(), b) < 1e-8);
        }
    }

    #[test]
    fn duplicate_loop_edge_is_rejected_by_replacement_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let (mut g, truth) = drifted_chain(&mut rng, 12, 1.5e-3);
        let edge = EdgeData {
            r_jk: truth[0].relative(&truth[11]),
            inlier_count: 200,
            is_loop: true,
        };
        close_loop(&mut g, 0, 11, edge.clone(), &IrlsConfig::default()).unwrap();
        let once: Vec<Rot3> = (0..12).map(|i| *g.orientation(i).unwrap()).collect();
        let n_edges = g.n_edges();

        // Same support, different rotation: the duplicate must not replace
        // the stored measurement, and re-solving a converged graph must not
        // move it beyond solver tolerance.
        let mut tampered = edge;
        tampered.r_jk = tampered.r_jk.compose(&small_step(&mut rng, 0.3));
        close_loop(&mut g, 0, 11, tampered, &IrlsConfig::default()).unwrap();
        assert_eq!(g.n_edges(), n_edges);
        assert_eq!(
            g.edge(0, 11).unwrap().r_jk.format_quat(),
            truth[0].relative(&truth[11]).format_quat()
        );
        for (i, r) in once.iter().enumerate() {
            assert!(geodesic_angle(g.orientation(i as u64).unwrap(), r) < 1e-4);
        }
    }
}
