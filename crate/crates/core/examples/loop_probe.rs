//! Temporary probe decomposing loop-closure effects on RPE; not shipped.

use rovo_core::{
    gen_correspondences, gen_trajectory, geodesic_angle, rpen, solve_global, validate_loop,
    IrlsConfig, LoopCandidate, LoopValidation, PipelineConfig, RelRotConfig, SynthSpec,
};

fn rmse_at(gt: &rovo_core::GroundTruth, est: &[(u64, rovo_core::Rot3)], delta: usize) -> f64 {
    let curve = rovo_core::metrics::rmse_curve(gt, est).unwrap();
    curve[delta - 1].1.to_degrees()
}

fn main() {
    let n = 500u64;
    for seed in 100u64..103 {
        let spec = SynthSpec {
            n_frames: n as usize,
            n_points: 200,
            bearing_noise: 0.1f64.to_radians(),
            outlier_frac: 0.1,
            loop_pairs: vec![(0, n - 1)],
            seed,
            ..SynthSpec::default()
        };
        let gt = gen_trajectory(&spec).unwrap();
        let ds = gen_correspondences(&spec, &gt).unwrap();
        let dir = std::env::temp_dir().join(format!("rovo-loop-probe-{seed}"));
        ds.write_to(&dir).unwrap();
        let loaded = rovo_core::load_dataset(&dir).unwrap();
        std::fs::remove_dir_all(&dir).ok();

        let mut pipe = rovo_core::Pipeline::new(PipelineConfig {
            use_loops: false,
            ..PipelineConfig::default()
        })
        .unwrap();
        let mut loop_rec = None;
        for rec in &loaded.records {
            if !rec.loops.is_empty() {
                loop_rec = Some(rec.clone());
            }
            pipe.process_frame(rec).unwrap();
        }
        let frame_ids: Vec<u64> = pipe.trajectory().iter().map(|&(id, _)| id).collect();
        let traj_of = |g: &rovo_core::ViewGraph| -> Vec<(u64, rovo_core::Rot3)> {
            frame_ids
                .iter()
                .map(|&f| {
                    let nid = pipe.node_id(f).unwrap();
                    (f, g.orientation(nid).cloned().unwrap())
                })
                .collect()
        };

        let rec = loop_rec.unwrap();
        let cand = &rec.loops[0];
        let nj = pipe.node_id(cand.j).unwrap();
        let nk = pipe.node_id(cand.k).unwrap();
        let node_cand = LoopCandidate { j: nj, k: nk, corr: cand.corr.clone() };
        let mut cfg = RelRotConfig::default();
        cfg.seed = seed;
        let edge = match validate_loop(pipe.graph(), &node_cand, &cfg, 100).unwrap() {
            LoopValidation::Accepted(e) => e,
            LoopValidation::Rejected { .. } => panic!("loop rejected"),
        };
        // True relative rotation vs measured loop edge: edge measurement error.
        let truth_rel = gt.orientation(cand.j).unwrap().relative(gt.orientation(cand.k).unwrap());
        // Graph convention: R_jk chains R_k = R_j R_jk, i.e. R_jk = R_j^-1 R_k.
        let meas_err = geodesic_angle(&edge.r_jk, &truth_rel);
        let gap = {
            let g = pipe.graph();
            rovo_core::edge_residual(
                g.orientation(nj).unwrap(),
                g.orientation(nk).unwrap(),
                &edge.r_jk,
            )
            .norm()
        };

        let base = pipe.graph().clone();
        let tb = traj_of(&base);

        let mut g_d = base.clone();
        g_d.add_edge(nj, nk, edge.clone()).unwrap();
        let lifted = IrlsConfig {
            loss_scale: IrlsConfig::default().loss_scale.max(gap),
            ..IrlsConfig::default()
        };
        solve_global(&mut g_d, &lifted).unwrap();
        let td = traj_of(&g_d);
        let post_gap = rovo_core::edge_residual(
            g_d.orientation(nj).unwrap(),
            g_d.orientation(nk).unwrap(),
            &edge.r_jk,
        )
        .norm();

        println!(
            "seed {seed}: edge meas err {:.4} deg, warm gap {:.3} deg, post-solve gap {:.3} deg",
            meas_err.to_degrees(),
            gap.to_degrees(),
            post_gap.to_degrees()
        );
        // True endpoint error of the base trajectory at the loop pair.
        let find = |t: &[(u64, rovo_core::Rot3)], id: u64| {
            t.iter().find(|(i, _)| *i == id).map(|(_, r)| r.clone()).unwrap()
        };
        let base_rel = find(&tb, cand.j).relative(&find(&tb, cand.k));
        let closed_rel = find(&td, cand.j).relative(&find(&td, cand.k));
        println!(
            "  (j,k) rel err: base {:.3} deg, closed {:.3} deg",
            geodesic_angle(&base_rel, &truth_rel).to_degrees(),
            geodesic_angle(&closed_rel, &truth_rel).to_degrees()
        );
        for delta in [1usize, 5, 25, 100, 250, 499] {
            println!(
                "  rmse(delta {delta:3}): base {:.4} deg, closed {:.4} deg",
                rmse_at(&gt, &tb, delta),
                rmse_at(&gt, &td, delta)
            );
        }
        println!(
            "  rpen: base {:.4} deg, closed {:.4} deg",
            rpen(&gt, &tb).unwrap().to_degrees(),
            rpen(&gt, &td).unwrap().to_degrees()
        );
    }
}
