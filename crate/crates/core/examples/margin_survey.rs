//! Temporary survey of acceptance margins; not shipped.

use std::time::Instant;

use rovo_core::metrics::GroundTruth;
use rovo_core::{
    gen_correspondences, gen_trajectory, geodesic_angle, rpe1, rpen, run_sequence, Dataset, Mode,
    PipelineConfig, RelRotConfig, Rot3, SynthSpec,
};

fn max_aligned_error(gt: &GroundTruth, traj: &[(u64, Rot3)]) -> f64 {
    let (id0, e0) = traj[0];
    let g = gt.orientation(id0).unwrap().compose(&e0.inverse());
    traj.iter()
        .map(|(id, r)| geodesic_angle(gt.orientation(*id).unwrap(), &g.compose(r)))
        .fold(0.0, f64::max)
}

fn build(spec: &SynthSpec) -> (Dataset, GroundTruth) {
    let gt = gen_trajectory(spec).unwrap();
    let ds = gen_correspondences(spec, &gt).unwrap();
    let dir = std::env::temp_dir().join(format!("rovo-margin-{}", spec.seed));
    ds.write_to(&dir).unwrap();
    let loaded = rovo_core::load_dataset(&dir).unwrap();
    std::fs::remove_dir_all(&dir).ok();
    (loaded, gt)
}

fn criterion1() {
    println!("=== criterion 1: 200 frames, zero noise ===");
    let spec = SynthSpec { n_frames: 200, n_points: 200, ..SynthSpec::default() };
    let (ds, gt) = build(&spec);
    for (label, relrot) in [
        ("default obj_tol", RelRotConfig::default()),
        ("obj_tol 1e-18", RelRotConfig { obj_tol: 1e-18, ..RelRotConfig::default() }),
        (
            "obj_tol 1e-18, lm 300",
            RelRotConfig { obj_tol: 1e-18, lm_max_iters: 300, ..RelRotConfig::default() },
        ),
        (
            "obj_tol 1e-18, lm 300, step 1e-12",
            RelRotConfig {
                obj_tol: 1e-18,
                lm_max_iters: 300,
                step_tol: 1e-12,
                ..RelRotConfig::default()
            },
        ),
    ] {
        let cfg = PipelineConfig { relrot, ..PipelineConfig::default() };
        let t = Instant::now();
        let (traj, reports) = run_sequence(&ds, &cfg).unwrap();
        let dt = t.elapsed().as_secs_f64();
        let skipped = reports.iter().filter(|r| r.skipped).count();
        println!(
            "{label}: runtime {dt:.2} s, skipped {skipped}, max_abs {:.3e} rad, rpe1 {:.3e} deg, rpen {:.3e} deg",
            max_aligned_error(&gt, &traj),
            rpe1(&gt, &traj).unwrap().to_degrees(),
            rpen(&gt, &traj).unwrap().to_degrees()
        );
    }
}

fn criterion2() {
    println!("=== criterion 2: 500 frames, 0.1 deg noise, 10% outliers, 5 probe seeds ===");
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let spec = SynthSpec {
            n_frames: 500,
            n_points: 200,
            bearing_noise: 0.1f64.to_radians(),
            outlier_frac: 0.1,
            seed,
            ..SynthSpec::default()
        };
        let t = Instant::now();
        let (ds, gt) = build(&spec);
        let gen_dt = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let (ti, _) = run_sequence(&ds, &PipelineConfig::default()).unwrap();
        let inc_dt = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let (tc, _) = run_sequence(
            &ds,
            &PipelineConfig { mode: Mode::ChainingBaseline, ..PipelineConfig::default() },
        )
        .unwrap();
        let ch_dt = t.elapsed().as_secs_f64();
        let ri = rpe1(&gt, &ti).unwrap();
        let rc = rpe1(&gt, &tc).unwrap();
        ratios.push(ri / rc);
        println!(
            "seed {seed}: gen {gen_dt:.1} s, inc {inc_dt:.1} s, chain {ch_dt:.1} s, rpe1 {:.4} vs {:.4} deg, ratio {:.3}",
            ri.to_degrees(),
            rc.to_degrees(),
            ri / rc
        );
    }
    ratios.sort_by(f64::total_cmp);
    println!("ratio median of probe: {:.3}", ratios[ratios.len() / 2]);
}

fn criterion3() {
    println!("=== criterion 3: loop benefit, 20 seeds ===");
    let mut ratios = Vec::new();
    let mut withs = Vec::new();
    let mut withouts = Vec::new();
    for seed in 0..20 {
        let spec = SynthSpec {
            n_frames: 500,
            n_points: 200,
            bearing_noise: 0.1f64.to_radians(),
            outlier_frac: 0.1,
            loop_pairs: vec![(0, 499)],
            seed: 100 + seed,
            ..SynthSpec::default()
        };
        let (ds, gt) = build(&spec);
        let (tw, reports) = run_sequence(&ds, &PipelineConfig::default()).unwrap();
        let (to, _) = run_sequence(
            &ds,
            &PipelineConfig { use_loops: false, ..PipelineConfig::default() },
        )
        .unwrap();
        let accepted: usize = reports.iter().map(|r| r.loops_accepted).sum();
        let rw = rpen(&gt, &tw).unwrap();
        let ro = rpen(&gt, &to).unwrap();
        ratios.push(rw / ro);
        withs.push(rw);
        withouts.push(ro);
        println!(
            "seed {}: loops accepted {accepted}, rpen {:.4} vs {:.4} deg, ratio {:.3}",
            100 + seed,
            rw.to_degrees(),
            ro.to_degrees(),
            rw / ro
        );
    }
    ratios.sort_by(f64::total_cmp);
    withs.sort_by(f64::total_cmp);
    withouts.sort_by(f64::total_cmp);
    println!("median of per-seed ratios: {:.3}", ratios[ratios.len() / 2]);
    println!(
        "ratio of medians: {:.4}/{:.4} = {:.3}",
        withs[withs.len() / 2].to_degrees(),
        withouts[withouts.len() / 2].to_degrees(),
        withs[withs.len() / 2] / withouts[withouts.len() / 2]
    );
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "criterion1" => criterion1(),
        "criterion2" => criterion2(),
        "criterion3" => criterion3(),
        _ => {
            criterion1();
            criterion2();
            criterion3();
        }
    }
}
