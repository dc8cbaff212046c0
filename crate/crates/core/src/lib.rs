//! Rotation-only visual odometry from bearing correspondences.
//!
//! The crate estimates camera orientation alone: per-pair relative
//! rotations from 2D-2D correspondences through an epipolar objective that
//! stays well posed at zero baseline, robust selection over contaminated
//! matches, and anchored incremental rotation averaging over a growing
//! view-graph with loop-closure-triggered global refinement.

pub mod bearing;
pub mod error;
pub mod loopclose;
pub mod metrics;
pub mod pipeline;
pub mod relrot;
pub mod rotavg;
pub mod so3;
pub mod synth;
pub mod viewgraph;

pub use bearing::{pixel_to_bearing, BearingVec, Intrinsics};
pub use error::{Error, Result};
pub use loopclose::{close_loop, validate_loop, LoopCandidate, LoopValidation};
pub use metrics::{avg_rot_err, rpe1, rpen, AvgRotErr, GroundTruth};
pub use pipeline::{
    format_timing, format_trajectory, load_dataset, parse_trajectory, run_sequence, Dataset,
    FrameRecord, Mode, Pipeline, PipelineConfig, StepReport,
};
pub use relrot::{ransac_relrot, solve_relrot, CorrSet, RelRotConfig, RelRotResult};
pub use rotavg::{edge_residual, solve_global, solve_incremental, IrlsConfig, RobustLoss};
pub use so3::{geodesic_angle, Rot3, TangentVec};
pub use synth::{
    gen_correspondences, gen_rotgraph, gen_trajectory, Motion, RotGraphData, SynthDataset,
    SynthSpec,
};
pub use viewgraph::{EdgeData, LocalSubgraph, ViewGraph};
