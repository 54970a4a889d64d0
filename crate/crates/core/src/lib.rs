//! Evidence-centric verification of image-text claims.
//!
//! The pipeline runs in two stages. Stage 1 grows one search tree per
//! subtask (text, image) in which a planner proposes tool calls, the
//! environment executes them, and every trajectory is scored for
//! structural utility and evidential confidence. Stage 2 hands the
//! collected evidence to a skeptic/supporter debate whose transcript is
//! adjudicated by a judge, falling back to a deterministic fusion of the
//! Stage-1 labels when the judge is not confident enough.
//!
//! All score arithmetic is generic over the scalar type (see [`Real`]);
//! the pipeline itself runs on [`Score`] (`f64`).

pub mod agents;
pub mod clock;
pub mod config;
pub mod debate;
pub mod harness;
pub mod mcts;
pub mod model;
pub mod scoring;
pub mod testkit;
pub mod toolplane;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the score kernels are generic over: f32 or f64.
pub trait Real: Float + FromPrimitive {}
impl<T: Float + FromPrimitive> Real for T {}

/// Concrete scalar used by the pipeline. Scores live in [0, 1].
pub type Score = f64;

pub use config::{RunConfig, RunMode};
pub use debate::{DebateConfig, DebateTranscript, Stage1Bundle};
pub use harness::{ClaimRecord, MetricsReport};
pub use mcts::{SearchConfig, SubtaskResult};
pub use model::{
    Action, Claim, EvidenceAtom, Modality, Subtask, SubtaskLabel, Trajectory, Verdict,
    VerdictLabel, VerdictOrigin,
};
pub use scoring::{ScoringConfig, TrajectoryScores};
pub use toolplane::{DetectorReport, ToolDescriptor, ToolRegistry};
