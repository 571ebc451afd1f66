//! Detector-agnostic toolkit that links per-frame scored region proposals
//! into spatio-temporal action tubes and evaluates tube detections against
//! ground truth.
//!
//! The pipeline runs in stages: [`ingest`] loads and prunes proposals,
//! [`scoring`] applies a linear classifier to fused appearance/flow features,
//! [`linker`] chains proposals into class-specific paths and trims them into
//! scored tubes via two dynamic-programming passes, and [`eval`] measures the
//! result with a threshold-swept, integrated-F1 protocol. [`synthetic`]
//! provides deterministic scenarios and brute-force oracles for testing the
//! optimisation stages without trained models.
//!
//! All types are immutable values after construction and every operation is a
//! pure function, so videos and classes can be processed concurrently without
//! coordination.

pub mod error;
pub mod eval;
pub mod geom;
pub mod ingest;
pub mod io;
pub mod linker;
pub mod scoring;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
pub use eval::{EvalThresholds, IntegratedScores, MatchReport, OverlapProfile, VideoSet};
pub use geom::{box_iou, mask_iou, region_overlap, BoundingBox, PixelMask, PixelRun};
pub use linker::link_video;
pub use types::{
    ActionPath, ActionTube, Extent, GroundTruthTube, LabelSequence, LinkerConfig, RegionProposal,
    ScoreVector, VideoProposals,
};
