//! Adaptive zoom/adjacency region-proposal search.
//!
//! Given an image-like scene and a predictor, the search recursively grows
//! a tree of anchor regions, emitting ranked bounding-box proposals as it
//! goes. The crate bundles everything needed to exercise the idea at desk
//! scale:
//!
//! - [`geometry`]: boxes, IoU, box regression encoding, the five-way
//!   region division and the 11 sub-region prior templates;
//! - [`dataset`]: synthetic rectangle scenes and their rendering to
//!   feature grids;
//! - [`sampling`]: zoom/adjacency label assignment, inverse matching and
//!   noisy-label hard-example mining;
//! - [`predictor`]: region pooling plus three predictor implementations
//!   (ground-truth oracle, seeded random baseline, small trainable model);
//! - [`search`]: the adaptive search loop and a fixed-grid baseline;
//! - [`training`]: the multi-task loss with analytic gradients, gradient
//!   checking and a momentum-SGD loop;
//! - [`eval`]: recall and anchor-efficiency reports.
//!
//! Everything is deterministic for a fixed seed; randomness flows through
//! named substreams in [`seeds`].

pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod predictor;
pub mod sampling;
pub mod search;
pub mod seeds;
pub mod training;

pub use dataset::{FeatureGrid, Scene, SceneObject};
pub use geometry::{BBox, PriorTable, PriorTemplate, RegressionTarget, NUM_PRIORS};
pub use predictor::{Predictor, ZoomAdjacencyOutput};
pub use search::{Proposal, SearchParams, SearchTrace};
