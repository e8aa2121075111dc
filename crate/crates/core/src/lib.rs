//! Quality gating for landmark heatmaps produced by generative models.
//!
//! Candidates are extracted from a heatmap, labeled with a Markov random
//! field solved by loopy belief propagation, matched against a statistical
//! shape model with RANSAC and accepted or rejected by two plausibility
//! constraints. The [`diffusion`] module holds the DDPM schedule and sampling
//! math used to produce such heatmaps.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod gate;
pub mod geometry;
pub mod heatmap;
pub mod mrf;
pub mod pipeline;
pub mod shapestats;
pub mod ssm;
pub mod student_t;
