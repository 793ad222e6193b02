//! Synthesis of geometry-grounded spatial QA datasets from annotated 3D
//! scenes, cognitive-map reasoning traces, and scoring of model predictions.

pub mod cot;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod qa;
pub mod rng;
pub mod scene;
pub mod selection;
pub mod synth;
pub mod visibility;
