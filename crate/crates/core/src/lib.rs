//! Photometric scene and camera simulator, triplet-frame adaptive exposure control,
//! multi-exposure region fusion and an rPPG heart-rate pipeline.

pub mod controller;
pub mod error;
pub mod evaluate;
pub mod fusion;
pub mod metrics;
pub mod presets;
pub mod quadrature;
pub mod rppg;
pub mod scene;
pub mod sensor;
pub mod strategy;

pub use error::{Error, Result};
