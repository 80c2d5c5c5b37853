//! Simulator and optimizer for indoor visible-light networks assisted by a
//! wall-mounted array of steerable mirrors.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); learning
//! agents and the experiment harness run in `f64`.

// `!(x > 0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod channel;
pub mod dynamics;
pub mod envmdp;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod neural;
pub mod scalar;
pub mod scene;

pub use error::{Error, Result};
pub use geometry::Vec3;
pub use scalar::Scalar;

pub type Vec3d = geometry::Vec3<f64>;
pub type Vec3f = geometry::Vec3<f32>;
pub type Scene64 = scene::Scene<f64>;
pub type Scene32 = scene::Scene<f32>;
pub type SceneConfig64 = scene::SceneConfig<f64>;
pub type EnvConfig64 = envmdp::EnvConfig<f64>;
pub type Env64 = envmdp::Env<f64>;
pub type Env32 = envmdp::Env<f32>;
pub type Mlp64 = neural::Mlp<f64>;
pub type Mlp32 = neural::Mlp<f32>;
