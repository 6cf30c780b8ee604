//! Program rewriting for visual program inference over 2D and 3D CSG.

pub mod ast;
pub mod cli;
pub mod diff;
pub mod exec;
pub mod graft;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod parse;
pub mod po;
pub mod prune;
pub mod rewriters;
pub mod sampler;
pub mod siri;
pub mod store;
pub mod ttr;

pub use ast::{BoolOp, Dim, Expr, NodePath, PrimitiveKind, TransformKind};
pub use grid::{OccupancyGrid, Shape};
pub use metrics::{ObjectiveConfig, Recon, Score};
