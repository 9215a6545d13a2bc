//! Knowledge graph embeddings built from compound 3D affine operators.
//!
//! Entities are vectors in `R^d` split into `d/3` blocks. Each relation
//! applies a chain of translation, scaling, rotation, reflection and shear
//! operators to every block of the head (and optionally the tail) and
//! scores a triple by the distance between the two sides.

// `!(x > 0.0)` is how config validation rejects NaN along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod geometry3d;
pub mod model;
pub mod optim;
pub mod search;
pub mod synthetic;
pub mod training;

pub use data::{load_dataset, Dataset, FilterIndex, Triple, TripleStore, Vocab};
pub use error::{Error, Result};
pub use evaluation::{evaluate, LinkScorer, Metrics, MetricsReport};
pub use geometry3d::{AffineOp, OpParams, OperatorKind};
pub use model::{Model, ModelConfig, NormOrder, VariantSpec};
pub use training::{train, LossConfig, TrainConfig};
