//! USNID: unsupervised and semi-supervised new intent discovery with
//! contrastive pre-training and centroid-guided clustering.

pub mod alignment;
pub mod cli;
pub mod clustering;
pub mod data;
pub mod encoder;
pub mod error;
pub mod estimation;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod optim;
pub mod pipeline;
pub mod report;
pub mod synthetic;

pub use error::{Error, Result};
