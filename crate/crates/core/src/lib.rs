//! Whole-network classification.
//!
//! A network is turned into a picture and the picture is classified:
//! random walks over the graph feed a skip-gram model with negative sampling,
//! the node vectors are projected to the plane with PCA, the resulting point
//! cloud is binned into a fixed-size grayscale raster, and a small
//! convolutional network labels the raster.
//!
//! Every stochastic stage draws from an [`RngStream`], so a master seed fully
//! determines datasets, models and reported error rates.

pub mod cli;
pub mod cnn;
pub mod embed;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod graph;
pub mod raster;
pub mod rng;
pub mod walker;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
pub use rng::RngStream;
