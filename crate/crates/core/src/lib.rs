//! Kernel-approximation classification with supervised landmark selection.
//!
//! The toolkit trains an approximate kernel ridge classifier from a Nystrom
//! feature map, ranks training samples by the negative margin of their
//! class-own binary classifier, rebuilds the map from the highest-ranked
//! samples, and ships the result as a dual-form classifier whose test cost
//! depends only on the number of support points. Unsupervised Nystrom
//! variants (ensemble, randomized SVD, k-means) and Random Fourier Features
//! are included as baselines, together with a benchmark harness.

pub mod data;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod kmeans;
pub mod linalg;
pub mod nystrom;
pub mod ridge;
pub mod selection;

pub use error::{Error, Result};
