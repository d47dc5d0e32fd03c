//! Cloud segmentation for ground-based radiometric infrared sky images.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! 1. **imaging** – frame/weather/label/manifest types and bit-exact file I/O.
//! 2. **synth** – a deterministic synthetic scene generator used for tests,
//!    benchmarks and the browser demo.
//! 3. **preprocess** – lapse-rate heights, the clear-sky window (lens stain)
//!    model, the background irradiance model with its nonlinear fit,
//!    tropopause-referenced temperature increments, 8-bit normalization and
//!    dense weighted Lucas-Kanade optical flow.
//! 4. **features** – per-pixel feature families with optional neighborhood
//!    concatenation and standardization.
//! 5. **generative / mrf / discriminative** – the segmentation models:
//!    Gaussian discriminant analysis, naive Bayes, k-means, Gaussian
//!    mixtures, supervised and unsupervised Markov random fields with ICM and
//!    simulated annealing, and primal-form ridge regression, L2 support
//!    vector and Bayesian logistic (Laplace) classifiers on explicit
//!    polynomial feature maps.
//! 6. **model / evaluation** – a unified trained-model wrapper with flat-file
//!    serialization, Youden-J metrics, ROC-based decision-prior selection,
//!    leave-one-out cross-validation with grid search, single-threaded timing
//!    benchmarks and majority voting.

pub mod discriminative;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gaussian;
pub mod generative;
pub mod grid;
pub mod imaging;
pub mod linalg;
pub mod model;
pub mod mrf;
pub mod poly;
pub mod preprocess;
pub mod synth;

pub use error::{Error, Result};
pub use grid::Grid;
