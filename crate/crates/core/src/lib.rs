//! Weighted-encoding image interpolation with a nonlocal linear regression
//! model.
//!
//! Reconstructs a high-resolution grayscale image from a directly
//! down-sampled observation by alternating adaptive-PCA sparse coding with
//! an augmented-Lagrangian image update. A per-patch linear regression on
//! nonlocal similar patches supplies the data-consistency operator, and the
//! data fidelity is reweighted to suppress heavy-tailed fitting residuals.

pub mod bicubic;
pub mod dictionary;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod nlr;
pub mod numerics;
pub mod patch;
pub mod search;
pub mod solver;

pub use error::{Error, Result};
pub use image::{DownsampleOp, Image};
pub use patch::PatchSystem;
