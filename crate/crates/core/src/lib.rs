//! Blind source separation with the convex Cauchy-Schwarz divergence.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: small dense matrices, Jacobi eigensolver, determinants, cofactors
//! - [`density`]: Gaussian Parzen window estimators
//! - [`divergence`]: the convex function `f`, CCS/CS divergences, geometry terms
//! - [`ica`]: whitening, the sampled contrast, its analytic gradient, descent loop
//! - [`eval`]: alignment, SIR, kurtosis, divergence landscapes
//! - [`datagen`]: seeded uniform/Laplacian sources, mixing presets, noise
//!
//! ```no_run
//! use ccs_ica::{datagen, ica, eval};
//!
//! let s = datagen::gen_sources(&datagen::sources_2(), 1000, 7)?;
//! let x = datagen::mix(&s, &datagen::preset_2x2(), 7)?.signals;
//! let out = ica::run(&x, &ica::IcaConfig::default())?;
//! let report = eval::evaluate(&s, &out.demixed)?;
//! println!("SIR {:.1} dB", report.total_sir_db);
//! # Ok::<(), ccs_ica::Error>(())
//! ```

// guards like `!(x > 0.0)` are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod density;
pub mod divergence;
mod error;
pub mod eval;
pub mod ica;
pub mod linalg;

pub use divergence::{ConvexityParam, DiscreteJointDist, DivergenceGeometry, Objective};
pub use error::{Error, Result};
pub use eval::{Alignment, LandscapeGrid, SeparationReport};
pub use ica::{IcaConfig, IcaRun, IcaState, ObjectiveKind, WhiteningTransform};
pub use linalg::{SampleMatrix, SquareMatrix, SymEig};
