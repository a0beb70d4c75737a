//! Adversarial training of classifiers whose output is a pivotal quantity:
//! its distribution does not depend on a nuisance parameter `Z`.
//!
//! A classifier `f` is trained against an adversary `r` that models
//! `p(z | f(x))`. The classifier minimises `L_f - λ L_r`, so it is rewarded
//! for making the adversary's job impossible. See [`train`] for the training
//! loop and [`eval`] for the measurements used to check pivotality.

pub mod adversary;
pub mod checkpoint;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod loss;
pub mod manifest;
pub mod nn;
pub mod optim;
pub mod plot;
pub mod train;

pub use error::{Error, Result};
