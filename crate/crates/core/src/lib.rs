//! Counterfactual scene interventions for finding the groups of inputs a
//! perception model struggles with.
//!
//! The pipeline: sample symbolic driving scenes ([`scene`]), derive ground
//! truth boxes through a pinhole camera ([`geometry`]), encode scenes as token
//! sequences ([`codec`]), resample single scene attributes with a masked
//! density model ([`density`]), score an oracle detector before and after each
//! edit ([`detector`], [`score`]), and rank the edited attribute values by how
//! often they flip the score ([`intervention`]). [`curation`] builds the
//! datasets used to retrain the oracle on the groups that were found.

pub mod codec;
pub mod config;
pub mod curation;
pub mod density;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod group;
pub mod intervention;
pub mod io;
pub mod report;
pub mod scene;
pub mod score;
pub mod seed;
pub mod stats;
pub mod world;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/interventions.md")]
    mod interventions {}
    #[doc = include_str!("../../../book/src/retraining.md")]
    mod retraining {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
