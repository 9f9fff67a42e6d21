// `!(x >= 0.0)` is how NaN gets rejected along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod deformation;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod heatmap;
pub mod magnetics;
pub mod metrics;
pub mod model;
pub mod seed;

pub use error::{Error, Result};

// The guide's snippets run as doctests.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    pub mod geometry {}
    #[doc = include_str!("../../../book/src/magnetics.md")]
    pub mod magnetics {}
    #[doc = include_str!("../../../book/src/deformation.md")]
    pub mod deformation {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    pub mod datasets {}
    #[doc = include_str!("../../../book/src/heatmaps.md")]
    pub mod heatmaps {}
    #[doc = include_str!("../../../book/src/model.md")]
    pub mod model {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub mod metrics {}
    #[doc = include_str!("../../../book/src/studies.md")]
    pub mod studies {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../book/src/determinism.md")]
    pub mod determinism {}
}
