//! Similarity-based site expansion.
//!
//! The pipeline learns compact embeddings of grid-cell features with a
//! hybrid denoising autoencoder ([`hdae`]), scores candidate cells by their
//! embedding similarity to cells that already host a station
//! ([`similarity`]), selects a spatially dispersed subset with a greedy
//! maximum-weight independent set plus swap local search ([`allocation`]),
//! and condenses several parametrisations into consensus zones
//! ([`consensus`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below name the common instantiations.

pub mod allocation;
pub mod consensus;
pub mod error;
pub mod evaluation;
pub mod export;
pub mod features;
pub mod grid;
pub mod hdae;
pub mod io;
pub mod scalar;
pub mod seed;
pub mod similarity;
pub mod split;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use features::FeatureTable;
pub use grid::{CellRecord, GridModel};
pub use hdae::{EmbeddingTable, ModelConfig, ModelParams, TrainConfig, TrainReport};
pub use scalar::Scalar;
pub use split::Split;

pub type FeatureTable64 = FeatureTable<f64>;
pub type FeatureTable32 = FeatureTable<f32>;
pub type ModelParams64 = ModelParams<f64>;
pub type ModelParams32 = ModelParams<f32>;
pub type EmbeddingTable64 = EmbeddingTable<f64>;
pub type EmbeddingTable32 = EmbeddingTable<f32>;
pub type AllocationResult64 = allocation::AllocationResult<f64>;
pub type AllocationResult32 = allocation::AllocationResult<f32>;
pub type WeightResult64 = similarity::WeightResult<f64>;
pub type WeightResult32 = similarity::WeightResult<f32>;
