//! Coordinate-conditional patch generation.
//!
//! A generator synthesizes small micro patches from a latent vector and a
//! spatial coordinate. A discriminator judges macro patches assembled from
//! several neighbouring micro patches and also regresses their position. At
//! inference the full canvas is produced by generating every micro patch
//! independently and concatenating them.
//!
//! This crate is `no_std` (it needs `alloc`) and holds everything that is pure
//! computation: the reverse-mode [`autodiff`] engine, the [`nn`] building blocks
//! and model builders, [`coords`] algebra, the [`train`]ing objective and loop,
//! synthetic [`data`], and [`metrics`]. File formats and the command line live
//! in the companion `coordgan` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod coords;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod render;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
