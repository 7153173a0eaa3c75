//! Performance model, pipeline simulator, network cost toolkit and int8
//! functional reference for a dual-mode (regular and depthwise) CNN
//! accelerator.

pub mod configs;
pub mod costmodel;
pub mod csvio;
pub mod error;
pub mod funcsim;
pub mod netir;
pub mod perfmodel;
pub mod pipesim;

pub use error::{Error, Result};
