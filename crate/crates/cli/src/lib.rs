//! Command layer for sitewatch: configuration, raster stack discovery, the
//! batch pipeline and the synthetic demo.

pub mod analysis;
pub mod config;
pub mod demo;
pub mod error;
pub mod pipeline;
pub mod stacks;
