//! Site-centred environmental change monitoring.
//!
//! Rasters come in through [`raster_io`], sites and their areas of interest
//! through [`site_registry`]. [`indices`] turns raster stacks into per-site
//! series, [`timeseries`] fits and tests them, [`energy`] adds grid carbon
//! context and [`report`] writes the results out.

pub mod energy;
pub mod indices;
pub mod raster_io;
pub mod report;
pub mod site_registry;
pub mod timeseries;
