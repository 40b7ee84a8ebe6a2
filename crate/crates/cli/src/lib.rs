//! Loading, solving, validating and exporting AMoD network design instances.

pub mod config;
pub mod gen;
pub mod geojson;
pub mod load;
pub mod run;
pub mod solution;
pub mod sweep;
pub mod validate;
