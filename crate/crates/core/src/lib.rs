#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod features;
pub mod graph;
pub mod io;
pub mod mask;
pub mod matrix;
pub mod metrics;
pub mod propagation;
pub mod raster;
pub mod scribbles;
pub mod serve;
pub mod superpixels;
pub mod synthetic;
