pub mod analysis;
pub mod chem;
pub mod data;
pub mod models;
pub mod netprop;
pub mod nn;
pub mod rng;
pub mod train;
