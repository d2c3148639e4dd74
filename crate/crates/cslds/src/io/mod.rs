pub mod config;
pub mod container;
pub mod csv;
pub mod pgm;
