//! Command-line front end and SVG rendering.

pub mod app;
pub mod render;

pub use app::run;
