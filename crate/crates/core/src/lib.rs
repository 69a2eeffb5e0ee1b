//! Monocular visual odometry on binary edge bitmaps and corner events.

pub mod descriptor;
pub mod eval;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod lm;
pub mod sim;
pub mod tracking;
pub mod vo;
