//! Yoccoz puzzles for polynomials with a bounded superattracting fixed Fatou
//! component: potentials, rays, puzzle pieces, enhanced nests and moduli.

pub mod angles;
pub mod poly_core;

pub use poly_core::{Polynomial, C64};
pub mod rays;
pub mod puzzle;
pub mod nest;
pub mod moduli;
pub mod cli;
