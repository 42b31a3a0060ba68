//! Differentiable graph-matching data association for online multiple
//! object tracking.

pub mod cli;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod matching;
pub mod net;
pub mod qp;
pub mod track;
