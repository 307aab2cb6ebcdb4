//! Multiresolution matrix factorization, sparse graph wavelets built from it,
//! and a wavelet-convolutional recurrent forecaster.

pub mod adjacency;
pub mod eval;
pub mod forecast;
pub mod mmf;
pub mod sparse;
pub mod wavelet;
