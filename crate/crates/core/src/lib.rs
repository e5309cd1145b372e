//! Matrix-weighted Besov and Triebel–Lizorkin sequence spaces on finite
//! dyadic windows, with almost-diagonal operators, wavelet and
//! Littlewood–Paley front ends, and a verification harness.

pub mod adops;
pub mod dyadic;
pub mod error;
pub mod growth;
pub mod harness;
pub mod linalg;
pub mod par;
pub mod reducing;
pub mod seqspace;
pub mod transforms;
pub mod weights;

pub use error::{Error, Result};
