extern crate blas_src;

pub mod alpha;
pub mod error;
pub mod hankel;
pub mod harness;
pub mod linalg;
pub mod opcore;
pub mod pcfunc;
pub mod resolvent;
pub mod scatter1d;
pub mod tolerances;
