pub mod aggregate;
pub mod analyze;
pub mod compare;
pub mod eval;
pub mod gen;
pub mod review;
pub mod serve;
pub mod simulate;
pub mod train;
