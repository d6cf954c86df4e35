pub mod eval;
pub mod export;
pub mod gradcheck;
pub mod stats;
pub mod train;
