pub mod compare;
pub mod eval;
pub mod gen;
pub mod mine;
pub mod propose;
pub mod train;
