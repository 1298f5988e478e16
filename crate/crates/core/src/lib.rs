pub mod numerics;
pub mod nnet;
pub mod data;
pub mod teachers;
pub mod student;
pub mod losses;
pub mod eval;
