//! Slow, direct reference computations. Everything here works on plain
//! arrays and is written from the defining formulas, without sharing code
//! with the library it checks.

pub mod assign;
pub mod boxes;
pub mod eval;
pub mod fusion;
pub mod gradient;
pub mod js;
pub mod random;
