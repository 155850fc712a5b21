pub mod ami;
pub mod normalize;
pub mod eval;
pub mod lower;
pub mod parser;
pub mod safety;
pub mod session;
pub mod table;
pub mod typecheck;
pub mod value;
