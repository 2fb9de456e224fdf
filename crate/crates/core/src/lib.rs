pub mod ast;
pub mod engine;
pub mod parser;
pub mod protocol;
pub mod quantum;
