//! Core of the Kaya DApp testing framework: the MiniSol contract analyzer, the
//! storage layout codec, the DBDL test language, a reference contract VM, the
//! suite runner and the log analyzer.

pub mod dbdl;
pub mod keccak;
pub mod layout;
pub mod lex;
pub mod minisol;
pub mod pipeline;
pub mod report;
pub mod runner;
pub mod vm;
pub mod word;
