pub mod cli;
pub mod config;
pub mod credrank;
pub mod graph;
pub mod ledger;
pub mod numfmt;
pub mod opr;
pub mod rank;
pub mod sim;
pub mod snapshot;
pub mod token;
