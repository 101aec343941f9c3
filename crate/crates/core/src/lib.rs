pub mod chem;
pub mod actions;
pub mod net;
pub mod data;
pub mod eval;
pub mod pretrain;
pub mod scoring;
pub mod rl;
pub mod config;
pub mod corpus;
