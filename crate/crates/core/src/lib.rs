pub mod model;
pub mod parse;
pub mod sim;
pub mod check;
pub mod programs;
pub mod instructions;
pub mod prompting;
pub mod seed;
pub mod backend;
pub mod config;
pub mod campaign;
pub mod stats;
pub mod cli;
pub mod corpus;
