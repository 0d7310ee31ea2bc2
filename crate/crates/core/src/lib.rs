pub mod cli;
pub mod config;
pub mod delayline;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod graph;
pub mod protocol;
pub mod sim;
