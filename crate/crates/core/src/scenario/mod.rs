pub mod builtin;
pub mod checks;
pub mod config;
pub mod run;
pub mod snapshot;
