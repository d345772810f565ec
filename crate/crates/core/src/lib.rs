pub mod domain;
pub mod envmodels;
pub mod reward;
pub mod surrogate;
pub mod planner;
pub mod oracle;
pub mod monitors;
pub mod switcher;
pub mod seed;
pub mod sim;
pub mod config;
pub mod experiment;
