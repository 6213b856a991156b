pub mod market;
pub mod backtest;
pub mod bayes_var;
pub mod cli;
pub mod fixtures;
pub mod llm;
pub mod neural;
pub mod training;
