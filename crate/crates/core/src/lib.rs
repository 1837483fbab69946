pub mod assembly;
pub mod cli;
pub mod config;
pub mod element;
pub mod estimator;
pub mod export;
pub mod expr;
pub mod linsolve;
pub mod mesh;
pub mod optimizer;
pub mod problem;
pub mod space;
pub mod sparse;
pub mod verify;
