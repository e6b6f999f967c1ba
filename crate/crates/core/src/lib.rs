pub mod afr;
pub mod error;
pub mod explainers;
pub mod indices;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod synthetic;
pub mod verify;
