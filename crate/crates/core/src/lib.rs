pub mod cli;
pub mod conductivity;
pub mod config;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod mollifier;
pub mod ndmap;
pub mod quadrature;
pub mod reconstruct;
pub mod report;
pub mod stability;
