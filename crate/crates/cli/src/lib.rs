//! Command-line tools and the HTTP re-posing service.

pub mod commands;
pub mod service;
