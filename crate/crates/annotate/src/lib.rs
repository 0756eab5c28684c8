//! Task service for paraphrasing generated questions and validating the
//! paraphrases.

pub mod config;
pub mod ned;
pub mod service;
pub mod store;

pub use config::Config;
pub use service::{router, serve, App};
