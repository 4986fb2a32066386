//! Command line, on-disk stores and the outsourced key-constructor service
//! for the schemes in [`inf_hors_core`].

#![forbid(unsafe_code)]

pub mod bench;
pub mod cli;
pub mod service;
pub mod store;
