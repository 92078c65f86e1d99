//! Parallel location calculus: a region-based language whose values live
//! serialized in append-only regions, with fork/join parallel allocation.
//!
//! The crate is `no_std` (it needs `alloc`). File IO, command-line handling
//! and wall-clock timing live in the `locpar` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod eval_par;
pub mod eval_seq;
pub mod layout;
pub mod name;
pub mod store;
pub mod syntax;
pub mod typecheck;

pub use name::{Fresh, Name};
