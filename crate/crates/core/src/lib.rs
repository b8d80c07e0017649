//! Secure gradient coding with uncoded groupwise keys.
//!
//! A user wants `g_1 + ... + g_K` from any `Nr` of `N` servers. Each dataset
//! sits on at least `M` servers and every `S`-subset of servers shares one
//! independent key. This crate builds the linear scheme `X_n = C_n F W` over a
//! prime field, simulates rounds of it, and checks decodability, encodability
//! and security exactly (ranks, not tolerances).
//!
//! Modules, bottom up: [`field`], [`exactmat`], [`keyspace`], [`scheme`],
//! [`engine`], [`verifier`], [`analysis`], [`cli`].

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod exactmat;
pub mod field;
pub mod keyspace;
pub mod scheme;
pub mod verifier;

pub use exactmat::FieldMatrix;
pub use field::{make_field, FieldElement, FieldModulus, SeededRng, DEFAULT_MODULUS};
pub use scheme::{build_scheme, DataAssignment, SchemeArtifact, SchemeParams};
