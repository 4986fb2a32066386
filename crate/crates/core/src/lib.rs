//! INF-HORS core: a stateful HORS-style signature where signers keep only a
//! 16-byte seed and a counter, and verifiers rebuild each one-time public key
//! from a single constant-size master public key through encrypted
//! evaluation.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, persistence,
//! the command line and the constructor service live in the `inf-hors`
//! crate.
//!
//! Module map:
//!
//! * [`symmetric`]: the keyed PRF, message hash, Davies-Meyer one-way
//!   function and constant-time equality.
//! * [`hors`]: the plain one-time HORS signature.
//! * [`backend`]: the encrypted-evaluation contract and its reference
//!   implementation.
//! * [`scheme`]: key generation, signing, one-time key construction and
//!   verification.
//! * [`keystore`]: signer identities, the replay ledger and the one-time key
//!   cache.
//! * [`codec`]: byte-level helpers shared by the binary encodings.
//!
//! WARNING: the signer state is a counter. Signing twice with the same
//! counter reveals enough secret chunks to forge; persist the incremented
//! state before releasing a signature.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backend;
pub mod codec;
pub mod hors;
pub mod keystore;
pub mod scheme;
pub mod symmetric;

mod error;

pub use error::Error;
