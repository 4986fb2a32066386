use crate::backend::BackendError;
use crate::codec::DecodeError;
use crate::hors::HorsError;
use crate::keystore::RegistryError;

/// Errors from key generation, signing, construction and verification.
///
/// A cryptographic rejection is `Ok(false)`, never an `Error`.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Hors(#[from] HorsError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("signer counter {0} reached the signing limit")]
    CounterExhausted(u64),
    #[error("signature counter {signature} does not match one-time key counter {key}")]
    CounterMismatch { key: u64, signature: u64 },
    #[error("one-time key belongs to signer {key:016x}, not {expected:016x}")]
    SignerMismatch { key: u64, expected: u64 },
    #[error("one-time key does not cover index {0}")]
    Coverage(u16),
    #[error("full one-time key holds {got} components, parameters require {expected}")]
    KeyShape { expected: usize, got: usize },
    #[error("comparison did not yield a bit")]
    NotABit,
    #[error("entropy source failed")]
    Entropy,
}
