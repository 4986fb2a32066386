//! Encrypted-evaluation contract.
//!
//! The protocol needs exactly three evaluations under encryption: the PRF
//! with an encrypted key, the one-way function of that PRF, and equality of
//! two encrypted images. [`Evaluator`] exposes those plus encryption and
//! needs only public material. [`Decryptor`] holds the secret part; callers
//! reach it through a [`RevealKey`], whose [`RevealPolicy`] limits which
//! ciphertext kinds may be opened. A verifier's policy admits only
//! comparison bits, so it can never open the encrypted master key.
//!
//! [`reference`] implements the contract with authenticated symmetric
//! encryption and decrypt-compute-re-encrypt evaluation. It gives no
//! confidentiality against anyone holding the public part and exists so the
//! protocol can be exercised end to end. A lattice backend would implement
//! the same traits.

use alloc::vec::Vec;
use core::fmt;

use rand_core::CryptoRngCore;

use crate::codec::{DecodeError, Reader};
use crate::symmetric::{Block128, DomainTag};

#[cfg(target_has_atomic = "64")]
mod metered;
pub mod reference;

#[cfg(target_has_atomic = "64")]
pub use metered::{EvalCounts, Metered};
pub use reference::{backend_keygen, Encoding, ReferencePublic, ReferenceSecret};

/// Upper bound on a framed ciphertext payload.
pub const MAX_PAYLOAD_LEN: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("unsupported security level {0}")]
    UnsupportedLevel(u32),
    #[error("ciphertext belongs to another backend")]
    ForeignBackend,
    #[error("ciphertext was produced under another key pair")]
    ForeignKey,
    #[error("expected a {expected:?} ciphertext, got {got:?}")]
    WrongKind {
        expected: CiphertextKind,
        got: CiphertextKind,
    },
    #[error("ciphertext failed authentication")]
    Corrupt,
    #[error("bit plaintext must be 0 or 1")]
    InvalidBit,
    #[error("reveal policy forbids opening {0:?} ciphertexts")]
    PolicyViolation(CiphertextKind),
    #[error("entropy source failed")]
    Entropy,
    #[error("malformed encoding: {0}")]
    Decode(#[from] DecodeError),
}

/// Four-byte backend identifier carried by every framed object.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BackendId(pub [u8; 4]);

impl fmt::Debug for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match core::str::from_utf8(&self.0) {
            Ok(s) => write!(f, "BackendId({s})"),
            Err(_) => write!(f, "BackendId({:?})", self.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum CiphertextKind {
    KeyMaterial = 0x01,
    OwfImage = 0x02,
    Bit = 0x03,
}

impl CiphertextKind {
    pub const ALL: [CiphertextKind; 3] = [
        CiphertextKind::KeyMaterial,
        CiphertextKind::OwfImage,
        CiphertextKind::Bit,
    ];

    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(CiphertextKind::KeyMaterial),
            0x02 => Some(CiphertextKind::OwfImage),
            0x03 => Some(CiphertextKind::Bit),
            _ => None,
        }
    }

    fn mask(self) -> u8 {
        1 << (self as u8)
    }
}

/// An opaque backend ciphertext tagged with its kind.
///
/// Framing: `[4-byte backend id][1-byte kind][4-byte BE length][payload]`.
#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext {
    backend: BackendId,
    kind: CiphertextKind,
    payload: Vec<u8>,
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ciphertext")
            .field("backend", &self.backend)
            .field("kind", &self.kind)
            .field("payload_len", &self.payload.len())
            .finish()
    }
}

impl Ciphertext {
    pub const HEADER_LEN: usize = 9;

    pub fn new(backend: BackendId, kind: CiphertextKind, payload: Vec<u8>) -> Self {
        Ciphertext {
            backend,
            kind,
            payload,
        }
    }

    pub fn backend(&self) -> BackendId {
        self.backend
    }

    pub fn kind(&self) -> CiphertextKind {
        self.kind
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn encoded_len(&self) -> usize {
        Self::HEADER_LEN + self.payload.len()
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.backend.0);
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let backend = BackendId(r.array()?);
        let kind =
            CiphertextKind::from_u8(r.u8()?).ok_or(DecodeError::Invalid("ciphertext kind"))?;
        let len = r.u32()? as usize;
        if len > MAX_PAYLOAD_LEN {
            return Err(DecodeError::TooLong(len));
        }
        let payload = r.take(len)?.to_vec();
        Ok(Ciphertext {
            backend,
            kind,
            payload,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let c = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(c)
    }
}

/// Plaintext recovered from a ciphertext.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Revealed {
    Block(Block128),
    Bit(bool),
}

impl Revealed {
    pub fn block(self) -> Option<Block128> {
        match self {
            Revealed::Block(b) => Some(b),
            Revealed::Bit(_) => None,
        }
    }

    pub fn bit(self) -> Option<bool> {
        match self {
            Revealed::Bit(b) => Some(b),
            Revealed::Block(_) => None,
        }
    }
}

/// Block encoding of a comparison bit: fifteen zero bytes then `0` or `1`.
pub fn bit_block(bit: bool) -> Block128 {
    let mut b = [0u8; 16];
    b[15] = u8::from(bit);
    Block128(b)
}

pub(crate) fn block_bit(block: &Block128) -> Result<bool, BackendError> {
    if block.0[..15].iter().any(|&b| b != 0) || block.0[15] > 1 {
        return Err(BackendError::InvalidBit);
    }
    Ok(block.0[15] == 1)
}

/// Public-material operations: encryption and the three evaluations.
pub trait Evaluator {
    fn backend_id(&self) -> BackendId;

    /// Randomized encryption; equal plaintexts give unequal payloads.
    fn encrypt<R: CryptoRngCore + ?Sized>(
        &self,
        value: &Block128,
        kind: CiphertextKind,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError>;

    /// Encryption of `PRF(Dec(key), input)` under `tag`, as key material.
    fn eval_prf<R: CryptoRngCore + ?Sized>(
        &self,
        key: &Ciphertext,
        input: u64,
        tag: DomainTag,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError>;

    /// Encryption of `f(PRF(Dec(key), index))` under `tag`, as an image.
    fn eval_owf_prf<R: CryptoRngCore + ?Sized>(
        &self,
        key: &Ciphertext,
        index: u64,
        tag: DomainTag,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError>;

    /// [`Evaluator::eval_owf_prf`] over many indices with one key.
    fn eval_owf_prf_many<R: CryptoRngCore + ?Sized>(
        &self,
        key: &Ciphertext,
        indices: &[u64],
        tag: DomainTag,
        rng: &mut R,
    ) -> Result<Vec<Ciphertext>, BackendError> {
        indices
            .iter()
            .map(|&i| self.eval_owf_prf(key, i, tag, rng))
            .collect()
    }

    /// Encryption of the bit `Dec(a) == Dec(b)`.
    fn eval_cmp<R: CryptoRngCore + ?Sized>(
        &self,
        a: &Ciphertext,
        b: &Ciphertext,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError>;
}

/// Secret-material operation.
pub trait Decryptor {
    fn decrypt(&self, c: &Ciphertext) -> Result<Revealed, BackendError>;
}

/// Set of ciphertext kinds a holder may open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RevealPolicy {
    allowed: u8,
}

impl RevealPolicy {
    /// Comparison bits only.
    pub const fn verifier() -> Self {
        RevealPolicy {
            allowed: 1 << (CiphertextKind::Bit as u8),
        }
    }

    /// Every kind; for the key authority and for tests.
    pub const fn full() -> Self {
        RevealPolicy {
            allowed: (1 << (CiphertextKind::KeyMaterial as u8))
                | (1 << (CiphertextKind::OwfImage as u8))
                | (1 << (CiphertextKind::Bit as u8)),
        }
    }

    pub fn from_kinds(kinds: &[CiphertextKind]) -> Self {
        RevealPolicy {
            allowed: kinds.iter().fold(0, |m, k| m | k.mask()),
        }
    }

    pub fn allows(&self, kind: CiphertextKind) -> bool {
        self.allowed & kind.mask() != 0
    }

    pub fn to_byte(self) -> u8 {
        self.allowed
    }

    pub fn from_byte(b: u8) -> Result<Self, DecodeError> {
        if b & !Self::full().allowed != 0 {
            return Err(DecodeError::Invalid("reveal policy bits"));
        }
        Ok(RevealPolicy { allowed: b })
    }
}

/// Policy-scoped access to decryption.
pub trait Reveal {
    fn reveal(&self, c: &Ciphertext) -> Result<Revealed, BackendError>;
}

#[derive(Debug, Clone)]
pub struct RevealKey<D> {
    decryptor: D,
    policy: RevealPolicy,
}

impl<D: Decryptor> RevealKey<D> {
    pub fn new(decryptor: D, policy: RevealPolicy) -> Self {
        RevealKey { decryptor, policy }
    }

    pub fn policy(&self) -> RevealPolicy {
        self.policy
    }

    pub fn decryptor(&self) -> &D {
        &self.decryptor
    }
}

impl<D: Decryptor> Reveal for RevealKey<D> {
    fn reveal(&self, c: &Ciphertext) -> Result<Revealed, BackendError> {
        if !self.policy.allows(c.kind()) {
            return Err(BackendError::PolicyViolation(c.kind()));
        }
        self.decryptor.decrypt(c)
    }
}

impl<T: Reveal + ?Sized> Reveal for &T {
    fn reveal(&self, c: &Ciphertext) -> Result<Revealed, BackendError> {
        (**self).reveal(c)
    }
}

/// Backend instantiation descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackendParams {
    pub security_level: u32,
    pub encoding: Encoding,
}

impl Default for BackendParams {
    fn default() -> Self {
        BackendParams {
            security_level: 128,
            encoding: Encoding::AesGcm,
        }
    }
}

/// Output of backend key generation.
#[derive(Debug, Clone)]
pub struct BackendKeyPair<P, S> {
    pub public_part: P,
    pub secret_part: S,
    pub params: BackendParams,
}
