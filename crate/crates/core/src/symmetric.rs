//! Deterministic symmetric primitives shared by every other module.
//!
//! * `PRF(key, x, tag)`: one AES-128 call on `tag || 0^7 || be64(x)`.
//! * `H(m)`: SHA-256.
//! * `f(x)`: single-block Davies-Meyer, `E_x(B0) ^ x` with `B0 = 0^128`.
//! * `CMP(a, b)`: constant-time 128-bit equality.

use core::fmt;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

/// Cipher block length in bytes.
pub const BLOCK_LEN: usize = 16;
/// Message digest length in bytes.
pub const DIGEST_LEN: usize = 32;

/// Initial chaining value of the Davies-Meyer construction.
pub const DM_IV: Block128 = Block128([0u8; BLOCK_LEN]);

/// A 16-byte value: PRF output, chaining value, signature chunk or one-way
/// image.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Block128(pub [u8; BLOCK_LEN]);

impl Block128 {
    pub const ZERO: Block128 = Block128([0u8; BLOCK_LEN]);

    pub fn as_bytes(&self) -> &[u8; BLOCK_LEN] {
        &self.0
    }

    pub fn xor(&self, other: &Block128) -> Block128 {
        let mut out = [0u8; BLOCK_LEN];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(other.0.iter())) {
            *o = a ^ b;
        }
        Block128(out)
    }
}

impl From<[u8; BLOCK_LEN]> for Block128 {
    fn from(bytes: [u8; BLOCK_LEN]) -> Self {
        Block128(bytes)
    }
}

impl fmt::Debug for Block128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block128(")?;
        write_hex(f, &self.0)?;
        write!(f, ")")
    }
}

/// A SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest256(pub [u8; DIGEST_LEN]);

impl Digest256 {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }
}

impl fmt::Debug for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest256(")?;
        write_hex(f, &self.0)?;
        write!(f, ")")
    }
}

/// A 128-bit PRF key (master secret, signer seed or per-state key).
///
/// `Debug` never prints the key bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct PrfKey([u8; BLOCK_LEN]);

impl PrfKey {
    pub const fn from_bytes(bytes: [u8; BLOCK_LEN]) -> Self {
        PrfKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; BLOCK_LEN] {
        &self.0
    }

    pub fn random<R: rand_core::CryptoRngCore + ?Sized>(
        rng: &mut R,
    ) -> Result<Self, rand_core::Error> {
        let mut bytes = [0u8; BLOCK_LEN];
        rng.try_fill_bytes(&mut bytes)?;
        Ok(PrfKey(bytes))
    }
}

impl From<Block128> for PrfKey {
    fn from(block: Block128) -> Self {
        PrfKey(block.0)
    }
}

impl fmt::Debug for PrfKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrfKey(<redacted>)")
    }
}

/// One-byte domain separator placed in front of every PRF input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DomainTag(pub u8);

impl DomainTag {
    /// `gamma_i = PRF(msk, id)`.
    pub const SEED: DomainTag = DomainTag(0x01);
    /// `sk_i^j = PRF(gamma_i, j)`.
    pub const STATE: DomainTag = DomainTag(0x02);
    /// `s^{j,l} = PRF(sk_i^j, l)`.
    pub const CHUNK: DomainTag = DomainTag(0x03);
}

/// Encodes a PRF input block: `tag || 0^7 || be64(input)`.
pub fn prf_input(input: u64, tag: DomainTag) -> Block128 {
    let mut block = [0u8; BLOCK_LEN];
    block[0] = tag.0;
    block[8..].copy_from_slice(&input.to_be_bytes());
    Block128(block)
}

/// A PRF instance with its key schedule expanded once.
#[derive(Clone)]
pub struct Prf {
    cipher: Aes128,
}

impl Prf {
    pub fn new(key: &PrfKey) -> Self {
        Prf {
            cipher: Aes128::new(GenericArray::from_slice(&key.0)),
        }
    }

    pub fn eval(&self, input: u64, tag: DomainTag) -> Block128 {
        encrypt_block(&self.cipher, &prf_input(input, tag))
    }
}

impl fmt::Debug for Prf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Prf(<redacted>)")
    }
}

/// `PRF(key, input)` under domain `tag`.
pub fn prf(key: &PrfKey, input: u64, tag: DomainTag) -> Block128 {
    Prf::new(key).eval(input, tag)
}

/// The message hash `H`.
pub fn hash_message(message: &[u8]) -> Digest256 {
    Digest256(Sha256::digest(message).into())
}

/// Davies-Meyer one-way function over a single block: `E_x(B0) ^ x`.
pub fn dm_owf(input: &Block128) -> Block128 {
    let cipher = Aes128::new(GenericArray::from_slice(&input.0));
    encrypt_block(&cipher, &DM_IV).xor(input)
}

/// Constant-time equality of two blocks.
pub fn cmp_eq(a: &Block128, b: &Block128) -> bool {
    a.0.ct_eq(&b.0).into()
}

fn encrypt_block(cipher: &Aes128, block: &Block128) -> Block128 {
    let mut buf = GenericArray::clone_from_slice(&block.0);
    cipher.encrypt_block(&mut buf);
    Block128(buf.into())
}

fn write_hex(f: &mut fmt::Formatter<'_>, bytes: &[u8]) -> fmt::Result {
    for b in bytes {
        write!(f, "{b:02x}")?;
    }
    Ok(())
}
