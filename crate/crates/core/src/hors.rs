//! The one-time HORS signature, parameterised by `(k, t)`.
//!
//! Index derivation reads the first `k * log2(t)` bits of the digest,
//! most significant bit first, and interprets each `log2(t)`-bit group as a
//! big-endian integer. Duplicate indices are revealed as many times as they
//! occur.

use alloc::vec::Vec;

use rand_core::CryptoRngCore;

use crate::symmetric::{
    dm_owf, hash_message, Block128, Digest256, DomainTag, Prf, PrfKey, BLOCK_LEN, DIGEST_LEN,
};

/// Largest supported pool: indices travel as two bytes on the wire.
pub const MAX_CHUNK_BITS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HorsError {
    #[error("invalid HORS parameters: {0}")]
    InvalidParams(&'static str),
    #[error("secret key holds {got} values, parameters require {expected}")]
    KeyLength { expected: usize, got: usize },
    #[error("signature holds {got} chunks, parameters require {expected}")]
    SignatureLength { expected: usize, got: usize },
    #[error("entropy source failed")]
    Entropy,
}

/// `(k, t)` with `t` a power of two and `k * log2(t) <= 256`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HorsParams {
    k: u16,
    t: u32,
    chunk_bits: u32,
}

impl HorsParams {
    pub const DEFAULT: HorsParams = HorsParams {
        k: 16,
        t: 1024,
        chunk_bits: 10,
    };

    pub fn new(k: u16, t: u32) -> Result<Self, HorsError> {
        if k == 0 {
            return Err(HorsError::InvalidParams("k must be positive"));
        }
        if t < 2 || !t.is_power_of_two() {
            return Err(HorsError::InvalidParams("t must be a power of two >= 2"));
        }
        let chunk_bits = t.trailing_zeros();
        if chunk_bits > MAX_CHUNK_BITS {
            return Err(HorsError::InvalidParams("t must not exceed 2^16"));
        }
        if u32::from(k) * chunk_bits > (DIGEST_LEN * 8) as u32 {
            return Err(HorsError::InvalidParams(
                "k * log2(t) exceeds the digest length",
            ));
        }
        Ok(HorsParams { k, t, chunk_bits })
    }

    pub fn k(&self) -> usize {
        usize::from(self.k)
    }

    pub fn t(&self) -> usize {
        self.t as usize
    }

    pub fn chunk_bits(&self) -> u32 {
        self.chunk_bits
    }

    /// Serialized chunk bytes of one signature, `16 * k`.
    pub fn signature_chunk_bytes(&self) -> usize {
        self.k() * BLOCK_LEN
    }
}

impl Default for HorsParams {
    fn default() -> Self {
        HorsParams::DEFAULT
    }
}

/// The `k` pool positions selected by a digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexVector(Vec<u16>);

impl IndexVector {
    /// Wraps explicit indices, checking length and range against `params`.
    pub fn new(params: &HorsParams, indices: Vec<u16>) -> Result<Self, HorsError> {
        if indices.len() != params.k() {
            return Err(HorsError::InvalidParams(
                "index vector length differs from k",
            ));
        }
        if indices.iter().any(|&i| usize::from(i) >= params.t()) {
            return Err(HorsError::InvalidParams("index out of range"));
        }
        Ok(IndexVector(indices))
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&i| usize::from(i))
    }

    /// Sorted distinct indices.
    pub fn distinct(&self) -> Vec<u16> {
        let mut out = self.0.clone();
        out.sort_unstable();
        out.dedup();
        out
    }
}

pub fn derive_indices(params: &HorsParams, digest: &Digest256) -> IndexVector {
    let bits = params.chunk_bits as usize;
    let mut out = Vec::with_capacity(params.k());
    let mut acc: u32 = 0;
    let mut acc_bits = 0usize;
    let mut bytes = digest.0.iter();
    while out.len() < params.k() {
        while acc_bits < bits {
            // k * bits <= 256 keeps this within the digest.
            let byte = bytes.next().copied().unwrap_or(0);
            acc = (acc << 8) | u32::from(byte);
            acc_bits += 8;
        }
        let shift = acc_bits - bits;
        out.push(((acc >> shift) & ((1u32 << bits) - 1)) as u16);
        acc_bits = shift;
        acc &= (1u32 << acc_bits) - 1;
    }
    IndexVector(out)
}

/// Indices selected by `message`.
pub fn message_indices(params: &HorsParams, message: &[u8]) -> IndexVector {
    derive_indices(params, &hash_message(message))
}

#[derive(Clone, PartialEq, Eq)]
pub struct HorsSecretKey {
    secrets: Vec<Block128>,
}

impl core::fmt::Debug for HorsSecretKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "HorsSecretKey({} secrets)", self.secrets.len())
    }
}

impl HorsSecretKey {
    pub fn from_secrets(params: &HorsParams, secrets: Vec<Block128>) -> Result<Self, HorsError> {
        if secrets.len() != params.t() {
            return Err(HorsError::KeyLength {
                expected: params.t(),
                got: secrets.len(),
            });
        }
        Ok(HorsSecretKey { secrets })
    }

    /// Expands a seed into the pool `s_l = PRF(seed, l)` under the chunk tag.
    /// This is the derivation an INF-HORS signer uses for one counter value.
    pub fn from_seed(params: &HorsParams, seed: &PrfKey) -> Self {
        let prf = Prf::new(seed);
        let secrets = (0..params.t() as u64)
            .map(|l| prf.eval(l, DomainTag::CHUNK))
            .collect();
        HorsSecretKey { secrets }
    }

    pub fn secrets(&self) -> &[Block128] {
        &self.secrets
    }

    pub fn public_key(&self) -> HorsPublicKey {
        HorsPublicKey {
            images: self.secrets.iter().map(dm_owf).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HorsPublicKey {
    images: Vec<Block128>,
}

impl HorsPublicKey {
    pub fn images(&self) -> &[Block128] {
        &self.images
    }
}

/// Samples `t` fresh secrets from `rng`.
pub fn hors_keygen<R: CryptoRngCore + ?Sized>(
    params: &HorsParams,
    rng: &mut R,
) -> Result<(HorsSecretKey, HorsPublicKey), HorsError> {
    let mut secrets = Vec::with_capacity(params.t());
    for _ in 0..params.t() {
        let mut s = [0u8; BLOCK_LEN];
        rng.try_fill_bytes(&mut s).map_err(|_| HorsError::Entropy)?;
        secrets.push(Block128(s));
    }
    let sk = HorsSecretKey { secrets };
    let pk = sk.public_key();
    Ok((sk, pk))
}

/// Reveals the secrets at the message's indices. Each key signs once.
pub fn hors_sign(
    params: &HorsParams,
    sk: &HorsSecretKey,
    message: &[u8],
) -> Result<Vec<Block128>, HorsError> {
    if sk.secrets.len() != params.t() {
        return Err(HorsError::KeyLength {
            expected: params.t(),
            got: sk.secrets.len(),
        });
    }
    Ok(message_indices(params, message)
        .iter()
        .map(|i| sk.secrets[i])
        .collect())
}

/// `Ok(false)` is a cryptographic rejection; `Err` is a malformed input.
pub fn hors_verify(
    params: &HorsParams,
    pk: &HorsPublicKey,
    message: &[u8],
    sigma: &[Block128],
) -> Result<bool, HorsError> {
    if sigma.len() != params.k() {
        return Err(HorsError::SignatureLength {
            expected: params.k(),
            got: sigma.len(),
        });
    }
    if pk.images.len() != params.t() {
        return Err(HorsError::KeyLength {
            expected: params.t(),
            got: pk.images.len(),
        });
    }
    let indices = message_indices(params, message);
    let mut ok = true;
    for (chunk, i) in sigma.iter().zip(indices.iter()) {
        ok &= crate::symmetric::cmp_eq(&dm_owf(chunk), &pk.images[i]);
    }
    Ok(ok)
}
