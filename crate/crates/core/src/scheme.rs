//! INF-HORS key generation, signing, one-time key construction and
//! verification.
//!
//! Key derivation chain, shared bit-for-bit by signer and constructor:
//!
//! ```text
//! gamma_i   = PRF(msk,      canonical(ID_i), 0x01)
//! sk_i^j    = PRF(gamma_i,  j,               0x02)
//! s^{j,l}   = PRF(sk_i^j,   l,               0x03)   l in [0, t)
//! v^{j,l}   = f(s^{j,l})
//! ```
//!
//! The signer reveals `s^{j,x}` for the `k` indices `x` selected by
//! `SHA-256(M)`. A verifier evaluates the same chain starting from
//! `Enc(msk)` and compares encrypted images, learning only the comparison
//! bits.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand_core::CryptoRngCore;

use crate::backend::{
    backend_keygen, BackendKeyPair, BackendParams, Ciphertext, CiphertextKind, Decryptor,
    Evaluator, ReferencePublic, ReferenceSecret, Reveal, RevealKey, RevealPolicy, Revealed,
};
use crate::codec::{DecodeError, Reader};
use crate::hors::{message_indices, HorsParams, IndexVector};
use crate::keystore::{register_ids, OtkStore, SignerId};
use crate::symmetric::{dm_owf, hash_message, Block128, DomainTag, Prf, PrfKey, BLOCK_LEN, DM_IV};
use crate::Error;

/// System-wide parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemParams {
    pub hors: HorsParams,
    pub backend: BackendParams,
    /// Signers refuse to sign with a counter at or above this value.
    pub counter_limit: u64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            hors: HorsParams::DEFAULT,
            backend: BackendParams::default(),
            counter_limit: u64::MAX,
        }
    }
}

impl SystemParams {
    pub fn dm_iv(&self) -> Block128 {
        DM_IV
    }

    /// `16 * k + 8`.
    pub fn signature_len(&self) -> usize {
        self.hors.signature_chunk_bytes() + 8
    }
}

/// The distributable public key `(backend public part, Enc(msk))`.
#[derive(Debug, Clone)]
pub struct PublicKey<E> {
    backend: E,
    mpk: Ciphertext,
}

impl<E> PublicKey<E> {
    pub fn new(backend: E, mpk: Ciphertext) -> Self {
        PublicKey { backend, mpk }
    }

    pub fn backend(&self) -> &E {
        &self.backend
    }

    pub fn mpk(&self) -> &Ciphertext {
        &self.mpk
    }

    /// Swaps the evaluator, e.g. for a metering wrapper.
    pub fn map_backend<F, T>(self, f: F) -> PublicKey<T>
    where
        F: FnOnce(E) -> T,
    {
        PublicKey {
            backend: f(self.backend),
            mpk: self.mpk,
        }
    }
}

impl PublicKey<ReferencePublic> {
    /// `[backend public framing][mpk ciphertext framing]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.backend.to_bytes();
        self.mpk.encode_into(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let backend = ReferencePublic::decode_from(&mut r)?;
        let mpk = Ciphertext::decode_from(&mut r)?;
        r.finish()?;
        if mpk.backend() != backend.backend_id() || mpk.kind() != CiphertextKind::KeyMaterial {
            return Err(DecodeError::Invalid("master public key ciphertext"));
        }
        Ok(PublicKey { backend, mpk })
    }
}

/// Everything the key authority holds after key generation.
#[derive(Clone)]
pub struct MasterKeyMaterial<E, D> {
    msk: PrfKey,
    mpk: Ciphertext,
    backend_public: E,
    backend_secret: D,
}

impl<E, D> core::fmt::Debug for MasterKeyMaterial<E, D> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("MasterKeyMaterial(<redacted>)")
    }
}

impl<E: Clone, D: Clone> MasterKeyMaterial<E, D> {
    pub fn msk(&self) -> &PrfKey {
        &self.msk
    }

    pub fn public_key(&self) -> PublicKey<E> {
        PublicKey {
            backend: self.backend_public.clone(),
            mpk: self.mpk.clone(),
        }
    }

    pub fn backend_secret(&self) -> &D {
        &self.backend_secret
    }

    pub fn reveal_key(&self, policy: RevealPolicy) -> RevealKey<D>
    where
        D: Decryptor,
    {
        RevealKey::new(self.backend_secret.clone(), policy)
    }

    /// Derives the seed state for `id` at counter zero.
    pub fn issue(&self, id: &SignerId) -> SignerSeedState {
        SignerSeedState {
            id: id.clone(),
            gamma: derive_seed(&self.msk, id.canonical()),
            counter: 0,
        }
    }
}

const AUTHORITY_MAGIC: [u8; 4] = *b"IHAK";
const AUTHORITY_VERSION: u8 = 1;

impl MasterKeyMaterial<ReferencePublic, ReferenceSecret> {
    /// `["IHAK"][0x01][msk][backend public][backend secret][mpk]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&AUTHORITY_MAGIC);
        out.push(AUTHORITY_VERSION);
        out.extend_from_slice(self.msk.as_bytes());
        out.extend_from_slice(&self.backend_public.to_bytes());
        out.extend_from_slice(&self.backend_secret.to_bytes());
        self.mpk.encode_into(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        if r.array::<4>()? != AUTHORITY_MAGIC || r.u8()? != AUTHORITY_VERSION {
            return Err(DecodeError::BadMagic);
        }
        let msk = PrfKey::from_bytes(r.array()?);
        let backend_public = ReferencePublic::decode_from(&mut r)?;
        let backend_secret = ReferenceSecret::decode_from(&mut r)?;
        let mpk = Ciphertext::decode_from(&mut r)?;
        r.finish()?;
        Ok(MasterKeyMaterial {
            msk,
            mpk,
            backend_public,
            backend_secret,
        })
    }
}

/// A signer's entire persistent secret: its seed and next counter.
#[derive(Clone, PartialEq, Eq)]
pub struct SignerSeedState {
    id: SignerId,
    gamma: PrfKey,
    counter: u64,
}

impl core::fmt::Debug for SignerSeedState {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SignerSeedState")
            .field("id", &self.id)
            .field("counter", &self.counter)
            .finish_non_exhaustive()
    }
}

/// Bytes of secret material a signer stores: seed plus counter.
pub const SIGNER_SECRET_LEN: usize = BLOCK_LEN + 8;

impl SignerSeedState {
    pub fn new(id: SignerId, gamma: PrfKey, counter: u64) -> Self {
        SignerSeedState { id, gamma, counter }
    }

    pub fn id(&self) -> &SignerId {
        &self.id
    }

    pub fn gamma(&self) -> &PrfKey {
        &self.gamma
    }

    /// The counter the next signature will carry.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// `gamma || be64(counter)`.
    pub fn secret_material(&self) -> [u8; SIGNER_SECRET_LEN] {
        let mut out = [0u8; SIGNER_SECRET_LEN];
        out[..BLOCK_LEN].copy_from_slice(self.gamma.as_bytes());
        out[BLOCK_LEN..].copy_from_slice(&self.counter.to_be_bytes());
        out
    }

    /// `[raw id length][raw id][gamma][be64 counter]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.id.raw().len() + SIGNER_SECRET_LEN);
        out.push(self.id.raw().len() as u8);
        out.extend_from_slice(self.id.raw());
        out.extend_from_slice(&self.secret_material());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let n = usize::from(r.u8()?);
        let id = SignerId::new(r.take(n)?).map_err(|_| DecodeError::Invalid("signer id"))?;
        let gamma = PrfKey::from_bytes(r.array()?);
        let counter = r.u64()?;
        r.finish()?;
        Ok(SignerSeedState { id, gamma, counter })
    }
}

/// `k` revealed chunks and the counter they were derived under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfHorsSignature {
    chunks: Vec<Block128>,
    counter: u64,
}

impl InfHorsSignature {
    pub fn new(chunks: Vec<Block128>, counter: u64) -> Self {
        InfHorsSignature { chunks, counter }
    }

    pub fn chunks(&self) -> &[Block128] {
        &self.chunks
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// `[16 bytes x k][be64 counter]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.chunks.len() * BLOCK_LEN + 8);
        for c in &self.chunks {
            out.extend_from_slice(&c.0);
        }
        out.extend_from_slice(&self.counter.to_be_bytes());
        out
    }

    pub fn from_bytes(params: &HorsParams, bytes: &[u8]) -> Result<Self, DecodeError> {
        let want = params.signature_chunk_bytes() + 8;
        if bytes.len() < want {
            return Err(DecodeError::Truncated);
        }
        let mut r = Reader::new(bytes);
        let chunks = (0..params.k())
            .map(|_| r.array().map(Block128))
            .collect::<Result<Vec<_>, _>>()?;
        let counter = r.u64()?;
        r.finish()?;
        Ok(InfHorsSignature { chunks, counter })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Components {
    Full(Vec<Ciphertext>),
    Partial(BTreeMap<u16, Ciphertext>),
}

/// Encrypted one-time public key for `(signer, counter)`: either all `t`
/// images or only those at a message's indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedOneTimeKey {
    signer: u64,
    counter: u64,
    components: Components,
}

const OTK_FULL: u8 = 0x00;
const OTK_PARTIAL: u8 = 0x01;

impl EncryptedOneTimeKey {
    pub fn full(signer: u64, counter: u64, components: Vec<Ciphertext>) -> Self {
        EncryptedOneTimeKey {
            signer,
            counter,
            components: Components::Full(components),
        }
    }

    pub fn partial(signer: u64, counter: u64, components: BTreeMap<u16, Ciphertext>) -> Self {
        EncryptedOneTimeKey {
            signer,
            counter,
            components: Components::Partial(components),
        }
    }

    pub fn signer(&self) -> u64 {
        self.signer
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn is_full(&self) -> bool {
        matches!(self.components, Components::Full(_))
    }

    pub fn len(&self) -> usize {
        match &self.components {
            Components::Full(v) => v.len(),
            Components::Partial(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn component(&self, index: u16) -> Option<&Ciphertext> {
        match &self.components {
            Components::Full(v) => v.get(usize::from(index)),
            Components::Partial(m) => m.get(&index),
        }
    }

    /// `(index, ciphertext)` in ascending index order.
    pub fn components(&self) -> impl Iterator<Item = (u16, &Ciphertext)> {
        let (full, partial) = match &self.components {
            Components::Full(v) => (Some(v.iter().enumerate()), None),
            Components::Partial(m) => (None, Some(m.iter())),
        };
        full.into_iter()
            .flatten()
            .map(|(i, c)| (i as u16, c))
            .chain(partial.into_iter().flatten().map(|(&i, c)| (i, c)))
    }

    /// `[be64 signer][be64 counter][mode][be32 count]` then per component
    /// `[be16 index][ciphertext framing]`. Mode 0 is full, 1 is partial.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + self.len() * 64);
        out.extend_from_slice(&self.signer.to_be_bytes());
        out.extend_from_slice(&self.counter.to_be_bytes());
        out.push(if self.is_full() {
            OTK_FULL
        } else {
            OTK_PARTIAL
        });
        out.extend_from_slice(&(self.len() as u32).to_be_bytes());
        for (i, c) in self.components() {
            out.extend_from_slice(&i.to_be_bytes());
            c.encode_into(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let signer = r.u64()?;
        let counter = r.u64()?;
        let mode = r.u8()?;
        let count = r.u32()? as usize;
        if count > 1 << 16 {
            return Err(DecodeError::TooLong(count));
        }
        // Each entry takes at least 11 bytes.
        if count.saturating_mul(2 + Ciphertext::HEADER_LEN) > r.remaining() {
            return Err(DecodeError::Truncated);
        }
        let otk = match mode {
            OTK_FULL => {
                let mut v = Vec::with_capacity(count);
                for expected in 0..count {
                    if usize::from(r.u16()?) != expected {
                        return Err(DecodeError::Invalid("full key index order"));
                    }
                    v.push(Ciphertext::decode_from(&mut r)?);
                }
                Self::full(signer, counter, v)
            }
            OTK_PARTIAL => {
                let mut m = BTreeMap::new();
                let mut last: Option<u16> = None;
                for _ in 0..count {
                    let i = r.u16()?;
                    if last.is_some_and(|l| i <= l) {
                        return Err(DecodeError::Invalid("partial key index order"));
                    }
                    last = Some(i);
                    m.insert(i, Ciphertext::decode_from(&mut r)?);
                }
                Self::partial(signer, counter, m)
            }
            _ => return Err(DecodeError::Invalid("one-time key mode")),
        };
        r.finish()?;
        Ok(otk)
    }
}

/// PRF and hash invocations made by a signer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SignerOps {
    pub prf_calls: u64,
    pub hash_calls: u64,
}

/// Output of [`keygen`].
#[derive(Debug)]
pub struct KeygenOutput<E, D> {
    pub public: PublicKey<E>,
    pub signers: Vec<SignerSeedState>,
    pub authority: MasterKeyMaterial<E, D>,
}

pub fn derive_seed(msk: &PrfKey, canonical: u64) -> PrfKey {
    Prf::new(msk).eval(canonical, DomainTag::SEED).into()
}

pub fn derive_state_key(gamma: &PrfKey, counter: u64) -> PrfKey {
    Prf::new(gamma).eval(counter, DomainTag::STATE).into()
}

/// Key generation over a caller-supplied backend key pair.
pub fn keygen_with_backend<E, D, R>(
    ids: &[SignerId],
    backend: BackendKeyPair<E, D>,
    rng: &mut R,
) -> Result<KeygenOutput<E, D>, Error>
where
    E: Evaluator + Clone,
    D: Clone,
    R: CryptoRngCore + ?Sized,
{
    let msk = PrfKey::random(rng).map_err(|_| Error::Entropy)?;
    keygen_from_master(ids, msk, backend, rng)
}

/// Key generation around a given master secret (fixtures, recovery).
pub fn keygen_from_master<E, D, R>(
    ids: &[SignerId],
    msk: PrfKey,
    backend: BackendKeyPair<E, D>,
    rng: &mut R,
) -> Result<KeygenOutput<E, D>, Error>
where
    E: Evaluator + Clone,
    D: Clone,
    R: CryptoRngCore + ?Sized,
{
    register_ids(ids.iter().cloned())?;
    let mpk = backend.public_part.encrypt(
        &Block128(*msk.as_bytes()),
        CiphertextKind::KeyMaterial,
        rng,
    )?;
    let authority = MasterKeyMaterial {
        msk,
        mpk,
        backend_public: backend.public_part,
        backend_secret: backend.secret_part,
    };
    let signers = ids.iter().map(|id| authority.issue(id)).collect();
    Ok(KeygenOutput {
        public: authority.public_key(),
        signers,
        authority,
    })
}

/// Key generation with the reference backend selected by `params.backend`.
pub fn keygen<R: CryptoRngCore + ?Sized>(
    params: &SystemParams,
    ids: &[SignerId],
    rng: &mut R,
) -> Result<KeygenOutput<ReferencePublic, ReferenceSecret>, Error> {
    let backend = backend_keygen(params.backend, rng)?;
    keygen_with_backend(ids, backend, rng)
}

/// Signs `message` at the state's current counter, then advances it.
pub fn sign(
    params: &SystemParams,
    state: &mut SignerSeedState,
    message: &[u8],
) -> Result<InfHorsSignature, Error> {
    sign_metered(params, state, message, &mut SignerOps::default())
}

/// [`sign`], counting PRF and hash invocations into `ops`.
pub fn sign_metered(
    params: &SystemParams,
    state: &mut SignerSeedState,
    message: &[u8],
    ops: &mut SignerOps,
) -> Result<InfHorsSignature, Error> {
    let j = state.counter;
    if j == u64::MAX || j >= params.counter_limit {
        return Err(Error::CounterExhausted(j));
    }
    let state_key = derive_state_key(&state.gamma, j);
    ops.prf_calls += 1;

    let digest = hash_message(message);
    ops.hash_calls += 1;
    let indices = crate::hors::derive_indices(&params.hors, &digest);

    let prf = Prf::new(&state_key);
    let chunks: Vec<Block128> = indices
        .iter()
        .map(|x| prf.eval(x as u64, DomainTag::CHUNK))
        .collect();
    ops.prf_calls += chunks.len() as u64;

    state.counter = j + 1;
    Ok(InfHorsSignature { chunks, counter: j })
}

fn encrypted_state_key<E, R>(
    pk: &PublicKey<E>,
    signer: u64,
    counter: u64,
    rng: &mut R,
) -> Result<Ciphertext, Error>
where
    E: Evaluator,
    R: CryptoRngCore + ?Sized,
{
    let gamma = pk.backend.eval_prf(&pk.mpk, signer, DomainTag::SEED, rng)?;
    Ok(pk
        .backend
        .eval_prf(&gamma, counter, DomainTag::STATE, rng)?)
}

/// Builds all `t` encrypted images for `(signer, counter)` from public data.
pub fn construct_pk<E, R>(
    params: &SystemParams,
    pk: &PublicKey<E>,
    signer: u64,
    counter: u64,
    rng: &mut R,
) -> Result<EncryptedOneTimeKey, Error>
where
    E: Evaluator,
    R: CryptoRngCore + ?Sized,
{
    let csk = encrypted_state_key(pk, signer, counter, rng)?;
    let indices: Vec<u64> = (0..params.hors.t() as u64).collect();
    let components = pk
        .backend
        .eval_owf_prf_many(&csk, &indices, DomainTag::CHUNK, rng)?;
    Ok(EncryptedOneTimeKey::full(signer, counter, components))
}

/// Builds only the images at `indices` (deduplicated).
pub fn construct_pk_partial<E, R>(
    pk: &PublicKey<E>,
    signer: u64,
    counter: u64,
    indices: &IndexVector,
    rng: &mut R,
) -> Result<EncryptedOneTimeKey, Error>
where
    E: Evaluator,
    R: CryptoRngCore + ?Sized,
{
    let csk = encrypted_state_key(pk, signer, counter, rng)?;
    let distinct = indices.distinct();
    let wide: Vec<u64> = distinct.iter().map(|&i| u64::from(i)).collect();
    let cts = pk
        .backend
        .eval_owf_prf_many(&csk, &wide, DomainTag::CHUNK, rng)?;
    let components = distinct.into_iter().zip(cts).collect();
    Ok(EncryptedOneTimeKey::partial(signer, counter, components))
}

/// Verifies `sigma` on `message` against an encrypted one-time key.
///
/// Each revealed chunk is mapped through `f`, encrypted, and compared under
/// encryption with the key's component at the message index. Only the
/// comparison bits are revealed. All `k` comparisons run regardless of
/// earlier outcomes.
pub fn verify<E, V, R>(
    params: &SystemParams,
    pk: &PublicKey<E>,
    otk: &EncryptedOneTimeKey,
    message: &[u8],
    sigma: &InfHorsSignature,
    reveal: &V,
    rng: &mut R,
) -> Result<bool, Error>
where
    E: Evaluator,
    V: Reveal + ?Sized,
    R: CryptoRngCore + ?Sized,
{
    if sigma.chunks.len() != params.hors.k() {
        return Err(crate::hors::HorsError::SignatureLength {
            expected: params.hors.k(),
            got: sigma.chunks.len(),
        }
        .into());
    }
    if sigma.counter != otk.counter {
        return Err(Error::CounterMismatch {
            key: otk.counter,
            signature: sigma.counter,
        });
    }
    if otk.is_full() && otk.len() != params.hors.t() {
        return Err(Error::KeyShape {
            expected: params.hors.t(),
            got: otk.len(),
        });
    }
    let indices = message_indices(&params.hors, message);
    let components = indices
        .as_slice()
        .iter()
        .map(|&x| otk.component(x).ok_or(Error::Coverage(x)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut accept = true;
    for (chunk, component) in sigma.chunks.iter().zip(components) {
        let image = dm_owf(chunk);
        let fresh = pk.backend.encrypt(&image, CiphertextKind::OwfImage, rng)?;
        let bit = pk.backend.eval_cmp(component, &fresh, rng)?;
        match reveal.reveal(&bit)? {
            Revealed::Bit(b) => accept &= b,
            Revealed::Block(_) => return Err(Error::NotABit),
        }
    }
    Ok(accept)
}

/// Verification against a store of precomputed one-time keys. A miss
/// constructs the full key on demand and stores it.
#[allow(clippy::too_many_arguments)]
pub fn verify_online_offline<E, V, S, R>(
    params: &SystemParams,
    pk: &PublicKey<E>,
    cache: &mut S,
    signer: u64,
    message: &[u8],
    sigma: &InfHorsSignature,
    reveal: &V,
    rng: &mut R,
) -> Result<bool, Error>
where
    E: Evaluator,
    V: Reveal + ?Sized,
    S: OtkStore + ?Sized,
    R: CryptoRngCore + ?Sized,
{
    let otk = match cache.lookup(signer, sigma.counter) {
        Some(otk) => otk,
        None => {
            let otk = Arc::new(construct_pk(params, pk, signer, sigma.counter, rng)?);
            cache.store(otk.clone());
            otk
        }
    };
    if otk.signer != signer {
        return Err(Error::SignerMismatch {
            key: otk.signer,
            expected: signer,
        });
    }
    verify(params, pk, &otk, message, sigma, reveal, rng)
}
