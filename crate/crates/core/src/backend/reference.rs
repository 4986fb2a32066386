//! Reference backend: AEAD-sealed plaintexts with evaluation performed as
//! open, compute, reseal inside the backend boundary.
//!
//! NOT an FHE scheme. The public part contains the sealing key, so anyone
//! holding it can read every ciphertext. It reproduces the API-level
//! behaviour the protocol relies on: randomized ciphertexts, key-pair
//! isolation, kind tagging and correct evaluation.
//!
//! Two encodings exist so protocol-level results can be checked for
//! independence from the ciphertext representation:
//!
//! | encoding     | id     | payload layout                         |
//! |--------------|--------|----------------------------------------|
//! | `AesGcm`     | `RAGC` | fingerprint(8) nonce(12) sealed(32)    |
//! | `ChaChaPoly` | `RCCP` | fingerprint(8) sealed(32) nonce(12)    |
//!
//! The associated data binds the backend id, the kind byte and the key
//! fingerprint, so a relabelled ciphertext fails authentication.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use chacha20poly1305::ChaCha20Poly1305;
use rand_core::CryptoRngCore;
use sha2::{Digest, Sha256};

use super::{
    bit_block, block_bit, BackendError, BackendId, BackendKeyPair, BackendParams, Ciphertext,
    CiphertextKind, Decryptor, Evaluator, Revealed,
};
use crate::codec::{DecodeError, Reader};
use crate::symmetric::{cmp_eq, dm_owf, Block128, DomainTag, Prf, PrfKey, BLOCK_LEN};

const KEY_LEN: usize = 32;
const FINGERPRINT_LEN: usize = 8;
const NONCE_LEN: usize = 12;
const SEALED_LEN: usize = BLOCK_LEN + 16;
const PAYLOAD_LEN: usize = FINGERPRINT_LEN + NONCE_LEN + SEALED_LEN;

const ROLE_PUBLIC: u8 = b'P';
const ROLE_SECRET: u8 = b'S';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Encoding {
    AesGcm,
    ChaChaPoly,
}

impl Encoding {
    pub const ALL: [Encoding; 2] = [Encoding::AesGcm, Encoding::ChaChaPoly];

    pub fn backend_id(self) -> BackendId {
        match self {
            Encoding::AesGcm => BackendId(*b"RAGC"),
            Encoding::ChaChaPoly => BackendId(*b"RCCP"),
        }
    }

    pub fn from_backend_id(id: BackendId) -> Option<Self> {
        Encoding::ALL.into_iter().find(|e| e.backend_id() == id)
    }
}

#[derive(Clone)]
enum Sealer {
    Gcm(Box<Aes256Gcm>),
    ChaCha(ChaCha20Poly1305),
}

#[derive(Clone)]
struct SealingKey {
    encoding: Encoding,
    key: [u8; KEY_LEN],
    fingerprint: [u8; FINGERPRINT_LEN],
    sealer: Sealer,
}

impl SealingKey {
    fn new(encoding: Encoding, key: [u8; KEY_LEN]) -> Self {
        let digest = Sha256::new()
            .chain_update(b"inf-hors reference backend")
            .chain_update(encoding.backend_id().0)
            .chain_update(key)
            .finalize();
        let mut fingerprint = [0u8; FINGERPRINT_LEN];
        fingerprint.copy_from_slice(&digest[..FINGERPRINT_LEN]);
        let sealer = match encoding {
            Encoding::AesGcm => Sealer::Gcm(Box::new(Aes256Gcm::new((&key).into()))),
            Encoding::ChaChaPoly => Sealer::ChaCha(ChaCha20Poly1305::new((&key).into())),
        };
        SealingKey {
            encoding,
            key,
            fingerprint,
            sealer,
        }
    }

    fn id(&self) -> BackendId {
        self.encoding.backend_id()
    }

    fn aad(&self, kind: CiphertextKind) -> [u8; 4 + 1 + FINGERPRINT_LEN] {
        let mut aad = [0u8; 13];
        aad[..4].copy_from_slice(&self.id().0);
        aad[4] = kind as u8;
        aad[5..].copy_from_slice(&self.fingerprint);
        aad
    }

    fn seal<R: CryptoRngCore + ?Sized>(
        &self,
        kind: CiphertextKind,
        value: &Block128,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError> {
        let mut nonce = [0u8; NONCE_LEN];
        rng.try_fill_bytes(&mut nonce)
            .map_err(|_| BackendError::Entropy)?;
        let aad = self.aad(kind);
        let msg = Payload {
            msg: &value.0,
            aad: &aad,
        };
        let sealed = match &self.sealer {
            Sealer::Gcm(c) => c.encrypt(Nonce::from_slice(&nonce), msg),
            Sealer::ChaCha(c) => c.encrypt(chacha20poly1305::Nonce::from_slice(&nonce), msg),
        }
        .map_err(|_| BackendError::Corrupt)?;
        debug_assert_eq!(sealed.len(), SEALED_LEN);

        let mut payload = Vec::with_capacity(PAYLOAD_LEN);
        payload.extend_from_slice(&self.fingerprint);
        match self.encoding {
            Encoding::AesGcm => {
                payload.extend_from_slice(&nonce);
                payload.extend_from_slice(&sealed);
            }
            Encoding::ChaChaPoly => {
                payload.extend_from_slice(&sealed);
                payload.extend_from_slice(&nonce);
            }
        }
        Ok(Ciphertext::new(self.id(), kind, payload))
    }

    fn open(&self, c: &Ciphertext) -> Result<Block128, BackendError> {
        if c.backend() != self.id() {
            return Err(BackendError::ForeignBackend);
        }
        let payload = c.payload();
        if payload.len() != PAYLOAD_LEN {
            return Err(BackendError::Corrupt);
        }
        let (fingerprint, rest) = payload.split_at(FINGERPRINT_LEN);
        if fingerprint != self.fingerprint {
            return Err(BackendError::ForeignKey);
        }
        let aad = self.aad(c.kind());
        let plain = match &self.sealer {
            Sealer::Gcm(cipher) => {
                let (nonce, sealed) = rest.split_at(NONCE_LEN);
                cipher.decrypt(
                    Nonce::from_slice(nonce),
                    Payload {
                        msg: sealed,
                        aad: &aad,
                    },
                )
            }
            Sealer::ChaCha(cipher) => {
                let (sealed, nonce) = rest.split_at(SEALED_LEN);
                cipher.decrypt(
                    chacha20poly1305::Nonce::from_slice(nonce),
                    Payload {
                        msg: sealed,
                        aad: &aad,
                    },
                )
            }
        }
        .map_err(|_| BackendError::Corrupt)?;
        let mut block = [0u8; BLOCK_LEN];
        block.copy_from_slice(&plain);
        Ok(Block128(block))
    }

    fn open_kind(
        &self,
        c: &Ciphertext,
        expected: CiphertextKind,
    ) -> Result<Block128, BackendError> {
        if c.kind() != expected {
            return Err(BackendError::WrongKind {
                expected,
                got: c.kind(),
            });
        }
        self.open(c)
    }

    fn encode(&self, role: u8) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 1 + 4 + FINGERPRINT_LEN + KEY_LEN);
        out.extend_from_slice(&self.id().0);
        out.push(role);
        out.extend_from_slice(&((FINGERPRINT_LEN + KEY_LEN) as u32).to_be_bytes());
        out.extend_from_slice(&self.fingerprint);
        out.extend_from_slice(&self.key);
        out
    }

    fn decode(r: &mut Reader<'_>, role: u8) -> Result<Self, DecodeError> {
        let id = BackendId(r.array()?);
        let encoding = Encoding::from_backend_id(id).ok_or(DecodeError::BadMagic)?;
        if r.u8()? != role {
            return Err(DecodeError::Invalid("backend key role"));
        }
        if r.u32()? as usize != FINGERPRINT_LEN + KEY_LEN {
            return Err(DecodeError::Invalid("backend key length"));
        }
        let fingerprint: [u8; FINGERPRINT_LEN] = r.array()?;
        let key: [u8; KEY_LEN] = r.array()?;
        let sk = SealingKey::new(encoding, key);
        if sk.fingerprint != fingerprint {
            return Err(DecodeError::Invalid("backend key fingerprint"));
        }
        Ok(sk)
    }
}

/// Public part: suffices for encryption and evaluation.
#[derive(Clone)]
pub struct ReferencePublic(SealingKey);

/// Secret part: suffices for decryption.
#[derive(Clone)]
pub struct ReferenceSecret(SealingKey);

impl fmt::Debug for ReferencePublic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ReferencePublic({:?})", self.0.encoding)
    }
}

impl fmt::Debug for ReferenceSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ReferenceSecret({:?}, <redacted>)", self.0.encoding)
    }
}

impl ReferencePublic {
    pub fn encoding(&self) -> Encoding {
        self.0.encoding
    }

    pub fn fingerprint(&self) -> [u8; FINGERPRINT_LEN] {
        self.0.fingerprint
    }

    /// `[4-byte id]['P'][4-byte BE length][fingerprint][key]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.encode(ROLE_PUBLIC)
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        SealingKey::decode(r, ROLE_PUBLIC).map(ReferencePublic)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let p = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(p)
    }
}

impl ReferenceSecret {
    pub fn encoding(&self) -> Encoding {
        self.0.encoding
    }

    /// `[4-byte id]['S'][4-byte BE length][fingerprint][key]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.encode(ROLE_SECRET)
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        SealingKey::decode(r, ROLE_SECRET).map(ReferenceSecret)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let s = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(s)
    }
}

/// Generates a reference key pair. Only the 128-bit level is supported.
pub fn backend_keygen<R: CryptoRngCore + ?Sized>(
    params: BackendParams,
    rng: &mut R,
) -> Result<BackendKeyPair<ReferencePublic, ReferenceSecret>, BackendError> {
    if params.security_level != 128 {
        return Err(BackendError::UnsupportedLevel(params.security_level));
    }
    let mut key = [0u8; KEY_LEN];
    rng.try_fill_bytes(&mut key)
        .map_err(|_| BackendError::Entropy)?;
    let sealing = SealingKey::new(params.encoding, key);
    Ok(BackendKeyPair {
        public_part: ReferencePublic(sealing.clone()),
        secret_part: ReferenceSecret(sealing),
        params,
    })
}

impl Evaluator for ReferencePublic {
    fn backend_id(&self) -> BackendId {
        self.0.id()
    }

    fn encrypt<R: CryptoRngCore + ?Sized>(
        &self,
        value: &Block128,
        kind: CiphertextKind,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError> {
        if kind == CiphertextKind::Bit {
            block_bit(value)?;
        }
        self.0.seal(kind, value, rng)
    }

    fn eval_prf<R: CryptoRngCore + ?Sized>(
        &self,
        key: &Ciphertext,
        input: u64,
        tag: DomainTag,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError> {
        let k = self.0.open_kind(key, CiphertextKind::KeyMaterial)?;
        let out = Prf::new(&PrfKey::from(k)).eval(input, tag);
        self.0.seal(CiphertextKind::KeyMaterial, &out, rng)
    }

    fn eval_owf_prf<R: CryptoRngCore + ?Sized>(
        &self,
        key: &Ciphertext,
        index: u64,
        tag: DomainTag,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError> {
        let k = self.0.open_kind(key, CiphertextKind::KeyMaterial)?;
        let out = dm_owf(&Prf::new(&PrfKey::from(k)).eval(index, tag));
        self.0.seal(CiphertextKind::OwfImage, &out, rng)
    }

    fn eval_owf_prf_many<R: CryptoRngCore + ?Sized>(
        &self,
        key: &Ciphertext,
        indices: &[u64],
        tag: DomainTag,
        rng: &mut R,
    ) -> Result<Vec<Ciphertext>, BackendError> {
        let k = self.0.open_kind(key, CiphertextKind::KeyMaterial)?;
        let prf = Prf::new(&PrfKey::from(k));
        indices
            .iter()
            .map(|&i| {
                let out = dm_owf(&prf.eval(i, tag));
                self.0.seal(CiphertextKind::OwfImage, &out, rng)
            })
            .collect()
    }

    fn eval_cmp<R: CryptoRngCore + ?Sized>(
        &self,
        a: &Ciphertext,
        b: &Ciphertext,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError> {
        let x = self.0.open_kind(a, CiphertextKind::OwfImage)?;
        let y = self.0.open_kind(b, CiphertextKind::OwfImage)?;
        self.0
            .seal(CiphertextKind::Bit, &bit_block(cmp_eq(&x, &y)), rng)
    }
}

impl Decryptor for ReferenceSecret {
    fn decrypt(&self, c: &Ciphertext) -> Result<Revealed, BackendError> {
        let block = self.0.open(c)?;
        match c.kind() {
            CiphertextKind::Bit => block_bit(&block).map(Revealed::Bit),
            _ => Ok(Revealed::Block(block)),
        }
    }
}
