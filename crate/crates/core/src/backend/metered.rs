use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand_core::CryptoRngCore;

use super::{BackendError, BackendId, Ciphertext, CiphertextKind, Evaluator};
use crate::symmetric::{Block128, DomainTag};

/// Snapshot of evaluator call counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub encrypt: u64,
    pub eval_prf: u64,
    pub eval_owf_prf: u64,
    pub eval_cmp: u64,
}

impl EvalCounts {
    /// Evaluations spent constructing one-time keys.
    pub fn constructions(&self) -> u64 {
        self.eval_prf + self.eval_owf_prf
    }
}

/// An [`Evaluator`] wrapper that counts every call.
#[derive(Debug, Default)]
pub struct Metered<E> {
    inner: E,
    encrypt: AtomicU64,
    eval_prf: AtomicU64,
    eval_owf_prf: AtomicU64,
    eval_cmp: AtomicU64,
}

impl<E> Metered<E> {
    pub fn new(inner: E) -> Self {
        Metered {
            inner,
            encrypt: AtomicU64::new(0),
            eval_prf: AtomicU64::new(0),
            eval_owf_prf: AtomicU64::new(0),
            eval_cmp: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn counts(&self) -> EvalCounts {
        EvalCounts {
            encrypt: self.encrypt.load(Ordering::Relaxed),
            eval_prf: self.eval_prf.load(Ordering::Relaxed),
            eval_owf_prf: self.eval_owf_prf.load(Ordering::Relaxed),
            eval_cmp: self.eval_cmp.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        for c in [
            &self.encrypt,
            &self.eval_prf,
            &self.eval_owf_prf,
            &self.eval_cmp,
        ] {
            c.store(0, Ordering::Relaxed);
        }
    }
}

impl<E: Evaluator> Evaluator for Metered<E> {
    fn backend_id(&self) -> BackendId {
        self.inner.backend_id()
    }

    fn encrypt<R: CryptoRngCore + ?Sized>(
        &self,
        value: &Block128,
        kind: CiphertextKind,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError> {
        self.encrypt.fetch_add(1, Ordering::Relaxed);
        self.inner.encrypt(value, kind, rng)
    }

    fn eval_prf<R: CryptoRngCore + ?Sized>(
        &self,
        key: &Ciphertext,
        input: u64,
        tag: DomainTag,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError> {
        self.eval_prf.fetch_add(1, Ordering::Relaxed);
        self.inner.eval_prf(key, input, tag, rng)
    }

    fn eval_owf_prf<R: CryptoRngCore + ?Sized>(
        &self,
        key: &Ciphertext,
        index: u64,
        tag: DomainTag,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError> {
        self.eval_owf_prf.fetch_add(1, Ordering::Relaxed);
        self.inner.eval_owf_prf(key, index, tag, rng)
    }

    fn eval_owf_prf_many<R: CryptoRngCore + ?Sized>(
        &self,
        key: &Ciphertext,
        indices: &[u64],
        tag: DomainTag,
        rng: &mut R,
    ) -> Result<Vec<Ciphertext>, BackendError> {
        self.eval_owf_prf
            .fetch_add(indices.len() as u64, Ordering::Relaxed);
        self.inner.eval_owf_prf_many(key, indices, tag, rng)
    }

    fn eval_cmp<R: CryptoRngCore + ?Sized>(
        &self,
        a: &Ciphertext,
        b: &Ciphertext,
        rng: &mut R,
    ) -> Result<Ciphertext, BackendError> {
        self.eval_cmp.fetch_add(1, Ordering::Relaxed);
        self.inner.eval_cmp(a, b, rng)
    }
}
