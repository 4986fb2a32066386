//! Signer identities, the verifier replay ledger and the one-time key cache.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::scheme::EncryptedOneTimeKey;
use crate::symmetric::hash_message;

/// Longest raw identifier accepted.
pub const MAX_RAW_ID_LEN: usize = 32;

/// Default out-of-order window.
pub const DEFAULT_WINDOW: u8 = 8;
/// The window bitmap covers offsets `0..=W` in a `u64`.
pub const MAX_WINDOW: u8 = 63;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("identifier list is empty")]
    Empty,
    #[error("identifier of {0} bytes exceeds the 32-byte limit")]
    TooLong(usize),
    #[error("identifier {0} registered twice")]
    Duplicate(SignerId),
    #[error("identifiers {first} and {second} share canonical encoding {canonical:016x}")]
    Collision {
        first: SignerId,
        second: SignerId,
        canonical: u64,
    },
}

/// A device identity: up to 32 raw bytes and its 64-bit canonical encoding,
/// the big-endian first eight bytes of `SHA-256(raw)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignerId {
    raw: Vec<u8>,
    canonical: u64,
}

impl SignerId {
    pub fn new(raw: &[u8]) -> Result<Self, RegistryError> {
        if raw.len() > MAX_RAW_ID_LEN {
            return Err(RegistryError::TooLong(raw.len()));
        }
        Ok(SignerId {
            raw: raw.to_vec(),
            canonical: canonical_id(raw),
        })
    }

    pub fn raw(&self) -> &[u8] {
        &self.raw
    }

    pub fn canonical(&self) -> u64 {
        self.canonical
    }
}

impl fmt::Debug for SignerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match core::str::from_utf8(&self.raw) {
            Ok(s) => write!(f, "SignerId({s:?}, {:016x})", self.canonical),
            Err(_) => write!(f, "SignerId({:?}, {:016x})", self.raw, self.canonical),
        }
    }
}

/// The raw id when it is printable UTF-8, hex otherwise.
impl fmt::Display for SignerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match core::str::from_utf8(&self.raw) {
            Ok(s) if !s.chars().any(char::is_control) => write!(f, "\"{s}\""),
            _ => self.raw.iter().try_for_each(|b| write!(f, "{b:02x}")),
        }
    }
}

pub fn canonical_id(raw: &[u8]) -> u64 {
    let d = hash_message(raw);
    let mut head = [0u8; 8];
    head.copy_from_slice(&d.0[..8]);
    u64::from_be_bytes(head)
}

/// Canonical encodings of every registered signer.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    by_canonical: BTreeMap<u64, SignerId>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: SignerId) -> Result<(), RegistryError> {
        if let Some(existing) = self.by_canonical.get(&id.canonical) {
            return Err(if existing.raw == id.raw {
                RegistryError::Duplicate(id)
            } else {
                RegistryError::Collision {
                    first: existing.clone(),
                    second: id.clone(),
                    canonical: id.canonical,
                }
            });
        }
        self.by_canonical.insert(id.canonical, id);
        Ok(())
    }

    pub fn get(&self, canonical: u64) -> Option<&SignerId> {
        self.by_canonical.get(&canonical)
    }

    pub fn len(&self) -> usize {
        self.by_canonical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_canonical.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SignerId> {
        self.by_canonical.values()
    }
}

/// Registers `ids`, rejecting duplicates and canonical collisions.
pub fn register_ids<I>(ids: I) -> Result<Registry, RegistryError>
where
    I: IntoIterator<Item = SignerId>,
{
    let mut reg = Registry::new();
    for id in ids {
        reg.insert(id)?;
    }
    if reg.is_empty() {
        return Err(RegistryError::Empty);
    }
    Ok(reg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerVerdict {
    Accept,
    Replay,
    Stale,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Track {
    high_water: u64,
    /// Bit `i` set: counter `high_water - i` was accepted.
    seen: u64,
    in_flight: BTreeSet<u64>,
}

/// A counter held between [`VerifierLedger::reserve`] and either
/// [`VerifierLedger::commit`] or [`VerifierLedger::release`].
#[derive(Debug, PartialEq, Eq)]
#[must_use]
pub struct Reservation {
    signer: u64,
    counter: u64,
}

impl Reservation {
    pub fn signer(&self) -> u64 {
        self.signer
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }
}

/// Per-signer high-water mark plus a window of `W + 1` recent counters.
///
/// A counter is accepted at most once. Counters below `high_water - W` are
/// stale. A signer seen for the first time accepts any counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifierLedger {
    window: u8,
    tracks: BTreeMap<u64, Track>,
}

impl Default for VerifierLedger {
    fn default() -> Self {
        VerifierLedger::new(DEFAULT_WINDOW)
    }
}

impl VerifierLedger {
    /// # Panics
    ///
    /// If `window > 63`.
    pub fn new(window: u8) -> Self {
        assert!(window <= MAX_WINDOW, "replay window must be at most 63");
        VerifierLedger {
            window,
            tracks: BTreeMap::new(),
        }
    }

    pub fn window(&self) -> u8 {
        self.window
    }

    pub fn high_water(&self, signer: u64) -> Option<u64> {
        self.tracks
            .get(&signer)
            .filter(|t| t.seen != 0)
            .map(|t| t.high_water)
    }

    pub fn check(&self, signer: u64, counter: u64) -> LedgerVerdict {
        let Some(track) = self.tracks.get(&signer) else {
            return LedgerVerdict::Accept;
        };
        if track.in_flight.contains(&counter) {
            return LedgerVerdict::Replay;
        }
        if track.seen == 0 || counter > track.high_water {
            return LedgerVerdict::Accept;
        }
        let offset = track.high_water - counter;
        if offset > u64::from(self.window) {
            LedgerVerdict::Stale
        } else if track.seen & (1 << offset) != 0 {
            LedgerVerdict::Replay
        } else {
            LedgerVerdict::Accept
        }
    }

    /// Holds `counter` so a concurrent verification of the same value sees
    /// a replay. Returns the blocking verdict if the counter is unusable.
    pub fn reserve(&mut self, signer: u64, counter: u64) -> Result<Reservation, LedgerVerdict> {
        match self.check(signer, counter) {
            LedgerVerdict::Accept => {
                self.tracks
                    .entry(signer)
                    .or_default()
                    .in_flight
                    .insert(counter);
                Ok(Reservation { signer, counter })
            }
            v => Err(v),
        }
    }

    /// Marks the reserved counter as accepted.
    pub fn commit(&mut self, r: Reservation) {
        let track = self.tracks.entry(r.signer).or_default();
        track.in_flight.remove(&r.counter);
        Self::mark(track, r.counter);
    }

    /// Returns the reserved counter to the pool after a failed verification.
    pub fn release(&mut self, r: Reservation) {
        if let Some(track) = self.tracks.get_mut(&r.signer) {
            track.in_flight.remove(&r.counter);
            if track.seen == 0 && track.in_flight.is_empty() {
                self.tracks.remove(&r.signer);
            }
        }
    }

    /// One-shot check and commit.
    pub fn check_and_commit(&mut self, signer: u64, counter: u64) -> LedgerVerdict {
        match self.reserve(signer, counter) {
            Ok(r) => {
                self.commit(r);
                LedgerVerdict::Accept
            }
            Err(v) => v,
        }
    }

    /// Re-applies an accepted counter, for example while replaying a log.
    pub fn apply_accepted(&mut self, signer: u64, counter: u64) {
        let track = self.tracks.entry(signer).or_default();
        Self::mark(track, counter);
    }

    fn mark(track: &mut Track, counter: u64) {
        if track.seen == 0 {
            track.high_water = counter;
            track.seen = 1;
        } else if counter > track.high_water {
            let shift = counter - track.high_water;
            track.seen = if shift >= 64 { 0 } else { track.seen << shift };
            track.seen |= 1;
            track.high_water = counter;
        } else {
            let offset = track.high_water - counter;
            if offset < 64 {
                track.seen |= 1 << offset;
            }
        }
    }

    /// Number of signers with at least one accepted counter.
    pub fn signers(&self) -> usize {
        self.tracks.values().filter(|t| t.seen != 0).count()
    }
}

/// Lookup and insertion of constructed one-time keys.
pub trait OtkStore {
    fn lookup(&mut self, signer: u64, counter: u64) -> Option<Arc<EncryptedOneTimeKey>>;
    fn store(&mut self, otk: Arc<EncryptedOneTimeKey>);
}

/// A store that never holds anything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCache;

impl OtkStore for NoCache {
    fn lookup(&mut self, _: u64, _: u64) -> Option<Arc<EncryptedOneTimeKey>> {
        None
    }

    fn store(&mut self, _: Arc<EncryptedOneTimeKey>) {}
}

/// Least-recently-used cache of one-time keys keyed by `(signer, counter)`.
#[derive(Debug, Clone)]
pub struct OtkCache {
    capacity: usize,
    tick: u64,
    entries: BTreeMap<(u64, u64), (Arc<EncryptedOneTimeKey>, u64)>,
    recency: BTreeMap<u64, (u64, u64)>,
}

impl OtkCache {
    pub fn new(capacity: usize) -> Self {
        OtkCache {
            capacity: capacity.max(1),
            tick: 0,
            entries: BTreeMap::new(),
            recency: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, signer: u64, counter: u64) -> bool {
        self.entries.contains_key(&(signer, counter))
    }

    fn touch(&mut self, key: (u64, u64)) -> Option<Arc<EncryptedOneTimeKey>> {
        self.tick += 1;
        let tick = self.tick;
        let (otk, last) = self.entries.get_mut(&key)?;
        self.recency.remove(last);
        *last = tick;
        self.recency.insert(tick, key);
        Some(otk.clone())
    }
}

impl OtkStore for OtkCache {
    fn lookup(&mut self, signer: u64, counter: u64) -> Option<Arc<EncryptedOneTimeKey>> {
        self.touch((signer, counter))
    }

    fn store(&mut self, otk: Arc<EncryptedOneTimeKey>) {
        let key = (otk.signer(), otk.counter());
        if self.entries.contains_key(&key) {
            self.touch(key);
            return;
        }
        while self.entries.len() >= self.capacity {
            let Some((_, victim)) = self.recency.pop_first() else {
                break;
            };
            self.entries.remove(&victim);
        }
        self.tick += 1;
        self.recency.insert(self.tick, key);
        self.entries.insert(key, (otk, self.tick));
    }
}

impl<T: OtkStore + ?Sized> OtkStore for &mut T {
    fn lookup(&mut self, signer: u64, counter: u64) -> Option<Arc<EncryptedOneTimeKey>> {
        (**self).lookup(signer, counter)
    }

    fn store(&mut self, otk: Arc<EncryptedOneTimeKey>) {
        (**self).store(otk)
    }
}
