//! On-disk layout and crash-safe persistence.
//!
//! ```text
//! <store>/pk.bin                       distributable public key
//! <store>/authority.key                master key material (0600)
//! <store>/reveal.key                   bit-only reveal capability (0600)
//! <store>/signer-<canonical>.state     one per signer
//! <store>/ledger.log                   verifier replay ledger
//! <store>/otk-cache/<canonical>-<j>.otk
//! ```
//!
//! Every file body is a checksummed record:
//! `[magic 4][version 1][be32 len][payload][first 4 bytes of SHA-256 over the rest]`.
//! Whole-file writes go through a temporary file, `fsync`, `rename` and a
//! directory `fsync`. The ledger is an append-only sequence of records.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use inf_hors_core::backend::{ReferencePublic, ReferenceSecret, RevealKey, RevealPolicy};
use inf_hors_core::codec::{DecodeError, Reader};
use inf_hors_core::keystore::{
    LedgerVerdict, OtkCache, OtkStore, Reservation, VerifierLedger, MAX_WINDOW,
};
use inf_hors_core::scheme::{
    sign_metered, EncryptedOneTimeKey, InfHorsSignature, MasterKeyMaterial, PublicKey, SignerOps,
    SignerSeedState, SystemParams,
};
use sha2::{Digest, Sha256};

pub const PK_FILE: &str = "pk.bin";
pub const AUTHORITY_FILE: &str = "authority.key";
pub const REVEAL_FILE: &str = "reveal.key";
pub const LEDGER_FILE: &str = "ledger.log";
pub const CACHE_DIR: &str = "otk-cache";

const VERSION: u8 = 1;
const CHECK_LEN: usize = 4;
const HEADER_LEN: usize = 9;
const MAX_RECORD: usize = 64 << 20;

const MAGIC_PK: [u8; 4] = *b"IHPK";
const MAGIC_AUTHORITY: [u8; 4] = *b"IHAM";
const MAGIC_REVEAL: [u8; 4] = *b"IHRV";
const MAGIC_STATE: [u8; 4] = *b"IHSS";
const MAGIC_OTK: [u8; 4] = *b"IHOK";
const MAGIC_LEDGER_HEAD: [u8; 4] = *b"IHLH";
const MAGIC_LEDGER_ENTRY: [u8; 4] = *b"IHLE";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: checksum mismatch at offset {offset}")]
    Checksum { path: PathBuf, offset: u64 },
    #[error("{path}: partial write at offset {offset}")]
    PartialWrite { path: PathBuf, offset: u64 },
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{0}: locked by another process")]
    Locked(PathBuf),
    #[error(transparent)]
    Scheme(#[from] inf_hors_core::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, reason: impl ToString) -> StoreError {
    StoreError::Corrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn checksum(bytes: &[u8]) -> [u8; CHECK_LEN] {
    let d = Sha256::digest(bytes);
    [d[0], d[1], d[2], d[3]]
}

/// Frames `payload` as one checksummed record.
pub fn seal_record(magic: [u8; 4], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CHECK_LEN);
    out.extend_from_slice(&magic);
    out.push(VERSION);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    let c = checksum(&out);
    out.extend_from_slice(&c);
    out
}

#[derive(Debug, PartialEq, Eq)]
enum RecordError {
    /// Input ends inside the record.
    Torn,
    Checksum,
    Header,
}

/// Parses one record from the front of `bytes`, returning its magic,
/// payload and total length.
fn open_record(bytes: &[u8]) -> Result<([u8; 4], &[u8], usize), RecordError> {
    if bytes.len() < HEADER_LEN {
        return Err(RecordError::Torn);
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if bytes[4] != VERSION {
        return Err(RecordError::Header);
    }
    let len = u32::from_be_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    if len > MAX_RECORD {
        return Err(RecordError::Header);
    }
    let end = HEADER_LEN + len;
    if bytes.len() < end + CHECK_LEN {
        return Err(RecordError::Torn);
    }
    if checksum(&bytes[..end]) != bytes[end..end + CHECK_LEN] {
        return Err(RecordError::Checksum);
    }
    Ok((magic, &bytes[HEADER_LEN..end], end + CHECK_LEN))
}

/// Payload of a file holding exactly one record with `magic`.
pub fn read_record(path: &Path, magic: [u8; 4]) -> Result<Vec<u8>, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    match open_record(&bytes) {
        Ok((m, payload, used)) if m == magic && used == bytes.len() => Ok(payload.to_vec()),
        Ok((m, _, _)) if m != magic => Err(corrupt(path, "unexpected file type")),
        Ok(_) => Err(corrupt(path, "trailing bytes")),
        Err(RecordError::Torn) => Err(StoreError::PartialWrite {
            path: path.into(),
            offset: 0,
        }),
        Err(RecordError::Checksum) => Err(StoreError::Checksum {
            path: path.into(),
            offset: 0,
        }),
        Err(RecordError::Header) => Err(corrupt(path, "bad record header")),
    }
}

/// Replaces `path` with `bytes` so that readers see either the old or the
/// new content.
pub fn write_atomic(path: &Path, bytes: &[u8], private: bool) -> Result<(), StoreError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| corrupt(path, "not a file path"))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = create_options(private).open(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))?;
        sync_dir(dir)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn create_options(private: bool) -> OpenOptions {
    let mut o = OpenOptions::new();
    o.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        o.mode(if private { 0o600 } else { 0o644 });
    }
    #[cfg(not(unix))]
    let _ = private;
    o
}

fn sync_dir(dir: &Path) -> Result<(), StoreError> {
    #[cfg(unix)]
    File::open(dir)
        .and_then(|d| d.sync_all())
        .map_err(io_err(dir))?;
    #[cfg(not(unix))]
    let _ = dir;
    Ok(())
}

/// Exclusive advisory lock on `<path>.lock`, released on drop.
#[derive(Debug)]
pub struct LockGuard {
    _file: File,
}

fn lock_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".lock");
    PathBuf::from(s)
}

/// Fails with [`StoreError::Locked`] instead of waiting.
pub fn try_lock(path: &Path) -> Result<LockGuard, StoreError> {
    let lp = lock_path(path);
    let file = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(false)
        .open(&lp)
        .map_err(io_err(&lp))?;
    match file.try_lock() {
        Ok(()) => Ok(LockGuard { _file: file }),
        Err(TryLockError::WouldBlock) => Err(StoreError::Locked(path.to_path_buf())),
        Err(TryLockError::Error(e)) => Err(io_err(&lp)(e)),
    }
}

fn decode<T>(path: &Path, r: Result<T, DecodeError>) -> Result<T, StoreError> {
    r.map_err(|e| corrupt(path, e))
}

pub fn signer_file_name(canonical: u64) -> String {
    format!("signer-{canonical:016x}.state")
}

pub fn otk_file_name(canonical: u64, counter: u64) -> String {
    format!("{canonical:016x}-{counter}.otk")
}

pub fn save_public_key(path: &Path, pk: &PublicKey<ReferencePublic>) -> Result<(), StoreError> {
    write_atomic(path, &seal_record(MAGIC_PK, &pk.to_bytes()), false)
}

pub fn load_public_key(path: &Path) -> Result<PublicKey<ReferencePublic>, StoreError> {
    let payload = read_record(path, MAGIC_PK)?;
    decode(path, PublicKey::from_bytes(&payload))
}

pub type ReferenceAuthority = MasterKeyMaterial<ReferencePublic, ReferenceSecret>;

pub fn save_authority(path: &Path, m: &ReferenceAuthority) -> Result<(), StoreError> {
    write_atomic(path, &seal_record(MAGIC_AUTHORITY, &m.to_bytes()), true)
}

pub fn load_authority(path: &Path) -> Result<ReferenceAuthority, StoreError> {
    let payload = read_record(path, MAGIC_AUTHORITY)?;
    decode(path, MasterKeyMaterial::from_bytes(&payload))
}

/// `[policy byte][backend secret framing]`.
pub fn save_reveal_key(path: &Path, key: &RevealKey<ReferenceSecret>) -> Result<(), StoreError> {
    let mut payload = vec![key.policy().to_byte()];
    payload.extend_from_slice(&key.decryptor().to_bytes());
    write_atomic(path, &seal_record(MAGIC_REVEAL, &payload), true)
}

pub fn load_reveal_key(path: &Path) -> Result<RevealKey<ReferenceSecret>, StoreError> {
    let payload = read_record(path, MAGIC_REVEAL)?;
    let mut r = Reader::new(&payload);
    let policy = decode(path, r.u8().and_then(RevealPolicy::from_byte))?;
    let secret = decode(path, ReferenceSecret::decode_from(&mut r))?;
    decode(path, r.finish())?;
    Ok(RevealKey::new(secret, policy))
}

pub fn encode_signer_state(state: &SignerSeedState) -> Vec<u8> {
    seal_record(MAGIC_STATE, &state.to_bytes())
}

pub fn save_signer_state(path: &Path, state: &SignerSeedState) -> Result<(), StoreError> {
    write_atomic(path, &encode_signer_state(state), true)
}

pub fn load_signer_state(path: &Path) -> Result<SignerSeedState, StoreError> {
    let payload = read_record(path, MAGIC_STATE)?;
    decode(path, SignerSeedState::from_bytes(&payload))
}

/// A signer state file held under an exclusive lock.
///
/// [`sign`](Self::sign) persists the advanced counter before it returns
/// the signature, so a crash can waste a counter but never reuse one.
#[derive(Debug)]
pub struct SignerHandle {
    path: PathBuf,
    state: SignerSeedState,
    _lock: LockGuard,
}

impl SignerHandle {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let lock = try_lock(path)?;
        let state = load_signer_state(path)?;
        Ok(SignerHandle {
            path: path.to_path_buf(),
            state,
            _lock: lock,
        })
    }

    pub fn state(&self) -> &SignerSeedState {
        &self.state
    }

    pub fn sign(
        &mut self,
        params: &SystemParams,
        message: &[u8],
    ) -> Result<InfHorsSignature, StoreError> {
        self.sign_metered(params, message, &mut SignerOps::default())
    }

    pub fn sign_metered(
        &mut self,
        params: &SystemParams,
        message: &[u8],
        ops: &mut SignerOps,
    ) -> Result<InfHorsSignature, StoreError> {
        let mut next = self.state.clone();
        let sig = sign_metered(params, &mut next, message, ops)?;
        save_signer_state(&self.path, &next)?;
        self.state = next;
        Ok(sig)
    }
}

/// The replay ledger backed by `ledger.log`.
///
/// Reservation happens in memory. [`commit`](Self::commit) appends and
/// syncs the accepted counter before the in-memory ledger changes; if that
/// fails the caller must not report success.
#[derive(Debug)]
pub struct PersistentLedger {
    path: PathBuf,
    file: File,
    ledger: VerifierLedger,
    _lock: LockGuard,
}

impl PersistentLedger {
    /// Opens or creates the ledger in `dir`. `window` applies only when the
    /// log is created; an existing log keeps its recorded window.
    pub fn open(dir: &Path, window: u8) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(LEDGER_FILE);
        let lock = try_lock(&path)?;
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err(&path))?;

        let ledger = if bytes.is_empty() {
            if window > MAX_WINDOW {
                return Err(corrupt(&path, "replay window above 63"));
            }
            file.write_all(&seal_record(MAGIC_LEDGER_HEAD, &[window]))
                .and_then(|_| file.sync_all())
                .map_err(io_err(&path))?;
            sync_dir(dir)?;
            VerifierLedger::new(window)
        } else {
            Self::replay(&path, &bytes)?
        };
        Ok(PersistentLedger {
            path,
            file,
            ledger,
            _lock: lock,
        })
    }

    fn replay(path: &Path, bytes: &[u8]) -> Result<VerifierLedger, StoreError> {
        let mut offset = 0usize;
        let mut ledger: Option<VerifierLedger> = None;
        while offset < bytes.len() {
            let at = offset as u64;
            let (magic, payload, used) = match open_record(&bytes[offset..]) {
                Ok(r) => r,
                Err(RecordError::Torn) => {
                    return Err(StoreError::PartialWrite {
                        path: path.into(),
                        offset: at,
                    })
                }
                Err(RecordError::Checksum) => {
                    return Err(StoreError::Checksum {
                        path: path.into(),
                        offset: at,
                    })
                }
                Err(RecordError::Header) => return Err(corrupt(path, "bad record header")),
            };
            match (magic, &mut ledger) {
                (MAGIC_LEDGER_HEAD, None) if payload.len() == 1 && payload[0] <= MAX_WINDOW => {
                    ledger = Some(VerifierLedger::new(payload[0]));
                }
                (MAGIC_LEDGER_ENTRY, Some(l)) if payload.len() == 16 => {
                    let signer = u64::from_be_bytes(payload[..8].try_into().expect("8"));
                    let counter = u64::from_be_bytes(payload[8..].try_into().expect("8"));
                    l.apply_accepted(signer, counter);
                }
                _ => return Err(corrupt(path, format!("unexpected record at offset {at}"))),
            }
            offset += used;
        }
        ledger.ok_or_else(|| corrupt(path, "missing header"))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn ledger(&self) -> &VerifierLedger {
        &self.ledger
    }

    pub fn check(&self, signer: u64, counter: u64) -> LedgerVerdict {
        self.ledger.check(signer, counter)
    }

    pub fn reserve(&mut self, signer: u64, counter: u64) -> Result<Reservation, LedgerVerdict> {
        self.ledger.reserve(signer, counter)
    }

    pub fn commit(&mut self, r: Reservation) -> Result<(), StoreError> {
        let mut payload = [0u8; 16];
        payload[..8].copy_from_slice(&r.signer().to_be_bytes());
        payload[8..].copy_from_slice(&r.counter().to_be_bytes());
        let record = seal_record(MAGIC_LEDGER_ENTRY, &payload);
        match self
            .file
            .write_all(&record)
            .and_then(|_| self.file.sync_data())
        {
            Ok(()) => {
                self.ledger.commit(r);
                Ok(())
            }
            Err(e) => {
                self.ledger.release(r);
                Err(io_err(&self.path)(e))
            }
        }
    }

    pub fn release(&mut self, r: Reservation) {
        self.ledger.release(r);
    }
}

pub fn save_otk(path: &Path, otk: &EncryptedOneTimeKey) -> Result<(), StoreError> {
    write_atomic(path, &seal_record(MAGIC_OTK, &otk.to_bytes()), false)
}

pub fn load_otk(path: &Path) -> Result<EncryptedOneTimeKey, StoreError> {
    let payload = read_record(path, MAGIC_OTK)?;
    decode(path, EncryptedOneTimeKey::from_bytes(&payload))
}

/// One-time keys in `otk-cache/`, fronted by an in-memory LRU.
///
/// Unreadable or corrupted files count as misses, so the store can only
/// change cost, not verdicts. A file whose name disagrees with its content
/// is also a miss.
#[derive(Debug)]
pub struct DirOtkStore {
    dir: PathBuf,
    front: OtkCache,
    errors: Vec<StoreError>,
}

impl DirOtkStore {
    pub fn open(dir: &Path, capacity: usize) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(DirOtkStore {
            dir: dir.to_path_buf(),
            front: OtkCache::new(capacity),
            errors: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, signer: u64, counter: u64) -> PathBuf {
        self.dir.join(otk_file_name(signer, counter))
    }

    pub fn insert(&mut self, otk: &EncryptedOneTimeKey) -> Result<PathBuf, StoreError> {
        let path = self.path_for(otk.signer(), otk.counter());
        save_otk(&path, otk)?;
        Ok(path)
    }

    /// Problems met while reading or writing, for diagnostics.
    pub fn take_errors(&mut self) -> Vec<StoreError> {
        std::mem::take(&mut self.errors)
    }
}

impl OtkStore for DirOtkStore {
    fn lookup(&mut self, signer: u64, counter: u64) -> Option<Arc<EncryptedOneTimeKey>> {
        if let Some(hit) = self.front.lookup(signer, counter) {
            return Some(hit);
        }
        let path = self.path_for(signer, counter);
        if !path.exists() {
            return None;
        }
        match load_otk(&path) {
            Ok(otk) if otk.signer() == signer && otk.counter() == counter => {
                let otk = Arc::new(otk);
                self.front.store(otk.clone());
                Some(otk)
            }
            Ok(_) => {
                self.errors
                    .push(corrupt(&path, "key does not match its file name"));
                None
            }
            Err(e) => {
                self.errors.push(e);
                None
            }
        }
    }

    fn store(&mut self, otk: Arc<EncryptedOneTimeKey>) {
        if let Err(e) = self.insert(&otk) {
            self.errors.push(e);
        }
        self.front.store(otk);
    }
}
