//! Acceptance suite. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use inf_hors::service::{
    decode_frame, encode_frame, parse_response, Client, ConstructMode, ConstructRequest, Daemon,
};
use inf_hors::store::{self, PersistentLedger, SignerHandle};
use inf_hors_core::backend::{
    backend_keygen, BackendError, BackendParams, CiphertextKind, Decryptor, Encoding, Evaluator,
    Metered, ReferencePublic, ReferenceSecret, Reveal, RevealPolicy,
};
use inf_hors_core::codec::decode_hex;
use inf_hors_core::hors::{hors_sign, message_indices, HorsParams, HorsSecretKey};
use inf_hors_core::keystore::{LedgerVerdict, OtkCache, OtkStore, SignerId, VerifierLedger};
use inf_hors_core::scheme::{
    construct_pk, construct_pk_partial, keygen_from_master, keygen_with_backend, sign,
    sign_metered, verify, verify_online_offline, InfHorsSignature, KeygenOutput, PublicKey,
    SignerOps, SignerSeedState, SystemParams, SIGNER_SECRET_LEN,
};
use inf_hors_core::symmetric::{dm_owf, hash_message, prf, Block128, DomainTag, PrfKey};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
type Keys = KeygenOutput<ReferencePublic, ReferenceSecret>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn setup(
    encoding: Encoding,
    n: usize,
    seed: u64,
) -> (SystemParams, Keys, Vec<SignerId>, ChaCha20Rng) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let ids: Vec<SignerId> = (0..n)
        .map(|i| SignerId::new(format!("acc-{seed}-{i}").as_bytes()).unwrap())
        .collect();
    let backend = backend_keygen(
        BackendParams {
            security_level: 128,
            encoding,
        },
        &mut rng,
    )
    .unwrap();
    let out = keygen_with_backend(&ids, backend, &mut rng).unwrap();
    (SystemParams::default(), out, ids, rng)
}

fn at_counter(state: &SignerSeedState, j: u64) -> SignerSeedState {
    SignerSeedState::new(state.id().clone(), state.gamma().clone(), j)
}

fn threads() -> usize {
    thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(16)
}

fn completeness() -> Outcome {
    const TRIPLES: usize = 10_000;
    let mut notes = Vec::new();
    for encoding in Encoding::ALL {
        let (params, out, _, _) = setup(encoding, 64, 1);
        let out = Arc::new(out);
        let workers = threads();
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let out = out.clone();
                thread::spawn(move || {
                    let mut rng = ChaCha20Rng::seed_from_u64(1000 + w as u64);
                    let reveal = out.authority.reveal_key(RevealPolicy::verifier());
                    let mut ok = (0usize, 0usize);
                    for _ in (w..TRIPLES).step_by(workers) {
                        let base = &out.signers[rng.gen_range(0..out.signers.len())];
                        let j = rng.gen_range(0..u64::MAX);
                        let mut msg = vec![0u8; rng.gen_range(0..96)];
                        rng.fill_bytes(&mut msg);
                        let mut state = at_counter(base, j);
                        let sig = sign(&params, &mut state, &msg).unwrap();
                        let signer = base.id().canonical();
                        let full = construct_pk(&params, &out.public, signer, j, &mut rng).unwrap();
                        let idx = message_indices(&params.hors, &msg);
                        let part =
                            construct_pk_partial(&out.public, signer, j, &idx, &mut rng).unwrap();
                        ok.0 += verify(&params, &out.public, &full, &msg, &sig, &reveal, &mut rng)
                            .unwrap() as usize;
                        ok.1 += verify(&params, &out.public, &part, &msg, &sig, &reveal, &mut rng)
                            .unwrap() as usize;
                    }
                    ok
                })
            })
            .collect();
        let (full, part) = handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        ensure!(
            full == TRIPLES && part == TRIPLES,
            "{encoding:?}: full {full}/{TRIPLES}, partial {part}/{TRIPLES}"
        );
        notes.push(format!(
            "{encoding:?} full {full}/{TRIPLES} partial {part}/{TRIPLES}"
        ));
    }
    Ok(notes.join("; "))
}

fn central_identity() -> Outcome {
    let mut compared = 0usize;
    for encoding in Encoding::ALL {
        let (params, out, ids, mut rng) = setup(encoding, 32, 2);
        let full = out.authority.reveal_key(RevealPolicy::full());
        let msk = out.authority.msk();
        for (n, id) in ids.iter().enumerate() {
            let j: u64 = if n % 4 == 0 { n as u64 } else { rng.gen() };
            let otk = construct_pk(&params, &out.public, id.canonical(), j, &mut rng).unwrap();
            ensure!(
                otk.len() == params.hors.t(),
                "component count {}",
                otk.len()
            );
            let gamma = PrfKey::from(prf(msk, id.canonical(), DomainTag::SEED));
            let sk = PrfKey::from(prf(&gamma, j, DomainTag::STATE));
            for (l, c) in otk.components() {
                let got = full.reveal(c).unwrap().block().unwrap();
                let want = dm_owf(&prf(&sk, u64::from(l), DomainTag::CHUNK));
                ensure!(got == want, "{encoding:?} id {n} j {j} index {l} differs");
                compared += 1;
            }
            // Chunks the signer emits map onto the same images.
            let mut st = at_counter(&out.signers[n], j);
            let msg = format!("identity {n}");
            let sig = sign(&params, &mut st, msg.as_bytes()).unwrap();
            for (&x, chunk) in message_indices(&params.hors, msg.as_bytes())
                .as_slice()
                .iter()
                .zip(sig.chunks())
            {
                let img = full
                    .reveal(otk.component(x).unwrap())
                    .unwrap()
                    .block()
                    .unwrap();
                ensure!(
                    dm_owf(chunk) == img,
                    "{encoding:?} signer chunk mismatch at {x}"
                );
            }
        }
    }
    Ok(format!(
        "{compared} components equal across 2 encodings x 32 pairs x 1024"
    ))
}

fn sizes() -> Outcome {
    let mut notes = Vec::new();
    for encoding in Encoding::ALL {
        let (params, out, _, _) = setup(encoding, 1, 3);
        let (_, many, _, _) = setup(encoding, 1 << 10, 4);
        let state = &out.signers[0];
        let secret = state.secret_material().len();
        ensure!(
            secret == 24 && SIGNER_SECRET_LEN == 24,
            "signer secret material {secret} bytes"
        );
        let encoded = state.to_bytes();
        ensure!(
            encoded.len() == 1 + state.id().raw().len() + 24,
            "state encoding carries more than id plus 24 bytes"
        );
        let sig = sign(&params, &mut state.clone(), b"size")
            .unwrap()
            .to_bytes();
        ensure!(sig.len() == 264, "signature {} bytes", sig.len());
        let (a, b) = (out.public.to_bytes().len(), many.public.to_bytes().len());
        ensure!(a == b, "{encoding:?} pk {a} bytes for N=1, {b} for N=1024");
        let dir = TempDir::new().unwrap();
        store::save_public_key(&dir.path().join("one"), &out.public).unwrap();
        store::save_public_key(&dir.path().join("many"), &many.public).unwrap();
        let fa = std::fs::metadata(dir.path().join("one")).unwrap().len();
        let fb = std::fs::metadata(dir.path().join("many")).unwrap().len();
        ensure!(fa == fb, "pk files {fa} vs {fb}");
        notes.push(format!(
            "{encoding:?} secret 24 B, signature 264 B, pk {a} B (file {fa} B) for N=1 and N=1024"
        ));
    }
    Ok(notes.join("; "))
}

fn operation_counts() -> Outcome {
    let mut notes = Vec::new();
    for encoding in Encoding::ALL {
        let (params, out, ids, mut rng) = setup(encoding, 1, 5);
        let mut state = out.signers[0].clone();
        for msg in [&b""[..], b"a", &[0xffu8; 1000]] {
            let mut ops = SignerOps::default();
            sign_metered(&params, &mut state, msg, &mut ops).unwrap();
            ensure!(
                ops.prf_calls == 17 && ops.hash_calls == 1,
                "sign used {ops:?}"
            );
        }
        let pk: PublicKey<Metered<ReferencePublic>> = out.public.clone().map_backend(Metered::new);
        let reveal = out.authority.reveal_key(RevealPolicy::verifier());
        let mut st = at_counter(&out.signers[0], 42);
        let sig = sign(&params, &mut st, b"warm").unwrap();
        let mut cache = OtkCache::new(8);
        cache.store(Arc::new(
            construct_pk(&params, &pk, ids[0].canonical(), 42, &mut rng).unwrap(),
        ));
        pk.backend().reset();
        let ok = verify_online_offline(
            &params,
            &pk,
            &mut cache,
            ids[0].canonical(),
            b"warm",
            &sig,
            &reveal,
            &mut rng,
        )
        .unwrap();
        let c = pk.backend().counts();
        ensure!(ok, "warm verify rejected");
        ensure!(
            c.constructions() == 0 && c.eval_cmp == 16,
            "warm verify counts {c:?}"
        );
        notes.push(format!(
            "{encoding:?} sign 17 PRF + 1 hash; warm verify {} constructions + {} comparisons",
            c.constructions(),
            c.eval_cmp
        ));
    }
    Ok(notes.join("; "))
}

fn flip_bit(bytes: &[u8], bit: usize) -> Vec<u8> {
    let mut v = bytes.to_vec();
    v[bit / 8] ^= 0x80 >> (bit % 8);
    v
}

fn tamper_and_forgery() -> Outcome {
    let mut trials = 0usize;
    for encoding in Encoding::ALL {
        let (params, out, ids, mut rng) = setup(encoding, 4, 6);
        let reveal = out.authority.reveal_key(RevealPolicy::verifier());
        let mut states = out.signers.clone();
        let mut cache = OtkCache::new(64);
        for i in 0..16 {
            let who = i % 4;
            let msg = format!("pinned message {i:02} for tamper sweep").into_bytes();
            let sig = sign(&params, &mut states[who], &msg).unwrap();
            let signer = ids[who].canonical();
            let mut check = |m: &[u8], s: &[u8], cache: &mut OtkCache| -> Result<bool, String> {
                let Ok(sig) = InfHorsSignature::from_bytes(&params.hors, s) else {
                    return Ok(false);
                };
                Ok(verify_online_offline(
                    &params,
                    &out.public,
                    cache,
                    signer,
                    m,
                    &sig,
                    &reveal,
                    &mut rng,
                )
                .unwrap_or(false))
            };
            let sig_bytes = sig.to_bytes();
            ensure!(
                check(&msg, &sig_bytes, &mut cache)?,
                "pinned signature {i} rejected"
            );
            for bit in 0..msg.len() * 8 {
                ensure!(
                    !check(&flip_bit(&msg, bit), &sig_bytes, &mut cache)?,
                    "{encoding:?} sig {i} message bit {bit} accepted"
                );
            }
            for bit in 0..sig_bytes.len() * 8 {
                ensure!(
                    !check(&msg, &flip_bit(&sig_bytes, bit), &mut cache)?,
                    "{encoding:?} sig {i} signature bit {bit} accepted"
                );
            }
            trials += (msg.len() + sig_bytes.len()) * 8;
        }
    }

    // Counter reuse: a plaintext adversary assembles a forgery, the ledger refuses it.
    let (params, out, ids, mut rng) = setup(Encoding::AesGcm, 1, 7);
    let reveal = out.authority.reveal_key(RevealPolicy::verifier());
    let reused = out.signers[0].clone();
    let mut pool: HashMap<u16, Block128> = HashMap::new();
    let mut first = None;
    for n in 0..256 {
        let m = format!("broadcast {n}");
        let sig = sign(&params, &mut reused.clone(), m.as_bytes()).unwrap();
        for (&x, c) in message_indices(&params.hors, m.as_bytes())
            .as_slice()
            .iter()
            .zip(sig.chunks())
        {
            pool.insert(x, *c);
        }
        first.get_or_insert((m, sig));
    }
    let target = (0..200_000)
        .map(|n| format!("forged order {n}"))
        .find(|m| {
            message_indices(&params.hors, m.as_bytes())
                .as_slice()
                .iter()
                .all(|x| pool.contains_key(x))
        })
        .ok_or("no coverable forgery target found")?;
    let chunks = message_indices(&params.hors, target.as_bytes())
        .as_slice()
        .iter()
        .map(|x| pool[x])
        .collect();
    let forgery = InfHorsSignature::new(chunks, 0);
    let otk = construct_pk(&params, &out.public, ids[0].canonical(), 0, &mut rng).unwrap();
    ensure!(
        verify(
            &params,
            &out.public,
            &otk,
            target.as_bytes(),
            &forgery,
            &reveal,
            &mut rng
        )
        .unwrap(),
        "reuse forgery did not verify"
    );
    let mut ledger = VerifierLedger::default();
    let (m, sig) = first.unwrap();
    ensure!(
        verify(
            &params,
            &out.public,
            &otk,
            m.as_bytes(),
            &sig,
            &reveal,
            &mut rng
        )
        .unwrap(),
        "honest signature rejected"
    );
    ensure!(
        ledger.check_and_commit(ids[0].canonical(), 0) == LedgerVerdict::Accept,
        "first use refused"
    );
    ensure!(
        ledger.check_and_commit(ids[0].canonical(), forgery.counter()) == LedgerVerdict::Replay,
        "ledger admitted the forgery"
    );
    Ok(format!("{trials} bit flips, 0 accepts; reuse forgery verifies cryptographically and the ledger returns Replay"))
}

/// Reference verdict model for the ledger.
#[derive(Default)]
struct LedgerOracle {
    accepted: BTreeMap<u64, HashSet<u64>>,
}

impl LedgerOracle {
    fn verdict(&self, w: u64, s: u64, c: u64) -> LedgerVerdict {
        let Some(set) = self.accepted.get(&s) else {
            return LedgerVerdict::Accept;
        };
        let hw = *set.iter().max().unwrap();
        if c > hw {
            LedgerVerdict::Accept
        } else if hw - c > w {
            LedgerVerdict::Stale
        } else if set.contains(&c) {
            LedgerVerdict::Replay
        } else {
            LedgerVerdict::Accept
        }
    }
}

fn replay_state() -> Outcome {
    use LedgerVerdict::*;
    let mut scenarios = 0;
    let dir = TempDir::new().unwrap();

    // Scripted ordering within and outside the window.
    let script: &[(u64, u64, LedgerVerdict)] = &[
        (1, 5, Accept),
        (1, 3, Accept),
        (1, 5, Replay),
        (1, 3, Replay),
        (1, 13, Accept),
        (1, 4, Stale),
        (1, 5, Replay),
        (1, 6, Accept),
        (1, 6, Replay),
        (2, 100, Accept),
        (2, 0, Stale),
        (2, 92, Accept),
        (2, 91, Stale),
        (2, 101, Accept),
        (2, 92, Stale),
    ];
    {
        let mut l = PersistentLedger::open(&dir.path().join("a"), 8).unwrap();
        for &(s, c, want) in script {
            let got = match l.reserve(s, c) {
                Ok(r) => {
                    l.commit(r).unwrap();
                    Accept
                }
                Err(v) => v,
            };
            ensure!(
                got == want,
                "scripted ({s}, {c}): {got:?}, expected {want:?}"
            );
            scenarios += 1;
        }
    }
    let l = PersistentLedger::open(&dir.path().join("a"), 8).unwrap();
    for &(s, c, _) in script {
        ensure!(
            l.check(s, c) != Accept,
            "({s}, {c}) acceptable again after restart"
        );
        scenarios += 1;
    }
    drop(l);

    // Crash after durable commit but before the verdict was reported.
    {
        let mut l = PersistentLedger::open(&dir.path().join("b"), 8).unwrap();
        let r = l.reserve(7, 0).unwrap();
        l.commit(r).unwrap();
    }
    ensure!(
        PersistentLedger::open(&dir.path().join("b"), 8)
            .unwrap()
            .check(7, 0)
            == Replay,
        "committed counter forgotten"
    );
    scenarios += 1;

    // Crash between reserve and commit: nothing was accepted, so exactly one later acceptance.
    {
        let mut l = PersistentLedger::open(&dir.path().join("c"), 8).unwrap();
        let _held = l.reserve(7, 0).unwrap();
    }
    {
        let mut l = PersistentLedger::open(&dir.path().join("c"), 8).unwrap();
        let r = l
            .reserve(7, 0)
            .map_err(|v| format!("in-flight counter lost after crash: {v:?}"))?;
        l.commit(r).unwrap();
        ensure!(l.reserve(7, 0).is_err(), "second acceptance");
    }
    scenarios += 1;

    // Signer write-ahead: a signature lost in a crash still burns its counter.
    let (params, out, _, _) = setup(Encoding::AesGcm, 1, 8);
    let st = dir.path().join("signer.state");
    store::save_signer_state(&st, &out.signers[0]).unwrap();
    let lost = SignerHandle::open(&st)
        .unwrap()
        .sign(&params, b"lost")
        .unwrap();
    let next = SignerHandle::open(&st)
        .unwrap()
        .sign(&params, b"after restart")
        .unwrap();
    ensure!(
        lost.counter() == 0 && next.counter() == 1,
        "counter reused after crash"
    );
    scenarios += 1;

    // Randomized sessions with restarts against the reference model.
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    for w in [0u8, 1, 8, 63] {
        let path = dir.path().join(format!("r{w}"));
        let mut oracle = LedgerOracle::default();
        let mut l = PersistentLedger::open(&path, w).unwrap();
        for step in 0..2_000 {
            if step % 97 == 0 {
                drop(l);
                l = PersistentLedger::open(&path, 0).unwrap();
            }
            let s = rng.gen_range(0..3u64);
            let c = rng.gen_range(0..80u64);
            let want = oracle.verdict(u64::from(w), s, c);
            let got = match l.reserve(s, c) {
                Ok(r) if rng.gen_bool(0.8) => {
                    l.commit(r).unwrap();
                    oracle.accepted.entry(s).or_default().insert(c);
                    Accept
                }
                Ok(r) => {
                    l.release(r);
                    Accept
                }
                Err(v) => v,
            };
            ensure!(
                got == want,
                "W={w} step {step} ({s}, {c}): {got:?} vs model {want:?}"
            );
            scenarios += 1;
        }
    }
    Ok(format!(
        "{scenarios}/{scenarios} scripted and randomized scenarios"
    ))
}

fn backend_contract() -> Outcome {
    for encoding in Encoding::ALL {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let kp = backend_keygen(
            BackendParams {
                security_level: 128,
                encoding,
            },
            &mut rng,
        )
        .unwrap();
        let (e, d) = (&kp.public_part, &kp.secret_part);
        let dec = |c: &inf_hors_core::backend::Ciphertext| d.decrypt(c).unwrap();
        for _ in 0..1_000 {
            let key = Block128(rng.gen());
            let x: u64 = rng.gen();
            let tag = DomainTag(rng.gen_range(1..=3));
            let ck = e
                .encrypt(&key, CiphertextKind::KeyMaterial, &mut rng)
                .unwrap();
            let k = PrfKey::from(key);
            ensure!(
                dec(&e.eval_prf(&ck, x, tag, &mut rng).unwrap()).block() == Some(prf(&k, x, tag)),
                "eval_prf"
            );
            ensure!(
                dec(&e.eval_owf_prf(&ck, x, tag, &mut rng).unwrap()).block()
                    == Some(dm_owf(&prf(&k, x, tag))),
                "eval_owf_prf"
            );
            let a = Block128(rng.gen());
            let b = if rng.gen_bool(0.5) {
                a
            } else {
                Block128(rng.gen())
            };
            let ca = e.encrypt(&a, CiphertextKind::OwfImage, &mut rng).unwrap();
            let cb = e.encrypt(&b, CiphertextKind::OwfImage, &mut rng).unwrap();
            ensure!(
                dec(&e.eval_cmp(&ca, &cb, &mut rng).unwrap()).bit() == Some(a == b),
                "eval_cmp"
            );
        }
        let v = Block128([0x5a; 16]);
        for kind in CiphertextKind::ALL {
            let pt = if kind == CiphertextKind::Bit {
                inf_hors_core::backend::bit_block(true)
            } else {
                v
            };
            let payloads: HashSet<Vec<u8>> = (0..1_000)
                .map(|_| e.encrypt(&pt, kind, &mut rng).unwrap().payload().to_vec())
                .collect();
            ensure!(
                payloads.len() == 1_000,
                "{encoding:?} {kind:?}: {} distinct payloads",
                payloads.len()
            );
        }
        let verifier = inf_hors_core::backend::RevealKey::new(d.clone(), RevealPolicy::verifier());
        for kind in [CiphertextKind::KeyMaterial, CiphertextKind::OwfImage] {
            let c = e.encrypt(&v, kind, &mut rng).unwrap();
            ensure!(
                matches!(verifier.reveal(&c), Err(BackendError::PolicyViolation(k)) if k == kind),
                "{kind:?} revealed under the verifier policy"
            );
        }
        let bit = e
            .encrypt(
                &inf_hors_core::backend::bit_block(true),
                CiphertextKind::Bit,
                &mut rng,
            )
            .unwrap();
        ensure!(
            verifier.reveal(&bit).unwrap().bit() == Some(true),
            "bit not revealable"
        );
    }
    Ok("1000 instances x 3 evaluations, 1000 distinct payloads per kind, policy enforced; both encodings".into())
}

fn constructor_service() -> Outcome {
    let mut notes = Vec::new();
    for encoding in Encoding::ALL {
        let (params, out, ids, mut rng) = setup(encoding, 8, 11);
        let reveal = out.authority.reveal_key(RevealPolicy::verifier());
        let daemon = Daemon::bind("127.0.0.1:0", params, out.public.clone())
            .unwrap()
            .spawn()
            .unwrap();
        let mut client = Client::connect(daemon.addr()).unwrap();

        let mut equal = 0;
        for n in 0..64u64 {
            let who = (n % 8) as usize;
            let j = n / 8 + if n % 3 == 0 { 1 << 40 } else { 0 };
            let msg = format!("service {n}").into_bytes();
            let sig = sign(&params, &mut at_counter(&out.signers[who], j), &msg).unwrap();
            let signer = ids[who].canonical();
            let mode = if n % 2 == 0 {
                ConstructMode::Full
            } else {
                ConstructMode::Partial(message_indices(&params.hors, &msg).as_slice().to_vec())
            };
            let remote = client
                .construct(&ConstructRequest {
                    signer,
                    counter: j,
                    mode,
                })
                .map_err(|e| e.to_string())?;
            let local = construct_pk(&params, &out.public, signer, j, &mut rng).unwrap();
            for m in [&msg[..], b"other"] {
                let r = verify(&params, &out.public, &remote, m, &sig, &reveal, &mut rng).ok();
                let l = verify(&params, &out.public, &local, m, &sig, &reveal, &mut rng).ok();
                let r = r.or(if m == msg { None } else { Some(false) });
                ensure!(r == l, "{encoding:?} request {n}: daemon {r:?} local {l:?}");
            }
            equal += 1;
        }

        // Pinned partial response: every corrupted byte value at every position.
        let msg = b"pinned service response";
        let sig = sign(&params, &mut at_counter(&out.signers[0], 77), msg).unwrap();
        let req = ConstructRequest {
            signer: ids[0].canonical(),
            counter: 77,
            mode: ConstructMode::Partial(message_indices(&params.hors, msg).as_slice().to_vec()),
        };
        let frame = encode_frame(&client.request_raw(&req).map_err(|e| e.to_string())?);
        let verdict = |f: &[u8], m: &[u8], rng: &mut ChaCha20Rng| -> Option<bool> {
            let body = decode_frame(f, usize::MAX).ok()?;
            let otk = parse_response(&req, body).ok()?;
            verify(&params, &out.public, &otk, m, &sig, &reveal, rng).ok()
        };
        ensure!(
            verdict(&frame, msg, &mut rng) == Some(true),
            "pinned response does not verify"
        );
        let mut corruptions = 0;
        for pos in 0..frame.len() {
            for mask in 1..=255u8 {
                let mut bad = frame.clone();
                bad[pos] ^= mask;
                ensure!(
                    verdict(&bad, msg, &mut rng) != Some(true),
                    "{encoding:?} byte {pos} ^ {mask:#04x} accepted"
                );
                corruptions += 1;
            }
        }

        // Full response: corruption outside the message's indices cannot matter
        // for that message, but no corruption may admit a different message.
        let full_req = ConstructRequest {
            mode: ConstructMode::Full,
            ..req.clone()
        };
        let full_frame = encode_frame(&client.request_raw(&full_req).map_err(|e| e.to_string())?);
        for pos in 0..full_frame.len() {
            let mut bad = full_frame.clone();
            bad[pos] ^= 0x01;
            let forged = decode_frame(&bad, usize::MAX)
                .ok()
                .and_then(|b| parse_response(&full_req, b).ok())
                .and_then(|otk| {
                    verify(
                        &params,
                        &out.public,
                        &otk,
                        b"pinned service responsf",
                        &sig,
                        &reveal,
                        &mut rng,
                    )
                    .ok()
                });
            ensure!(
                forged != Some(true),
                "{encoding:?} full response byte {pos} admitted a forgery"
            );
        }
        notes.push(format!(
            "{encoding:?} {equal}/64 equal verdicts, {corruptions} corruptions 0 accepts"
        ));
    }
    Ok(notes.join("; "))
}

struct Kat(HashMap<String, Vec<u8>>);

impl Kat {
    fn load(text: &str) -> Self {
        Kat(text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let (k, v) = l.split_once('=').unwrap();
                (k.to_string(), decode_hex(v.trim()).unwrap())
            })
            .collect())
    }

    fn get(&self, k: &str) -> &[u8] {
        &self.0[k]
    }

    fn block(&self, k: &str) -> Block128 {
        Block128(self.get(k).try_into().unwrap())
    }
}

fn known_answers() -> Outcome {
    let sym = Kat::load(include_str!("../../core/kat/symmetric.kat"));
    let zero = PrfKey::from_bytes([0; 16]);
    let seq = PrfKey::from_bytes(core::array::from_fn(|i| i as u8));
    let mut checked = 0;
    let mut eq = |a: &[u8], b: &[u8], what: &str| -> Result<(), String> {
        checked += 1;
        if a == b {
            Ok(())
        } else {
            Err(format!("{what} differs"))
        }
    };
    for t in 0..3u8 {
        eq(
            &prf(&zero, 0, DomainTag(t)).0,
            &sym.block(&format!("PRF_ZERO_KEY_ZERO_INPUT_TAG{t:02}")).0,
            "prf",
        )?;
    }
    eq(
        &prf(&seq, 0x0123456789ABCDEF, DomainTag::CHUNK).0,
        sym.get("PRF_KEY_000102_INPUT_0123456789ABCDEF_TAG03"),
        "prf",
    )?;
    eq(&hash_message(b"").0, sym.get("SHA256_EMPTY"), "sha256")?;
    eq(
        &hash_message(b"test-vector-1").0,
        sym.get("SHA256_TEST_VECTOR_1"),
        "sha256",
    )?;
    eq(&dm_owf(&Block128::ZERO).0, sym.get("DM_ZERO"), "dm")?;
    let mut msb = [0u8; 16];
    msb[0] = 0x80;
    eq(&dm_owf(&Block128(msb)).0, sym.get("DM_ONE_MSB"), "dm")?;
    eq(
        &dm_owf(&Block128(*seq.as_bytes())).0,
        sym.get("DM_KEY_000102"),
        "dm",
    )?;

    let hk = Kat::load(include_str!("../../core/kat/hors.kat"));
    let hp = HorsParams::DEFAULT;
    let sk = HorsSecretKey::from_seed(&hp, &PrfKey::from_bytes(hk.get("SEED").try_into().unwrap()));
    let idx: Vec<u8> = message_indices(&hp, hk.get("MESSAGE"))
        .as_slice()
        .iter()
        .flat_map(|i| i.to_be_bytes())
        .collect();
    eq(&idx, hk.get("INDICES"), "hors indices")?;
    let images: Vec<u8> = sk.public_key().images().iter().flat_map(|b| b.0).collect();
    eq(
        &hash_message(&images).0,
        hk.get("PUBLIC_KEY_SHA256"),
        "hors public key",
    )?;
    let sig: Vec<u8> = hors_sign(&hp, &sk, hk.get("MESSAGE"))
        .unwrap()
        .iter()
        .flat_map(|b| b.0)
        .collect();
    eq(&sig, hk.get("SIGNATURE"), "hors signature")?;

    let ik = Kat::load(include_str!("../../core/kat/infhors.kat"));
    let params = SystemParams::default();
    let id = SignerId::new(ik.get("ID_RAW")).unwrap();
    eq(
        &id.canonical().to_be_bytes(),
        ik.get("ID_CANONICAL"),
        "canonical id",
    )?;
    for encoding in Encoding::ALL {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let backend = backend_keygen(
            BackendParams {
                security_level: 128,
                encoding,
            },
            &mut rng,
        )
        .unwrap();
        let msk = PrfKey::from_bytes(ik.get("MSK").try_into().unwrap());
        let out = keygen_from_master(std::slice::from_ref(&id), msk, backend, &mut rng).unwrap();
        let mut st = out.signers[0].clone();
        eq(st.gamma().as_bytes(), ik.get("GAMMA"), "gamma")?;
        let full = out.authority.reveal_key(RevealPolicy::full());
        for j in 0..2u64 {
            let msg = ik.get(&format!("J{j}_MESSAGE")).to_vec();
            let state_key = prf(st.gamma(), j, DomainTag::STATE);
            eq(
                &state_key.0,
                ik.get(&format!("J{j}_STATE_KEY")),
                "state key",
            )?;
            eq(
                &sign(&params, &mut st, &msg).unwrap().to_bytes(),
                ik.get(&format!("J{j}_SIGNATURE")),
                "signature",
            )?;
            let otk = construct_pk(&params, &out.public, id.canonical(), j, &mut rng).unwrap();
            let plain: Vec<u8> = otk
                .components()
                .flat_map(|(_, c)| full.reveal(c).unwrap().block().unwrap().0)
                .collect();
            eq(
                &hash_message(&plain).0,
                ik.get(&format!("J{j}_ONE_TIME_KEY_SHA256")),
                "one-time key",
            )?;
        }
    }
    Ok(format!(
        "{checked} vectors reproduced; infhors vectors under both encodings"
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "completeness over 10^4 random (id, j, message) triples, full and partial keys",
            completeness,
        ),
        (
            "constructed components equal the plaintext chain at every index",
            central_identity,
        ),
        ("signer secret, signature and public key sizes", sizes),
        (
            "signing and warm-cache verification operation counts",
            operation_counts,
        ),
        (
            "single-bit tampering and counter-reuse forgery",
            tamper_and_forgery,
        ),
        (
            "replay ledger and signer state across crash and restart",
            replay_state,
        ),
        (
            "backend evaluation, randomization and reveal policy",
            backend_contract,
        ),
        (
            "constructor daemon verdict equality and response corruption",
            constructor_service,
        ),
        ("known-answer vectors", known_answers),
    ];
    let mut failed = 0;
    for (n, (title, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(format!(
                "panicked: {:?}",
                p.downcast_ref::<String>()
                    .map(String::as_str)
                    .or(p.downcast_ref::<&str>().copied())
            ))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {title} [{detail}] ({secs:.1}s)", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {title} [{why}] ({secs:.1}s)", n + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
