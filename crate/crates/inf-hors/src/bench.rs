//! Benchmark harness. Times are machine-dependent; counters and sizes are
//! exact and come from instrumentation and real serialization.

use std::sync::Arc;
use std::time::Instant;

use inf_hors_core::backend::{backend_keygen, BackendParams, Encoding, Metered, RevealPolicy};
use inf_hors_core::hors::message_indices;
use inf_hors_core::keystore::{OtkCache, OtkStore, SignerId};
use inf_hors_core::scheme::{
    construct_pk, construct_pk_partial, keygen_with_backend, sign_metered, verify,
    verify_online_offline, SignerOps, SystemParams,
};
use rand::rngs::OsRng;
use serde::{Deserialize, Serialize};

use crate::store::encode_signer_state;

pub const SCHEMA: &str = "inf-hors-bench/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Signer,
    Verifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub suite: Suite,
    pub params: ParamsReport,
    pub warmup_iterations: u64,
    pub operations: Vec<OperationReport>,
    pub sizes: SizeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsReport {
    pub k: u64,
    pub t: u64,
    pub encoding: String,
}

/// Per-operation counters are per call. Fields that do not apply are null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationReport {
    pub name: String,
    pub iterations: u64,
    pub mean_ns: u64,
    pub median_ns: u64,
    pub prf_calls: Option<u64>,
    pub hash_calls: Option<u64>,
    pub encryptions: Option<u64>,
    pub eval_prf: Option<u64>,
    pub eval_owf_prf: Option<u64>,
    pub comparisons: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub private_key_bytes: Option<u64>,
    pub signer_state_file_bytes: Option<u64>,
    pub signature_bytes: u64,
    pub public_key_bytes: u64,
    pub full_otk_bytes: Option<u64>,
    pub partial_otk_bytes: Option<u64>,
}

struct Timing {
    mean_ns: u64,
    median_ns: u64,
}

fn time<F: FnMut(u64)>(warmup: u64, iters: u64, mut f: F) -> Timing {
    for i in 0..warmup {
        f(i);
    }
    let mut samples: Vec<u64> = (0..iters)
        .map(|i| {
            let start = Instant::now();
            f(warmup + i);
            start.elapsed().as_nanos() as u64
        })
        .collect();
    samples.sort_unstable();
    let mean_ns = samples.iter().sum::<u64>() / iters.max(1);
    let median_ns = samples.get(samples.len() / 2).copied().unwrap_or(0);
    Timing { mean_ns, median_ns }
}

fn op(name: &str, iters: u64, t: Timing) -> OperationReport {
    OperationReport {
        name: name.to_string(),
        iterations: iters,
        mean_ns: t.mean_ns,
        median_ns: t.median_ns,
        prf_calls: None,
        hash_calls: None,
        encryptions: None,
        eval_prf: None,
        eval_owf_prf: None,
        comparisons: None,
    }
}

fn encoding_name(e: Encoding) -> &'static str {
    match e {
        Encoding::AesGcm => "aes-gcm",
        Encoding::ChaChaPoly => "chacha-poly",
    }
}

/// Runs `suite` with `iters` measured iterations after `iters / 10` (at
/// least one) discarded warm-up iterations.
pub fn run(
    suite: Suite,
    iters: u64,
    encoding: Encoding,
) -> Result<BenchReport, inf_hors_core::Error> {
    let iters = iters.max(1);
    let warmup = (iters / 10).max(1);
    let params = SystemParams::default();
    let mut rng = OsRng;
    let id = SignerId::new(b"bench-signer").expect("short id");
    let backend = backend_keygen(
        BackendParams {
            security_level: 128,
            encoding,
        },
        &mut rng,
    )?;
    let out = keygen_with_backend(std::slice::from_ref(&id), backend, &mut rng)?;
    let mut state = out.signers[0].clone();
    let sample_sig = sign_metered(
        &params,
        &mut state.clone(),
        b"size probe",
        &mut SignerOps::default(),
    )?;

    let mut sizes = SizeReport {
        signature_bytes: sample_sig.to_bytes().len() as u64,
        public_key_bytes: out.public.to_bytes().len() as u64,
        ..SizeReport::default()
    };
    let mut operations = Vec::new();

    match suite {
        Suite::Signer => {
            sizes.private_key_bytes = Some(state.secret_material().len() as u64);
            sizes.signer_state_file_bytes = Some(encode_signer_state(&state).len() as u64);
            let msgs: Vec<Vec<u8>> = (0..warmup + iters)
                .map(|i| format!("bench message {i}").into_bytes())
                .collect();
            let mut ops = SignerOps::default();
            let mut measured = SignerOps::default();
            let t = time(warmup, iters, |i| {
                let target = if i < warmup { &mut ops } else { &mut measured };
                sign_metered(&params, &mut state, &msgs[i as usize], target)
                    .expect("counter available");
            });
            let mut r = op("sign", iters, t);
            r.prf_calls = Some(measured.prf_calls / iters);
            r.hash_calls = Some(measured.hash_calls / iters);
            operations.push(r);
        }
        Suite::Verifier => {
            let pk = out.public.clone().map_backend(Metered::new);
            let reveal = out.authority.reveal_key(RevealPolicy::verifier());
            let signer = id.canonical();
            let msg = b"verifier bench message";
            let sig = sign_metered(&params, &mut state, msg, &mut SignerOps::default())?;
            let idx = message_indices(&params.hors, msg);

            let full = construct_pk(&params, &pk, signer, sig.counter(), &mut rng)?;
            let partial = construct_pk_partial(&pk, signer, sig.counter(), &idx, &mut rng)?;
            sizes.full_otk_bytes = Some(full.to_bytes().len() as u64);
            sizes.partial_otk_bytes = Some(partial.to_bytes().len() as u64);

            let mut measure = |name: &str, f: &mut dyn FnMut()| {
                let t = time(warmup, iters, |i| {
                    if i == warmup {
                        pk.backend().reset();
                    }
                    f();
                });
                let c = pk.backend().counts();
                let mut r = op(name, iters, t);
                r.encryptions = Some(c.encrypt / iters);
                r.eval_prf = Some(c.eval_prf / iters);
                r.eval_owf_prf = Some(c.eval_owf_prf / iters);
                r.comparisons = Some(c.eval_cmp / iters);
                operations.push(r);
            };

            measure("construct_pk_full", &mut || {
                construct_pk(&params, &pk, signer, sig.counter(), &mut OsRng).expect("construct");
            });
            measure("construct_pk_partial", &mut || {
                construct_pk_partial(&pk, signer, sig.counter(), &idx, &mut OsRng)
                    .expect("construct");
            });
            measure("verify_partial_key", &mut || {
                assert!(
                    verify(&params, &pk, &partial, msg, &sig, &reveal, &mut OsRng).expect("verify")
                );
            });
            let mut cache = OtkCache::new(4);
            cache.store(Arc::new(full.clone()));
            measure("verify_online_cached", &mut || {
                let ok = verify_online_offline(
                    &params, &pk, &mut cache, signer, msg, &sig, &reveal, &mut OsRng,
                )
                .expect("verify");
                assert!(ok);
            });
        }
    }

    Ok(BenchReport {
        schema: SCHEMA.to_string(),
        suite,
        params: ParamsReport {
            k: params.hors.k() as u64,
            t: params.hors.t() as u64,
            encoding: encoding_name(encoding).to_string(),
        },
        warmup_iterations: warmup,
        operations,
        sizes,
    })
}
