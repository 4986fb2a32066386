//! Command-line front end.
//!
//! Exit codes: 0 success or accept, 1 cryptographic reject, 2 replay or
//! stale counter, 3 usage, protocol, storage or other errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use inf_hors_core::backend::{backend_keygen, BackendParams, Encoding, Metered, RevealPolicy};
use inf_hors_core::hors::message_indices;
use inf_hors_core::keystore::{LedgerVerdict, OtkStore, SignerId, DEFAULT_WINDOW};
use inf_hors_core::scheme::{
    construct_pk, construct_pk_partial, keygen_with_backend, verify_online_offline,
    InfHorsSignature, SystemParams,
};
use rand::rngs::OsRng;

use crate::bench::{self, Suite};
use crate::service::{Client, ConstructMode, ConstructRequest, Daemon};
use crate::store::{self, DirOtkStore, PersistentLedger, SignerHandle};

pub const EXIT_OK: u8 = 0;
pub const EXIT_REJECT: u8 = 1;
pub const EXIT_REPLAY: u8 = 2;
pub const EXIT_ERROR: u8 = 3;

const STORE_ENV: &str = "INF_HORS_STORE";

#[derive(Debug, Parser)]
#[command(
    name = "inf-hors",
    version,
    about = "Stateful hash-based broadcast signatures with publicly constructible one-time keys"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the public key, authority material and one state file per id.
    Keygen(KeygenArgs),
    /// Sign a message, advancing the signer counter on disk first.
    Sign(SignArgs),
    /// Precompute one-time keys for a counter range into a cache directory.
    Pkconstr(PkconstrArgs),
    /// Verify a signature and record its counter in the replay ledger.
    Verify(VerifyArgs),
    /// Run the one-time key constructor daemon.
    Serve(ServeArgs),
    /// Benchmarks.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EncodingArg {
    AesGcm,
    ChachaPoly,
}

impl From<EncodingArg> for Encoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::AesGcm => Encoding::AesGcm,
            EncodingArg::ChachaPoly => Encoding::ChaChaPoly,
        }
    }
}

#[derive(Debug, Args)]
struct KeygenArgs {
    /// File with one raw signer id per line.
    #[arg(long)]
    ids: PathBuf,
    /// Output directory [default: $INF_HORS_STORE].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "aes-gcm")]
    encoding: EncodingArg,
    /// Replace existing key material in the output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct SignArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    msg: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PkconstrArgs {
    #[arg(long)]
    pk: PathBuf,
    /// Raw signer id.
    #[arg(long)]
    id: String,
    #[arg(long)]
    from_j: u64,
    /// Exclusive upper bound.
    #[arg(long)]
    to_j: u64,
    /// Build only the components needed for this message.
    #[arg(long)]
    indices_of: Option<PathBuf>,
    /// Cache directory [default: $INF_HORS_STORE/otk-cache].
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Ask a constructor daemon instead of evaluating locally.
    #[arg(long)]
    remote: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    pk: PathBuf,
    #[arg(long)]
    sig: PathBuf,
    #[arg(long)]
    msg: PathBuf,
    /// Raw id of the claimed signer.
    #[arg(long)]
    id: String,
    /// Cache directory [default: $INF_HORS_STORE/otk-cache].
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Ledger directory [default: $INF_HORS_STORE].
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Reveal capability [default: reveal.key next to the public key].
    #[arg(long)]
    reveal: Option<PathBuf>,
    /// Replay window used when the ledger is created.
    #[arg(long, default_value_t = DEFAULT_WINDOW, value_parser = clap::value_parser!(u8).range(0..=63))]
    window: u8,
    /// Print evaluator counters to stderr.
    #[arg(long)]
    stats: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    pk: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Run a benchmark suite and write a JSON report.
    Run {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 100)]
        iters: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "aes-gcm")]
        encoding: EncodingArg,
    },
}

type Failure = (u8, String);

fn fail(e: impl std::fmt::Display) -> Failure {
    (EXIT_ERROR, e.to_string())
}

fn store_dir(explicit: Option<PathBuf>, sub: Option<&str>) -> Result<PathBuf, Failure> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    let base = std::env::var_os(STORE_ENV)
        .map(PathBuf::from)
        .ok_or_else(|| fail(format!("no directory given and {STORE_ENV} is not set")))?;
    Ok(match sub {
        Some(s) => base.join(s),
        None => base,
    })
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| fail(format!("{}: {e}", path.display())))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Sign(a) => sign(a),
        Command::Pkconstr(a) => pkconstr(a),
        Command::Verify(a) => verify(a),
        Command::Serve(a) => serve(a),
        Command::Bench { command } => bench_cmd(command),
    };
    match result {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn keygen(a: KeygenArgs) -> Result<u8, Failure> {
    let out = store_dir(a.out, None)?;
    let text = String::from_utf8(read(&a.ids)?).map_err(|_| fail("ids file is not UTF-8"))?;
    let ids = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.is_empty())
        .map(|l| SignerId::new(l.as_bytes()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?;
    let pk_path = out.join(store::PK_FILE);
    let auth_path = out.join(store::AUTHORITY_FILE);
    if !a.force && (pk_path.exists() || auth_path.exists()) {
        return Err(fail(format!(
            "{} already holds key material; use --force",
            out.display()
        )));
    }
    let mut rng = OsRng;
    let backend = backend_keygen(
        BackendParams {
            security_level: 128,
            encoding: a.encoding.into(),
        },
        &mut rng,
    )
    .map_err(fail)?;
    let kg = keygen_with_backend(&ids, backend, &mut rng).map_err(fail)?;

    fs::create_dir_all(&out).map_err(|e| fail(format!("{}: {e}", out.display())))?;
    for state in &kg.signers {
        let path = out.join(store::signer_file_name(state.id().canonical()));
        store::save_signer_state(&path, state).map_err(fail)?;
    }
    store::save_authority(&auth_path, &kg.authority).map_err(fail)?;
    store::save_reveal_key(
        &out.join(store::REVEAL_FILE),
        &kg.authority.reveal_key(RevealPolicy::verifier()),
    )
    .map_err(fail)?;
    store::save_public_key(&pk_path, &kg.public).map_err(fail)?;
    println!(
        "generated keys for {} signers in {}",
        kg.signers.len(),
        out.display()
    );
    Ok(EXIT_OK)
}

fn sign(a: SignArgs) -> Result<u8, Failure> {
    let params = SystemParams::default();
    let msg = read(&a.msg)?;
    let mut handle = SignerHandle::open(&a.state).map_err(fail)?;
    let sig = handle.sign(&params, &msg).map_err(fail)?;
    store::write_atomic(&a.out, &sig.to_bytes(), false).map_err(fail)?;
    println!("signed with counter {}", sig.counter());
    Ok(EXIT_OK)
}

fn pkconstr(a: PkconstrArgs) -> Result<u8, Failure> {
    if a.from_j >= a.to_j {
        return Err(fail("empty counter range"));
    }
    let params = SystemParams::default();
    let id = SignerId::new(a.id.as_bytes()).map_err(fail)?;
    let signer = id.canonical();
    let indices = match &a.indices_of {
        Some(p) => Some(message_indices(&params.hors, &read(p)?)),
        None => None,
    };
    let mut cache =
        DirOtkStore::open(&store_dir(a.cache, Some(store::CACHE_DIR))?, 1).map_err(fail)?;
    let mut client = match &a.remote {
        Some(addr) => {
            Some(Client::connect(addr.as_str()).map_err(|e| fail(format!("{addr}: {e}")))?)
        }
        None => None,
    };
    let pk = if client.is_none() {
        Some(store::load_public_key(&a.pk).map_err(fail)?)
    } else {
        None
    };
    let mut rng = OsRng;
    for j in a.from_j..a.to_j {
        let otk = match (&mut client, &pk) {
            (Some(c), _) => {
                let mode = match &indices {
                    Some(iv) => ConstructMode::Partial(iv.as_slice().to_vec()),
                    None => ConstructMode::Full,
                };
                c.construct(&ConstructRequest {
                    signer,
                    counter: j,
                    mode,
                })
                .map_err(fail)?
            }
            (None, Some(pk)) => match &indices {
                Some(iv) => construct_pk_partial(pk, signer, j, iv, &mut rng),
                None => construct_pk(&params, pk, signer, j, &mut rng),
            }
            .map_err(fail)?,
            (None, None) => unreachable!("public key loaded for local construction"),
        };
        cache.insert(&otk).map_err(fail)?;
    }
    println!(
        "constructed {} {} one-time keys in {}",
        a.to_j - a.from_j,
        if indices.is_some() { "partial" } else { "full" },
        cache.dir().display()
    );
    Ok(EXIT_OK)
}

fn verify(a: VerifyArgs) -> Result<u8, Failure> {
    let params = SystemParams::default();
    let pk = store::load_public_key(&a.pk)
        .map_err(fail)?
        .map_backend(Metered::new);
    let reveal_path = match a.reveal {
        Some(p) => p,
        None => {
            a.pk.parent()
                .unwrap_or(Path::new("."))
                .join(store::REVEAL_FILE)
        }
    };
    let reveal = store::load_reveal_key(&reveal_path).map_err(fail)?;
    let msg = read(&a.msg)?;
    let signer = SignerId::new(a.id.as_bytes()).map_err(fail)?.canonical();
    let sig = match InfHorsSignature::from_bytes(&params.hors, &read(&a.sig)?) {
        Ok(s) => s,
        Err(e) => {
            println!("reject");
            eprintln!("malformed signature: {e}");
            return Ok(EXIT_REJECT);
        }
    };
    let mut ledger = PersistentLedger::open(&store_dir(a.ledger, None)?, a.window).map_err(fail)?;
    let reservation = match ledger.reserve(signer, sig.counter()) {
        Ok(r) => r,
        Err(v) => {
            println!(
                "{}",
                if v == LedgerVerdict::Stale {
                    "stale"
                } else {
                    "replay"
                }
            );
            return Ok(EXIT_REPLAY);
        }
    };
    let mut cache =
        DirOtkStore::open(&store_dir(a.cache, Some(store::CACHE_DIR))?, 1).map_err(fail)?;
    let verdict = verify_online_offline(
        &params,
        &pk,
        &mut cache as &mut dyn OtkStore,
        signer,
        &msg,
        &sig,
        &reveal,
        &mut OsRng,
    );
    for e in cache.take_errors() {
        eprintln!("warning: cache: {e}");
    }
    if a.stats {
        let c = pk.backend().counts();
        eprintln!(
            "constructions={} comparisons={} encryptions={}",
            c.constructions(),
            c.eval_cmp,
            c.encrypt
        );
    }
    match verdict {
        Ok(true) => {
            ledger.commit(reservation).map_err(fail)?;
            println!("accept");
            Ok(EXIT_OK)
        }
        Ok(false) => {
            ledger.release(reservation);
            println!("reject");
            Ok(EXIT_REJECT)
        }
        Err(e) => {
            ledger.release(reservation);
            Err(fail(e))
        }
    }
}

fn serve(a: ServeArgs) -> Result<u8, Failure> {
    let pk = store::load_public_key(&a.pk).map_err(fail)?;
    let daemon = Daemon::bind(a.listen.as_str(), SystemParams::default(), pk)
        .map_err(|e| fail(format!("{}: {e}", a.listen)))?;
    let addr = daemon.local_addr().map_err(fail)?;
    println!("listening on {addr}");
    let _ = std::io::stdout().flush();
    daemon.run(Default::default());
    Ok(EXIT_OK)
}

fn bench_cmd(c: BenchCommand) -> Result<u8, Failure> {
    let BenchCommand::Run {
        suite,
        iters,
        out,
        encoding,
    } = c;
    let report = bench::run(suite, iters, encoding.into()).map_err(fail)?;
    let json = serde_json::to_vec_pretty(&report).map_err(fail)?;
    store::write_atomic(&out, &json, false).map_err(fail)?;
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}
