#!/usr/bin/env python3
"""Independent known-answer generator.

Recomputes every pinned vector with OpenSSL (via `cryptography`) and
hashlib, sharing no code with the Rust implementation. Run from the
repository root:

    python3 tools/kat_oracle.py crates/core/kat
"""
import hashlib
import sys
from pathlib import Path

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

TAG_SEED = 0x01
TAG_STATE = 0x02
TAG_CHUNK = 0x03
K, T, CHUNK_BITS = 16, 1024, 10


def aes(key: bytes, block: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def prf(key: bytes, x: int, tag: int) -> bytes:
    return aes(key, bytes([tag]) + bytes(7) + x.to_bytes(8, "big"))


def dm(block: bytes) -> bytes:
    e = aes(block, bytes(16))
    return bytes(a ^ b for a, b in zip(e, block))


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def indices(digest: bytes) -> list:
    # Whole-digest integer arithmetic; deliberately unlike a byte walker.
    n = int.from_bytes(digest, "big") >> (256 - K * CHUNK_BITS)
    out = []
    for j in range(K):
        shift = (K - 1 - j) * CHUNK_BITS
        out.append((n >> shift) & (T - 1))
    return out


def canonical(raw: bytes) -> int:
    return int.from_bytes(sha256(raw)[:8], "big")


def write(path: Path, records):
    lines = [f"{name}={value}" for name, value in records]
    path.write_text("\n".join(lines) + "\n")


def symmetric(out: Path):
    zero = bytes(16)
    key2 = bytes(range(16))
    one_msb = bytes([0x80]) + bytes(15)
    write(out / "symmetric.kat", [
        ("PRF_ZERO_KEY_ZERO_INPUT_TAG00", prf(zero, 0, 0x00).hex()),
        ("PRF_ZERO_KEY_ZERO_INPUT_TAG01", prf(zero, 0, 0x01).hex()),
        ("PRF_ZERO_KEY_ZERO_INPUT_TAG02", prf(zero, 0, 0x02).hex()),
        ("PRF_KEY_000102_INPUT_0123456789ABCDEF_TAG03",
         prf(key2, 0x0123456789ABCDEF, 0x03).hex()),
        ("SHA256_EMPTY", sha256(b"").hex()),
        ("SHA256_TEST_VECTOR_1", sha256(b"test-vector-1").hex()),
        ("DM_ZERO", dm(zero).hex()),
        ("DM_ONE_MSB", dm(one_msb).hex()),
        ("DM_KEY_000102", dm(key2).hex()),
    ])


def hors(out: Path):
    seed = bytes(range(16))
    msg = b"test-vector-1"
    secrets = [prf(seed, i, TAG_CHUNK) for i in range(T)]
    images = [dm(s) for s in secrets]
    idx = indices(sha256(msg))
    sig = b"".join(secrets[i] for i in idx)
    write(out / "hors.kat", [
        ("SEED", seed.hex()),
        ("MESSAGE", msg.hex()),
        ("INDICES", b"".join(i.to_bytes(2, "big") for i in idx).hex()),
        ("PUBLIC_KEY_SHA256", sha256(b"".join(images)).hex()),
        ("SIGNATURE", sig.hex()),
    ])


def infhors(out: Path):
    msk = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")
    raw_id = b"device-0001"
    cid = canonical(raw_id)
    gamma = prf(msk, cid, TAG_SEED)
    records = [
        ("MSK", msk.hex()),
        ("ID_RAW", raw_id.hex()),
        ("ID_CANONICAL", cid.to_bytes(8, "big").hex()),
        ("GAMMA", gamma.hex()),
    ]
    for j, msg in [(0, b"hello broadcast"), (1, b"")]:
        sk = prf(gamma, j, TAG_STATE)
        idx = indices(sha256(msg))
        sig = b"".join(prf(sk, x, TAG_CHUNK) for x in idx) + j.to_bytes(8, "big")
        pool = b"".join(dm(prf(sk, l, TAG_CHUNK)) for l in range(T))
        records += [
            (f"J{j}_MESSAGE", msg.hex()),
            (f"J{j}_STATE_KEY", sk.hex()),
            (f"J{j}_SIGNATURE", sig.hex()),
            (f"J{j}_ONE_TIME_KEY_SHA256", sha256(pool).hex()),
        ]
    write(out / "infhors.kat", records)


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/kat")
    out.mkdir(parents=True, exist_ok=True)
    symmetric(out)
    hors(out)
    infhors(out)
