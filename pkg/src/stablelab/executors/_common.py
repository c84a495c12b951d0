"""Seed splitting and content hashing shared by executors, sessions, and manifests."""

import hashlib
from pathlib import Path

import numpy as np

SEED_BITS = 64


def derive_seed(seed: int, *labels: object) -> int:
    """
    Split a 64-bit base seed into an independent stream seed.

    The stream seed is the first 8 bytes (big-endian) of SHA-256 over the base
    seed and the labels, each rendered with `repr` and NUL-separated. The
    construction uses nothing Python-specific, so other implementations can
    reproduce the same streams from the same (seed, labels).
    """
    digest = hashlib.sha256()
    digest.update(str(int(seed)).encode())
    for label in labels:
        digest.update(b"\0")
        digest.update(repr(label).encode())
    return int.from_bytes(digest.digest()[:8], "big")


def stream(seed: int, *labels: object) -> np.random.Generator:
    """A numpy Generator on the stream `derive_seed(seed, *labels)`."""
    return np.random.default_rng(derive_seed(seed, *labels))


def file_sha256(path: Path) -> str:
    """Hex SHA-256 of a file's bytes."""
    with open(path, "rb") as f:
        return hashlib.file_digest(f, "sha256").hexdigest()


def content_id(*parts: bytes | str) -> str:
    """Short git-style content id over the given parts."""
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part.encode() if isinstance(part, str) else part)
        digest.update(b"\0")
    return digest.hexdigest()[:12]
