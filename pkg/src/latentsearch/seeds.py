"""Deterministic seed derivation.

Every random stream in the toolkit is keyed by a 64-bit seed derived from
a tuple of labels (master seed, strategy name, run index, purpose, ...).
Derivation hashes a canonical text encoding with SHA-256, so the mapping
is stable across platforms, Python versions, and process restarts, and
adding new strategies to a configuration never perturbs the seeds of
existing runs.
"""

from __future__ import annotations

import hashlib


def derive_seed(*parts: int | str) -> int:
    """Derive a stable unsigned 64-bit seed from strings and integers."""
    digest = hashlib.sha256()
    for part in parts:
        digest.update(f"{type(part).__name__}:{part}".encode("utf-8"))
        digest.update(b"\x00")
    return int.from_bytes(digest.digest()[:8], "little")
