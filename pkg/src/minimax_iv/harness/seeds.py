"""Stable seed derivation for replications."""

from __future__ import annotations

import hashlib
import json

SEED_BITS = 63


def derive_seed(master: int, *parts) -> int:
    """Seed from a hash of ``(master, *parts)``.

    The value depends only on the arguments, never on the order in which
    replications are scheduled, and is stable across processes and platforms.
    """
    payload = json.dumps([int(master), *parts], separators=(",", ":"), default=str)
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> (64 - SEED_BITS)


def replication_seed(master: int, estimator: str, n: int, rep: int) -> int:
    return derive_seed(master, estimator, int(n), int(rep))


def family_seed(master: int, tag: str = "families") -> int:
    """Seed for distractor families; shared by every n and replication."""
    return derive_seed(master, tag)
