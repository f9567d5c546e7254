"""Deterministic seed derivation so every component owns an independent stream."""

from __future__ import annotations

import hashlib


def derive_seed(master_seed: int, *keys: str | int) -> int:
    """Stable 64-bit child seed from a master seed and a key path."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for key in keys:
        h.update(b"/")
        h.update(str(key).encode())
    return int.from_bytes(h.digest()[:8], "little")
