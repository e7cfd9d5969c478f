"""Deterministic fan-out of one global seed into labeled sub-seeds.

One 64-bit seed drives a whole run; each consumer (sketch, samplers, chd)
gets its own stream keyed by a label, so components stay independently
reproducible no matter which subset of them a command touches.
"""
from __future__ import annotations

import hashlib


def derive_seed(seed: int, label: str) -> int:
    """Map (seed, label) to a stable 64-bit sub-seed."""
    digest = hashlib.sha256(f"{int(seed)}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
