"""Seed derivation.

Every random component takes its seed from one root seed via a labelled
hash, so a single integer in a config reproduces the whole run.
"""

import hashlib


def derive_seed(root_seed: int, label: str) -> int:
    """Derive a stable 64-bit subseed from (root_seed, label)."""
    digest = hashlib.sha256(f"{root_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
