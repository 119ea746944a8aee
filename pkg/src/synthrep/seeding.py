"""Deterministic seed derivation.

Every random draw in the package is keyed by explicit integers through
``numpy.random.SeedSequence`` so that results are independent of call order,
thread count, and platform. Domain salts keep unrelated streams decoupled
even when the underlying identifiers collide.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Domain salts (arbitrary fixed constants, never change them).
SALT_CLASS_CENTER = 0x1A2B_0001
SALT_CAPTION_OFFSET = 0x1A2B_0002
SALT_LATENT = 0x1A2B_0003
SALT_BATCH = 0x1A2B_0004
SALT_SUBSET = 0x1A2B_0005
SALT_AUGMENT = 0x1A2B_0006
SALT_EPOCH = 0x1A2B_0007
SALT_INIT = 0x1A2B_0008
SALT_EVAL = 0x1A2B_0009
SALT_GUIDANCE = 0x1A2B_000A


def seed_sequence(*entropy: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(list(entropy))


def rng_from(*entropy: int) -> np.random.Generator:
    """PCG64 generator keyed by an explicit entropy tuple."""
    return np.random.Generator(np.random.PCG64(seed_sequence(*entropy)))


def derive_u64(*entropy: int) -> int:
    """A single 64-bit value derived from the entropy tuple."""
    state = seed_sequence(*entropy).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def caption_fingerprint(text: str) -> tuple[int, int]:
    """Map caption text to (prompt_seed, class_selector), both 64-bit.

    Uses SHA-256 so identical text gives identical values across runs,
    platforms, and Python hash randomization.
    """
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    prompt_seed = int.from_bytes(digest[:8], "little")
    class_selector = int.from_bytes(digest[8:16], "little")
    return prompt_seed, class_selector
