"""Seeded deterministic random sources.

Every randomized operation in this package takes an explicit integer seed and
derives its generator state from (seed, label...) through SHA-256, so results
are reproducible across platforms and insensitive to PYTHONHASHSEED.  Random
rationals are dyadics with 64 fractional bits.
"""

from __future__ import annotations

import hashlib
import random
from fractions import Fraction

DYADIC_BITS = 64


def derive_rng(seed: int, *labels) -> random.Random:
    """Return a Random whose state depends only on (seed, labels)."""
    material = ":".join([str(int(seed))] + [str(x) for x in labels])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest, "big"))


def dyadic(rng: random.Random) -> Fraction:
    """A uniform dyadic rational in [0, 1) with 64 fractional bits."""
    return Fraction(rng.getrandbits(DYADIC_BITS), 1 << DYADIC_BITS)
