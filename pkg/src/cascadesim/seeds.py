"""Keyed deterministic random streams.

Every stochastic choice in the artifact is a pure function of
(run seed, entity key, channel), so results never depend on evaluation
order, wall clock, or platform RNG internals. Streams are derived from
BLAKE2b digests of the packed key.
"""

from __future__ import annotations

import hashlib
import math
import struct

_TWO64 = 2.0 ** 64


def _digest(parts: tuple) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        if isinstance(part, bool):  # bool is an int subclass, keep it distinct
            h.update(b"b" + (b"\x01" if part else b"\x00"))
        elif isinstance(part, int):
            h.update(b"i" + struct.pack(">q", part))
        elif isinstance(part, str):
            h.update(b"s" + part.encode("utf-8"))
        else:
            raise TypeError("stream keys must be ints or strings, got %r" % (part,))
        h.update(b"\x1f")
    return h.digest()


def stream_uniform(*key: int | str) -> float:
    """Uniform draw in [0, 1), a pure function of the key."""
    return int.from_bytes(_digest(key)[:8], "big") / _TWO64


def stream_normal(*key: int | str, sigma: float = 1.0) -> float:
    """Gaussian draw (Box-Muller), a pure function of the key."""
    if sigma == 0.0:
        return 0.0
    d = _digest(key)
    # shift u1 away from 0 so log() is always defined
    u1 = (int.from_bytes(d[:8], "big") + 1.0) / (_TWO64 + 2.0)
    u2 = int.from_bytes(d[8:16], "big") / _TWO64
    return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def stable_text_key(text: str) -> int:
    """Stable non-negative 63-bit key for a prompt text.

    Used instead of list positions so that permuting a prompt population
    never changes any per-prompt draw.
    """
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big") >> 1
