"""Deterministic random streams.

Streams are keyed by ``(master seed, tag, index, ...)`` so that a given draw
never depends on how work is split across workers.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def tag_id(tag):
    """Stable 32-bit id of a string tag (``hash()`` is salted per process)."""
    return zlib.crc32(str(tag).encode("utf-8"))


def stream(seed, *key):
    """Return a fresh ``numpy.random.Generator`` for ``seed`` and ``key``.

    String components of ``key`` are mapped through :func:`tag_id`; integer
    components are used as is.
    """
    if seed is None:
        raise ValueError("a seed is required; no entropy is drawn implicitly")
    spawn_key = tuple(tag_id(k) if isinstance(k, str) else int(k) for k in key)
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(seed, *key):
    """Derive a 64-bit integer seed from ``seed`` and ``key``."""
    return int(stream(seed, *key).integers(0, 2**63 - 1))
