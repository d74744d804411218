"""Deterministic seed derivation from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(label) -> int:
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def derive_seed(root: int, *labels) -> int:
    """A 64-bit seed for the job named by ``labels`` under ``root``.

    Labels (stage, country, model, fold, ...) are hashed into a
    ``SeedSequence`` spawn key, so the result does not depend on the order
    in which jobs are scheduled.
    """
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(_key(x) for x in labels))
    return int(ss.generate_state(1, np.uint64)[0])
