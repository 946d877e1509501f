"""Counter-based random streams, one per shot.

Shot ``s`` of an experiment with seed ``seed`` and tag ``tag`` reads a fixed
block of ``SHOT_WIDTH`` uniforms from a Philox generator keyed by
``(seed, tag)``, starting at counter offset ``s * SHOT_WIDTH / 4``. Draw
``k`` of a shot is always slot ``k`` of its block, so any shot can be
reproduced in isolation and shots can be split across workers freely.
"""

from __future__ import annotations

import numpy as np

SHOT_WIDTH = 64
_BLOCK_WORDS = 4  # Philox4x64 emits four 64-bit words per counter step
MAX_SEED = (1 << 64) - 1


def _key(seed: int, tag: int) -> int:
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    if not 0 <= tag <= MAX_SEED:
        raise ValueError(f"stream tag must be in [0, 2**64), got {tag}")
    return seed | (tag << 64)


def shot_stream(seed: int, shot: int, tag: int = 0) -> np.random.Generator:
    """Generator positioned at the first draw of one shot's block."""
    bitgen = np.random.Philox(key=_key(seed, tag))
    bitgen.advance(shot * (SHOT_WIDTH // _BLOCK_WORDS))
    return np.random.Generator(bitgen)


def shot_uniforms(seed: int, shots: int, tag: int = 0, start: int = 0) -> np.ndarray:
    """Uniforms for shots ``start .. start+shots-1``, shape ``(shots, SHOT_WIDTH)``."""
    gen = shot_stream(seed, start, tag)
    return gen.random((shots, SHOT_WIDTH))
