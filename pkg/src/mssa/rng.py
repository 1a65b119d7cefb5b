"""Counter-based random streams keyed by ``(seed, stream_id)``.

Each trajectory owns a Philox generator whose 128-bit key is the pair, so the
numbers a trajectory sees do not depend on how work is scheduled.
"""

from dataclasses import dataclass

import numpy as np

_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return make_generator(self.seed, self.stream_id)

    def child(self, offset: int) -> "RngStream":
        return RngStream(self.seed, (self.stream_id + offset) & _MASK)


def make_generator(seed: int, stream_id: int = 0) -> np.random.Generator:
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be nonnegative")
    return np.random.Generator(np.random.Philox(key=[seed & _MASK, stream_id & _MASK]))
