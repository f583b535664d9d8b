"""Counter-based Gaussian noise streams.

Variate number ``k`` of the stream keyed by ``(seed, replica_id)`` is a pure
function of ``(seed, replica_id, k)``:

* the 64-bit word ``k`` of the Philox4x64-10 generator with key
  ``(seed, replica_id)`` is taken (word ``k`` lives in counter block ``k // 4``),
* its top 53 bits give the uniform ``(j + 1/2) / 2**53`` in (0, 1),
* the uniform is mapped through the inverse normal CDF (``scipy.special.ndtri``).

The counter is therefore the whole checkpoint of a stream.  Streams buffer a
block of variates ahead of the counter; the buffer is an optimisation only and
never changes which value variate ``k`` takes.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

MASK64 = (1 << 64) - 1
DEFAULT_BLOCK = 1 << 16


def _key(seed: int, replica_id: int) -> np.ndarray:
    return np.array([seed & MASK64, replica_id & MASK64], dtype=np.uint64)


def normals_at(seed: int, replica_id: int, counter: int, n: int) -> np.ndarray:
    """Variates ``counter .. counter + n - 1`` of the stream, computed from scratch."""
    if n <= 0:
        return np.empty(0)
    block, skip = divmod(counter, 4)
    bitgen = np.random.Philox(key=_key(seed, replica_id), counter=block)
    words = bitgen.random_raw(n + skip)[skip:]
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


@dataclass
class NoiseStream:
    seed: int
    replica_id: int = 0
    counter: int = 0
    block: int = DEFAULT_BLOCK
    _buf: np.ndarray = field(default=None, repr=False, compare=False)
    _buf_start: int = field(default=0, repr=False, compare=False)

    def _ensure(self, n: int):
        """Make sure the buffer covers ``[counter, counter + n)``."""
        buf = self._buf
        if buf is not None and self._buf_start <= self.counter and self.counter + n <= self._buf_start + len(buf):
            return
        size = max(self.block, n)
        self._buf = normals_at(self.seed, self.replica_id, self.counter, size)
        self._buf_start = self.counter

    def buffer(self, min_size: int):
        """Buffer and read position such that ``buf[pos:pos + min_size]`` are the next variates."""
        self._ensure(min_size)
        return self._buf, self.counter - self._buf_start

    def advance(self, n: int):
        self.counter += int(n)

    def take(self, n: int) -> np.ndarray:
        self._ensure(n)
        pos = self.counter - self._buf_start
        out = self._buf[pos:pos + n].copy()
        self.counter += n
        return out

    def copy(self) -> "NoiseStream":
        return NoiseStream(self.seed, self.replica_id, self.counter, self.block)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "replica_id": self.replica_id, "counter": self.counter}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseStream":
        return cls(int(d["seed"]), int(d["replica_id"]), int(d["counter"]))


def make_stream(seed: int, replica_id: int = 0) -> NoiseStream:
    return NoiseStream(int(seed), int(replica_id), 0)


def sample_increments(stream: NoiseStream, n_cells: int, dt: float, dx: float) -> np.ndarray:
    """Draw ``n_cells`` standard normals and advance the counter by ``n_cells``.

    The caller scales them: the white-noise mass of cell i over one step is
    ``xi_i * sqrt(dt * dx)``.
    """
    if dt <= 0 or dx <= 0:
        raise ValueError("dt and dx must be positive")
    return stream.take(int(n_cells))
