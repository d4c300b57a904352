"""Reproducible random streams and decreasing Poisson point enumeration.

Every stream is a Philox generator whose 128-bit key is built from
``(seed, domain, replicate_id)``.  Philox is counter based, so distinct keys
give independent streams and a replicate's draws never depend on which
thread, or in which order, it is simulated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_MASK64 = (1 << 64) - 1

# Key domains keep the per-replicate simulator streams apart from the block
# streams used by the vectorized estimators.
DOMAIN_REPLICATE = 0
DOMAIN_BLOCK = 1


class DegenerateMarkMeasure(ValueError):
    pass


class RngStream:
    """Counter-based random stream keyed by ``(seed, replicate_id)``."""

    def __init__(self, seed: int, replicate_id: int = 0, domain: int = DOMAIN_REPLICATE):
        if replicate_id < 0:
            raise ValueError("replicate_id must be nonnegative")
        if not 0 <= domain < 256:
            raise ValueError("domain must fit in one byte")
        if replicate_id >= 1 << 56:
            raise ValueError("replicate_id must be below 2**56")
        self.seed = int(seed) & _MASK64
        self.replicate_id = int(replicate_id)
        self.domain = int(domain)
        key = np.array([self.seed, (self.domain << 56) | self.replicate_id], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self.generator = np.random.Generator(self._bitgen)

    @property
    def counter(self) -> int:
        """Current position of the Philox counter (in 256-bit blocks)."""
        words = self._bitgen.state["state"]["counter"]
        return int(sum(int(w) << (64 * i) for i, w in enumerate(words)))

    def standard_normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def standard_exponential(self, size) -> np.ndarray:
        return self.generator.standard_exponential(size)

    def uniform(self, size) -> np.ndarray:
        return self.generator.random(size)

    def integers(self, high: int, size) -> np.ndarray:
        return self.generator.integers(0, high, size=size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, replicate_id={self.replicate_id}, domain={self.domain})"


def new_stream(seed: int, replicate_id: int = 0) -> RngStream:
    return RngStream(seed, replicate_id)


def block_stream(seed: int, block_id: int) -> RngStream:
    """Stream for one fixed-size block of replicates in a vectorized estimator."""
    return RngStream(seed, block_id, domain=DOMAIN_BLOCK)


def child_seed(seed: int, *tags: int) -> int:
    """Derive a sub-seed so independent sub-experiments never share keys."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(t) for t in tags))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class MarkLaw:
    """A finite mark measure on grid indices: ``mass`` = total weight."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or not np.all(np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
            raise DegenerateMarkMeasure("degenerate mark measure")
        self.weights = w
        self._cdf = np.cumsum(w / w.sum())
        self._cdf[-1] = 1.0

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def counting(cls, n: int) -> "MarkLaw":
        if n <= 0:
            raise DegenerateMarkMeasure("degenerate mark measure")
        return cls(np.ones(n))

    @classmethod
    def dirac(cls, n: int, index: int) -> "MarkLaw":
        w = np.zeros(n)
        w[index] = 1.0
        return cls(w)

    def draw(self, uniforms: np.ndarray) -> np.ndarray:
        return np.searchsorted(self._cdf, uniforms, side="right").clip(max=self.weights.size - 1)


@dataclass
class GumbelPPPStream:
    """Points of a PPP on the real line with intensity ``mass * exp(-x) dx``.

    Points are emitted in strictly decreasing order via ``P_i = -log(G_i / mass)``
    where ``G_i`` are the arrival times of a unit-rate Poisson process.
    """

    rng: RngStream
    mass: float = 1.0
    gamma_sum: float = field(default=0.0)
    count: int = field(default=0)

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("PPP mass must be positive")

    def next(self) -> float:
        self.gamma_sum += float(self.rng.standard_exponential(1)[0])
        self.count += 1
        return float(np.log(self.mass) - np.log(self.gamma_sum))

    def next_block(self, k: int) -> np.ndarray:
        """The next ``k`` points, identical in law to ``k`` calls of :meth:`next`."""
        arrivals = self.gamma_sum + np.cumsum(self.rng.standard_exponential(k))
        self.gamma_sum = float(arrivals[-1])
        self.count += k
        return np.log(self.mass) - np.log(arrivals)


def ppp_next(stream: GumbelPPPStream) -> float:
    return stream.next()


def marked_ppp_next(stream: GumbelPPPStream, mark_law: MarkLaw | Sequence[float]) -> tuple[float, int]:
    """Next atom ``(P_i, T_i)`` of the PPP with intensity ``e^{-p} dp * mu(dt)``."""
    if not isinstance(mark_law, MarkLaw):
        mark_law = MarkLaw(np.asarray(mark_law, dtype=float))
    if not np.isclose(mark_law.mass, stream.mass, rtol=1e-12, atol=0.0):
        raise ValueError(
            f"mark measure mass {mark_law.mass} does not match stream mass {stream.mass}"
        )
    p = stream.next()
    t = int(mark_law.draw(stream.rng.uniform(1))[0])
    return p, t


def marked_ppp_block(stream: GumbelPPPStream, mark_law: MarkLaw, k: int) -> tuple[np.ndarray, np.ndarray]:
    if not np.isclose(mark_law.mass, stream.mass, rtol=1e-12, atol=0.0):
        raise ValueError(
            f"mark measure mass {mark_law.mass} does not match stream mass {stream.mass}"
        )
    points = stream.next_block(k)
    marks = mark_law.draw(stream.rng.uniform(k))
    return points, marks
