"""Realizations of the max-stable field on a grid.

Two simulators are provided.  :func:`simulate_dm` is exact: it marks every
Poisson atom with a uniformly chosen grid point ``T``, draws the tilted
process anchored at ``T`` and normalizes it by its log-sum over the grid, so
every shape is bounded above by 0 and the enumeration can stop once the next
atom lies below the running minimum.  :func:`simulate_direct` adds untilted
spectral paths to a mass-one Poisson enumeration and truncates once the
expected number of later atoms that could still raise a grid value is below
an error budget.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import NEG_INF, Grid, LogPath
from .randomness import GumbelPPPStream, MarkLaw, RngStream, marked_ppp_block
from .spectral import (
    BrownianLevySpectral,
    GaussianSpectral,
    SpectralModel,
    lagged,
    theta_process,
)

_FIRST_BLOCK = 16
_MAX_BLOCK = 4096
_MAX_ATOMS = 50_000_000


class ProvenanceError(ValueError):
    pass


@dataclass
class FieldSample:
    grid: Grid
    values: np.ndarray
    exact: bool
    n_atoms: int = 0
    provenance: dict | None = field(default=None, repr=False)


@dataclass(frozen=True)
class ExtremalFunction:
    anchor: np.ndarray
    path: LogPath
    atom: float

    @property
    def value_at_anchor(self) -> float:
        return self.atom + self.path.at(self.anchor)

    def normalized_shape(self) -> np.ndarray:
        """``path(.) - path(h)``: the extremal function divided by its value at ``h`` (log scale)."""
        return self.path.values - self.path.at(self.anchor)


# ------------------------------------------------------------------ plans


@dataclass
class DMPlan:
    """Per-(model, grid) tables for the exact simulator: one tilted law per mark."""

    grid: Grid
    means: np.ndarray  # (m, m): row T is the mean of the tilted process anchored at T
    factors: np.ndarray  # (m, m, m)

    @classmethod
    def build(cls, model: SpectralModel, grid: Grid) -> "DMPlan":
        model.check_domain(grid)
        m = grid.size
        means = np.empty((m, m))
        factors = np.empty((m, m, m))
        for j in range(m):
            law = theta_process(model, grid.points[j]).law(grid)
            means[j] = law.mean
            factors[j] = law.factor
            # the anchor coordinate is exactly zero
            means[j, j] = 0.0
            factors[j, j, :] = 0.0
        return cls(grid, np.ascontiguousarray(means), np.ascontiguousarray(factors))


@dataclass
class DirectPlan:
    grid: Grid
    mean: np.ndarray
    factor: np.ndarray
    survive_prob: float
    offset: np.ndarray
    sd: np.ndarray

    @classmethod
    def build(cls, model: SpectralModel, grid: Grid) -> "DirectPlan":
        gauss = model.gaussian_part()
        law = gauss.law(grid)
        offset, sd = model.tail_offsets(grid)
        return cls(grid, law.mean.copy(), np.ascontiguousarray(law.factor), model.survive_prob, offset, sd)


def _blocks():
    k = _FIRST_BLOCK
    total = 0
    while total < _MAX_ATOMS:
        yield k
        total += k
        k = min(2 * k, _MAX_BLOCK)
    raise RuntimeError("atom enumeration did not terminate")


# ------------------------------------------------------------- simulators


def simulate_dm(model: SpectralModel | DMPlan, grid: Grid, rng: RngStream, provenance: bool = False,
                measure: str = "counting") -> FieldSample:
    if measure != "counting":
        raise ValueError("exact stopping requires bounded shapes")
    plan = model if isinstance(model, DMPlan) else DMPlan.build(model, grid)
    m = grid.size
    stream = GumbelPPPStream(rng, mass=float(m))
    marks_law = MarkLaw.counting(m)
    run_max = np.full(m, NEG_INF)
    best_p = np.full(m, NEG_INF)
    best_mark = np.full(m, -1, dtype=np.int64)
    best_shape = np.zeros((m, m))
    used = 0
    for k in _blocks():
        points, marks = marked_ppp_block(stream, marks_law, k)
        normals = rng.standard_normal((k, m))
        consumed, stopped = kernels.dm_block(
            points, marks.astype(np.int64), normals, plan.means, plan.factors, run_max, best_p, best_mark, best_shape
        )
        used += consumed
        if stopped:
            break
    prov = None
    if provenance:
        prov = {"atom": best_p, "mark": best_mark, "shape": best_shape}
    return FieldSample(grid, run_max, exact=True, n_atoms=used, provenance=prov)


def simulate_direct(model: SpectralModel | DirectPlan, grid: Grid, rng: RngStream, error_budget: float = 1e-4,
                    provenance: bool = False) -> FieldSample:
    if not error_budget > 0:
        raise ValueError("error_budget must be positive")
    plan = model if isinstance(model, DirectPlan) else DirectPlan.build(model, grid)
    m = grid.size
    stream = GumbelPPPStream(rng, mass=1.0)
    shift = -math.log(plan.survive_prob)
    run_max = np.full(m, NEG_INF)
    best_p = np.full(m, NEG_INF)
    best_shape = np.zeros((m, m))
    used = 0
    for k in _blocks():
        points = stream.next_block(k)
        alive = rng.uniform(k) < plan.survive_prob
        normals = rng.standard_normal((k, m))
        consumed, stopped = kernels.direct_block(
            points, alive, normals, plan.mean, plan.factor, shift, plan.offset, plan.sd, error_budget,
            run_max, best_p, best_shape,
        )
        used += consumed
        if stopped:
            break
    prov = {"atom": best_p, "shape": best_shape} if provenance else None
    return FieldSample(grid, run_max, exact=False, n_atoms=used, provenance=prov)


def extract_extremal(field: FieldSample, h) -> ExtremalFunction:
    if field.provenance is None:
        raise ProvenanceError("field was simulated without provenance retention")
    j = field.grid.index_of(h)
    return ExtremalFunction(
        field.grid.points[j].copy(),
        LogPath(field.grid, field.provenance["shape"][j]),
        float(field.provenance["atom"][j]),
    )


# ------------------------------------------------------- two-sided extension


def extension_shift(grid: Grid) -> np.ndarray:
    """``h = -min(0, min_j t_j)`` coordinate-wise."""
    return -np.minimum(0.0, grid.points.min(axis=0))


def extension_model(model: SpectralModel, grid: Grid) -> GaussianSpectral:
    """Gaussian model of the extension ``Y(t) = W(t + h)`` on the span of ``grid``.

    ``W`` is the tilted process anchored at ``h``.
    """
    h = extension_shift(grid)
    return lagged(theta_process(model, h), -h)


def simulate_two_sided(model: SpectralModel, grid: Grid, rng: RngStream, provenance: bool = False) -> FieldSample:
    return simulate_dm(extension_model(model, grid), grid, rng, provenance=provenance)


def sample_levy_two_sided(model: BrownianLevySpectral, grid: Grid, n: int, rng: RngStream) -> np.ndarray:
    """Two-sided Levy spectral vector built from an independent negative-time branch.

    For ``t < 0`` the value is ``Z^-(-t)``, where ``Z^-`` is the Levy process
    with exponent ``Phi(1 - theta) - (1 - theta) Phi(1)``; for the Brownian
    driver that exponent coincides with the forward one, so ``Z^-`` is an
    independent copy of ``Z``.
    """
    t = grid.points[:, 0]
    out = np.empty((n, t.size))
    pos = t >= 0
    neg = ~pos
    if np.any(pos):
        out[:, pos] = model.sample(t[pos].reshape(-1, 1), n, rng)
    if np.any(neg):
        out[:, neg] = model.sample((-t[neg]).reshape(-1, 1), n, rng)
    return out


# --------------------------------------------------------------- batching


@dataclass
class FieldBatch:
    grid: Grid
    values: np.ndarray  # (reps, m)
    exact: bool
    n_atoms: np.ndarray
    provenance: dict | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.values.shape[0]

    def sample(self, i: int) -> FieldSample:
        prov = None
        if self.provenance is not None:
            prov = {k: v[i] for k, v in self.provenance.items()}
        return FieldSample(self.grid, self.values[i], self.exact, int(self.n_atoms[i]), prov)


def simulate_fields(model: SpectralModel, grid: Grid, reps: int, seed: int, method: str = "dm",
                    error_budget: float = 1e-4, provenance: bool = False, threads: int = 1,
                    first_replicate: int = 0) -> FieldBatch:
    """``reps`` independent fields; replicate ``i`` uses the stream ``(seed, first_replicate + i)``.

    The output does not depend on ``threads``.
    """
    if method == "dm":
        plan = DMPlan.build(model, grid)

        def one(rng):
            return simulate_dm(plan, grid, rng, provenance=provenance)
    elif method == "direct":
        plan = DirectPlan.build(model, grid)

        def one(rng):
            return simulate_direct(plan, grid, rng, error_budget=error_budget, provenance=provenance)
    elif method == "two-sided":
        plan = DMPlan.build(extension_model(model, grid), grid)

        def one(rng):
            return simulate_dm(plan, grid, rng, provenance=provenance)
    else:
        raise ValueError(f"unknown simulation method '{method}'")

    m = grid.size
    values = np.empty((reps, m))
    atoms = np.empty(reps, dtype=np.int64)
    prov = None
    if provenance:
        prov = {"atom": np.empty((reps, m)), "shape": np.empty((reps, m, m))}
        if method != "direct":
            prov["mark"] = np.empty((reps, m), dtype=np.int64)

    def run(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            f = one(RngStream(seed, first_replicate + i))
            values[i] = f.values
            atoms[i] = f.n_atoms
            if prov is not None:
                for key in prov:
                    prov[key][i] = f.provenance[key]

    threads = max(1, int(threads))
    if threads == 1 or reps < 2 * threads:
        run(0, reps)
    else:
        edges = np.linspace(0, reps, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda ab: run(*ab), zip(edges[:-1], edges[1:])))
    return FieldBatch(grid, values, method != "direct", atoms, prov)
