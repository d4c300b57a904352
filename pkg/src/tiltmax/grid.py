"""Finite index sets, log-scale paths and the lag operator."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

NEG_INF = -np.inf

# Relative tolerance used to decide whether two coordinates are the same point.
_POINT_RTOL = 1e-9


class EmptyDomainError(ValueError):
    pass


def _as_points(points, dim: int | None = None) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1) if (dim in (None, 1)) else pts.reshape(1, -1)
    if dim is not None and pts.shape[1] != dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, expected {dim}")
    return pts


class Grid:
    """Ordered finite set of distinct points in R^d.

    Points are stored in lexicographic order.  ``spacing`` is set when the
    grid lives on the lattice ``spacing * Z^d``.
    """

    def __init__(self, points, spacing: float | None = None):
        pts = _as_points(points)
        if pts.shape[0] == 0:
            raise ValueError("a grid needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        order = np.lexsort(pts.T[::-1])
        pts = pts[order]
        if pts.shape[0] > 1:
            gaps = np.abs(np.diff(pts, axis=0)).max(axis=1)
            scale = max(1.0, float(np.abs(pts).max()))
            if np.any(gaps <= _POINT_RTOL * scale):
                raise ValueError("grid points must be distinct")
        if spacing is not None:
            if not spacing > 0:
                raise ValueError("spacing must be positive")
            k = pts / spacing
            if not np.allclose(k, np.round(k), rtol=0, atol=1e-9):
                raise ValueError(f"points do not lie on the lattice {spacing}*Z^d")
            pts = np.round(k) * spacing
        self.points = pts
        self.points.setflags(write=False)
        self.spacing = spacing

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and self.points.shape == other.points.shape and np.array_equal(
            self.points, other.points
        )

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self) -> str:
        if self.dim == 1 and self.size <= 8:
            return f"Grid({self.points[:, 0].tolist()}, spacing={self.spacing})"
        return f"Grid(n={self.size}, dim={self.dim}, spacing={self.spacing})"

    # construction helpers

    @classmethod
    def from_values(cls, values: Iterable[float], spacing: float | None = None) -> "Grid":
        return cls(np.asarray(list(values), dtype=float).reshape(-1, 1), spacing=spacing)

    @classmethod
    def lattice(cls, delta: float, lower, upper, dim: int = 1) -> "Grid":
        """Points of ``delta * Z^d`` inside the box ``[lower, upper]^d``."""
        lo = int(np.ceil(lower / delta - 1e-9))
        hi = int(np.floor(upper / delta + 1e-9))
        if hi < lo:
            raise ValueError("empty lattice box")
        axis = np.arange(lo, hi + 1) * delta
        pts = np.array(list(itertools.product(axis, repeat=dim)), dtype=float)
        return cls(pts, spacing=delta)

    @classmethod
    def box(cls, delta: float, extent: float, dim: int = 1) -> "Grid":
        """``delta * Z^d`` restricted to ``[0, extent]^d``."""
        return cls.lattice(delta, 0.0, extent, dim)

    @classmethod
    def symmetric(cls, delta: float, radius: float, dim: int = 1) -> "Grid":
        return cls.lattice(delta, -radius, radius, dim)

    @classmethod
    def from_spec(cls, spec) -> "Grid":
        """Build a grid from its config form.

        Accepted forms: ``{"points": [...]}`` (scalars or coordinate lists,
        optional ``"delta"``), ``{"dim", "delta", "extent"}`` for the box
        ``[0, extent]^d``, and ``{"dim", "delta", "lower", "upper"}``.
        """
        if isinstance(spec, Grid):
            return spec
        if isinstance(spec, str):
            return cls.from_values([float(v) for v in spec.split(",") if v.strip()])
        if isinstance(spec, (list, tuple)):
            return cls(np.asarray(spec, dtype=float))
        if "points" in spec:
            pts = np.asarray(spec["points"], dtype=float)
            dim = int(spec.get("dim", 1 if pts.ndim == 1 else pts.shape[1]))
            return cls(_as_points(pts, dim), spacing=spec.get("delta"))
        dim = int(spec.get("dim", 1))
        delta = float(spec["delta"])
        if "extent" in spec:
            return cls.box(delta, float(spec["extent"]), dim)
        return cls.lattice(delta, float(spec["lower"]), float(spec["upper"]), dim)

    def to_spec(self) -> dict:
        pts = self.points[:, 0].tolist() if self.dim == 1 else self.points.tolist()
        out = {"dim": self.dim, "points": pts}
        if self.spacing is not None:
            out["delta"] = self.spacing
        return out

    # lookups

    def index_of(self, point) -> int:
        idx = self.indices_of(_as_points(point, self.dim))
        return int(idx[0])

    def indices_of(self, points, missing: str = "raise") -> np.ndarray:
        """Indices of ``points`` in this grid; ``-1`` for misses when ``missing='ignore'``."""
        pts = _as_points(points, self.dim)
        scale = max(1.0, float(np.abs(self.points).max()))
        tol = _POINT_RTOL * scale * 10
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        if self.dim == 1:
            col = self.points[:, 0]
            pos = np.searchsorted(col, pts[:, 0])
            for j, (p, q) in enumerate(zip(pos, pts[:, 0])):
                for cand in (p - 1, p):
                    if 0 <= cand < col.size and abs(col[cand] - q) <= tol:
                        out[j] = cand
                        break
        else:
            for j, q in enumerate(pts):
                hit = np.nonzero(np.abs(self.points - q).max(axis=1) <= tol)[0]
                if hit.size:
                    out[j] = hit[0]
        if missing == "raise" and np.any(out < 0):
            bad = pts[np.argmax(out < 0)]
            raise KeyError(f"point {bad.tolist()} is not on the grid")
        return out

    def contains(self, point) -> bool:
        return bool(self.indices_of(point, missing="ignore")[0] >= 0)

    def shifted(self, h) -> "Grid":
        """The grid ``{t + h : t in self}``."""
        h = np.asarray(h, dtype=float).reshape(1, -1)
        spacing = self.spacing
        if spacing is not None:
            k = h / spacing
            if not np.allclose(k, np.round(k), atol=1e-9):
                spacing = None
        return Grid(self.points + h, spacing=spacing)

    def subgrid(self, indices: Sequence[int]) -> "Grid":
        return Grid(self.points[np.asarray(indices)], spacing=self.spacing)

    def union(self, other: "Grid") -> "Grid":
        pts = np.vstack([self.points, other.points])
        keep = []
        probe = Grid(self.points)
        for i, p in enumerate(other.points):
            if not probe.contains(p):
                keep.append(i)
        pts = np.vstack([self.points, other.points[keep]]) if keep else self.points.copy()
        spacing = self.spacing if self.spacing == other.spacing else None
        return Grid(pts, spacing=spacing)

    def coordinate_labels(self) -> list[str]:
        if self.dim == 1:
            return [repr(float(v)) for v in self.points[:, 0]]
        return [";".join(repr(float(v)) for v in row) for row in self.points]


@dataclass(frozen=True)
class LogPath:
    """Values on a grid in ``[-inf, inf)`` (natural-log scale).

    The identically ``-inf`` path is representable (a killed spectral path);
    ``is_killed`` reports it.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.shape[0] != self.grid.size:
            raise ValueError("path length does not match grid size")
        if np.any(np.isnan(v)) or np.any(v == np.inf):
            raise ValueError("path values must lie in [-inf, inf)")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def is_killed(self) -> bool:
        return bool(np.all(self.values == NEG_INF))

    def at(self, point) -> float:
        return float(self.values[self.grid.index_of(point)])

    def __add__(self, c: float) -> "LogPath":
        return LogPath(self.grid, self.values + c)


def lag_shift(path: LogPath, h, subgrid: Grid | None = None) -> LogPath:
    """``out(t) = in(t - h)`` on the points ``t`` where ``t - h`` is on the grid.

    The result lives on ``subgrid`` if given (every ``t - h`` must then be on
    ``path.grid``), otherwise on the common domain ``grid ∩ (grid + h)``.
    """
    h = np.asarray(h, dtype=float).reshape(-1)
    src = path.grid
    if h.size != src.dim:
        raise ValueError("shift dimension does not match grid")
    if subgrid is not None:
        idx = src.indices_of(subgrid.points - h)
        return LogPath(subgrid, path.values[idx])
    target = src.points
    idx = src.indices_of(target - h, missing="ignore")
    keep = idx >= 0
    if not np.any(keep):
        raise EmptyDomainError(f"shift by {h.tolist()} leaves an empty common domain")
    return LogPath(Grid(target[keep], spacing=src.spacing), path.values[idx[keep]])


class DegenerateSum(float):
    """A ``-inf`` log-sum flagged as degenerate (every term vanished)."""

    degenerate = True

    def __new__(cls):
        return super().__new__(cls, NEG_INF)


def log_sum_exp(path: LogPath | np.ndarray, weights=None) -> float:
    """``log(sum_s w(s) exp(value(s)))`` with max subtraction; ``-inf`` terms add nothing."""
    vals = path.values if isinstance(path, LogPath) else np.asarray(path, dtype=float)
    w = np.ones_like(vals) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != vals.shape:
        raise ValueError("weights must match the path")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    live = (w > 0) & (vals > NEG_INF)
    if not np.any(live):
        return DegenerateSum()
    v = vals[live]
    m = v.max()
    return float(m + np.log(np.sum(w[live] * np.exp(v - m))))


def log_sum_exp_rows(values: np.ndarray) -> np.ndarray:
    """Row-wise unit-weight log-sum-exp of a 2-d array; all ``-inf`` rows give ``-inf``."""
    m = values.max(axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(invalid="ignore"):
        s = np.exp(values - safe[:, None]).sum(axis=1)
    with np.errstate(divide="ignore"):
        return np.where(np.isfinite(m), safe + np.log(s), NEG_INF)
