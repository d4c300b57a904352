"""Finite-dimensional distributions of the max-stable field.

Three routes to ``-log P(zeta(t_i) <= x_i, i <= n)`` are provided and are
meant to be checked against each other: averaging ``max_i exp(Z(t_i) - x_i)``
over spectral paths, the inf-argmax mixture over tilted processes, and the
empirical frequency over simulated fields.  The bivariate Hüsler-Reiss
formula serves as the closed-form oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .grid import Grid, _as_points
from .randomness import RngStream, block_stream, child_seed
from .report import EstimatorReport, RunningMean, ks_1samp
from .simulate import FieldBatch, FieldSample
from .spectral import GaussianSpectral, SpectralModel, theta_process

BLOCK_SIZE = 8192


class TooFewExceedances(ValueError):
    pass


@dataclass(frozen=True)
class FidiQuery:
    """Points ``t_1..t_n`` and thresholds on the Gumbel (default) or Fréchet scale."""

    points: np.ndarray
    thresholds: np.ndarray
    scale: str = "gumbel"
    alpha: float = 1.0

    def __post_init__(self):
        pts = _as_points(self.points)
        x = np.asarray(self.thresholds, dtype=float).reshape(-1)
        if pts.shape[0] < 1:
            raise ValueError("a query needs at least one point")
        if x.size != pts.shape[0]:
            raise ValueError("one threshold per point is required")
        Grid(pts)  # distinctness
        if self.scale not in ("gumbel", "frechet"):
            raise ValueError("scale must be 'gumbel' or 'frechet'")
        if self.scale == "frechet" and np.any(x <= 0):
            raise ValueError("Fréchet thresholds must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "thresholds", x)

    @classmethod
    def of(cls, points, x, **kw) -> "FidiQuery":
        return cls(np.asarray(points, dtype=float), np.asarray(x, dtype=float), **kw)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def gumbel_thresholds(self) -> np.ndarray:
        if self.scale == "gumbel":
            return self.thresholds
        return self.alpha * np.log(self.thresholds)

    def shifted(self, c: float) -> "FidiQuery":
        return FidiQuery(self.points, self.thresholds + c, self.scale, self.alpha)


def seed_of(rng: RngStream | int) -> int:
    if isinstance(rng, RngStream):
        return child_seed(rng.seed, rng.domain, rng.replicate_id)
    return int(rng)


def _blocks(reps: int, seed: int, block: int = BLOCK_SIZE):
    done = 0
    b = 0
    while done < reps:
        size = min(block, reps - done)
        yield block_stream(seed, b), size
        done += size
        b += 1


def neglog_fidi_mc(model: SpectralModel, query: FidiQuery, reps: int, rng: RngStream | int) -> EstimatorReport:
    """Monte Carlo average of ``max_i exp(Z(t_i) - x_i)``."""
    if reps < 2:
        raise ValueError("reps must be at least 2")
    x = query.gumbel_thresholds()
    acc = RunningMean()
    for stream, size in _blocks(reps, seed_of(rng)):
        z = model.sample(query.points, size, stream)
        acc.add(np.exp((z - x[None, :]).max(axis=1)))
    return acc.report("mc")


def neglog_fidi_infargmax(model: SpectralModel, query: FidiQuery, reps: int, rng: RngStream | int,
                          shortcut: bool = False) -> EstimatorReport:
    """``sum_k exp(-x_k) p_k`` with ``p_k`` the probability that ``k`` is the smallest
    argmax of ``W_k(t_i) - x_i``, ``W_k`` the tilted process anchored at ``t_k``.

    With ``shortcut=True`` the stationary form ``W_0(t_i - t_k)`` is used
    for every ``k`` instead of the tilted process anchored at ``t_k``.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    x = query.gumbel_thresholds()
    pts = query.points
    seed = seed_of(rng)
    psi = np.empty(query.n)
    psi_se = np.empty(query.n)
    origin = np.zeros((1, pts.shape[1]))
    theta0 = theta_process(model, origin) if shortcut else None
    for k in range(query.n):
        if shortcut:
            law_model, eval_pts = theta0, pts - pts[k]
        else:
            law_model, eval_pts = theta_process(model, pts[k]), pts
        acc = RunningMean()
        for stream, size in _blocks(reps, child_seed(seed, k)):
            th = law_model.sample(eval_pts, size, stream)
            # exact zero at the anchor
            th[:, k] = 0.0
            # np.argmax returns the first maximal index: strict against earlier, ties go to the earliest
            acc.add((np.argmax(th - x[None, :], axis=1) == k).astype(float))
        r = acc.report()
        psi[k], psi_se[k] = r.estimate, r.stderr
    w = np.exp(-x)
    est = float(np.dot(w, psi))
    se = float(math.sqrt(np.dot(w**2, psi_se**2)))
    return EstimatorReport(est, se, reps, "infargmax", flags={"psi": psi.tolist(), "psi_stderr": psi_se.tolist()})


def hr_closed_form(gamma: float, x: float, y: float) -> float:
    """``-log H(x, y)`` for the bivariate Hüsler-Reiss law with incremental variance ``gamma``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive; use hr_limit_independent / hr_limit_dependent")
    lam = math.sqrt(gamma) / 2.0
    return float(
        math.exp(-x) * ndtr(lam + (y - x) / (2 * lam)) + math.exp(-y) * ndtr(lam + (x - y) / (2 * lam))
    )


def hr_limit_independent(x: float, y: float) -> float:
    return math.exp(-x) + math.exp(-y)


def hr_limit_dependent(x: float, y: float) -> float:
    return math.exp(-min(x, y))


def hr_model_neglog(model: SpectralModel, query: FidiQuery) -> float:
    """Bivariate closed form using the model's incremental variance between the two points."""
    if query.n != 2:
        raise ValueError("closed form is bivariate")
    gauss = model.gaussian_part()
    g = float(gauss.gamma(query.points[:1], query.points[1:])[0, 0])
    x, y = query.gumbel_thresholds()
    return hr_closed_form(g, float(x), float(y))


@dataclass
class EmpiricalFidi:
    probability: EstimatorReport
    neglog: EstimatorReport
    unbounded: bool = False


def _field_values(fields) -> tuple[Grid, np.ndarray]:
    if isinstance(fields, FieldBatch):
        return fields.grid, fields.values
    fields = list(fields)
    if not fields:
        raise ValueError("no fields")
    if not isinstance(fields[0], FieldSample):
        raise TypeError("expected FieldBatch or FieldSample collection")
    return fields[0].grid, np.vstack([f.values for f in fields])


def empirical_fidi(fields, query: FidiQuery) -> EmpiricalFidi:
    grid, vals = _field_values(fields)
    n = vals.shape[0]
    if n < 2:
        raise ValueError("need at least two replicates")
    idx = grid.indices_of(query.points)
    x = query.gumbel_thresholds()
    hit = np.all(vals[:, idx] <= x[None, :], axis=1)
    p = float(hit.mean())
    se = math.sqrt(p * (1 - p) / n)
    prob = EstimatorReport(p, se, n, "empirical")
    if p == 0.0:
        return EmpiricalFidi(prob, EstimatorReport(math.inf, math.inf, n, "empirical"), unbounded=True)
    return EmpiricalFidi(prob, EstimatorReport(-math.log(p), se / p, n, "empirical"))


@dataclass
class GPDRecovery:
    anchor: np.ndarray
    companion: np.ndarray
    level: float
    count: int
    differences: np.ndarray = field(repr=False)
    overshoots: np.ndarray = field(repr=False)
    theta_mean: float = math.nan
    theta_sd: float = math.nan
    ks_theta: tuple[float, float] = (math.nan, math.nan)
    ks_exp: tuple[float, float] = (math.nan, math.nan)


def gpd_recover_theta(fields, h, level: float, t, model: SpectralModel | None = None,
                      min_count: int = 200) -> GPDRecovery:
    """Differences ``zeta(t) - zeta(h)`` over replicates with ``zeta(h) > level``.

    With a model, the differences are compared by KS against the Gaussian law
    of the tilted process anchored at ``h`` evaluated at ``t``; the overshoots
    ``zeta(h) - level`` are compared against the unit exponential.
    """
    grid, vals = _field_values(fields)
    j = grid.index_of(h)
    k = grid.index_of(t)
    keep = vals[:, j] > level
    count = int(keep.sum())
    if count < min_count:
        raise TooFewExceedances(f"only {count} exceedances of level {level} (need {min_count})")
    diffs = vals[keep, k] - vals[keep, j]
    over = vals[keep, j] - level
    out = GPDRecovery(grid.points[j].copy(), grid.points[k].copy(), float(level), count, diffs, over)
    out.ks_exp = ks_1samp(over, stats.expon.cdf)
    if model is not None:
        law = theta_process(model, grid.points[j]).law(grid.points[[k]])
        mu, sd = float(law.mean[0]), math.sqrt(max(float(law.cov[0, 0]), 0.0))
        out.theta_mean, out.theta_sd = mu, sd
        out.ks_theta = ks_1samp(diffs, stats.norm(mu, sd).cdf)
    return out


# Fréchet margins


def to_frechet(field, alpha: float = 1.0):
    """Map Gumbel-scale values ``x`` to ``exp(x / alpha)`` (margins ``exp(-x^{-alpha})``)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if isinstance(field, FieldSample):
        return FieldSample(field.grid, np.exp(field.values / alpha), field.exact, field.n_atoms, field.provenance)
    if isinstance(field, FieldBatch):
        return FieldBatch(field.grid, np.exp(field.values / alpha), field.exact, field.n_atoms, field.provenance)
    return np.exp(np.asarray(field, dtype=float) / alpha)


class SpectralTailProcess:
    """``exp`` of the tilted process anchored at the origin: nonnegative, equal to 1 there."""

    def __init__(self, theta: GaussianSpectral):
        self.theta = theta

    def sample(self, points, n: int, rng: RngStream) -> np.ndarray:
        return np.exp(self.theta.sample(points, n, rng))

    def mean(self, points) -> np.ndarray:
        law = self.theta.law(points)
        return np.exp(law.mean + 0.5 * np.diag(law.cov))


def stp_extract(model: SpectralModel) -> SpectralTailProcess:
    dim = getattr(model, "dim", 1)
    return SpectralTailProcess(theta_process(model, np.zeros((1, dim))))
