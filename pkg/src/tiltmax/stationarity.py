"""Numerical checks of the shift identities that characterize stationarity.

Gaussian identities are checked analytically by comparing mean vectors and
covariance matrices.  The expectation identity for shift-invariant
functionals is checked by Monte Carlo over a shipped library of functionals,
and stationarity of simulated fields by two-sample tests between a window and
its shifted copy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .distribution import _blocks, seed_of
from .grid import Grid, _as_points
from .randomness import RngStream, child_seed, new_stream
from .report import EstimatorReport, RunningMean, ks_2samp
from .simulate import FieldBatch
from .spectral import GaussianSpectral, SpectralModel, theta_process, tilt_closed_form, xi_process

ANALYTIC_RTOL = 1e-10
KS_LEVEL = 0.01


@dataclass
class IdentityCheckReport:
    identity: str
    left: object
    right: object
    discrepancy: float
    tolerance: float
    passed: bool
    middle: object = None
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        def conv(v):
            if isinstance(v, EstimatorReport):
                return v.to_dict()
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, dict):
                return {k: conv(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [conv(x) for x in v]
            return v

        return {
            "identity": self.identity,
            "verdict": self.verdict,
            "discrepancy": self.discrepancy,
            "tolerance": self.tolerance,
            "left": conv(self.left),
            "middle": conv(self.middle),
            "right": conv(self.right),
            "details": conv(self.details),
        }


def _grid_points(grid) -> np.ndarray:
    return grid.points if isinstance(grid, Grid) else _as_points(grid)


def _vec(x, dim: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(x, dtype=float).reshape(-1), (dim,)).copy()


def _moment_check(identity: str, left: GaussianSpectral, right: GaussianSpectral, pts: np.ndarray,
                  pts_right: np.ndarray) -> IdentityCheckReport:
    lm, rm = left.mean(pts), right.mean(pts_right)
    lc, rc = left.covariance(pts), right.covariance(pts_right)
    scale = max(1.0, float(np.max(np.abs(lm))), float(np.max(np.abs(lc))))
    disc = max(float(np.max(np.abs(lm - rm))), float(np.max(np.abs(lc - rc)))) / scale
    return IdentityCheckReport(
        identity, {"mean": lm, "cov": lc}, {"mean": rm, "cov": rc}, disc, ANALYTIC_RTOL, disc <= ANALYTIC_RTOL
    )


def check_xi_shift_gaussian(model: GaussianSpectral, a, h, grid) -> IdentityCheckReport:
    """Moments of the tilted process anchored at ``a + h`` on ``t_i``.

    They are compared against the process anchored at ``a`` on ``t_i - h``.
    """
    model = model.gaussian_part()
    pts = _grid_points(grid)
    av, hv = _vec(a, model.dim), _vec(h, model.dim)
    left = xi_process(model, av + hv)
    right = xi_process(model, av)
    return _moment_check("xi-shift", left, right, pts, pts - hv)


def check_theta_shift(model: SpectralModel, a, h, grid, reps: int = 20_000, rng: RngStream | int = 0,
                      method: str = "auto") -> IdentityCheckReport:
    """Identifiable tilted process anchored at ``a + h`` on ``t_i``, against ``a`` on ``t_i - h``.

    Gaussian tilted processes are compared analytically; ``method='ks'``
    instead runs two-sample KS tests on every coordinate and consecutive
    difference at level 0.01, Bonferroni-adjusted.
    """
    dim = getattr(model, "dim", 1)
    pts = _grid_points(grid)
    av, hv = _vec(a, dim), _vec(h, dim)
    left = theta_process(model, av + hv)
    right = theta_process(model, av)
    if method == "auto":
        method = "analytic" if isinstance(left, GaussianSpectral) else "ks"
    if method == "analytic":
        return _moment_check("theta-shift", left, right, pts, pts - hv)
    if method != "ks":
        raise ValueError("method must be 'auto', 'analytic' or 'ks'")
    seed = seed_of(rng)
    x = left.sample(pts, reps, new_stream(child_seed(seed, 0)))
    y = right.sample(pts - hv, reps, new_stream(child_seed(seed, 1)))
    pvals = _sample_pvalues(x, y)
    disc, tol = _pvalue_scale(min(pvals), KS_LEVEL / len(pvals))
    return IdentityCheckReport("theta-shift", x.mean(axis=0), y.mean(axis=0), disc, tol, disc <= tol,
                               details={"method": "ks", "pvalues": pvals})


def _pvalue_scale(p: float, level: float) -> tuple[float, float]:
    """``(-log10 p, -log10 level)`` so that passing means discrepancy <= tolerance."""
    return (math.inf if p <= 0 else -math.log10(p)), -math.log10(level)


def _sample_pvalues(x: np.ndarray, y: np.ndarray) -> list[float]:
    out = []
    for j in range(x.shape[1]):
        if np.ptp(x[:, j]) == 0 and np.ptp(y[:, j]) == 0:
            out.append(1.0 if x[0, j] == y[0, j] else 0.0)
            continue
        out.append(ks_2samp(x[:, j], y[:, j])[1])
    if x.shape[1] > 1:
        dx, dy = np.diff(x, axis=1), np.diff(y, axis=1)
        for j in range(dx.shape[1]):
            out.append(ks_2samp(dx[:, j], dy[:, j])[1])
    return out


# ------------------------------------------------------ functional library


@dataclass(frozen=True)
class Functional:
    """A path functional ``F`` evaluated on ``f(a + k h)`` for ``k`` in ``offsets``."""

    name: str
    offsets: tuple[int, ...]
    fn: Callable[[np.ndarray], np.ndarray]

    def points(self, base, step) -> np.ndarray:
        return np.stack([base + k * step for k in self.offsets])

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return self.fn(np.atleast_2d(values)).astype(float)


def _softmax_last(v: np.ndarray) -> np.ndarray:
    top = v.max(axis=1, keepdims=True)
    e = np.exp(v - top)
    return e[:, -1] / e.sum(axis=1)


FUNCTIONALS: dict[str, Functional] = {
    f.name: f
    for f in (
        Functional("unit", (1,), lambda v: np.ones(v.shape[0])),
        Functional("increment-back", (0, 1), lambda v: v[:, 1] - v[:, 0] <= 0.0),
        Functional("increment-forward", (1, 2), lambda v: v[:, 1] - v[:, 0] <= 0.0),
        Functional("second-difference", (0, 1, 2), lambda v: v[:, 2] - 2.0 * v[:, 1] + v[:, 0] <= 0.0),
        Functional("argmax-middle", (0, 1, 2), lambda v: np.argmax(v, axis=1) == 1),
        Functional("softmax-last", (0, 1, 2), _softmax_last),
    )
}


def functional_self_test(gamma: Functional, n: int = 256, seed: int = 0) -> None:
    """Raise if ``F(f + c) != F(f)`` on random paths and shifts."""
    g = np.random.default_rng(seed)
    v = g.normal(size=(n, len(gamma.offsets))) * 3.0
    c = g.normal(size=(n, 1)) * 10.0
    base = gamma(v)
    moved = gamma(v + c)
    if not np.allclose(base, moved, rtol=1e-9, atol=1e-12):
        raise ValueError(f"functional '{gamma.name}' is not shift-invariant")


def _resolve(gamma) -> Functional:
    if isinstance(gamma, Functional):
        return gamma
    try:
        return FUNCTIONALS[gamma]
    except KeyError:
        raise ValueError(f"unknown functional '{gamma}'; choose from {sorted(FUNCTIONALS)}") from None


def _eval_on(sampler, pts: np.ndarray, gamma: Functional, reps: int, seed: int, weight_at=None) -> EstimatorReport:
    """``E[w F]`` over sampled paths; repeated points are sampled once."""
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    widx = None
    if weight_at is not None:
        allp = np.vstack([uniq, weight_at[None, :]])
        uniq, inv2 = np.unique(allp, axis=0, return_inverse=True)
        inv2 = inv2.reshape(-1)
        inverse = inv2[inverse]
        widx = inv2[-1]
    acc = RunningMean()
    for stream, size in _blocks(reps, seed):
        z = sampler(uniq, size, stream)
        g = gamma(z[:, inverse]) if np.all(np.isfinite(z[:, inverse])) else _killed_safe(gamma, z[:, inverse])
        if widx is not None:
            g = np.exp(z[:, widx]) * g
        acc.add(g)
    return acc.report()


def _killed_safe(gamma: Functional, v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[0])
    live = np.all(np.isfinite(v), axis=1)
    if np.any(live):
        out[live] = gamma(v[live])
    return out


def check_tilt_shift_mc(model: SpectralModel, gamma, a, h, reps: int, rng: RngStream | int,
                        estimator: str = "tilt", k: float = 3.0) -> IdentityCheckReport:
    """``E[e^{Z(a+h)} F(Z)]`` against ``E[e^{Z(a)} F(shift_h Z)]`` for a shift-invariant functional ``F``.

    ``(shift_h f)(t) = f(t - h)``.  With ``estimator='tilt'`` the exponential
    weights are absorbed exactly by sampling the Gaussian tilt of the model;
    ``estimator='weight'`` averages the weighted functional directly (high
    variance for large variances but free of the Gaussian assumption).
    """
    gamma = _resolve(gamma)
    functional_self_test(gamma)
    dim = getattr(model, "dim", 1)
    av, hv = _vec(a, dim), _vec(h, dim)
    pts = gamma.points(av, hv)
    seed = seed_of(rng)
    if estimator == "tilt":
        gauss = model.gaussian_part()
        left = _eval_on(tilt_closed_form(gauss, av + hv).sample, pts, gamma, reps, child_seed(seed, 0))
        right = _eval_on(tilt_closed_form(gauss, av).sample, pts - hv, gamma, reps, child_seed(seed, 1))
    elif estimator == "weight":
        left = _eval_on(model.sample, pts, gamma, reps, child_seed(seed, 0), weight_at=av + hv)
        right = _eval_on(model.sample, pts - hv, gamma, reps, child_seed(seed, 1), weight_at=av)
    else:
        raise ValueError("estimator must be 'tilt' or 'weight'")
    middle = _eval_on(theta_process(model, av).sample, pts - hv, gamma, reps, child_seed(seed, 2))
    reports = (left, middle, right)
    disc = 0.0
    for i in range(3):
        for j in range(i + 1, 3):
            se = math.hypot(reports[i].stderr, reports[j].stderr)
            gap = abs(reports[i].estimate - reports[j].estimate)
            disc = max(disc, gap / se if se > 0 else (0.0 if gap < 1e-12 else math.inf))
    return IdentityCheckReport(f"tilt-shift:{gamma.name}", left, right, disc, k, disc <= k, middle=middle,
                               details={"functional": gamma.name, "estimator": estimator})


def check_tilt_shift_library(model: SpectralModel, a, h, reps: int, rng: RngStream | int,
                             estimator: str = "tilt", level: float = KS_LEVEL) -> IdentityCheckReport:
    """Run every shipped functional; passes iff all pass at a Bonferroni-adjusted threshold.

    Each functional makes three pairwise comparisons, so the per-comparison
    two-sided normal threshold is taken at ``level / (3 * n_functionals)``.
    """
    seed = seed_of(rng)
    n_cmp = 3 * len(FUNCTIONALS)
    k = float(ndtri(1.0 - level / (2.0 * n_cmp)))
    parts = {}
    worst = 0.0
    for i, name in enumerate(FUNCTIONALS):
        rep = check_tilt_shift_mc(model, name, a, h, reps, child_seed(seed, i), estimator=estimator, k=k)
        parts[name] = rep
        worst = max(worst, rep.discrepancy)
    failed = [n for n, r in parts.items() if not r.passed]
    return IdentityCheckReport(
        "tilt-shift", {n: r.left for n, r in parts.items()}, {n: r.right for n, r in parts.items()}, worst, k,
        not failed, middle={n: r.middle for n, r in parts.items()}, details={"failed": failed},
    )


# ------------------------------------------------------ field stationarity


def _window(grid: Grid, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    src = []
    dst = []
    for i, t in enumerate(grid.points):
        j = grid.indices_of((t + h)[None, :], missing="ignore")
        if j[0] >= 0:
            src.append(i)
            dst.append(int(j[0]))
    if not src:
        raise ValueError("grid has no sub-window closed under the shift")
    return np.asarray(src), np.asarray(dst)


def _proportion_pvalue(x: np.ndarray, y: np.ndarray) -> float:
    n1, n2 = x.size, y.size
    p1, p2 = x.mean(), y.mean()
    pool = (x.sum() + y.sum()) / (n1 + n2)
    var = pool * (1 - pool) * (1 / n1 + 1 / n2)
    if var <= 0:
        return 1.0 if p1 == p2 else 0.0
    return float(2.0 * stats.norm.sf(abs(p1 - p2) / math.sqrt(var)))


def check_field_stationarity(fields, h, level: float = KS_LEVEL, thresholds=(-0.5, 0.5, 1.5)) -> IdentityCheckReport:
    """Window ``W`` against ``W + h`` on simulated fields.

    The replicates are split in halves so the two samples are independent:
    the first half supplies ``(zeta(t))_{t in W}``, the second
    ``(zeta(t + h))_{t in W}``.  Two-sample KS tests compare the window
    minimum, maximum, every coordinate and every consecutive difference;
    two-proportion tests compare the joint cdf of every pair at each
    threshold.  All p-values are Bonferroni-adjusted at ``level``.
    """
    if isinstance(fields, FieldBatch):
        grid, vals = fields.grid, fields.values
    else:
        fields = list(fields)
        grid, vals = fields[0].grid, np.vstack([f.values for f in fields])
    hv = _vec(h, grid.dim)
    if np.all(hv == 0):
        return IdentityCheckReport("field", None, None, 0.0, -math.log10(level), True, details={"trivial": True})
    src, dst = _window(grid, hv)
    half = vals.shape[0] // 2
    if half < 2:
        raise ValueError("need at least four replicates")
    x = vals[:half][:, src]
    y = vals[half:2 * half][:, dst]
    pvals = {"min": ks_2samp(x.min(axis=1), y.min(axis=1))[1], "max": ks_2samp(x.max(axis=1), y.max(axis=1))[1]}
    for j, p in enumerate(_sample_pvalues(x, y)):
        pvals[f"ks{j}"] = p
    m = len(src)
    for i in range(m):
        for j in range(i + 1, m):
            for c in thresholds:
                pvals[f"cdf{i},{j}@{c}"] = _proportion_pvalue(
                    (x[:, i] <= c) & (x[:, j] <= c), (y[:, i] <= c) & (y[:, j] <= c)
                )
    disc, tol = _pvalue_scale(min(pvals.values()), level / len(pvals))
    return IdentityCheckReport("field", x.mean(axis=0), y.mean(axis=0), disc, tol, disc <= tol,
                               details={"pvalues": pvals, "window": grid.points[src].tolist()})
