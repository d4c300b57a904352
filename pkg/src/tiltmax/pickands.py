"""Generalized Pickands constants by several independent routes.

The lattice constant is estimated from the tilted process anchored at the origin via the
sup-over-sum ratio and via the probability that the lattice supremum sits at
the origin; the window average of ``sup exp(Z)`` is available for a direct
finite-window value.  For the degenerate alpha = 2 model
whose tilted process is ``sqrt(2) xi t - t^2`` every quantity reduces to a one-dimensional
integral over ``xi``, evaluated here by piecewise Gauss-Legendre quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .distribution import _blocks, seed_of
from .grid import Grid
from .kernels import sup_and_logsum
from .randomness import RngStream
from .report import EstimatorReport, RunningMean
from .spectral import SpectralModel, theta_process

MAX_WINDOW_POINTS = 1 << 16
_SQRT2 = math.sqrt(2.0)


class TruncationError(RuntimeError):
    pass


class WindowTooLarge(MemoryError):
    pass


@dataclass
class PickandsEstimate:
    delta: float
    method: str
    report: EstimatorReport
    window: float | None = None
    dim: int = 1

    @property
    def estimate(self) -> float:
        return self.report.estimate

    @property
    def stderr(self) -> float:
        return self.report.stderr

    def extremal_index(self) -> float:
        return self.delta**self.dim * self.report.estimate


def _dim(model: SpectralModel) -> int:
    return int(getattr(model, "dim", 1))


def _lattice(delta: float, radius: float, dim: int) -> Grid:
    return Grid.lattice(delta, -radius, radius, dim)


def _check_window(n_points: int) -> None:
    if n_points > MAX_WINDOW_POINTS:
        raise WindowTooLarge(
            f"window has {n_points} lattice points (limit {MAX_WINDOW_POINTS}); "
            "tile the window into sub-boxes or increase delta"
        )


def _inner_mask(outer: Grid, radius: float) -> np.ndarray:
    return np.all(np.abs(outer.points) <= radius + 1e-9, axis=1)


# --------------------------------------------------------------- estimators


def pickands_direct(model: SpectralModel, delta: float, T: float, reps: int, rng: RngStream | int,
                    method: str = "tilted") -> PickandsEstimate:
    """``T^{-d} E sup_{t in delta Z^d ∩ [0,T]^d} exp(Z(t))`` for a finite window.

    ``method='plain'`` averages the supremum directly.  ``method='tilted'``
    writes the supremum as ``sum_s exp(Z(s)) * sup/sum`` and tilts by a
    uniformly chosen window point, giving the bounded, unbiased estimator
    ``N * sup/sum`` of the tilted path.  Both estimate the finite-window
    quantity, which overestimates the limit.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    k = T / delta
    if abs(k - round(k)) > 1e-9 or k < 0:
        raise ValueError("T must be a nonnegative multiple of delta")
    dim = _dim(model)
    window = Grid.box(delta, T, dim)
    _check_window(window.size)
    seed = seed_of(rng)
    scale = 1.0 / T**dim if T > 0 else 1.0
    acc = RunningMean()
    if method == "plain":
        for stream, size in _blocks(reps, seed):
            z = model.sample(window, size, stream)
            sup, _ = sup_and_logsum(z)
            acc.add(np.exp(sup) * scale)
    elif method == "tilted":
        gauss = model.gaussian_part()
        law = gauss.law(window)
        shift = gauss.covariance(window, window)  # row s: r(s, .)
        n = window.size
        for stream, size in _blocks(reps, seed):
            s = stream.integers(n, size)
            z = law.sample(size, stream) + shift[s]
            sup, lse = sup_and_logsum(z)
            acc.add(n * np.exp(sup - lse) * scale)
    else:
        raise ValueError("method must be 'plain' or 'tilted'")
    return PickandsEstimate(delta, "direct", acc.report(f"direct-{method}"), window=T, dim=dim)


def _theta_paths(model: SpectralModel, delta: float, radius: float, reps: int, seed: int):
    dim = _dim(model)
    outer = _lattice(delta, radius, dim)
    _check_window(outer.size)
    theta = theta_process(model, np.zeros((1, dim)))
    law = theta.law(outer)
    zero = outer.index_of(np.zeros(dim))
    for stream, size in _blocks(reps, seed):
        th = law.sample(size, stream)
        th[:, zero] = 0.0
        yield outer, th


def _ratio_terms(th: np.ndarray, delta: float, dim: int) -> np.ndarray:
    sup, lse = sup_and_logsum(th)
    return np.exp(sup - lse) / delta**dim


def _doubling_check(a: EstimatorReport, b: EstimatorReport, radius: float, what: str) -> None:
    tol = 3.0 * math.sqrt(a.stderr**2 + b.stderr**2)
    if abs(a.estimate - b.estimate) > tol:
        raise TruncationError(
            f"truncation radius too small: {what} changes from {a.estimate:.6g} (R={radius}) "
            f"to {b.estimate:.6g} (R={2 * radius}), tolerance {tol:.3g}"
        )


def pickands_ratio(model: SpectralModel, delta: float, radius: float, reps: int, rng: RngStream | int,
                   check: bool = True) -> PickandsEstimate:
    """``E[ sup exp(W) / (delta^d sum exp(W)) ]`` over the lattice ``delta Z^d ∩ [-R, R]^d``.

    ``W`` is the tilted process anchored at the origin.

    With ``check`` the paths are drawn on the lattice of radius ``2R`` and the
    estimate restricted to radius ``R`` must agree with it within three
    combined standard errors.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    dim = _dim(model)
    outer_r = 2 * radius if check else radius
    inner_acc, outer_acc = RunningMean(), RunningMean()
    mask = None
    for outer, th in _theta_paths(model, delta, outer_r, reps, seed_of(rng)):
        if mask is None:
            mask = _inner_mask(outer, radius)
        inner_acc.add(_ratio_terms(th[:, mask], delta, dim))
        if check:
            outer_acc.add(_ratio_terms(th, delta, dim))
    rep = inner_acc.report("ratio")
    if check:
        wide = outer_acc.report("ratio")
        rep.flags["estimate_2R"] = wide.estimate
        rep.flags["stderr_2R"] = wide.stderr
        if mask.sum() > 1:
            _doubling_check(rep, wide, radius, "ratio estimate")
    return PickandsEstimate(delta, "ratio", rep, dim=dim)


def pickands_argmax_prob(model: SpectralModel, delta: float, radius: float, reps: int, rng: RngStream | int,
                         check: bool = True) -> PickandsEstimate:
    """``delta^{-d} P(sup over the lattice of W = 0)`` for the tilted process ``W``; ``W(0) = 0`` always attains."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    dim = _dim(model)
    outer_r = 2 * radius if check else radius
    inner_acc, outer_acc = RunningMean(), RunningMean()
    mask = None
    for outer, th in _theta_paths(model, delta, outer_r, reps, seed_of(rng)):
        if mask is None:
            mask = _inner_mask(outer, radius)
        inner_acc.add((th[:, mask].max(axis=1) <= 0.0) / delta**dim)
        if check:
            outer_acc.add((th.max(axis=1) <= 0.0) / delta**dim)
    rep = inner_acc.report("argmax-prob")
    if check:
        wide = outer_acc.report("argmax-prob")
        rep.flags["estimate_2R"] = wide.estimate
        rep.flags["stderr_2R"] = wide.stderr
        if mask.sum() > 1:
            _doubling_check(rep, wide, radius, "argmax probability")
    return PickandsEstimate(delta, "argmax-prob", rep, dim=dim)


def pickands_lower_bound_c0(model: SpectralModel, delta_fine: float, radius: float, reps: int,
                            rng: RngStream | int, check: bool = True, rel_tol: float = 1e-3) -> PickandsEstimate:
    """Discretized ``E[ sup exp(W) / integral exp(W) ]`` (a lower bound for the continuous constant).

    Supremum and Riemann sum are taken on the lattice of spacing
    ``delta_fine``; with ``check`` the same paths restricted to spacing
    ``2 * delta_fine`` must give an estimate within three combined standard
    errors or within relative distance ``rel_tol`` (the spacing bias is
    deterministic, so for nearly deterministic ``W`` the standard error
    alone would reject every spacing).
    """
    if not delta_fine > 0:
        raise ValueError("delta_fine must be positive")
    dim = _dim(model)
    fine_acc, coarse_acc = RunningMean(), RunningMean()
    coarse = None
    for outer, th in _theta_paths(model, delta_fine, radius, reps, seed_of(rng)):
        if coarse is None:
            k = np.round(outer.points / delta_fine).astype(np.int64)
            coarse = np.all(k % 2 == 0, axis=1)
        fine_acc.add(_ratio_terms(th, delta_fine, dim))
        if check:
            coarse_acc.add(_ratio_terms(th[:, coarse], 2 * delta_fine, dim))
    rep = fine_acc.report("c0-lower-bound")
    rep.flags["discretized_lower_bound"] = True
    if check:
        wide = coarse_acc.report("c0-lower-bound")
        rep.flags["estimate_2delta"] = wide.estimate
        tol = max(3.0 * math.sqrt(rep.stderr**2 + wide.stderr**2), rel_tol * abs(rep.estimate))
        if abs(rep.estimate - wide.estimate) > tol:
            raise TruncationError(
                f"delta_fine sensitivity: estimate moves from {wide.estimate:.6g} to {rep.estimate:.6g} "
                f"when halving the spacing (tolerance {tol:.3g})"
            )
    return PickandsEstimate(0.0, "lower-bound", rep, dim=dim)


def ratio_of_path(values: np.ndarray, delta: float, dim: int = 1) -> float:
    """``sup exp(f) / (delta^d sum exp(f))`` for one deterministic lattice path."""
    return float(_ratio_terms(np.atleast_2d(np.asarray(values, dtype=float)), delta, dim)[0])


# -------------------------------------------------- alpha = 2 quadrature oracle


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)
_XI_LIMIT = 12.0


def _alpha2_ratio_integrand(xi: np.ndarray, delta: float) -> np.ndarray:
    # theta_xi(t) = xi^2/2 - (t - xi/sqrt2)^2, so only lattice points near xi/sqrt2 matter
    centre = xi / _SQRT2
    span = int(math.ceil(9.0 / delta)) + 1
    k0 = np.round(centre / delta).astype(np.int64)
    offsets = np.arange(-span, span + 1)
    t = (k0[:, None] + offsets[None, :]) * delta
    log_terms = -((t - centre[:, None]) ** 2)
    top = log_terms.max(axis=1)
    total = np.exp(log_terms - top[:, None]).sum(axis=1)
    return 1.0 / (delta * total)


def alpha2_ratio_oracle(delta: float) -> float:
    """``E[ sup_k e^{theta(k delta)} / (delta sum_k e^{theta(k delta)}) ]`` for ``theta(t) = sqrt2 xi t - t^2``.

    The integrand is smooth between the points ``xi = delta (2k+1)/sqrt2``
    where the lattice argmax switches, so each such piece is integrated with
    32-point Gauss-Legendre.
    """
    step = delta * _SQRT2
    first = math.floor((-_XI_LIMIT / step) - 0.5)
    last = math.ceil((_XI_LIMIT / step) - 0.5)
    kinks = (np.arange(first, last + 1) + 0.5) * step
    edges = np.concatenate([[-_XI_LIMIT], kinks[(kinks > -_XI_LIMIT) & (kinks < _XI_LIMIT)], [_XI_LIMIT]])
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    xi = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).reshape(-1)
    # bound the (nodes x lattice offsets) work array to a few million entries
    chunk = max(1, 4_000_000 // (2 * int(math.ceil(9.0 / delta)) + 3))
    ratio = np.concatenate([_alpha2_ratio_integrand(xi[i:i + chunk], delta) for i in range(0, xi.size, chunk)])
    vals = ratio * np.exp(-0.5 * xi * xi) / math.sqrt(2 * math.pi)
    return float(np.sum(vals.reshape(a.size, -1) * (half[:, None] * _GL_WEIGHTS[None, :])))


def alpha2_argmax_oracle(delta: float) -> float:
    """``delta^{-1} P(argmax_k theta(k delta) = 0) = (2 Phi(delta / sqrt2) - 1) / delta``."""
    return float((2.0 * ndtr(delta / _SQRT2) - 1.0) / delta)


def alpha2_direct_oracle(delta: float, T: float) -> float:
    """``T^{-1} E sup_{k delta in [0, T]} e^{theta(k delta)}`` in closed form.

    On the set of ``xi`` where lattice point ``k`` is the argmax, the integrand
    ``e^{theta(k delta)} phi(xi)`` equals ``phi(xi - sqrt2 k delta)``.
    """
    n = int(round(T / delta))
    k = np.arange(n + 1)
    lo = np.where(k == 0, -np.inf, (2 * k - 1) * delta / _SQRT2)
    hi = np.where(k == n, np.inf, (2 * k + 1) * delta / _SQRT2)
    centre = _SQRT2 * k * delta
    return float(np.sum(ndtr(hi - centre) - ndtr(lo - centre)) / T)


INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


def bm_series_oracle(delta: float, tol: float = 1e-17) -> float:
    """Lattice Pickands constant at spacing ``delta`` for ``Var(B(t) - B(s)) = |t - s|`` in one dimension.

    On ``delta Z`` the tilted process is a Gaussian random walk in each
    direction with steps ``N(-delta/2, delta)``, and the probability that such
    a walk never becomes positive is ``exp(-sum_k P(S_k > 0) / k)``.  Hence
    ``value = exp(-2 sum_k Phi(-sqrt(k delta)/2) / k) / delta``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    total = 0.0
    k0 = 1
    while True:
        k = np.arange(k0, k0 + 4096, dtype=float)
        terms = ndtr(-np.sqrt(k * delta) / 2.0) / k
        total += float(terms.sum())
        if terms[-1] < tol:
            break
        k0 += 4096
    return math.exp(-2.0 * total) / delta
