"""Spectral process models with unit exponential moment, and their tilts.

All shipped models are Gaussian on the log scale, possibly behind a
Bernoulli kill mask.  A Gaussian model is described by a mean function and
a covariance function evaluated on arrays of points of shape ``(m, d)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .grid import NEG_INF, Grid, LogPath, _as_points
from .randomness import RngStream
from .report import EstimatorReport, mean_report

# Diagonal jitter, relative to the largest variance, tried in this order.
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
_ZERO_VAR_RTOL = 1e-14


class NotPSDError(np.linalg.LinAlgError):
    pass


class KilledTiltPoint(ValueError):
    pass


def _points(points) -> np.ndarray:
    if isinstance(points, Grid):
        return points.points
    return _as_points(points)


def _norm(x: np.ndarray) -> np.ndarray:
    return np.sqrt((x * x).sum(axis=-1))


def _pairwise_dist(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    return _norm(s[:, None, :] - t[None, :, :])


@dataclass(frozen=True)
class GaussianLaw:
    """Gaussian vector on a fixed point set: ``mean + factor @ N(0, I)``."""

    mean: np.ndarray
    cov: np.ndarray
    factor: np.ndarray

    def sample(self, n: int, rng: RngStream) -> np.ndarray:
        m = self.mean.size
        normals = rng.standard_normal((n, m))
        return self.mean[None, :] + normals @ self.factor.T


def factorize(cov: np.ndarray) -> np.ndarray:
    """Lower factor ``L`` with ``L L^T ≈ cov``; zero-variance coordinates get zero rows.

    Cholesky is retried along :data:`JITTER_LADDER` before giving up.
    """
    cov = np.asarray(cov, dtype=float)
    m = cov.shape[0]
    if cov.shape != (m, m) or not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise NotPSDError("kernel not PSD on grid: covariance matrix is not symmetric")
    diag = np.diag(cov)
    top = float(diag.max()) if m else 0.0
    factor = np.zeros((m, m))
    if top <= 0.0:
        if np.any(diag < -1e-12) or np.abs(cov).max(initial=0.0) > 1e-12:
            raise NotPSDError("kernel not PSD on grid")
        return factor
    live = np.nonzero(diag > _ZERO_VAR_RTOL * top)[0]
    dead = np.setdiff1d(np.arange(m), live)
    if dead.size and np.abs(cov[np.ix_(dead, np.arange(m))]).max() > 1e-10 * top:
        raise NotPSDError("kernel not PSD on grid: zero variance with nonzero covariance")
    sub = cov[np.ix_(live, live)]
    for jitter in JITTER_LADDER:
        try:
            chol = np.linalg.cholesky(sub + jitter * top * np.eye(live.size))
        except np.linalg.LinAlgError:
            continue
        factor[np.ix_(live, live)] = chol
        return factor
    raise NotPSDError("kernel not PSD on grid")


class SpectralModel:
    """Interface shared by every spectral model.

    ``sample`` returns an ``(n, m)`` array of log-scale values, ``theta``
    returns the Gaussian model of the identifiable tilted process anchored at
    ``h`` and ``tail_offsets`` feeds the truncation bound of the direct
    simulator (see :mod:`tiltmax.simulate`).
    """

    family = "abstract"
    survive_prob = 1.0

    def sample(self, points, n: int, rng: RngStream) -> np.ndarray:
        raise NotImplementedError

    def theta(self, h) -> "GaussianSpectral":
        raise NotImplementedError

    def check_domain(self, points) -> None:
        pass

    def to_spec(self) -> dict:
        raise NotImplementedError

    def gaussian_part(self) -> "GaussianSpectral":
        raise NotImplementedError


class GaussianSpectral(SpectralModel):
    """``Z(t) = mean(t) + B(t)`` with ``B`` centred Gaussian with covariance ``cov``.

    The default mean ``-r(t,t)/2`` gives ``E exp(Z(t)) = 1``.
    """

    def __init__(
        self,
        cov: Callable[[np.ndarray, np.ndarray], np.ndarray],
        mean: Callable[[np.ndarray], np.ndarray] | None = None,
        *,
        family: str = "kernel",
        params: dict | None = None,
        domain: Callable[[np.ndarray], np.ndarray] | None = None,
        dim: int = 1,
    ):
        self._cov = cov
        self._mean = mean
        self.family = family
        self.params = dict(params or {})
        self._domain = domain
        self.dim = dim
        self._law_cache: dict[bytes, GaussianLaw] = {}

    # moments

    def covariance(self, s, t=None) -> np.ndarray:
        s = _points(s)
        t = s if t is None else _points(t)
        return np.asarray(self._cov(s, t), dtype=float)

    def variance(self, t) -> np.ndarray:
        t = _points(t)
        return np.diag(np.asarray(self._cov(t, t), dtype=float)).copy()

    def mean(self, t) -> np.ndarray:
        t = _points(t)
        if self._mean is None:
            return -0.5 * self.variance(t)
        return np.asarray(self._mean(t), dtype=float)

    def gamma(self, s, t=None) -> np.ndarray:
        """Incremental variance ``Var(B(t) - B(s))`` as a matrix over ``s`` x ``t``."""
        s = _points(s)
        t = s if t is None else _points(t)
        vs = self.variance(s)
        vt = self.variance(t)
        return vs[:, None] + vt[None, :] - 2.0 * self.covariance(s, t)

    def check_domain(self, points) -> None:
        pts = _points(points)
        if pts.shape[1] != self.dim:
            raise ValueError(f"model is defined on R^{self.dim}, got points in R^{pts.shape[1]}")
        if self._domain is not None:
            ok = np.asarray(self._domain(pts), dtype=bool)
            if not np.all(ok):
                bad = pts[np.argmin(ok)]
                raise ValueError(f"point {bad.tolist()} is outside the domain of model '{self.family}'")

    def law(self, points) -> GaussianLaw:
        pts = _points(points)
        key = pts.tobytes()
        hit = self._law_cache.get(key)
        if hit is not None:
            return hit
        self.check_domain(pts)
        cov = self.covariance(pts)
        law = GaussianLaw(self.mean(pts), cov, factorize(cov))
        if len(self._law_cache) < 64:
            self._law_cache[key] = law
        return law

    def sample(self, points, n: int, rng: RngStream) -> np.ndarray:
        return self.law(points).sample(n, rng)

    def theta(self, h) -> "GaussianSpectral":
        return xi_process(self, h)

    def gaussian_part(self) -> "GaussianSpectral":
        return self

    def tail_offsets(self, points) -> tuple[np.ndarray, np.ndarray]:
        """``(offset, sd)`` with ``E[e^{Z(t)} 1{Z(t) > c}] = Phi((offset - c) / sd)``."""
        var = np.maximum(self.variance(points), 0.0)
        return 0.5 * var, np.sqrt(var)

    def to_spec(self) -> dict:
        spec = {"family": self.family}
        spec.update(self.params)
        return spec

    def __repr__(self) -> str:
        return f"GaussianSpectral(family={self.family!r}, params={self.params})"


class BrownianLevySpectral(GaussianSpectral):
    """``Z(t) = c B(t) - c^2 t / 2`` on ``t >= 0``, a Levy process with ``E e^{Z(t)} = 1``."""

    def __init__(self, scale: float = 1.0):
        if not scale > 0:
            raise ValueError("scale must be positive")
        c2 = float(scale) ** 2
        super().__init__(
            lambda s, t: c2 * np.minimum(s[:, None, 0], t[None, :, 0]),
            lambda t: -0.5 * c2 * t[:, 0],
            family="brownian_levy",
            params={"scale": float(scale)},
            domain=lambda t: t[:, 0] >= 0,
        )
        self.scale = float(scale)

    def laplace_exponent(self, theta):
        """``log E exp(theta B(1))`` for the driving process ``c B``."""
        return 0.5 * self.scale**2 * np.asarray(theta, dtype=float) ** 2

    def sample(self, points, n: int, rng: RngStream) -> np.ndarray:
        # independent increments along the sorted times
        pts = _points(points)
        self.check_domain(pts)
        t = pts[:, 0]
        order = np.argsort(t, kind="stable")
        ts = t[order]
        dt = np.diff(np.concatenate([[0.0], ts]))
        c = self.scale
        inc = rng.standard_normal((n, t.size)) * (c * np.sqrt(dt))[None, :] - 0.5 * c * c * dt[None, :]
        out = np.empty((n, t.size))
        out[:, order] = np.cumsum(inc, axis=1)
        return out


class MaskedSpectral(SpectralModel):
    """``Z = V - log p`` with probability ``p``, ``Z ≡ -inf`` otherwise.

    ``V`` is the inner Gaussian model.  Every point is killed at once, so
    the tilted process at any anchor is the inner model's, whatever ``p``.
    """

    family = "masked"

    def __init__(self, survive_prob: float, inner: GaussianSpectral):
        if not 0.0 < survive_prob <= 1.0:
            raise ValueError("survive_prob must lie in (0, 1]")
        if not isinstance(inner, GaussianSpectral):
            raise TypeError("inner model must be Gaussian")
        self.survive_prob = float(survive_prob)
        self.inner = inner
        self.dim = inner.dim

    def check_domain(self, points) -> None:
        self.inner.check_domain(points)

    def sample(self, points, n: int, rng: RngStream) -> np.ndarray:
        alive = rng.uniform(n) < self.survive_prob
        vals = self.inner.sample(points, n, rng) - math.log(self.survive_prob)
        vals[~alive] = NEG_INF
        return vals

    def theta(self, h) -> "GaussianSpectral":
        return xi_process(self.inner, h)

    def gaussian_part(self) -> GaussianSpectral:
        return self.inner

    def tail_offsets(self, points) -> tuple[np.ndarray, np.ndarray]:
        offset, sd = self.inner.tail_offsets(points)
        return offset - math.log(self.survive_prob), sd

    def to_spec(self) -> dict:
        return {"family": "masked", "p": self.survive_prob, "inner": self.inner.to_spec()}

    def __repr__(self) -> str:
        return f"MaskedSpectral(p={self.survive_prob}, inner={self.inner!r})"


@dataclass(frozen=True)
class TiltedGaussian:
    """Exponential tilt of a Gaussian model by ``Z(h)``: same covariance, mean + ``r(h, .)``."""

    base: GaussianSpectral
    h: np.ndarray

    def covariance(self, s, t=None) -> np.ndarray:
        return self.base.covariance(s, t)

    def mean(self, t) -> np.ndarray:
        t = _points(t)
        return self.base.mean(t) + self.base.covariance(self.h, t)[0]

    def law(self, points) -> GaussianLaw:
        base = self.base.law(points)
        return GaussianLaw(self.mean(points), base.cov, base.factor)

    def sample(self, points, n: int, rng: RngStream) -> np.ndarray:
        return self.law(points).sample(n, rng)


# model families


def fbm(alpha: float = 1.0, scale: float = 1.0, dim: int = 1) -> GaussianSpectral:
    """``B`` a fractional Brownian field with ``Var(B(t) - B(s)) = scale * |t - s|^alpha``."""
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2]")
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    a, c = float(alpha), float(scale)

    def cov(s, t):
        ns = _norm(s) ** a
        nt = _norm(t) ** a
        return 0.5 * c * (ns[:, None] + nt[None, :] - _pairwise_dist(s, t) ** a)

    return GaussianSpectral(
        cov,
        lambda t: -0.5 * c * _norm(t) ** a,
        family="fbm",
        params={"alpha": a, "scale": c} if dim == 1 else {"alpha": a, "scale": c, "dim": dim},
        dim=dim,
    )


def brownian(scale: float = 1.0) -> GaussianSpectral:
    """One-sided Brownian motion, ``r(s, t) = scale * min(s, t)`` on ``t >= 0``."""
    c = float(scale)
    return GaussianSpectral(
        lambda s, t: c * np.minimum(s[:, None, 0], t[None, :, 0]),
        lambda t: -0.5 * c * t[:, 0],
        family="brownian",
        params={"scale": c},
        domain=lambda t: t[:, 0] >= 0,
    )


def quadratic() -> GaussianSpectral:
    """``B(t) = t^2 xi`` with ``xi ~ N(0, 1)``: Gaussian with non-stationary increments."""
    return GaussianSpectral(
        lambda s, t: (s[:, None, 0] ** 2) * (t[None, :, 0] ** 2),
        lambda t: -0.5 * t[:, 0] ** 4,
        family="quadratic",
    )


def linear_drift() -> GaussianSpectral:
    """``Z(t) = sqrt(2) t xi - t^2``, the alpha = 2 member of the fBm family with scale 2."""
    return fbm(alpha=2.0, scale=2.0)


def constant() -> GaussianSpectral:
    """The degenerate model ``Z ≡ 0``."""
    return GaussianSpectral(
        lambda s, t: np.zeros((s.shape[0], t.shape[0])),
        lambda t: np.zeros(t.shape[0]),
        family="constant",
    )


def kernel_matrix(points, matrix) -> GaussianSpectral:
    """User covariance given as a matrix on a fixed point list; defined only on those points."""
    grid = Grid(points)
    mat = np.asarray(matrix, dtype=float)
    # Grid sorts its points; permute the matrix to match.
    src = _as_points(points)
    perm = grid.indices_of(src)
    full = np.empty_like(mat)
    full[np.ix_(perm, perm)] = mat
    if not np.allclose(full, full.T, rtol=1e-10, atol=1e-12):
        raise NotPSDError("kernel not PSD on grid: covariance matrix is not symmetric")
    factorize(full)

    def cov(s, t):
        i = grid.indices_of(s)
        j = grid.indices_of(t)
        return full[np.ix_(i, j)]

    model = GaussianSpectral(
        cov,
        family="kernel",
        params={
            "points": grid.points[:, 0].tolist() if grid.dim == 1 else grid.points.tolist(),
            "matrix": full.tolist(),
        },
        domain=lambda t: grid.indices_of(t, missing="ignore") >= 0,
        dim=grid.dim,
    )
    model.kernel_grid = grid
    model.kernel_cov = full
    return model


def read_kernel_csv(path: str) -> GaussianSpectral:
    """CSV with a header row of grid points followed by the symmetric covariance rows."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header = [float(v) for v in rows[0]]
    mat = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    if mat.shape != (len(header), len(header)):
        raise ValueError("kernel CSV must hold a square matrix matching its header")
    model = kernel_matrix(header, mat)
    model.params = {"matrix_file": path}
    return model


def lagged(model: GaussianSpectral, h) -> GaussianSpectral:
    """The model of ``t -> Z(t - h)``."""
    hh = _points(h)

    def cov(s, t):
        return model.covariance(s - hh, t - hh)

    def mean(t):
        return model.mean(t - hh)

    return GaussianSpectral(
        cov,
        mean,
        family="lagged",
        params={"base": model.to_spec(), "h": hh[0].tolist()},
        domain=lambda t: _domain_ok(model, t - hh),
        dim=model.dim,
    )


def _domain_ok(model: GaussianSpectral, pts: np.ndarray) -> np.ndarray:
    if model._domain is None:
        return np.ones(pts.shape[0], dtype=bool)
    return np.asarray(model._domain(pts), dtype=bool)


# operations


def sample_path(model: SpectralModel, grid: Grid, rng: RngStream) -> LogPath:
    return LogPath(grid, model.sample(grid, 1, rng)[0])


def tilt_closed_form(model: GaussianSpectral, h) -> TiltedGaussian:
    hh = _points(h)
    model.check_domain(hh)
    return TiltedGaussian(model, hh)


def xi_process(model: GaussianSpectral, h) -> GaussianSpectral:
    """Gaussian model of ``t -> Z^{[h]}(t) - Z^{[h]}(h)``.

    Mean ``-gamma(h, t)/2`` and covariance ``(gamma(h,s) + gamma(h,t) - gamma(s,t))/2``.
    """
    if not isinstance(model, GaussianSpectral):
        raise TypeError("xi_process needs a Gaussian model; use theta_process for masked models")
    hh = _points(h)
    model.check_domain(hh)
    var_h = float(model.variance(hh)[0])

    def cov(s, t):
        rst = model.covariance(s, t)
        rhs = model.covariance(hh, s)[0]
        rht = model.covariance(hh, t)[0]
        return rst - rhs[:, None] - rht[None, :] + var_h

    def mean(t):
        return -0.5 * model.gamma(hh, t)[0]

    return GaussianSpectral(
        cov,
        mean,
        family="xi",
        params={"base": model.to_spec(), "h": hh[0].tolist()},
        domain=model._domain,
        dim=model.dim,
    )


def theta_process(model: SpectralModel, h) -> GaussianSpectral:
    if model.survive_prob <= 0.0:
        raise KilledTiltPoint("tilt point almost surely killed")
    return model.theta(h)


@dataclass(frozen=True)
class WeightedPaths:
    values: np.ndarray
    weights: np.ndarray

    def mean(self) -> np.ndarray:
        live = self.weights > 0
        return (self.weights[live, None] * self.values[live]).sum(axis=0)

    def mean_stderr(self) -> np.ndarray:
        """Delta-method standard error of the self-normalized weighted mean."""
        live = self.weights > 0
        w = self.weights[live]
        x = self.values[live]
        mu = (w[:, None] * x).sum(axis=0)
        return np.sqrt(((w[:, None] * (x - mu)) ** 2).sum(axis=0))

    @property
    def effective_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))


def tilt_empirical(paths, h, grid: Grid | None = None) -> WeightedPaths:
    """Self-normalized importance weights ``w_i ∝ exp(Z_i(h))``."""
    if isinstance(paths, np.ndarray):
        if grid is None:
            raise ValueError("grid required for array input")
        vals = np.atleast_2d(paths)
    else:
        paths = list(paths)
        grid = paths[0].grid
        vals = np.vstack([p.values for p in paths])
    j = grid.index_of(h)
    logw = vals[:, j]
    top = logw.max()
    if not np.isfinite(top):
        raise KilledTiltPoint("tilt point almost surely killed")
    w = np.exp(logw - top)
    return WeightedPaths(vals, w / w.sum())


def levy_two_sided_exponent(phi: Callable[[float], float], theta):
    """Laplace exponent ``Phi(1 - theta) - (1 - theta) Phi(1)`` of the negative-time branch."""
    theta = np.asarray(theta, dtype=float)
    return phi(1.0 - theta) - (1.0 - theta) * phi(1.0)


def check_unit_moment(model: SpectralModel, grid: Grid, reps: int, rng: RngStream) -> list[EstimatorReport]:
    if reps < 2:
        raise ValueError("reps must be at least 2")
    vals = np.exp(model.sample(grid, reps, rng))
    return [mean_report(vals[:, j], method="unit-moment") for j in range(grid.size)]


def tilted_tail(model: SpectralModel, points, c) -> np.ndarray:
    """``E[exp(Z(t)) 1{Z(t) > c(t)}]`` for the shipped (masked) Gaussian models."""
    offset, sd = model.tail_offsets(points)
    c = np.broadcast_to(np.asarray(c, dtype=float), offset.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, (offset - c) / np.where(sd > 0, sd, 1.0), np.where(offset > c, np.inf, -np.inf))
    return ndtr(z)


# config


MODEL_FAMILIES = ("fbm", "brownian", "brownian_levy", "masked", "kernel", "quadratic", "constant", "xi", "lagged")


def model_from_spec(spec) -> SpectralModel:
    if isinstance(spec, SpectralModel):
        return spec
    if not isinstance(spec, dict) or "family" not in spec:
        raise ValueError("model spec must be an object with a 'family' key")
    fam = spec["family"]
    if fam == "fbm":
        return fbm(float(spec.get("alpha", 1.0)), float(spec.get("scale", 1.0)), int(spec.get("dim", 1)))
    if fam == "brownian":
        return brownian(float(spec.get("scale", 1.0)))
    if fam == "brownian_levy":
        return BrownianLevySpectral(float(spec.get("scale", 1.0)))
    if fam == "masked":
        inner = model_from_spec(spec["inner"])
        if not isinstance(inner, GaussianSpectral):
            raise ValueError("masked inner model must be Gaussian")
        return MaskedSpectral(float(spec["p"]), inner)
    if fam == "kernel":
        if "matrix_file" in spec:
            return read_kernel_csv(spec["matrix_file"])
        return kernel_matrix(spec["points"], spec["matrix"])
    if fam == "quadratic":
        return quadratic()
    if fam == "constant":
        return constant()
    if fam == "xi":
        return xi_process(model_from_spec(spec["base"]), spec["h"])
    if fam == "lagged":
        return lagged(model_from_spec(spec["base"]), spec["h"])
    raise ValueError(f"unknown model family '{fam}'")
