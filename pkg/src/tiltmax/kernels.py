"""Hot inner loops of the simulators, compiled and vectorized twins.

Each public kernel dispatches on :func:`tiltmax._accel.use_numba`.  The numba
versions walk the atoms one at a time and stop as soon as the stopping rule
fires; the numpy versions evaluate the whole block and locate the stopping
index afterwards.  Both read exactly the same random arrays.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from ._accel import njit, use_numba

_SQRT1_2 = 1.0 / math.sqrt(2.0)


# ---------------------------------------------------------------- DM block


@njit
def _dm_block_nb(points, marks, normals, means, factors, run_max, best_p, best_mark, best_shape):
    k = points.shape[0]
    m = run_max.shape[0]
    z = np.empty(m)
    for i in range(k):
        p = points[i]
        lowest = run_max[0]
        for t in range(1, m):
            if run_max[t] < lowest:
                lowest = run_max[t]
        if p < lowest:
            return i, True
        mk = marks[i]
        top = -np.inf
        for t in range(m):
            acc = means[mk, t]
            for j in range(t + 1):
                acc += factors[mk, t, j] * normals[i, j]
            z[t] = acc
            if acc > top:
                top = acc
        s = 0.0
        for t in range(m):
            s += math.exp(z[t] - top)
        lse = top + math.log(s)
        for t in range(m):
            v = p + z[t] - lse
            if v > run_max[t]:
                run_max[t] = v
                best_p[t] = p
                best_mark[t] = mk
                for u in range(m):
                    best_shape[t, u] = z[u] - lse
    return k, False


def _dm_block_np(points, marks, normals, means, factors, run_max, best_p, best_mark, best_shape):
    k = points.shape[0]
    z = means[marks] + np.einsum("kij,kj->ki", factors[marks], normals)
    top = z.max(axis=1)
    shape = z - (top + np.log(np.exp(z - top[:, None]).sum(axis=1)))[:, None]
    vals = points[:, None] + shape
    before = np.maximum.accumulate(np.vstack([run_max[None, :], vals]), axis=0)
    stop = np.nonzero(points < before[:-1].min(axis=1))[0]
    consumed = int(stop[0]) if stop.size else k
    if consumed:
        seg = vals[:consumed]
        arg = seg.argmax(axis=0)
        better = seg[arg, np.arange(seg.shape[1])] > run_max
        for t in np.nonzero(better)[0]:
            a = arg[t]
            best_p[t] = points[a]
            best_mark[t] = marks[a]
            best_shape[t] = shape[a]
        run_max[:] = before[consumed]
    return consumed, bool(stop.size)


def dm_block(points, marks, normals, means, factors, run_max, best_p, best_mark, best_shape):
    """Feed one block of marked atoms to the exact simulator.

    Updates ``run_max`` and the provenance arrays in place.  Returns
    ``(consumed, stopped)``: atoms ``[0, consumed)`` were used and, when
    ``stopped``, atom ``consumed`` lies below the running minimum.
    """
    fn = _dm_block_nb if use_numba() else _dm_block_np
    consumed, stopped = fn(points, marks, normals, means, factors, run_max, best_p, best_mark, best_shape)
    return int(consumed), bool(stopped)


# ------------------------------------------------------------ direct block


@njit
def _direct_block_nb(points, alive, normals, mean, factor, shift, offset, sd, budget,
                     run_max, best_p, best_shape):
    k = points.shape[0]
    m = run_max.shape[0]
    z = np.empty(m)
    for i in range(k):
        p = points[i]
        if alive[i]:
            for t in range(m):
                acc = mean[t]
                for j in range(t + 1):
                    acc += factor[t, j] * normals[i, j]
                z[t] = acc + shift
            for t in range(m):
                v = p + z[t]
                if v > run_max[t]:
                    run_max[t] = v
                    best_p[t] = p
                    for u in range(m):
                        best_shape[t, u] = z[u]
        bound = 0.0
        for t in range(m):
            if run_max[t] == -np.inf:
                bound = np.inf
                break
            c = run_max[t] - p
            if sd[t] > 0.0:
                tail = 0.5 * math.erfc(-(offset[t] - c) / sd[t] * _SQRT1_2)
            else:
                tail = 1.0 if offset[t] > c else 0.0
            bound += math.exp(-run_max[t]) * tail
        if bound <= budget:
            return i + 1, True
    return k, False


def _direct_block_np(points, alive, normals, mean, factor, shift, offset, sd, budget,
                     run_max, best_p, best_shape):
    k = points.shape[0]
    z = mean[None, :] + normals @ factor.T + shift
    z[~alive] = -np.inf
    vals = points[:, None] + z
    after = np.maximum.accumulate(np.vstack([run_max[None, :], vals]), axis=0)[1:]
    c = after - points[:, None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        arg = np.where(sd > 0, (offset - c) / np.where(sd > 0, sd, 1.0), np.where(offset > c, np.inf, -np.inf))
        terms = np.exp(-after) * ndtr(arg)
    bound = np.where(np.all(np.isfinite(after), axis=1), terms.sum(axis=1), np.inf)
    stop = np.nonzero(bound <= budget)[0]
    consumed = int(stop[0]) + 1 if stop.size else k
    seg = vals[:consumed]
    arg_i = seg.argmax(axis=0)
    better = seg[arg_i, np.arange(seg.shape[1])] > run_max
    for t in np.nonzero(better)[0]:
        a = arg_i[t]
        best_p[t] = points[a]
        best_shape[t] = z[a]
    run_max[:] = after[consumed - 1]
    return consumed, bool(stop.size)


def direct_block(points, alive, normals, mean, factor, shift, offset, sd, budget, run_max, best_p, best_shape):
    """Feed one block of unmarked atoms to the truncated direct simulator.

    The block stops after the first atom whose level ``tau = P_i`` makes the
    expected number of later atoms exceeding the running maximum anywhere on
    the grid at most ``budget``.
    """
    fn = _direct_block_nb if use_numba() else _direct_block_np
    consumed, stopped = fn(points, alive, normals, mean, factor, float(shift), offset, sd, float(budget),
                           run_max, best_p, best_shape)
    return int(consumed), bool(stopped)


# ------------------------------------------------------------ path ratios


@njit
def _sup_over_sum_nb(values, out_sup, out_lse):
    n, m = values.shape
    for r in range(n):
        top = -np.inf
        for t in range(m):
            if values[r, t] > top:
                top = values[r, t]
        s = 0.0
        if top > -np.inf:
            for t in range(m):
                s += math.exp(values[r, t] - top)
            out_lse[r] = top + math.log(s)
        else:
            out_lse[r] = -np.inf
        out_sup[r] = top


def _sup_over_sum_np(values, out_sup, out_lse):
    top = values.max(axis=1)
    safe = np.where(np.isfinite(top), top, 0.0)
    s = np.exp(values - safe[:, None]).sum(axis=1)
    with np.errstate(divide="ignore"):
        out_lse[:] = np.where(np.isfinite(top), safe + np.log(s), -np.inf)
    out_sup[:] = top


def sup_and_logsum(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``max`` and ``log(sum(exp))`` of a 2-d array of log values."""
    values = np.ascontiguousarray(values, dtype=float)
    out_sup = np.empty(values.shape[0])
    out_lse = np.empty(values.shape[0])
    fn = _sup_over_sum_nb if use_numba() else _sup_over_sum_np
    fn(values, out_sup, out_lse)
    return out_sup, out_lse
