"""Closed-form correlation functions for the equal-rate cascade.

For N equal rates gamma the positive-tau correlation between any two
transitions depends only on the trace class k = (n - m + 1) mod N:

    g2_k(tau) = 1 + sum_{j=1}^{N-1} z^(j k) exp(-gamma tau (1 - z^j)),
    z = exp(2 i pi / N).

The same function has an exact renewal form (the jump chain is a Poisson
process of rate gamma when all rates are equal):

    g2_k(tau) = N e^(-x) sum_{c>=0} x^(d + c N) / (d + c N)!,
    x = gamma tau,  d = (N - k) % N,

which is used for small x where the mode sum loses all significant digits
to cancellation.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .model import (
    EmptySubset,
    ImaginaryResidue,
    KOutOfRange,
    SubsetSpec,
    trace_index,
)

IMAG_TOL = 1e-10
# below this value of gamma*tau the Poisson series is used instead of the mode sum
SERIES_SWITCH = 1.0


def root_of_unity(n_levels: int) -> complex:
    """exp(2 i pi / N), the primitive N-th root of unity."""
    if n_levels < 1:
        raise KOutOfRange("n_levels must be >= 1")
    return cmath.exp(2j * math.pi / n_levels)


def _mode_sum(n_levels: int, k: int, x: np.ndarray) -> np.ndarray:
    j = np.arange(1, n_levels)
    z = np.exp(2j * np.pi * j / n_levels)
    w = np.exp(2j * np.pi * j * k / n_levels)
    vals = 1.0 + (w * np.exp(-x[:, None] * (1.0 - z))).sum(axis=1)
    residue = np.abs(vals.imag).max() if vals.size else 0.0
    if residue > IMAG_TOL:
        raise ImaginaryResidue(
            f"imaginary residue {residue:.3e} exceeds {IMAG_TOL:.0e}"
        )
    return vals.real


def _poisson_series(n_levels: int, k: int, x: np.ndarray) -> np.ndarray:
    d = (n_levels - k) % n_levels
    with np.errstate(divide="ignore"):
        logx = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), -np.inf)
    if d == 0:
        term = np.ones_like(x)
    else:
        term = np.exp(d * logx - math.lgamma(d + 1))
    acc = term.copy()
    j = d
    for _ in range(300):
        step = np.exp(n_levels * logx)
        for i in range(1, n_levels + 1):
            step = step / (j + i)
        term = term * step
        j += n_levels
        acc += term
        if np.all(term <= 1e-18 * np.maximum(acc, 1e-300)):
            break
    return n_levels * np.exp(-x) * acc


def g2_equal(n_levels: int, k: int, gamma: float, tau) -> float | np.ndarray:
    """Equal-rate trace g2 of class k at delay tau >= 0.

    k is reduced mod N. N = 1 returns exactly 1 (Poisson stream).
    """
    if n_levels < 1:
        raise KOutOfRange("n_levels must be >= 1")
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(taus < 0):
        raise ValueError("tau must be >= 0; use g2_equal_pair for signed delays")
    k = k % n_levels
    if n_levels == 1:
        out = np.ones_like(taus)
    else:
        x = gamma * taus
        out = np.empty_like(x)
        small = x < SERIES_SWITCH
        if small.any():
            out[small] = _poisson_series(n_levels, k, x[small])
        if (~small).any():
            out[~small] = _mode_sum(n_levels, k, x[~small])
        # rounding guard: probability ratios cannot be negative
        out[(out < 0) & (out > -1e-12)] = 0.0
    return out if np.ndim(tau) else float(out[0])


def g2_equal_pair(n_levels: int, m: int, n: int, gamma: float, tau) -> float | np.ndarray:
    """Signed-delay correlation between transitions m and n (equal rates).

    Negative delays mirror the swapped pair: g_{m,n}(tau) = g_{n,m}(-tau).
    """
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    out = np.empty_like(taus)
    pos = taus >= 0
    if pos.any():
        out[pos] = g2_equal(n_levels, trace_index(m, n, n_levels), gamma, taus[pos])
    if (~pos).any():
        out[~pos] = g2_equal(n_levels, trace_index(n, m, n_levels), gamma, -taus[~pos])
    return out if np.ndim(tau) else float(out[0])


def small_tau_leading(n_levels: int, k: int, gamma: float, tau) -> float | np.ndarray:
    """Leading small-tau behavior of class k, for 1 <= k <= N.

    k < N: N (gamma tau)^(N-k) / (N-k)!   (rise of the suppressed classes)
    k = N: N exp(-gamma tau)              (decay of the contiguous class)
    """
    if not 1 <= k <= n_levels:
        raise KOutOfRange(f"k must be in [1, {n_levels}], got {k}")
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(taus < 0):
        raise ValueError("tau must be >= 0")
    x = gamma * taus
    if k == n_levels:
        out = n_levels * np.exp(-x)
    else:
        p = n_levels - k
        out = n_levels * x ** p / math.factorial(p)
    return out if np.ndim(tau) else float(out[0])


def g2_subset(n_levels: int, subset: SubsetSpec, gamma: float, tau) -> float | np.ndarray:
    """Correlation of the merged emission from a transition subset (equal rates).

    (1/n_S^2) sum_{i,j in S} g_{i,j}(tau); symmetric in tau. Only the class
    multiplicities matter, so the double sum collapses to one pass over the
    N trace classes.
    """
    if not isinstance(subset, SubsetSpec):
        subset = SubsetSpec(tuple(subset))
    subset.check_against(n_levels)
    members = np.asarray(subset.members)
    classes = (members[None, :] - members[:, None] + 1) % n_levels
    counts = np.bincount(classes.ravel(), minlength=n_levels)

    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    acc = np.zeros_like(taus)
    for k in range(n_levels):
        if counts[k] == 0:
            continue
        pos = taus >= 0
        vals = np.empty_like(taus)
        if pos.any():
            vals[pos] = g2_equal(n_levels, k, gamma, taus[pos])
        if (~pos).any():
            # g_{i,j}(-s) = g_{j,i}(s): the (i,j) pair of class k contributes
            # the mirrored class (2 - k) at +s
            vals[~pos] = g2_equal(n_levels, (2 - k) % n_levels, gamma, -taus[~pos])
        acc += counts[k] * vals
    out = acc / subset.n_s ** 2
    return out if np.ndim(tau) else float(out[0])


def bundle_peak(n_levels: int, n_s: int) -> float:
    """Central superbunching value N (n_S - 1) / n_S^2 of a contiguous bundle."""
    if n_s < 1:
        raise EmptySubset("bundle size must be >= 1")
    return n_levels * (n_s - 1) / n_s ** 2
