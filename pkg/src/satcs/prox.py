"""Proximal operators for sparsity penalties, optionally on an L2 ball.

Every operator here solves::

    argmin_z  f(z) + (rho / 2) * ||z - u||_2^2      [s.t. ||z||_2 <= c]

for one of four penalties ``f``: the L1 norm, the L0 count, the minimax
concave penalty (MCP) and a nonconvex sorted-L1 norm in which the smallest
magnitudes receive the largest weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq


class PenaltyKind(str, Enum):
    L1 = "l1"
    L0 = "l0"
    MCP = "mcp"
    SORTED_L1 = "sl1"


@dataclass(frozen=True)
class Penalty:
    """Tagged description of a sparsity penalty.

    ``mcp_b`` is only used (and required) for MCP; ``weights`` only for the
    sorted-L1 variant, where they must be nonincreasing and nonnegative.
    ``weights[0]`` multiplies the smallest magnitude.
    """

    kind: PenaltyKind
    nu: float
    mcp_b: float | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        kind = PenaltyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not self.nu >= 0 or not math.isfinite(self.nu):
            raise ValueError(f"nu must be a finite nonnegative number, got {self.nu}")
        if kind is PenaltyKind.MCP:
            if self.mcp_b is None or not self.mcp_b > 0:
                raise ValueError("MCP needs mcp_b > 0")
        if kind is PenaltyKind.SORTED_L1:
            if self.weights is None:
                raise ValueError("sorted L1 needs a weight vector")
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if np.any(w < 0) or np.any(np.diff(w) > 0):
                raise ValueError("sorted L1 weights must be nonnegative and nonincreasing")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    def with_nu(self, nu: float) -> "Penalty":
        return Penalty(self.kind, nu, self.mcp_b, self.weights)

    def value(self, z) -> float:
        """Evaluate f(z)."""
        a = np.abs(np.asarray(z, dtype=float))
        if self.kind is PenaltyKind.L1:
            return self.nu * float(a.sum())
        if self.kind is PenaltyKind.L0:
            return self.nu * float(np.count_nonzero(a))
        if self.kind is PenaltyKind.MCP:
            return float(_mcp(a, self.nu, self.mcp_b).sum())
        _check_weights(self.weights, a.shape[0])
        return self.nu * float(np.dot(self.weights, np.sort(a)))


def _mcp(a, nu, b):
    """MCP evaluated at magnitudes ``a``."""
    return np.where(a <= b * nu, nu * a - a * a / (2 * b), 0.5 * b * nu * nu)


def _check_weights(weights, n):
    if weights is None or weights.shape[0] != n:
        got = None if weights is None else weights.shape[0]
        raise ValueError(f"sorted L1 weight vector has length {got}, expected {n}")


def _check_rho(rho):
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")


def prox_objective(penalty: Penalty, z, u, rho) -> float:
    """f(z) + (rho/2)||z - u||^2, the quantity every prox here minimizes."""
    d = np.asarray(z, dtype=float) - np.asarray(u, dtype=float)
    return penalty.value(z) + 0.5 * rho * float(d @ d)


def project_l2_ball(v, c):
    """Euclidean projection onto ``{z : ||z||_2 <= c}``; ``c = inf`` is a no-op."""
    if not c > 0:
        raise ValueError(f"ball radius must be positive, got {c}")
    v = np.asarray(v, dtype=float)
    if math.isinf(c):
        return v.copy()
    norm = np.linalg.norm(v)
    if norm <= c:
        return v.copy()
    out = v * (c / norm)
    # guard the last ulp so callers can rely on ||out|| <= c
    while np.linalg.norm(out) > c:
        out *= 1.0 - 2.0 ** -52
    return out


# -- unconstrained proxes ----------------------------------------------------

def soft_threshold(u, tau):
    return np.sign(u) * np.maximum(np.abs(u) - tau, 0.0)


def hard_threshold(u, tau):
    """Keep entries with ``|u| > tau``; ties at the threshold go to zero."""
    return np.where(np.abs(u) > tau, u, 0.0)


def _mcp_scalar(u, nu, b, rho):
    # The scalar problem can be nonconvex (b*rho <= 1), so compare the
    # objective at every candidate instead of trusting firm thresholding.
    a = np.abs(u)
    bnu = b * nu
    cands = [np.zeros_like(a), np.full_like(a, bnu), np.maximum(a, bnu)]
    if b * rho > 1:
        ramp = b * (rho * a - nu) / (b * rho - 1)
        cands.append(np.clip(ramp, 0.0, bnu))
    cands = np.stack(cands)
    obj = _mcp(cands, nu, b) + 0.5 * rho * (cands - a) ** 2
    best = cands[np.argmin(obj, axis=0), np.arange(a.shape[0])]
    return np.sign(u) * best


def prox_sorted_l1(u, nu, weights, rho):
    """Prox of ``nu * sum_i w_i |z_[i]|`` with ``|z_[1]| <= ... <= |z_[N]|``.

    Larger magnitudes are paired with smaller weights, then each magnitude
    is soft-thresholded by its own ``nu * w / rho``.
    """
    _check_rho(rho)
    u = np.asarray(u, dtype=float)
    w = np.asarray(weights, dtype=float)
    _check_weights(w, u.shape[0])
    a = np.abs(u)
    order = np.argsort(-a, kind="stable")
    tau = (nu / rho) * w[::-1].copy()
    mags = np.maximum(a[order] - tau, 0.0)

    # Pairing is anti-sorted by input magnitude; check the output ordering
    # agrees and repair any adjacent inversion by swapping the thresholds.
    for _ in range(max(u.shape[0] - 1, 0)):
        bad = np.flatnonzero(mags[:-1] < mags[1:])
        if bad.size == 0:
            break
        for i in bad:
            tau[i], tau[i + 1] = tau[i + 1], tau[i]
        mags = np.maximum(a[order] - tau, 0.0)

    out = np.zeros_like(u)
    out[order] = mags
    return np.sign(u) * out


def prox_separable(penalty: Penalty, u, rho):
    """Unconstrained prox of ``penalty`` at ``u`` with quadratic weight ``rho``."""
    _check_rho(rho)
    u = np.asarray(u, dtype=float)
    tau = penalty.nu / rho
    kind = penalty.kind
    if kind is PenaltyKind.L1:
        return soft_threshold(u, tau)
    if kind is PenaltyKind.L0:
        return hard_threshold(u, math.sqrt(2.0 * tau))
    if kind is PenaltyKind.MCP:
        return _mcp_scalar(u, penalty.nu, penalty.mcp_b, rho)
    return prox_sorted_l1(u, penalty.nu, penalty.weights, rho)


# -- ball-constrained proxes -------------------------------------------------

def _l0_prefix(u, nu, rho, c):
    """Exact L0 prox on the ball by scanning magnitude-ordered supports."""
    order = np.argsort(-np.abs(u), kind="stable")
    sq = u[order] ** 2
    kept = np.concatenate(([0.0], np.cumsum(sq)))
    total = kept[-1]
    excess = np.maximum(np.sqrt(kept) - c, 0.0)
    obj = nu * np.arange(len(kept)) + 0.5 * rho * (excess ** 2 + (total - kept))
    k = int(np.argmin(obj))
    z = np.zeros_like(u)
    z[order[:k]] = u[order[:k]]
    return project_l2_ball(z, c)


def _radial_root(penalty, u, rho, c):
    """Feasible points of ``theta -> prox(rho u/(rho+theta), rho+theta)`` near
    the multiplier where its norm crosses ``c``."""

    def z_of(theta):
        return prox_separable(penalty, u * (rho / (rho + theta)), rho + theta)

    def gap(theta):
        return np.linalg.norm(z_of(theta)) - c

    theta_hi = max(rho * (np.linalg.norm(u) / c - 1.0), 0.0)
    while gap(theta_hi) > 0:
        theta_hi = 2.0 * theta_hi + rho
    if theta_hi == 0:
        return [z_of(0.0)]
    try:
        theta = brentq(gap, 0.0, theta_hi, xtol=1e-14, rtol=1e-12, maxiter=100)
    except ValueError:
        theta = theta_hi
    # the norm may jump at the root: keep both sides
    return [project_l2_ball(z_of(t), c)
            for t in (theta, theta * (1 - 1e-9), min(theta * (1 + 1e-9) + 1e-15, theta_hi))]


def _restricted(penalty, u, rho, c, support):
    """Ball prox with coordinates outside ``support`` pinned at zero."""
    z = np.zeros_like(u)
    if support.size == 0:
        return z
    sub = penalty
    if penalty.kind is PenaltyKind.SORTED_L1:
        # pinned zeros are the smallest magnitudes and keep the largest weights
        sub = penalty.__class__(penalty.kind, penalty.nu,
                                weights=penalty.weights[u.shape[0] - support.size:])
    us = u[support]
    zs = prox_separable(sub, us, rho)
    if np.linalg.norm(zs) > c:
        cands = [project_l2_ball(zs, c)] + _radial_root(sub, us, rho, c)
        zs = min(cands, key=lambda v: prox_objective(sub, v, us, rho))
    z[support] = zs
    return z


def _radial_search(penalty, u, rho, c, z_free):
    """Multiplier search for penalties without a closed-form ball prox.

    Adding ``theta/2 ||z||^2`` turns the problem into an unconstrained prox
    with weight ``rho + theta`` at ``rho u / (rho + theta)``. The norm of that
    prox can jump as ``theta`` moves, so the result is the best of several
    feasible candidates rather than the root alone. When a candidate zeroes
    coordinates, the problem is solved again on its support so the released
    norm budget goes back to the surviving entries.
    """
    cands = [project_l2_ball(z_free, c)] + _radial_root(penalty, u, rho, c)
    seen = {tuple(np.flatnonzero(u))}
    queue = list(cands)
    while queue:
        support = np.flatnonzero(queue.pop())
        key = tuple(support)
        if key in seen:
            continue
        seen.add(key)
        z = _restricted(penalty, u, rho, c, support)
        cands.append(z)
        queue.append(z)
    objs = [prox_objective(penalty, z, u, rho) for z in cands]
    return cands[int(np.argmin(objs))]


def prox_ball_constrained(penalty: Penalty, u, rho, c):
    """Prox of ``penalty`` restricted to the ball ``||z||_2 <= c``.

    L1 and L0 are solved exactly. MCP and sorted L1 use a multiplier search
    backed by candidate comparison (see :func:`_radial_search`).
    """
    _check_rho(rho)
    if not c > 0:
        raise ValueError(f"ball radius must be positive, got {c}")
    u = np.asarray(u, dtype=float)
    z = prox_separable(penalty, u, rho)
    if math.isinf(c) or np.linalg.norm(z) <= c:
        return z
    if penalty.kind is PenaltyKind.L1:
        return project_l2_ball(z, c)
    if penalty.kind is PenaltyKind.L0:
        return _l0_prefix(u, penalty.nu, rho, c)
    return _radial_search(penalty, u, rho, c, z)
