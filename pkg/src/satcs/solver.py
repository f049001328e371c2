"""ADMM for least squares on unsaturated rows plus a linear sign loss on
saturated rows, under an L2-ball constraint.

The problem solved by :func:`solve_m1bitcsl` is::

    min_x  f(x) + ||Phi1 x - y1||^2 / (2 M1) - (gamma / M2) s2^T (Phi2 x - y2)
    s.t.   ||x||_2 <= C

split as ``x = z`` with the quadratic on ``x`` and everything else on ``z``.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import SaturatedDataset
from .prox import Penalty, PenaltyKind, prox_ball_constrained, soft_threshold


class SolverDivergence(RuntimeError):
    """Iterates became non-finite."""

    def __init__(self, iteration, message="non-finite iterate"):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class SolverConfig:
    gamma: float = 0.1
    ball_radius: float = 1.0
    rho: float = 1.0
    eps_abs: float = 1e-6
    eps_rel: float = 1e-4
    max_iter: int = 2000
    adapt_rho: bool = False

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not self.ball_radius > 0:
            raise ValueError(f"ball_radius must be > 0, got {self.ball_radius}")
        if not self.rho > 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if not (self.eps_abs > 0 and self.eps_rel > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be a positive integer")

    def replace(self, **changes) -> "SolverConfig":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return SolverConfig(**values)


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    iterations: int
    residual_history: np.ndarray
    wall_time: float
    converged: bool
    max_iterate_norm: float = 0.0
    objective_history: np.ndarray | None = field(default=None, repr=False)

    def write_trace(self, path) -> None:
        """Write ``iteration, primal, dual, objective`` rows (objective blank
        unless the solve was traced)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "primal", "dual", "objective"])
            for i, (p, d) in enumerate(self.residual_history, start=1):
                obj = "" if self.objective_history is None else repr(float(self.objective_history[i - 1]))
                w.writerow([i, repr(float(p)), repr(float(d)), obj])


class XSystem:
    """Cached solver for ``(Phi1^T Phi1 / M1 + rho I) x = r``.

    Wide blocks (M1 < N) go through the Woodbury identity on an M1 x M1
    Cholesky factor; tall blocks factor the N x N matrix directly.
    """

    def __init__(self, phi1, m1, rho):
        if not rho > 0:
            raise ValueError(f"rho must be positive, got {rho}")
        phi1 = np.asarray(phi1, dtype=float)
        if not np.all(np.isfinite(phi1)):
            raise ValueError("phi1 has non-finite entries")
        self.rho = float(rho)
        self.n = phi1.shape[1]
        self.m1 = int(m1)
        self._phi = phi1
        if self.m1 == 0:
            self.method = "diagonal"
        elif self.m1 < self.n:
            self.method = "woodbury"
            gram = phi1 @ phi1.T
            gram[np.diag_indices_from(gram)] += self.m1 * self.rho
            self._factor = cho_factor(gram, lower=True)
        else:
            self.method = "cholesky"
            gram = phi1.T @ phi1 / self.m1
            gram[np.diag_indices_from(gram)] += self.rho
            self._factor = cho_factor(gram, lower=True)

    def solve(self, r):
        r = np.asarray(r, dtype=float)
        if r.shape[0] != self.n:
            raise ValueError(f"right-hand side has length {r.shape[0]}, expected {self.n}")
        if self.method == "diagonal":
            return r / self.rho
        if self.method == "woodbury":
            t = cho_solve(self._factor, self._phi @ r, check_finite=False)
            return (r - self._phi.T @ t) / self.rho
        return cho_solve(self._factor, r, check_finite=False)


def precompute_x_system(phi1, m1, rho) -> XSystem:
    return XSystem(phi1, m1, rho)


def x_update(handle: XSystem, phi1t_y1_over_m1, alpha, z, rho):
    if rho != handle.rho:
        raise ValueError(f"handle was built for rho={handle.rho}, got {rho}")
    return handle.solve(phi1t_y1_over_m1 - alpha + rho * z)


def z_update(penalty: Penalty, x, alpha, linear_term, rho, c):
    u = (linear_term + alpha + rho * x) / rho
    return prox_ball_constrained(penalty, u, rho, c)


def m1bitcsl_objective(dataset: SaturatedDataset, penalty: Penalty, gamma, x) -> float:
    """Model objective at ``x`` (the ball constraint is not checked here)."""
    x = np.asarray(x, dtype=float)
    val = penalty.value(x)
    if dataset.m1:
        r = dataset.phi1 @ x - dataset.y1
        val += 0.5 * float(r @ r) / dataset.m1
    if dataset.m2 and gamma:
        val -= gamma / dataset.m2 * float(dataset.s2 @ (dataset.phi2 @ x - dataset.y2))
    return val


def lasso_objective(phi1, y1, nu, x) -> float:
    r = np.asarray(phi1) @ x - y1
    return nu * float(np.abs(x).sum()) + 0.5 * float(r @ r) / len(y1)


def _admm(phi1, y1, linear_term, penalty, c, config, objective=None, stop_extra=None):
    start = time.perf_counter()
    n = phi1.shape[1]
    m1 = phi1.shape[0]
    rho = config.rho
    system = XSystem(phi1, m1, rho)
    b = phi1.T @ y1 / m1 if m1 else np.zeros(n)

    z = np.zeros(n)
    alpha = np.zeros(n)
    history = []
    objectives = [] if objective is not None else None
    sqrt_n = math.sqrt(n)
    max_norm = 0.0
    converged = False
    k = 0
    for k in range(1, int(config.max_iter) + 1):
        x = system.solve(b - alpha + rho * z)
        z_old = z
        z = z_update(penalty, x, alpha, linear_term, rho, c)
        alpha = alpha + rho * (x - z)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z)) and np.all(np.isfinite(alpha))):
            raise SolverDivergence(k)

        z_norm = np.linalg.norm(z)
        max_norm = max(max_norm, z_norm)
        primal = np.linalg.norm(x - z)
        dual = rho * np.linalg.norm(z - z_old)
        history.append((primal, dual))
        if objectives is not None:
            objectives.append(objective(z))

        eps_pri = config.eps_abs * sqrt_n + config.eps_rel * max(np.linalg.norm(x), z_norm)
        eps_dual = config.eps_abs * sqrt_n + config.eps_rel * np.linalg.norm(alpha)
        if primal <= eps_pri and dual <= eps_dual and (stop_extra is None or stop_extra(z)):
            converged = True
            break

        if config.adapt_rho:
            scale = 2.0 if primal > 10 * dual else 0.5 if dual > 10 * primal else 1.0
            if scale != 1.0:
                rho *= scale
                system = XSystem(phi1, m1, rho)

    return RecoveryResult(
        x_hat=z,
        iterations=k,
        residual_history=np.array(history).reshape(-1, 2),
        wall_time=time.perf_counter() - start,
        converged=converged,
        max_iterate_norm=max_norm,
        objective_history=None if objectives is None else np.array(objectives),
    )


def solve_m1bitcsl(dataset: SaturatedDataset, penalty: Penalty, config: SolverConfig,
                   trace=False) -> RecoveryResult:
    """Run the ADMM iteration on a saturated dataset.

    ``config.ball_radius = inf`` disables the ball constraint. The returned
    ``x_hat`` is the final ``z`` iterate, which is feasible and carries
    exact zeros.
    """
    n = dataset.n
    if dataset.m2 and config.gamma:
        linear_term = (config.gamma / dataset.m2) * (dataset.phi2.T @ dataset.s2)
    else:
        linear_term = np.zeros(n)
    objective = None
    if trace:
        def objective(z):
            return m1bitcsl_objective(dataset, penalty, config.gamma, z)
    return _admm(dataset.phi1, dataset.y1, linear_term, penalty, config.ball_radius,
                 config, objective=objective)


def lasso_kkt_residual(phi1, y1, nu, x) -> float:
    """Fixed-point residual ``||x - soft(x - grad, nu)||_inf`` of the LASSO."""
    grad = phi1.T @ (phi1 @ x - y1) / len(y1)
    return float(np.max(np.abs(x - soft_threshold(x - grad, nu)), initial=0.0))


def solve_lasso(phi1, y1, nu, config: SolverConfig, kkt_tol=1e-6, trace=False) -> RecoveryResult:
    """Saturation-rejection baseline: ``min nu||x||_1 + ||Phi1 x - y1||^2 / (2 M1)``.

    Uses the same ADMM loop with the saturated part and the ball dropped.
    Besides the residual test, the loop only stops once the LASSO
    fixed-point residual is at most ``kkt_tol``.
    """
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    phi1 = np.asarray(phi1, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    if phi1.shape[0] == 0:
        raise ValueError("LASSO needs at least one unsaturated row")
    penalty = Penalty(PenaltyKind.L1, nu)
    objective = (lambda z: lasso_objective(phi1, y1, nu, z)) if trace else None
    return _admm(phi1, y1, np.zeros(phi1.shape[1]), penalty, math.inf, config,
                 objective=objective,
                 stop_extra=lambda z: lasso_kkt_residual(phi1, y1, nu, z) <= kkt_tol)
