"""Recovery metrics and theory diagnostics.

The sign-consistency analysis rests on ``lambda = E[eta(g) g]`` for a
standard normal ``g``, where ``eta(g) = E[s | g]`` is the expected
saturation indicator. For symmetric clipping at ``+-T`` with indicator flips
at rate ``q``, ``eta(g) = (1 - 2q) * sign(g) * 1{|g| >= T}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import norm

SNR_CAP_DB = 300.0
NNZ_THRESHOLD = 1e-8


@dataclass(frozen=True)
class MetricsRecord:
    snr_db: float
    angular_error: float
    l2_error: float
    nnz: int
    degenerate: bool = False


def snr(x_bar, x_hat) -> float:
    """Recovery SNR in dB, capped at 300 dB for (near-)exact recovery."""
    x_bar = np.asarray(x_bar, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x_bar.shape != x_hat.shape:
        raise ValueError("signals differ in length")
    sig = np.linalg.norm(x_bar)
    if sig == 0:
        raise ValueError("true signal is zero")
    err = np.linalg.norm(x_bar - x_hat)
    if err <= 1e-15 * sig:
        return SNR_CAP_DB
    return min(SNR_CAP_DB, 20.0 * math.log10(sig / err))


def angular_error(x_bar, x_hat) -> float:
    """Angle between the two signals as a fraction of pi.

    A zero vector has no direction; 0.5 is returned for it (see
    :func:`compute_metrics`, which flags the record).
    """
    x_bar = np.asarray(x_bar, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    na, nb = np.linalg.norm(x_bar), np.linalg.norm(x_hat)
    if na == 0 or nb == 0:
        return 0.5
    cos = float(x_bar @ x_hat) / (na * nb)
    return math.acos(min(1.0, max(-1.0, cos))) / math.pi


def compute_metrics(x_bar, x_hat) -> MetricsRecord:
    x_hat = np.asarray(x_hat, dtype=float)
    return MetricsRecord(
        snr_db=snr(x_bar, x_hat),
        angular_error=angular_error(x_bar, x_hat),
        l2_error=float(np.linalg.norm(np.asarray(x_bar) - x_hat)),
        nnz=int(np.count_nonzero(np.abs(x_hat) > NNZ_THRESHOLD)),
        degenerate=bool(np.linalg.norm(x_hat) == 0),
    )


# -- lambda --------------------------------------------------------------------

def eta(g, threshold_t, flip_prob=0.0):
    g = np.asarray(g, dtype=float)
    s = np.where(g >= threshold_t, 1.0, np.where(g <= -threshold_t, -1.0, 0.0))
    return (1.0 - 2.0 * flip_prob) * s


def lambda_quadrature(threshold_t, flip_prob=0.0) -> float:
    """``E[eta(g) g]`` by adaptive quadrature on [-10, 10]."""
    t = float(threshold_t)

    def integrand(g):
        return g * float(eta(g, t, flip_prob)) * norm.pdf(g)

    pts = [p for p in (-t, t) if -10 < p < 10] or None
    val, _ = integrate.quad(integrand, -10, 10, points=pts, epsabs=1e-10, epsrel=1e-10, limit=200)
    return val


def _check_unit(x_bar):
    x_bar = np.asarray(x_bar, dtype=float)
    if abs(np.linalg.norm(x_bar) - 1.0) > 1e-9:
        raise ValueError("x_bar must have unit norm")
    return x_bar


def _indicator_blocks(threshold_t, x_bar, samples, rng, flip_prob, block=8192):
    """Yield ``(g, s, phi)`` blocks of Gaussian rows and their indicators."""
    n = x_bar.shape[0]
    done = 0
    while done < samples:
        b = min(block, samples - done)
        phi = rng.standard_normal((b, n))
        g = phi @ x_bar
        s = eta(g, threshold_t)
        if flip_prob > 0:
            s = np.where(rng.random(b) < flip_prob, -s, s)
        yield g, s, phi
        done += b


def estimate_lambda(threshold_t, x_bar, samples, rng, flip_prob=0.0):
    """Monte Carlo estimate of lambda and its standard error.

    Rows ``phi ~ N(0, I)`` are drawn, the indicator ``s`` is formed from
    ``phi^T x_bar`` and lambda is estimated by the mean of ``s * phi^T x_bar``
    (the projection of ``s * phi`` onto ``x_bar``).
    """
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    x_bar = _check_unit(x_bar)
    total = 0.0
    total_sq = 0.0
    for g, s, _ in _indicator_blocks(threshold_t, x_bar, samples, rng, flip_prob):
        v = s * g
        total += v.sum()
        total_sq += (v * v).sum()
    mean = total / samples
    var = (total_sq - samples * mean * mean) / (samples - 1)
    return mean, math.sqrt(max(var, 0.0) / samples)


def lemma1_vector_check(threshold_t, x_bar, samples, rng, flip_prob=0.0) -> float:
    """``||mean(s_j phi_j) - lambda_hat x_bar||_inf`` over ``samples`` rows."""
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    x_bar = _check_unit(x_bar)
    acc = np.zeros_like(x_bar)
    for _, s, phi in _indicator_blocks(threshold_t, x_bar, samples, rng, flip_prob):
        acc += s @ phi
    mean = acc / samples
    lam = float(mean @ x_bar)
    return float(np.max(np.abs(mean - lam * x_bar)))


# -- error bounds ----------------------------------------------------------------

@dataclass(frozen=True)
class TheoremInputs:
    """Inputs of the L1 / L0 error bounds.

    ``nu`` is the regularization level that dominates the gradient noise
    (see :func:`concentration_nu`); ``sigma`` is derived from ``epsilon``,
    ``gamma`` and the block sizes.
    """

    p: float
    lam: float
    gamma: float
    nu: float
    k: int
    epsilon: float = 0.0
    t_conf: float = 1.0
    m1: int = 1
    m2: int = 1

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("block sizes must be positive")

    @property
    def sigma(self) -> float:
        return max(self.epsilon / self.m1, self.gamma / self.m2)


def concentration_nu(c, sigma, m, n, t_conf) -> float:
    """``2 c sqrt(sigma M (t + log N))`` for a user-supplied constant ``c``."""
    return 2.0 * c * math.sqrt(sigma * m * (t_conf + math.log(n)))


def theorem1_bound(kind, inputs: TheoremInputs) -> float:
    """Error bound on ``||x_bar - x_hat||_2`` for the L1 or L0 penalty."""
    if not inputs.gamma > 0:
        raise ValueError("bound undefined for gamma = 0")
    if not inputs.lam > 0:
        raise ValueError("bound undefined for lambda <= 0")
    scale = inputs.p * inputs.nu / (inputs.gamma * inputs.lam)
    kind = str(getattr(kind, "value", kind)).lower()
    if kind == "l1":
        return 3.0 * scale * math.sqrt(inputs.k)
    if kind == "l0":
        return math.sqrt(4.0 * scale * inputs.k)
    raise ValueError(f"no bound for penalty kind {kind!r}")
