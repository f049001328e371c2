"""Synthetic saturated-measurement benchmark.

One trial: a K-sparse unit-norm signal, an i.i.d. Gaussian sensing matrix,
Gaussian measurement noise at a fixed variance ratio, then symmetric clip
thresholds placed so that exactly ``round(s * M)`` measurements saturate.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import GroundTruth, SaturatedDataset, clip, partition_measurements
from .solver import SolverConfig

# independent random sub-streams of one trial
STREAM_SIGNAL = 0
STREAM_MATRIX = 1
STREAM_NOISE = 2
STREAM_FLIPS = 3
STREAM_FOLDS = 4

METHODS = ("lasso", "alg1-l1", "alg1-l0", "alg1-mcp", "alg1-sl1")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to regenerate and re-solve a batch of trials.

    ``noise_level`` is the clean-to-noise variance ratio under the default
    ``noise_convention = "snr"``; ``"nsr"`` reads it the other way round.
    """

    n: int = 1000
    m: int = 500
    k: int = 100
    noise_level: float = 10.0
    saturation_ratio: float = 0.1
    trials: int = 100
    seed: int = 0
    methods: tuple = METHODS
    solver: SolverConfig = field(default_factory=SolverConfig)
    noise_convention: str = "snr"
    flip_prob: float = 0.0
    # parameter-selection defaults
    cv_folds: int = 5
    cv_grid_size: int = 20
    cv_grid_lo: float = 1e-4
    cv_grid_hi: float = 1.0
    mcp_b: float = 5.0
    sl1_scheme: str = "two-level"
    sl1_low_weight: float = 0.3
    lasso_kkt_tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if isinstance(self.solver, dict):
            object.__setattr__(self, "solver", SolverConfig(**self.solver))
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if not 0 <= self.saturation_ratio < 1:
            raise ValueError("saturation_ratio must lie in [0, 1)")
        if self.m2 >= self.m:
            raise ValueError("at least one measurement must stay unsaturated")
        if not self.noise_level > 0:
            raise ValueError("noise_level must be positive")
        if self.noise_convention not in ("snr", "nsr"):
            raise ValueError("noise_convention must be 'snr' or 'nsr'")
        if not 0 <= self.flip_prob <= 0.5:
            raise ValueError("flip_prob must lie in [0, 0.5]")
        if self.trials < 1 or self.seed < 0:
            raise ValueError("trials must be >= 1 and seed >= 0")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if self.cv_folds < 2 or self.cv_grid_size < 1:
            raise ValueError("need cv_folds >= 2 and cv_grid_size >= 1")
        if self.sl1_scheme not in ("two-level", "linear"):
            raise ValueError("sl1_scheme must be 'two-level' or 'linear'")

    @property
    def m2(self) -> int:
        return int(math.floor(self.saturation_ratio * self.m + 0.5))

    def replace(self, **changes) -> "ExperimentSpec":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return ExperimentSpec(**values)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def trial_rng(seed, trial_index, stream) -> np.random.Generator:
    """Generator for one (seed, trial, stream) triple, independent of scheduling."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(trial_index), int(stream))))


def generate_signal(n, k, rng) -> GroundTruth:
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    support = np.sort(rng.choice(n, size=k, replace=False))
    x = np.zeros(n)
    x[support] = rng.standard_normal(k)
    x /= np.linalg.norm(x)
    return GroundTruth(x_bar=x, support=support, sparsity_k=k)


def generate_sensing_matrix(m, n, rng) -> np.ndarray:
    if m < 1 or n < 1:
        raise ValueError("matrix dimensions must be positive")
    return rng.standard_normal((m, n))


def add_noise(clean, noise_level, rng, convention="snr") -> np.ndarray:
    """Add i.i.d. Gaussian noise whose variance is tied to the sample variance
    of ``clean``: ``var/noise_level`` ("snr") or ``var*noise_level`` ("nsr")."""
    if not noise_level > 0:
        raise ValueError(f"noise_level must be positive, got {noise_level}")
    clean = np.asarray(clean, dtype=float)
    if clean.shape[0] < 2:
        raise ValueError("need at least two measurements to estimate their variance")
    var = np.var(clean, ddof=1)
    noise_var = var / noise_level if convention == "snr" else var * noise_level
    return clean + math.sqrt(noise_var) * rng.standard_normal(clean.shape[0])


def compute_thresholds(noisy, m2):
    """Symmetric thresholds ``(-T, T)`` with exactly ``m2`` entries of
    ``|noisy|`` at or above ``T``.

    When two magnitudes tie across the cut no threshold can separate them;
    a warning is issued and ``T`` is set to the tied magnitude.
    """
    a = np.sort(np.abs(np.asarray(noisy, dtype=float)))[::-1]
    if not 0 <= m2 < a.shape[0]:
        raise ValueError(f"need 0 <= m2 < M, got m2={m2}, M={a.shape[0]}")
    if m2 == 0:
        t = a[0] * (1 + 1e-6)
        if t == 0:
            t = 1e-300
        return -t, t
    hi, lo = a[m2 - 1], a[m2]
    if hi == lo:
        warnings.warn("tied magnitudes at the saturation cut; breaking ties by row index",
                      RuntimeWarning, stacklevel=2)
        return -hi, hi
    mid = 0.5 * (hi + lo)
    t = mid if lo < mid < hi else hi
    return -t, t


def _break_ties(noisy, t, m2):
    """Pull tied entries beyond the quota just inside the threshold."""
    noisy = noisy.copy()
    at_or_above = np.flatnonzero(np.abs(noisy) >= t)
    excess = at_or_above.size - m2
    if excess > 0:
        tied = np.flatnonzero(np.abs(noisy) == t)
        for i in tied[::-1][:excess]:
            noisy[i] = np.nextafter(noisy[i], 0.0)
    return noisy


def synthesize(spec: ExperimentSpec, trial_index: int):
    """Deterministic (ground truth, dataset) pair for one trial of ``spec``."""
    truth = generate_signal(spec.n, spec.k, trial_rng(spec.seed, trial_index, STREAM_SIGNAL))
    phi = generate_sensing_matrix(spec.m, spec.n, trial_rng(spec.seed, trial_index, STREAM_MATRIX))
    noisy = add_noise(phi @ truth.x_bar, spec.noise_level,
                      trial_rng(spec.seed, trial_index, STREAM_NOISE), spec.noise_convention)
    y_min, y_max = compute_thresholds(noisy, spec.m2)
    noisy = _break_ties(noisy, y_max, spec.m2)
    y = clip(noisy, y_min, y_max)
    if spec.flip_prob > 0:
        # a flipped indicator is recorded at the opposite threshold
        flips = trial_rng(spec.seed, trial_index, STREAM_FLIPS).random(spec.m) < spec.flip_prob
        sat = (y == y_min) | (y == y_max)
        y = np.where(flips & sat, -y, y)
    return truth, partition_measurements(phi, y, y_min, y_max)


def realized_saturation(dataset: SaturatedDataset) -> float:
    return dataset.m2 / dataset.m
