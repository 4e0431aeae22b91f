"""Estimate containers: batch-means errors, effective sample size, mergeable moments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ComplexEstimate",
    "MomentAccumulator",
    "mean_estimate",
    "ratio_estimate",
    "MIN_BATCHES",
    "ESS_FLOOR",
]

MIN_BATCHES = 16
ESS_FLOOR = 10.0


@dataclass
class ComplexEstimate:
    """A complex-valued Monte Carlo estimate with componentwise standard errors."""

    value: complex
    stderr_re: float
    stderr_im: float
    n_samples: int
    seed: int | None = None
    ess: float = float("nan")
    unreliable: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def stderr(self) -> float:
        return float(np.hypot(self.stderr_re, self.stderr_im))

    def combined_sigma(self, other_stderr: float = 0.0) -> float:
        return float(np.hypot(self.stderr, other_stderr))


def batch_means(samples: np.ndarray, n_batches: int = MIN_BATCHES):
    """Mean and batch-means standard error (per complex component)."""
    samples = np.asarray(samples)
    n = len(samples)
    n_batches = min(n_batches, n) if n else 1
    if n == 0:
        raise ValueError("no samples")
    usable = n - n % n_batches
    mean = samples.mean()
    if n_batches < 2 or usable < n_batches:
        return mean, 0.0, 0.0
    bm = samples[:usable].reshape(n_batches, -1).mean(axis=1)
    se_re = np.std(bm.real, ddof=1) / np.sqrt(n_batches)
    se_im = np.std(bm.imag, ddof=1) / np.sqrt(n_batches) if np.iscomplexobj(samples) else 0.0
    return mean, float(se_re), float(se_im)


def weight_ess(weights: np.ndarray) -> float:
    """Effective sample size from the modulus spread of complex weights."""
    a = np.abs(np.asarray(weights))
    denom = np.sum(a * a)
    if denom == 0:
        return 0.0
    return float(np.sum(a) ** 2 / denom)


def mean_estimate(samples: np.ndarray, seed=None) -> ComplexEstimate:
    """Plain-mean estimate of complex samples with batch-means errors."""
    samples = np.asarray(samples, dtype=complex)
    mean, se_re, se_im = batch_means(samples)
    ess = weight_ess(samples) if np.any(samples != 0) else 0.0
    return ComplexEstimate(
        value=complex(mean),
        stderr_re=se_re,
        stderr_im=se_im,
        n_samples=len(samples),
        seed=seed,
        ess=ess,
        unreliable=False,
    )


def ratio_estimate(numerator: np.ndarray, weights: np.ndarray, seed=None) -> ComplexEstimate:
    """Reweighting ratio E[num]/E[w] with batch-means errors on the batch ratios."""
    numerator = np.asarray(numerator, dtype=complex)
    weights = np.asarray(weights, dtype=complex)
    if numerator.shape != weights.shape:
        raise ValueError("numerator/weight length mismatch")
    n = len(weights)
    n_batches = min(MIN_BATCHES, n)
    usable = n - n % n_batches
    value = numerator.mean() / weights.mean()
    if n_batches >= 2 and usable >= n_batches:
        num_b = numerator[:usable].reshape(n_batches, -1).mean(axis=1)
        den_b = weights[:usable].reshape(n_batches, -1).mean(axis=1)
        good = den_b != 0
        if good.sum() >= 2:
            ratios = num_b[good] / den_b[good]
            m = good.sum()
            se_re = float(np.std(ratios.real, ddof=1) / np.sqrt(m))
            se_im = float(np.std(ratios.imag, ddof=1) / np.sqrt(m))
        else:
            se_re = se_im = 0.0
    else:
        se_re = se_im = 0.0
    ess = weight_ess(weights)
    return ComplexEstimate(
        value=complex(value),
        stderr_re=se_re,
        stderr_im=se_im,
        n_samples=n,
        seed=seed,
        ess=ess,
        unreliable=ess < ESS_FLOOR,
    )


class MomentAccumulator:
    """Count / mean / M2 sufficient statistics for a real vector stream.

    Merging two accumulators (Chan et al. pairwise update) is associative and
    order-independent up to rounding, which is what makes multi-chain records
    poolable after the fact.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros((dim, dim))

    def add_samples(self, samples: np.ndarray):
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        other = MomentAccumulator(self.dim)
        other.count = samples.shape[0]
        other.mean = samples.mean(axis=0)
        centred = samples - other.mean
        other.m2 = centred.T @ centred
        self.merge(other)
        return self

    def merge(self, other: "MomentAccumulator"):
        if other.dim != self.dim:
            raise ValueError("dimension mismatch in moment merge")
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean.copy(), other.m2.copy()
            return self
        delta = other.mean - self.mean
        total = self.count + other.count
        self.m2 = (
            self.m2
            + other.m2
            + np.outer(delta, delta) * self.count * other.count / total
        )
        self.mean = self.mean + delta * other.count / total
        self.count = total
        return self

    def covariance(self) -> np.ndarray:
        if self.count < 2:
            return np.full((self.dim, self.dim), np.nan)
        return self.m2 / (self.count - 1)

    def mean_stderr(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance()) / self.count)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean.tolist(),
            "m2": self.m2.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MomentAccumulator":
        mean = np.asarray(data["mean"], dtype=float)
        acc = cls(len(mean))
        acc.count = int(data["count"])
        acc.mean = mean
        acc.m2 = np.asarray(data["m2"], dtype=float)
        return acc
