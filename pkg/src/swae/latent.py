"""Gaussian posteriors, KL terms, the IMQ-kernel MMD estimator and sigma diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor


@dataclass
class GaussianPosterior:
    """Diagonal Gaussian ``N(mu, diag(sigma^2))``; ``sigma = exp(log_sigma)``.

    ``mu`` and ``log_sigma`` are tensors of shape ``(Z,)`` or ``(N, Z)`` so a
    whole batch of posteriors can share one object.
    """

    mu: Tensor
    log_sigma: Tensor

    def __post_init__(self):
        self.mu = ag.as_tensor(self.mu)
        self.log_sigma = ag.as_tensor(self.log_sigma)
        if self.mu.shape != self.log_sigma.shape:
            raise ValueError(f"mu {self.mu.shape} and sigma {self.log_sigma.shape} differ in shape")

    @classmethod
    def from_sigma(cls, mu, sigma) -> "GaussianPosterior":
        sigma = np.asarray(sigma, dtype=float)
        if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
            raise ValueError("sigma must be positive and finite")
        return cls(Tensor(mu), Tensor(np.log(sigma)))

    @property
    def sigma(self) -> Tensor:
        return ag.exp(self.log_sigma)

    @property
    def latent_dim(self) -> int:
        return self.mu.shape[-1]


@dataclass(frozen=True)
class KernelConfig:
    C: float

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"IMQ kernel constant must be positive, got {self.C}")

    @classmethod
    def for_latent_dim(cls, latent_dim: int) -> "KernelConfig":
        # E||x - y||^2 for independent draws from N(0, I_Z)
        return cls(2.0 * latent_dim)


def posterior_from_hidden(heads: dict[str, Tensor], h) -> GaussianPosterior:
    """Linear mean head and exp-linear sigma head over an encoder state."""
    h = ag.as_tensor(h)
    if h.shape[-1] != heads["mu.w"].shape[0]:
        raise ValueError(f"hidden size {h.shape[-1]} does not match heads {heads['mu.w'].shape}")
    mu = h @ heads["mu.w"] + heads["mu.b"]
    log_sigma = h @ heads["logsigma.w"] + heads["logsigma.b"]
    return GaussianPosterior(mu, log_sigma)


def reparameterize(post: GaussianPosterior, rng: np.random.Generator) -> Tensor:
    """``z = mu + sigma * eps`` with ``eps ~ N(0, I)`` drawn from ``rng`` (no gradient)."""
    eps = rng.standard_normal(post.mu.shape)
    return post.mu + post.sigma * eps


# ---------------------------------------------------------------------------
# KL divergences


def kl_gaussians_univariate(mu1: float, sigma1: float, mu2: float, sigma2: float) -> float:
    if sigma1 <= 0 or sigma2 <= 0:
        raise ValueError(f"standard deviations must be positive, got {sigma1}, {sigma2}")
    return math.log(sigma2 / sigma1) + (sigma1**2 + (mu1 - mu2) ** 2) / (2.0 * sigma2**2) - 0.5


def kl_to_standard_normal_tensor(post: GaussianPosterior) -> Tensor:
    """Per-example ``KL(q || N(0, I))`` summed over the last axis."""
    mu, ls = post.mu, post.log_sigma
    per_dim = 0.5 * (ag.square(mu) + ag.exp(2.0 * ls)) - ls - 0.5
    return per_dim.sum(axis=-1)


def kl_to_standard_normal(post: GaussianPosterior) -> float:
    _check_sigma(post)
    return float(kl_to_standard_normal_tensor(post).data.sum())


def aux_kl_identity_cov_tensor(post: GaussianPosterior) -> Tensor:
    """Per-example ``KL(N(mu, diag sigma^2) || N(mu, I))``; the mean cancels."""
    ls = post.log_sigma
    per_dim = 0.5 * ag.exp(2.0 * ls) - ls - 0.5
    return per_dim.sum(axis=-1)


def aux_kl_identity_cov(post: GaussianPosterior) -> float:
    _check_sigma(post)
    return float(aux_kl_identity_cov_tensor(post).data.sum())


def _check_sigma(post: GaussianPosterior) -> None:
    sigma = np.exp(post.log_sigma.data)
    if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
        raise ValueError("posterior sigma must be positive and finite")


# ---------------------------------------------------------------------------
# MMD


def imq_kernel(x, y, cfg: KernelConfig) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"imq_kernel: shapes {x.shape} and {y.shape} differ")
    d = float(np.sum((x - y) ** 2))
    return cfg.C / (cfg.C + d)


def _imq_matrix(a: Tensor, b: Tensor, C: float) -> Tensor:
    return C / (C + ag.squared_distance(a, b))


def mmd_estimate_tensor(z_post, z_prior, cfg: KernelConfig, cross_factor: float = 2.0) -> Tensor:
    """Differentiable MMD estimate between two ``(N, Z)`` sample sets.

    Within-set sums skip the diagonal and are normalised by ``N(N-1)``; the
    cross-set sum covers all pairs and is weighted by ``cross_factor / N^2``.
    ``cross_factor=2`` is the unbiased MMD^2 estimator.
    """
    z_post, z_prior = ag.as_tensor(z_post), ag.as_tensor(z_prior)
    if z_post.ndim != 2 or z_post.shape != z_prior.shape:
        raise ValueError(f"mmd_estimate: sample shapes {z_post.shape} and {z_prior.shape} must match")
    n = z_post.shape[0]
    if n < 2:
        raise ValueError(f"mmd_estimate needs at least 2 samples per set, got {n}")
    off_diag = 1.0 - np.eye(n)
    k_pp = (_imq_matrix(z_post, z_post, cfg.C) * off_diag).sum()
    k_qq = (_imq_matrix(z_prior, z_prior, cfg.C) * off_diag).sum()
    k_pq = _imq_matrix(z_post, z_prior, cfg.C).sum()
    within = 1.0 / (n * (n - 1))
    return (k_pp + k_qq) * within - k_pq * (cross_factor / (n * n))


def mmd_estimate(z_post, z_prior, cfg: KernelConfig, cross_factor: float = 2.0) -> float:
    with ag.no_grad():
        return mmd_estimate_tensor(z_post, z_prior, cfg, cross_factor).item()


# ---------------------------------------------------------------------------
# sigma diagnostics


@dataclass
class SigmaHistogram:
    """200 equal-width buckets over (0, 1) plus an overflow count for sigma >= 1."""

    counts: np.ndarray
    overflow: int
    edges: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.overflow

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def to_text(self) -> str:
        lines = [f"{m:.6f}\t{int(c)}" for m, c in zip(self.midpoints, self.counts)]
        lines.append(f">=1\t{self.overflow}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str) -> "SigmaHistogram":
        rows = [line.split("\t") for line in text.strip().split("\n")]
        counts = np.array([int(c) for _, c in rows[:-1]], dtype=np.int64)
        return cls(counts, int(rows[-1][1]), np.linspace(0.0, 1.0, len(counts) + 1))


def sigma_histogram(posteriors: Sequence[GaussianPosterior], buckets: int = 200) -> SigmaHistogram:
    if not posteriors:
        raise ValueError("sigma_histogram needs at least one posterior")
    sigmas = np.concatenate([np.exp(p.log_sigma.data).ravel() for p in posteriors])
    return histogram_of_sigmas(sigmas, buckets)


def histogram_of_sigmas(sigmas: np.ndarray, buckets: int = 200) -> SigmaHistogram:
    sigmas = np.asarray(sigmas, dtype=float).ravel()
    edges = np.linspace(0.0, 1.0, buckets + 1)
    inside = sigmas[sigmas < 1.0]
    idx = np.minimum((inside * buckets).astype(np.int64), buckets - 1)
    counts = np.bincount(idx, minlength=buckets).astype(np.int64)
    return SigmaHistogram(counts, int(np.sum(sigmas >= 1.0)), edges)


# ---------------------------------------------------------------------------
# collapse harness


def collapse_harness(
    k: float,
    sigma0: float,
    lr: float,
    steps: int,
    lambda_kl: float,
    rng: np.random.Generator,
    mu0: float = 0.0,
    target: float = 0.0,
) -> np.ndarray:
    """SGD on ``J(z) = k/2 (z - target)^2`` with ``z = mu + sigma * eps``.

    sigma receives only the sample gradient ``k (z - target) eps`` plus
    ``lambda_kl`` times the auxiliary-KL gradient ``sigma - 1/sigma``.
    Returns ``|sigma|`` after every step (the sign of sigma is not identified).
    """
    if k < 0 or sigma0 <= 0:
        raise ValueError(f"need k >= 0 and sigma0 > 0, got k={k}, sigma0={sigma0}")
    if lr <= 0 or lr * k >= 1.0:
        raise ValueError(f"unstable learning rate {lr}: need 0 < lr * k < 1 (lr < {1.0 / k if k else math.inf})")
    mu, sigma = float(mu0), float(sigma0)
    eps = rng.standard_normal(steps)
    traj = np.empty(steps)
    for t in range(steps):
        z = mu + sigma * eps[t]
        dz = k * (z - target)
        g_mu = dz
        g_sigma = dz * eps[t]
        if lambda_kl:
            g_sigma += lambda_kl * (sigma - 1.0 / sigma)
        mu -= lr * g_mu
        sigma -= lr * g_sigma
        traj[t] = abs(sigma)
    return traj
