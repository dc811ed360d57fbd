"""PNRD forward model and maximum-likelihood (EM) reconstruction of photon statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .channels import binomial_kernel, click_count_pmf
from .fockdist import DEFAULT_POLICY, DomainError, PhotonDistribution, TruncationPolicy
from .mc import ClickHistogram

LOG_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class ForwardModel:
    """matrix[j, n] = P(j clicks | n photons) for a lossy balanced N-channel detector."""

    matrix: np.ndarray
    N: int
    eta: float

    @property
    def n_max(self) -> int:
        return self.matrix.shape[1] - 1

    def predict(self, p) -> np.ndarray:
        probs = p.padded(self.n_max + 1) if isinstance(p, PhotonDistribution) else np.asarray(p)
        return self.matrix @ probs


def forward_matrix(N: int, eta: float, n_max: int) -> ForwardModel:
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"detector efficiency must lie in (0, 1], got {eta}")
    if n_max < 0:
        raise DomainError("n_max must be >= 0")
    clicks = np.array([click_count_pmf(k, N) for k in range(n_max + 1)]).T
    return ForwardModel(clicks @ binomial_kernel(n_max + 1, eta), N, eta)


def default_n_max(N: int, eta: float, cap: int = 128, tol: float = 1e-12) -> int:
    """Smallest n where P(all N click | n) is within ``tol`` of 1, capped at ``cap``."""
    all_click = forward_matrix(N, eta, cap).matrix[N]
    ok = np.flatnonzero(1.0 - all_click < tol)
    return int(ok[0]) if ok.size else cap


@dataclass
class ReconstructionResult:
    estimate: PhotonDistribution
    iterations: int
    final_log_likelihood: float
    converged: bool
    log_likelihood_history: list = field(default_factory=list)
    floored_bins: int = 0


def log_likelihood(freqs: np.ndarray, predicted: np.ndarray) -> float:
    mask = freqs > 0
    return math.fsum(freqs[mask] * np.log(np.maximum(predicted[mask], LOG_FLOOR)))


def em_reconstruct(
    hist,
    model: ForwardModel,
    max_iters: int = 100_000,
    tol: float = 1e-10,
    record_history: bool = False,
    callback: Optional[Callable[[int, np.ndarray, float], None]] = None,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> ReconstructionResult:
    """Expectation-maximization for click data under a linear positive model.

    ``hist`` is a ClickHistogram or a vector of bin frequencies.  Starts from the
    uniform distribution over 0..n_max and iterates
    p_n <- p_n * sum_j A[j, n] f_j / (A p)_j until the total-variation change per
    step drops below ``tol``.
    """
    freqs = hist.frequencies() if isinstance(hist, ClickHistogram) else np.asarray(hist, dtype=float)
    if freqs.size != model.N + 1:
        raise DomainError(f"histogram has {freqs.size - 1} channels, model has {model.N}")
    if not freqs.sum() > 0:
        raise DomainError("empty histogram")
    freqs = freqs / freqs.sum()
    A = model.matrix
    p = np.full(A.shape[1], 1.0 / A.shape[1])
    history = []
    floored = 0
    converged = False
    it = 0
    pred = A @ p
    ll = log_likelihood(freqs, pred)
    for it in range(1, max_iters + 1):
        low = pred < LOG_FLOOR
        if low.any():
            floored = max(floored, int(np.count_nonzero(low & (freqs > 0))))
        ratio = np.where(freqs > 0, freqs / np.maximum(pred, LOG_FLOOR), 0.0)
        new = p * (A.T @ ratio)
        new /= new.sum()
        change = 0.5 * np.abs(new - p).sum()
        p = new
        pred = A @ p
        ll = log_likelihood(freqs, pred)
        if record_history:
            history.append(ll)
        if callback is not None:
            callback(it, p, ll)
        if change < tol:
            converged = True
            break
    estimate = PhotonDistribution(p / math.fsum(p), 0.0, policy)
    return ReconstructionResult(estimate, it, ll, converged, history, floored)
