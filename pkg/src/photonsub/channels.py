"""Beam-splitter dissipation, collection loss, multiplexed click detection and heralding."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .fockdist import (
    DEFAULT_POLICY,
    ConditioningError,
    DomainError,
    PhotonDistribution,
    TruncationPolicy,
    ideal_subtract,
    multimode_thermal_pmf,
    truncate,
    working_probs,
)


def _check_prob(name: str, value: float):
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of the subtraction set-up.

    ``R`` is the tap reflectivity (survival probability of a photon in the
    oscillator is 1 - R), ``eta_collect`` the effective efficiency of the
    heralding arm, ``m_subtract`` the number of on-off herald detectors that
    must all fire.  ``dark_click_prob`` is a per-channel spurious click
    probability on the herald detectors; off by default.
    """

    n_th: float = 2.0
    M_modes: int = 1
    R: float = 0.05
    eta_collect: float = 1.0
    m_subtract: int = 1
    N_pnrd: int = 8
    eta_pnrd: float = 1.0
    dark_click_prob: float = 0.0
    policy: TruncationPolicy = field(default=DEFAULT_POLICY)

    def __post_init__(self):
        if not (math.isfinite(self.n_th) and self.n_th >= 0):
            raise DomainError(f"n_th must be finite and >= 0, got {self.n_th}")
        if int(self.M_modes) != self.M_modes or self.M_modes < 1:
            raise DomainError("M_modes must be an integer >= 1")
        if int(self.m_subtract) != self.m_subtract or self.m_subtract < 0:
            raise DomainError("m_subtract must be an integer >= 0")
        if int(self.N_pnrd) != self.N_pnrd or self.N_pnrd < 1:
            raise DomainError("N_pnrd must be an integer >= 1")
        for name in ("R", "eta_collect", "eta_pnrd", "dark_click_prob"):
            _check_prob(name, getattr(self, name))

    def source(self) -> PhotonDistribution:
        return multimode_thermal_pmf(self.n_th, self.M_modes, self.policy)


@dataclass(frozen=True, eq=False)
class JointSplitDistribution:
    """joint[t, r]: probability of t transmitted and r reflected photons."""

    joint: np.ndarray
    policy: TruncationPolicy = field(default=DEFAULT_POLICY)

    def transmitted(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    def reflected(self) -> np.ndarray:
        return self.joint.sum(axis=0)


@dataclass(frozen=True)
class HeraldResult:
    output: PhotonDistribution
    success_probability: float


def binomial_kernel(size: int, survival: float) -> np.ndarray:
    """K[k, n] = C(n, k) s^k (1-s)^(n-k): probability that k of n photons survive."""
    n = np.arange(size)
    k = n[:, None]
    with np.errstate(invalid="ignore", over="ignore"):
        log_c = special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(np.maximum(n - k, 0) + 1)
        log_k = log_c + special.xlogy(k, survival) + special.xlogy(n - k, 1.0 - survival)
        out = np.where(k <= n, np.exp(np.where(k <= n, log_k, -np.inf)), 0.0)
    return np.nan_to_num(out, nan=0.0)


def loss_channel(p: PhotonDistribution, survival: float) -> PhotonDistribution:
    """Binomial thinning: each photon independently survives with ``survival``."""
    _check_prob("survival", survival)
    if survival == 1.0:
        return p
    full = working_probs(p)
    return truncate(binomial_kernel(full.size, survival) @ full, p.policy)


def beamsplitter_joint(p: PhotonDistribution, R: float) -> JointSplitDistribution:
    """Split every photon independently: reflected with probability R."""
    _check_prob("R", R)
    full = working_probs(p)
    size = full.size
    t = np.arange(size)[:, None]
    r = np.arange(size)[None, :]
    n = t + r
    inside = n < size
    n_c = np.where(inside, n, 0)
    log_j = (
        special.gammaln(n_c + 1) - special.gammaln(t + 1) - special.gammaln(r + 1)
        + special.xlogy(r, R) + special.xlogy(t, 1.0 - R)
    )
    with np.errstate(divide="ignore"):
        log_p = np.log(full)[n_c]
    joint = np.where(inside, np.exp(log_j + log_p), 0.0)
    return JointSplitDistribution(joint, p.policy)


@lru_cache(maxsize=4096)
def _click_row(s: int, N: int) -> tuple:
    # exact integer inclusion-exclusion: sum_l C(j,l)(-1)^l (j-l)^s = j! S(s, j)
    denom = N ** s
    row = []
    for j in range(N + 1):
        if j > s:
            row.append(0.0)
            continue
        surj = sum(math.comb(j, l) * (-1) ** l * (j - l) ** s for l in range(j + 1))
        row.append(math.comb(N, j) * surj / denom)
    return tuple(row)


def click_count_pmf(s: int, N: int) -> np.ndarray:
    """P(j clicks | s photons) for a balanced N-channel on-off detector, j = 0..N."""
    if int(s) != s or s < 0:
        raise DomainError(f"photon number must be a non-negative integer, got {s}")
    if int(N) != N or N < 1:
        raise DomainError(f"channel number must be an integer >= 1, got {N}")
    return np.array(_click_row(int(s), int(N)))


def all_click_probability(k: int, m: int) -> float:
    """Probability that all m detectors fire when k photons spread uniformly over them."""
    if m < 1:
        raise DomainError("need at least one detector")
    return float(click_count_pmf(k, m)[m])


def _herald_response(size: int, m: int, eta: float, dark: float) -> np.ndarray:
    """Probability of the all-fire herald for k = 0..size-1 reflected photons."""
    fire = np.array([
        sum(click_count_pmf(k, m)[j] * dark ** (m - j) for j in range(m + 1)) if dark
        else all_click_probability(k, m)
        for k in range(size)
    ])
    return fire @ binomial_kernel(size, eta) if eta < 1.0 else fire


def herald_from(p: PhotonDistribution, R: float, m: int, eta_collect: float = 1.0,
                dark_click_prob: float = 0.0) -> HeraldResult:
    """Condition the transmitted arm on all m herald detectors firing."""
    if m == 0:
        return HeraldResult(loss_channel(p, 1.0 - R), 1.0)
    joint = beamsplitter_joint(p, R).joint
    weight = _herald_response(joint.shape[1], m, eta_collect, dark_click_prob)
    unnorm = joint @ weight
    success = math.fsum(unnorm)
    if not success > 1e-300:
        raise ConditioningError(f"heralding probability {success:.3g} is zero")
    return HeraldResult(truncate(unnorm / success, p.policy), min(success, 1.0))


def herald(config: ExperimentConfig) -> HeraldResult:
    """Full finite-reflectivity model of the heralded state."""
    return herald_from(
        config.source(), config.R, config.m_subtract, config.eta_collect, config.dark_click_prob
    )


def multimode_subtract(p_total: PhotonDistribution, m: int) -> PhotonDistribution:
    """Mode-insensitive subtraction acting on the total-count law of symmetric modes."""
    return ideal_subtract(p_total, m)
