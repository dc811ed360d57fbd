"""Figures of merit: moments, entropies, available work and binary-channel information.

Work is always in units of k_B T (natural log).  Information is in bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, special

from .fockdist import (
    DEFAULT_POLICY,
    DomainError,
    PhotonDistribution,
    TruncationPolicy,
    thermal_pmf,
    working_probs,
)

LN2 = math.log(2.0)


@dataclass(frozen=True)
class Moments:
    """Photon-number moments.  Ratios are ``None`` where they are undefined."""

    mean: float
    variance: float
    fano: Optional[float]
    g2: Optional[float]
    mdr: Optional[float]


def moments_from(mean: float, variance: float) -> Moments:
    variance = max(variance, 0.0)
    if mean > 0:
        fano = variance / mean
        g2 = (variance + mean * mean - mean) / (mean * mean)
    else:
        fano = g2 = None
    mdr = mean / math.sqrt(variance) if variance > 0 and mean > 0 else None
    return Moments(mean, variance, fano, g2, mdr)


def moments(p: PhotonDistribution) -> Moments:
    probs = working_probs(p, slack=1e-12)
    n = np.arange(probs.size, dtype=float)
    mean = math.fsum(n * probs)
    variance = math.fsum((n - mean) ** 2 * probs)
    return moments_from(mean, variance)


def shannon_entropy(p: PhotonDistribution, base: str = "nats") -> float:
    h = math.fsum(special.entr(p.probs))
    if base == "nats":
        return h
    if base == "bits":
        return h / LN2
    raise DomainError(f"unknown entropy base {base!r}; use 'nats' or 'bits'")


def relative_entropy(p: PhotonDistribution, q: PhotonDistribution) -> float:
    """Kullback-Leibler divergence D(p||q) in nats; ``inf`` if p is not absolutely continuous on q."""
    a = working_probs(p)
    b = working_probs(q, min_length=a.size)
    a = working_probs(p, min_length=b.size)
    size = max(a.size, b.size)
    a = np.pad(a, (0, size - a.size))
    b = np.pad(b, (0, size - b.size))
    terms = special.rel_entr(a, b)
    if np.isinf(terms).any():
        return math.inf
    return max(math.fsum(terms), 0.0)


def available_work(p: PhotonDistribution, n_th_env: float) -> float:
    """Work (in k_B T) released while ``p`` equilibrates with a bath of occupation ``n_th_env``."""
    if not n_th_env > 0:
        raise DomainError("environment occupation must be > 0")
    return relative_entropy(p, thermal_pmf(n_th_env, p.policy))


def subtracted_work_series(n_th: float, m: int, policy: TruncationPolicy = DEFAULT_POLICY) -> float:
    """Closed-form series for the work of the m-photon-subtracted thermal state."""
    if not n_th > 0:
        raise DomainError("n_th must be > 0")
    log_r = math.log(n_th) - math.log1p(n_th)
    log_norm = -(m + 1) * math.log1p(n_th)
    peak = max(0, math.ceil(m * n_th))  # mode of the summand lies below the mean
    terms = []
    running = 0.0
    for n in range(policy.hard_cap + 1):
        log_c = math.lgamma(n + m + 1) - math.lgamma(n + 1) - math.lgamma(m + 1)
        weight = math.exp(log_norm + n * log_r + log_c)
        term = weight * (log_c - m * math.log1p(n_th))
        terms.append(term)
        running += term
        if n > peak and abs(term) < 1e-16 * abs(running):
            break
    return math.fsum(terms)


def work_cooling_benchmark(n_th: float) -> float:
    """Work from cooling one bath mode to its ground state: ln(1 + n_th)."""
    if n_th < 0:
        raise DomainError("n_th must be >= 0")
    return math.log1p(n_th)


def thermal_relative_entropy(n1: float, n2: float) -> float:
    """D(thermal(n1) || thermal(n2)) in closed form."""
    if not (n1 > 0 and n2 > 0):
        raise DomainError("thermal occupations must be > 0")
    return n1 * math.log(n1 / n2) + (1 + n1) * math.log((1 + n2) / (1 + n1))


def heated_work_benchmark(n_th: float, m: int) -> float:
    """Work of a thermal state heated to the mean of the m-subtracted state."""
    return thermal_relative_entropy((m + 1) * n_th, n_th)


def error_probability(n_th: float, m: int) -> float:
    """Vacuum probability of the m-subtracted thermal state (bit 1 read as 0)."""
    return (1.0 + n_th) ** (-(m + 1))


def binary_entropy(x: float) -> float:
    return float(special.entr(x) + special.entr(1.0 - x)) / LN2


@dataclass(frozen=True)
class BinaryChannel:
    """p01: send 1, read 0.  p10: send 0, read 1."""

    p01: float
    p10: float

    def __post_init__(self):
        for name in ("p01", "p10"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")

    @property
    def degenerate(self) -> bool:
        return self.p01 + self.p10 >= 1.0


def mutual_information_binary(p0A: float, channel: BinaryChannel) -> float:
    """I(A;B) in bits for input prior P(A=0) = p0A."""
    if not 0.0 <= p0A <= 1.0:
        raise DomainError("p0A must lie in [0, 1]")
    if channel.p01 + channel.p10 == 1.0:
        return 0.0
    joint = np.array([
        [p0A * (1 - channel.p10), p0A * channel.p10],
        [(1 - p0A) * channel.p01, (1 - p0A) * (1 - channel.p01)],
    ])
    prod = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    return max(math.fsum(special.rel_entr(joint, prod).ravel()) / LN2, 0.0)


def max_mutual_information_z(pE: float) -> float:
    """Z-channel capacity: log2(1 + (1-pE) pE^(pE/(1-pE)))."""
    if not 0.0 <= pE <= 1.0:
        raise DomainError("pE must lie in [0, 1]")
    if pE == 1.0:
        return 0.0
    return math.log2(1.0 + (1.0 - pE) * pE ** (pE / (1.0 - pE)))


def max_mutual_information_general(channel: BinaryChannel) -> float:
    """Closed-form capacity of the binary asymmetric channel (bits); 0 if degenerate."""
    if channel.degenerate:
        return 0.0
    a, b = channel.p10, channel.p01
    d = 1.0 - a - b
    ha, hb = binary_entropy(a), binary_entropy(b)
    return math.log2(1.0 + 2.0 ** ((ha - hb) / d)) - (1.0 - b) / d * ha + a / d * hb


def max_mutual_information_numeric(channel: BinaryChannel, eps: float = 1e-12) -> tuple:
    """Maximize I(A;B) over the prior by bounded scalar search.  Returns (capacity, p0A)."""
    res = optimize.minimize_scalar(
        lambda x: -mutual_information_binary(x, channel),
        bounds=(eps, 1.0 - eps),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return -res.fun, res.x


def thermal_info_benchmark(n_th1: float) -> float:
    """Capacity with vacuum for bit 0 and thermal(n_th1) for bit 1."""
    if not n_th1 > 0:
        raise DomainError("n_th1 must be > 0")
    return math.log2(1.0 + n_th1 * (1.0 + n_th1) ** (-(1.0 + n_th1) / n_th1))


def threshold_channel(n_th0: float, n_th1: float, n_max: int) -> BinaryChannel:
    """Channel induced by reading 'n <= n_max' as bit 0 for two thermal inputs."""
    r1 = n_th1 / (1.0 + n_th1)
    r0 = n_th0 / (1.0 + n_th0)
    return BinaryChannel(p01=1.0 - r1 ** (1 + n_max), p10=r0 ** (1 + n_max))


def optimal_threshold(n_th0: float, n_th1: float, n_cap: int = 200) -> tuple:
    """Best photon-number threshold for discriminating two thermal states.

    Returns ``(n_max, channel)``; ties resolve to the smallest ``n_max``.
    """
    if not (0 <= n_th0 < n_th1):
        raise DomainError("need 0 <= n_th0 < n_th1")
    best = None
    for n_max in range(n_cap + 1):
        ch = threshold_channel(n_th0, n_th1, n_max)
        cap = max_mutual_information_general(ch)
        if best is None or cap > best[0]:
            best = (cap, n_max, ch)
    return best[1], best[2]


@dataclass(frozen=True)
class DriveParams:
    n_th: float
    g: float  # coherent-to-thermal energy ratio, n_c = g * n_th

    @property
    def n_c(self) -> float:
        return self.g * self.n_th


def coherent_drive_moments(params: DriveParams) -> Moments:
    n, nc = params.n_th, params.n_c
    mean = n + nc
    variance = 2 * nc * n + nc + n * n + n
    return moments_from(mean, variance)


def coherent_drive_g2(g: float) -> float:
    """Closed form of g2 for the driven thermal oscillator."""
    return 1.0 + (1.0 + 2.0 * g) / (1.0 + g) ** 2
