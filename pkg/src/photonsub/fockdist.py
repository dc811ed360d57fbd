"""Photon-number distributions: construction, truncation and ideal subtraction.

Every state in this package is diagonal in the Fock basis, so a state is just a
probability vector over n = 0..n_max.  Vectors are truncated adaptively: the
constructors keep the smallest support whose analytic tail is below the policy
tolerance, renormalize, and remember the discarded mass in ``tail_mass``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats


class DomainError(ValueError):
    """A parameter lies outside the domain of the requested operation."""


class ConditioningError(ArithmeticError):
    """Conditioning on an event that has (numerically) zero probability."""


@dataclass(frozen=True)
class TruncationPolicy:
    tail_tolerance: float = 1e-12
    hard_cap: int = 4096

    def __post_init__(self):
        if not 0.0 < self.tail_tolerance < 1.0:
            raise DomainError(f"tail_tolerance must lie in (0, 1), got {self.tail_tolerance}")
        if self.hard_cap < 1:
            raise DomainError(f"hard_cap must be >= 1, got {self.hard_cap}")


DEFAULT_POLICY = TruncationPolicy()


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Immutable truncated photon-number distribution.

    Parameters
    ----------
    probs : array_like
        Probabilities p_n for n = 0..n_max.  Stored as a read-only float array.
    tail_mass : float
        Mass above n_max that was discarded before renormalization.  Zero means
        the support is exact (no truncation happened).
    policy : TruncationPolicy
        Truncation settings inherited by every transform of this distribution.
    """

    probs: np.ndarray
    tail_mass: float = 0.0
    policy: TruncationPolicy = field(default=DEFAULT_POLICY)

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise DomainError("probs must be a non-empty 1-D sequence")
        if np.any(~np.isfinite(probs)) or np.any(probs < 0):
            raise DomainError("probabilities must be finite and non-negative")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probs.size)

    def total(self) -> float:
        return math.fsum(self.probs)

    def mean(self) -> float:
        return math.fsum(self.support * self.probs)

    def __len__(self):
        return self.probs.size

    def __getitem__(self, n):
        if isinstance(n, (int, np.integer)) and n > self.n_max:
            return 0.0
        return self.probs[n]

    def padded(self, length: int) -> np.ndarray:
        """Probabilities zero-padded (or cut) to ``length`` entries."""
        out = np.zeros(length)
        k = min(length, self.probs.size)
        out[:k] = self.probs[:k]
        return out

    @classmethod
    def from_probs(cls, probs, policy: TruncationPolicy = DEFAULT_POLICY) -> "PhotonDistribution":
        """Normalize an explicit finite-support vector (no tail)."""
        probs = np.asarray(probs, dtype=float)
        total = math.fsum(probs)
        if not total > 0:
            raise DomainError("cannot normalize an all-zero vector")
        return cls(_trim_zeros(probs / total), 0.0, policy)

    @classmethod
    def point_mass(cls, n: int, policy: TruncationPolicy = DEFAULT_POLICY) -> "PhotonDistribution":
        probs = np.zeros(n + 1)
        probs[n] = 1.0
        return cls(probs, 0.0, policy)


def _trim_zeros(probs: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(probs)
    return probs[: nz[-1] + 1] if nz.size else probs[:1]


def _check_finite_nonneg(name: str, value: float):
    if not math.isfinite(value) or value < 0:
        raise DomainError(f"{name} must be finite and >= 0, got {value}")


def truncate(probs: np.ndarray, policy: TruncationPolicy) -> PhotonDistribution:
    """Cut a (nearly normalized) vector at the smallest n whose tail is below tolerance.

    Mass already missing from ``probs`` (1 - sum) is counted as tail as well.
    """
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    total = math.fsum(probs)
    if not total > 0:
        raise ConditioningError("distribution has no mass")
    probs = probs / total
    # tails[n] = mass strictly above n
    tails = np.concatenate([np.cumsum(probs[::-1])[::-1][1:], [0.0]])
    ok = np.flatnonzero(tails < policy.tail_tolerance)
    n_max = min(int(ok[0]), policy.hard_cap)
    kept = probs[: n_max + 1]
    tail = math.fsum(probs[n_max + 1:])
    _require_tail(tail, policy, "truncate")
    return PhotonDistribution(_trim_zeros(kept / math.fsum(kept)), tail, policy)


def _from_log_pmf(log_p: np.ndarray, tail: float, policy: TruncationPolicy) -> PhotonDistribution:
    p = np.exp(log_p)
    return PhotonDistribution(p / math.fsum(p), float(tail), policy)


def _require_tail(tail: float, policy: TruncationPolicy, what: str):
    if tail >= policy.tail_tolerance:
        raise DomainError(
            f"{what}: tail mass {tail:.3g} above tolerance at hard_cap={policy.hard_cap}; "
            "raise hard_cap or loosen tail_tolerance"
        )


def thermal_pmf(n_th: float, policy: TruncationPolicy = DEFAULT_POLICY) -> PhotonDistribution:
    """Bose-Einstein law p_n = n_th^n / (1 + n_th)^(n+1)."""
    _check_finite_nonneg("n_th", n_th)
    if n_th == 0:
        return PhotonDistribution([1.0], 0.0, policy)
    log_r = math.log(n_th) - math.log1p(n_th)
    # geometric tail above n is r^(n+1)
    n_max = min(math.floor(math.log(policy.tail_tolerance) / log_r), policy.hard_cap)
    tail = math.exp((n_max + 1) * log_r)
    _require_tail(tail, policy, "thermal_pmf")
    n = np.arange(n_max + 1)
    return _from_log_pmf(n * log_r - math.log1p(n_th), tail, policy)


def poisson_pmf(mean: float, policy: TruncationPolicy = DEFAULT_POLICY) -> PhotonDistribution:
    """Poissonian (coherent-state) photon statistics."""
    _check_finite_nonneg("mean", mean)
    if mean == 0:
        return PhotonDistribution([1.0], 0.0, policy)
    n = np.arange(policy.hard_cap + 1)
    sf = stats.poisson.sf(n, mean)
    n_max = _first_below(sf, policy)
    return _from_log_pmf(stats.poisson.logpmf(n[: n_max + 1], mean), sf[n_max], policy)


def _first_below(sf: np.ndarray, policy: TruncationPolicy) -> int:
    ok = np.flatnonzero(sf < policy.tail_tolerance)
    if ok.size == 0:
        _require_tail(float(sf[-1]), policy, "truncation")
    return int(ok[0])


def multimode_thermal_pmf(
    n_th_total: float, M: int, policy: TruncationPolicy = DEFAULT_POLICY
) -> PhotonDistribution:
    """Total photon count of M identical thermal modes sharing mean ``n_th_total``.

    Negative binomial: p_n = C(n+M-1, n) mu^n / (1+mu)^(n+M), mu = n_th_total / M.
    """
    if int(M) != M or M < 1:
        raise DomainError(f"mode number M must be an integer >= 1, got {M}")
    _check_finite_nonneg("n_th_total", n_th_total)
    if n_th_total == 0:
        return PhotonDistribution([1.0], 0.0, policy)
    mu = n_th_total / M
    success = 1.0 / (1.0 + mu)
    n = np.arange(policy.hard_cap + 1)
    sf = stats.nbinom.sf(n, M, success)
    n_max = _first_below(sf, policy)
    return _from_log_pmf(stats.nbinom.logpmf(n[: n_max + 1], M, success), sf[n_max], policy)


def subtracted_thermal_pmf(
    n_th: float, m: int, policy: TruncationPolicy = DEFAULT_POLICY
) -> PhotonDistribution:
    """Thermal light after ideal subtraction of m photons.

    p_n = C(n+m, m) (n_th/(1+n_th))^n / (1+n_th)^(m+1), evaluated in log space.
    """
    if int(m) != m or m < 0:
        raise DomainError(f"m must be a non-negative integer, got {m}")
    _check_finite_nonneg("n_th", n_th)
    if n_th == 0:
        if m == 0:
            return PhotonDistribution([1.0], 0.0, policy)
        raise ConditioningError("cannot subtract photons from the vacuum")
    log_r = math.log(n_th) - math.log1p(n_th)
    n = np.arange(policy.hard_cap + 1)
    # P(N > n) for the negative binomial with m+1 trials
    sf = special.betainc(n + 1.0, m + 1.0, math.exp(log_r))
    n_max = _first_below(sf, policy)
    n = n[: n_max + 1]
    log_c = special.gammaln(n + m + 1) - special.gammaln(n + 1) - math.lgamma(m + 1)
    return _from_log_pmf(log_c + n * log_r - (m + 1) * math.log1p(n_th), sf[n_max], policy)


def working_probs(p: PhotonDistribution, slack: float = 1e-8, min_length: int = 0) -> np.ndarray:
    """Probability vector with the truncated tail restored by geometric continuation.

    When ``p`` was truncated (tail_mass > 0) the missing tail is modelled as
    p_{n_max} * rho^k with rho fixed by matching the recorded tail mass; this is
    exact for thermal light and close for negative-binomial or Poissonian tails.
    The continuation runs until the remaining extrapolated mass drops below
    ``slack * tail_tolerance`` or the hard cap is reached.  The result is
    normalized.  ``min_length`` forces the continuation to at least that many
    entries (still bounded by the hard cap).
    """
    probs = np.asarray(p.probs)
    t = p.tail_mass
    last = probs[-1] * (1.0 - t)
    if t <= 0 or last <= 0:
        return probs.copy()
    rho = t / (t + last)
    target = slack * p.policy.tail_tolerance
    # remaining mass after k extra entries: t * rho^k
    k = math.ceil(math.log(target / t) / math.log(rho)) if t > target else 0
    k = max(0, k, min_length - probs.size)
    k = min(k, p.policy.hard_cap - p.n_max)
    ext = probs[-1] * rho ** np.arange(1, k + 1)
    full = np.concatenate([probs, ext])
    return full / math.fsum(full)


def _falling_log_weights(length: int, m: int) -> np.ndarray:
    """log[(n+m)!/n!] for n = 0..length-1."""
    n = np.arange(length)
    return special.gammaln(n + m + 1) - special.gammaln(n + 1)


def ideal_subtract(p: PhotonDistribution, m: int) -> PhotonDistribution:
    """Apply a^m: p'_n proportional to (n+m)!/n! * p_{n+m}, renormalized."""
    if int(m) != m or m < 0:
        raise DomainError(f"m must be a non-negative integer, got {m}")
    if m == 0:
        return p
    full = working_probs(p)
    if full.size <= m or not np.any(full[m:] > 0):
        raise ConditioningError(f"input has no support at n >= {m}; subtraction impossible")
    shifted = full[m:]
    with np.errstate(divide="ignore"):
        log_w = _falling_log_weights(shifted.size, m) + np.log(shifted)
    log_w -= np.max(log_w)
    return truncate(np.exp(log_w), p.policy)


def total_variation(p, q) -> float:
    """Total-variation distance between two distributions or raw vectors."""
    a = p.probs if isinstance(p, PhotonDistribution) else np.asarray(p, dtype=float)
    b = q.probs if isinstance(q, PhotonDistribution) else np.asarray(q, dtype=float)
    size = max(a.size, b.size)
    a = np.pad(a, (0, size - a.size))
    b = np.pad(b, (0, size - b.size))
    return 0.5 * math.fsum(np.abs(a - b))
