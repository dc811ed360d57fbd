"""Event-level Monte Carlo of the heralded subtraction experiment.

Every photon is followed individually: it reflects at the tap with probability
R, survives collection with eta_collect and lands on a uniformly random herald
channel; transmitted photons survive the PNRD with eta_pnrd and land on one of
N_pnrd channels.  A channel clicks iff it receives at least one photon.

Shots are generated in fixed-size chunks.  Chunk ``i`` draws from its own Philox
stream keyed by (master_seed, stream_id, i), so results do not depend on how
chunks are scheduled across workers.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

import numpy as np

from .channels import ExperimentConfig
from .fockdist import DomainError, PhotonDistribution, working_probs

CHUNK = 1 << 16


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2 ** 64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        if self.stream_id < 0:
            raise DomainError("stream_id must be >= 0")

    def generator(self, chunk: int) -> np.random.Generator:
        ss = np.random.SeedSequence([self.master_seed, self.stream_id, chunk])
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ShotRecord:
    n_source: int
    n_transmitted: int
    n_reflected_detected: int
    herald_clicks: int  # bit i set iff herald channel i fired
    heralded: bool
    pnrd_clicks: int


@dataclass(frozen=True, eq=False)
class ShotBatch:
    """Columnar block of shots; row i is one ShotRecord."""

    n_source: np.ndarray
    n_transmitted: np.ndarray
    n_reflected_detected: np.ndarray
    herald_clicks: np.ndarray
    heralded: np.ndarray
    pnrd_clicks: np.ndarray

    def __len__(self):
        return self.n_source.size

    def records(self) -> Iterator[ShotRecord]:
        for i in range(len(self)):
            yield ShotRecord(
                int(self.n_source[i]), int(self.n_transmitted[i]),
                int(self.n_reflected_detected[i]), int(self.herald_clicks[i]),
                bool(self.heralded[i]), int(self.pnrd_clicks[i]),
            )

    @classmethod
    def from_records(cls, records: Iterable[ShotRecord]) -> "ShotBatch":
        rows = list(records)
        col = lambda name, dt: np.array([getattr(r, name) for r in rows], dtype=dt)  # noqa: E731
        return cls(
            col("n_source", np.int64), col("n_transmitted", np.int64),
            col("n_reflected_detected", np.int64), col("herald_clicks", np.uint64),
            col("heralded", bool), col("pnrd_clicks", np.int64),
        )


@dataclass(frozen=True, eq=False)
class ClickHistogram:
    counts: np.ndarray
    total_shots: int
    heralded_shots: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size < 2:
            raise DomainError("histogram needs counts for j = 0..N with N >= 1")
        if np.any(counts < 0):
            raise DomainError("negative counts")
        if int(counts.sum()) != self.heralded_shots:
            raise DomainError("counts must sum to heralded_shots")
        if self.heralded_shots > self.total_shots:
            raise DomainError("heralded_shots exceeds total_shots")
        object.__setattr__(self, "counts", counts)

    @property
    def N(self) -> int:
        return self.counts.size - 1

    def frequencies(self) -> np.ndarray:
        if self.heralded_shots == 0:
            raise DomainError("empty histogram")
        return self.counts / self.heralded_shots

    def to_dict(self) -> dict:
        return {
            "channels": self.N,
            "total_shots": int(self.total_shots),
            "heralded_shots": int(self.heralded_shots),
            "counts": [int(c) for c in self.counts],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict, N: int = None) -> "ClickHistogram":
        counts = list(d["counts"])
        channels = d.get("channels", len(counts) - 1)
        if N is not None and channels != N:
            raise DomainError(f"histogram has {channels} channels, expected {N}")
        if len(counts) != channels + 1:
            raise DomainError(f"expected {channels + 1} bins, got {len(counts)}")
        heralded = int(d.get("heralded_shots", sum(counts)))
        return cls(np.array(counts), int(d.get("total_shots", heralded)), heralded, d.get("meta", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# channels: {self.N}\n# total_shots: {self.total_shots}\n")
        buf.write(f"# heralded_shots: {self.heralded_shots}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j[clicks]", "count[events]"])
        for j, c in enumerate(self.counts):
            w.writerow([j, int(c)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, N: int) -> "ClickHistogram":
        meta = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif line.strip():
                rows.append(line)
        reader = csv.reader(rows)
        next(reader)  # header
        counts = np.zeros(N + 1, dtype=np.int64)
        for j_text, c_text in reader:
            j, c = int(j_text), int(c_text)
            if not 0 <= j <= N:
                raise DomainError(f"click bin j={j} outside 0..{N}")
            counts[j] += c
        heralded = int(counts.sum())
        total = int(meta.get("total_shots", heralded))
        return cls(counts, total, heralded)

    @classmethod
    def load(cls, path, N: int) -> "ClickHistogram":
        text = open(path, encoding="utf-8").read()
        if str(path).endswith(".json"):
            return cls.from_dict(json.loads(text), N)
        return cls.from_csv(text, N)


def _thermal_counts(rng: np.random.Generator, size: int, n_th: float, modes: int) -> np.ndarray:
    # inverse CDF of the geometric law: P(n >= k) = r^k
    if n_th == 0:
        return np.zeros(size, dtype=np.int64)
    mu = n_th / modes
    log_r = math.log(mu) - math.log1p(mu)
    u = 1.0 - rng.random((size, modes))
    return np.floor(np.log(u) / log_r).astype(np.int64).sum(axis=1)


def _channel_hits(shot_of, hit, channels, size, rng):
    hits = np.zeros((size, channels), dtype=bool)
    lanes = rng.integers(0, channels, shot_of.size)
    hits[shot_of[hit], lanes[hit]] = True
    return hits


def _pnrd_stage(rng, shot_of, arriving, size, N, eta):
    survive = arriving & (rng.random(shot_of.size) < eta)
    return _channel_hits(shot_of, survive, N, size, rng).sum(axis=1)


def _simulate_chunk(config: ExperimentConfig, seed: SeedSpec, chunk: int, size: int) -> ShotBatch:
    rng = seed.generator(chunk)
    m = config.m_subtract
    n = _thermal_counts(rng, size, config.n_th, config.M_modes)
    shot_of = np.repeat(np.arange(size), n)
    reflect = rng.random(shot_of.size) < config.R
    collected = reflect & (rng.random(shot_of.size) < config.eta_collect)
    if m > 0:
        hits = _channel_hits(shot_of, collected, m, size, rng)
        if config.dark_click_prob > 0:
            hits |= rng.random((size, m)) < config.dark_click_prob
        mask = (hits.astype(np.uint64) << np.arange(m, dtype=np.uint64)).sum(axis=1, dtype=np.uint64)
        heralded = hits.all(axis=1)
    else:
        mask = np.zeros(size, dtype=np.uint64)
        heralded = np.ones(size, dtype=bool)
    transmitted = ~reflect
    pnrd = _pnrd_stage(rng, shot_of, transmitted, size, config.N_pnrd, config.eta_pnrd)
    return ShotBatch(
        n_source=n,
        n_transmitted=np.bincount(shot_of[transmitted], minlength=size),
        n_reflected_detected=np.bincount(shot_of[collected], minlength=size),
        herald_clicks=mask,
        heralded=heralded,
        pnrd_clicks=pnrd,
    )


def _chunks(shots: int):
    for i, start in enumerate(range(0, shots, CHUNK)):
        yield i, min(CHUNK, shots - start)


def simulate_batches(config: ExperimentConfig, shots: int, seed: SeedSpec = SeedSpec(),
                     workers: int = 1) -> Iterator[ShotBatch]:
    """Yield shot batches in chunk order.  ``workers > 1`` runs chunks in processes."""
    if shots < 1:
        raise DomainError("shots must be >= 1")
    if config.m_subtract > 64:
        raise DomainError("at most 64 herald channels are supported")
    plan = list(_chunks(shots))
    if workers <= 1:
        for i, size in plan:
            yield _simulate_chunk(config, seed, i, size)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_simulate_chunk, config, seed, i, size) for i, size in plan]
        for fut in futures:
            yield fut.result()


def simulate_shots(config: ExperimentConfig, shots: int, seed: SeedSpec = SeedSpec()) -> Iterator[ShotRecord]:
    for batch in simulate_batches(config, shots, seed):
        yield from batch.records()


Records = Union[ShotBatch, Iterable[ShotBatch], Iterable[ShotRecord]]


def _as_batches(records: Records) -> Iterator[ShotBatch]:
    if isinstance(records, ShotBatch):
        yield records
        return
    pending = []
    for item in records:
        if isinstance(item, ShotBatch):
            yield item
        else:
            pending.append(item)
    if pending:
        yield ShotBatch.from_records(pending)


def empirical_distribution(records: Records, selector: str = "transmitted-heralded") -> PhotonDistribution:
    """Normalized photon-number histogram of the source or of heralded transmitted light."""
    if selector not in ("source", "transmitted-heralded"):
        raise DomainError(f"unknown selector {selector!r}")
    counts = np.zeros(1, dtype=np.int64)
    for b in _as_batches(records):
        values = b.n_source if selector == "source" else b.n_transmitted[b.heralded]
        if values.size:
            c = np.bincount(values)
            if c.size > counts.size:
                counts = np.pad(counts, (0, c.size - counts.size))
            counts[: c.size] += c
    if counts.sum() == 0:
        raise DomainError("no records selected")
    return PhotonDistribution.from_probs(counts)


def click_histogram(records: Records, N: int = None) -> ClickHistogram:
    """PNRD click histogram over heralded shots."""
    total = heralded = 0
    counts = None
    for b in _as_batches(records):
        width = (N if N is not None else int(b.pnrd_clicks.max(initial=0))) + 1
        c = np.bincount(b.pnrd_clicks[b.heralded], minlength=width)
        if counts is None:
            counts = np.zeros(max(width, 2), dtype=np.int64)
        if c.size > counts.size:
            counts = np.pad(counts, (0, c.size - counts.size))
        counts[: c.size] += c
        total += len(b)
        heralded += int(b.heralded.sum())
    if counts is None:
        raise DomainError("no records")
    return ClickHistogram(counts, total, heralded)


@dataclass
class SimulationSummary:
    """Streaming aggregate of a simulation run."""

    config: ExperimentConfig
    shots: int
    heralded_shots: int
    histogram: ClickHistogram
    source_counts: np.ndarray
    heralded_counts: np.ndarray

    @property
    def heralding_rate(self) -> float:
        return self.heralded_shots / self.shots

    @property
    def heralding_rate_stderr(self) -> float:
        r = self.heralding_rate
        return math.sqrt(max(r * (1 - r), 0.0) / self.shots)

    def source_distribution(self) -> PhotonDistribution:
        return PhotonDistribution.from_probs(self.source_counts)

    def heralded_distribution(self) -> PhotonDistribution:
        if self.heralded_shots == 0:
            raise DomainError("no heralded shots")
        return PhotonDistribution.from_probs(self.heralded_counts)


def _accumulate(acc: np.ndarray, values: np.ndarray) -> np.ndarray:
    c = np.bincount(values) if values.size else np.zeros(1, dtype=np.int64)
    if c.size > acc.size:
        acc = np.pad(acc, (0, c.size - acc.size))
    acc[: c.size] += c
    return acc


def run_simulation(config: ExperimentConfig, shots: int, seed: SeedSpec = SeedSpec(),
                   workers: int = 1) -> SimulationSummary:
    """Simulate and aggregate without keeping per-shot records in memory."""
    hist = np.zeros(config.N_pnrd + 1, dtype=np.int64)
    source = np.zeros(1, dtype=np.int64)
    heralded = np.zeros(1, dtype=np.int64)
    for b in simulate_batches(config, shots, seed, workers):
        hist += np.bincount(b.pnrd_clicks[b.heralded], minlength=config.N_pnrd + 1)
        source = _accumulate(source, b.n_source)
        heralded = _accumulate(heralded, b.n_transmitted[b.heralded])
    n_her = int(hist.sum())
    return SimulationSummary(config, shots, n_her, ClickHistogram(hist, shots, n_her), source, heralded)


def pnrd_shots(source: PhotonDistribution, shots: int, N: int, eta: float,
               seed: SeedSpec = SeedSpec()) -> ClickHistogram:
    """Draw photon numbers from ``source`` and detect them on an N-channel PNRD."""
    if shots < 1:
        raise DomainError("shots must be >= 1")
    cdf = np.cumsum(working_probs(source))
    cdf /= cdf[-1]
    counts = np.zeros(N + 1, dtype=np.int64)
    for i, size in _chunks(shots):
        rng = seed.generator(i)
        n = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), cdf.size - 1)
        shot_of = np.repeat(np.arange(size), n)
        clicks = _pnrd_stage(rng, shot_of, np.ones(shot_of.size, dtype=bool), size, N, eta)
        counts += np.bincount(clicks, minlength=N + 1)
    return ClickHistogram(counts, shots, shots)
