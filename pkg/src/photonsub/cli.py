"""Command-line front end.

    photonsub stats | work | info | sweep-r | sweep-m | simulate | reconstruct | figures

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import partial
from pathlib import Path

import numpy as np

from .channels import ExperimentConfig, herald, multimode_subtract
from .fockdist import (
    ConditioningError,
    DomainError,
    multimode_thermal_pmf,
    subtracted_thermal_pmf,
)
from .mc import ClickHistogram, SeedSpec, run_simulation
from .tables import ResultTable, provenance
from .thermo import (
    available_work,
    error_probability,
    heated_work_benchmark,
    max_mutual_information_z,
    moments,
    relative_entropy,
    shannon_entropy,
    thermal_info_benchmark,
    work_cooling_benchmark,
)
from .tomo import default_n_max, em_reconstruct, forward_matrix

EXIT_USAGE = 2
EXIT_NUMERIC = 3
FLAG_MARGIN = 1e-12


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


@dataclass
class RunConfig:
    n_th: float = 2.0
    m: list = field(default_factory=lambda: [0, 1, 2, 3])
    reflectivity: float = 0.05
    eta: float = 0.5
    eta_pnrd: float = 1.0
    channels: int = 8
    modes: list = field(default_factory=lambda: [1])
    r_grid: list = field(default_factory=lambda: list(np.linspace(0.001, 0.5, 60)))
    model: str = "ideal"
    shots: int = 1_000_000
    seed: int = 0
    stream: int = 0
    format: str = "csv"
    out: str = "results"
    jobs: int = 1
    max_iters: int = 100_000
    histogram: str = ""

    def validate(self):
        if not self.m:
            raise UsageError("--m needs at least one value")
        if any(int(v) != v or v < 0 for v in self.m):
            raise UsageError("--m values must be non-negative integers")
        if not self.modes or any(int(v) != v or v < 1 for v in self.modes):
            raise UsageError("--modes values must be integers >= 1")
        if not self.r_grid or any(not 0 <= r <= 1 for r in self.r_grid):
            raise UsageError("--r-grid values must lie in [0, 1]")
        if self.model not in ("ideal", "full"):
            raise UsageError("--model must be 'ideal' or 'full'")
        if self.format not in ("csv", "json"):
            raise UsageError("--format must be 'csv' or 'json'")
        if not (math.isfinite(self.n_th) and self.n_th > 0):
            raise UsageError("--n-th must be > 0")
        if not 0 <= self.reflectivity <= 1:
            raise UsageError("--reflectivity must lie in [0, 1]")
        if not 0 < self.eta <= 1 or not 0 < self.eta_pnrd <= 1:
            raise UsageError("efficiencies must lie in (0, 1]")
        if self.channels < 1:
            raise UsageError("--channels must be >= 1")
        if self.shots < 1:
            raise UsageError("--shots must be >= 1")
        if self.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        if self.max_iters < 1:
            raise UsageError("--max-iters must be >= 1")

    def physics(self) -> dict:
        """Fields that determine results (output location and parallelism excluded)."""
        d = asdict(self)
        for key in ("out", "format", "jobs"):
            d.pop(key)
        d["r_grid"] = [float(r) for r in d["r_grid"]]
        return d


# ---------------------------------------------------------------------------
# computations


def conditioned_state(n_th, m, model, R, eta, M=1):
    """Return (state, success_probability); success is None for the ideal model."""
    if model == "ideal":
        if M == 1:
            return subtracted_thermal_pmf(n_th, m), None
        return multimode_subtract(multimode_thermal_pmf(n_th, M), m), None
    res = herald(ExperimentConfig(n_th=n_th, M_modes=M, R=R, eta_collect=eta, m_subtract=m))
    return res.output, res.success_probability


def _pmap(fn, items, jobs):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))  # preserves grid order


def _stats_row(m, n_th, model, R, eta):
    state, success = conditioned_state(n_th, m, model, R, eta)
    mo = moments(state)
    return (m, mo.mean, mo.variance, mo.g2, mo.fano, mo.mdr, shannon_entropy(state), success)


def cmd_stats(cfg: RunConfig) -> ResultTable:
    cfg.validate()
    t = ResultTable(
        [("m", "count"), ("mean", "photons"), ("variance", "photons^2"), ("g2", "1"),
         ("fano", "1"), ("mdr", "1"), ("entropy", "nats"), ("success_probability", "1")],
        provenance=provenance("stats", cfg.physics()),
    )
    fn = partial(_stats_row, n_th=cfg.n_th, model=cfg.model, R=cfg.reflectivity, eta=cfg.eta)
    for row in _pmap(fn, [int(m) for m in cfg.m], cfg.jobs):
        t.add(*row)
    return t


def _work_row(m, n_th, model, R, eta):
    state, _ = conditioned_state(n_th, m, model, R, eta)
    w = available_work(state, n_th)
    cool = work_cooling_benchmark(n_th)
    heat = heated_work_benchmark(n_th, m)
    return (m, w, cool, heat, w > cool + FLAG_MARGIN, w > heat + FLAG_MARGIN)


def cmd_work(cfg: RunConfig) -> ResultTable:
    cfg.validate()
    t = ResultTable(
        [("m", "count"), ("work", "kBT"), ("cooling_benchmark", "kBT"), ("heated_benchmark", "kBT"),
         ("above_cooling", "bool"), ("above_heated", "bool")],
        provenance=provenance("work", cfg.physics()),
    )
    fn = partial(_work_row, n_th=cfg.n_th, model=cfg.model, R=cfg.reflectivity, eta=cfg.eta)
    for row in _pmap(fn, [int(m) for m in cfg.m], cfg.jobs):
        t.add(*row)
    return t


def _info_row(m, n_th, model, R, eta):
    if model == "ideal":
        p_e = error_probability(n_th, m)
    else:
        p_e = float(conditioned_state(n_th, m, model, R, eta)[0][0])
    cap = max_mutual_information_z(p_e)
    heated = thermal_info_benchmark((m + 1) * n_th)
    threshold = thermal_info_benchmark(n_th)
    return (m, p_e, cap, heated, threshold, cap > threshold + FLAG_MARGIN, cap > heated + FLAG_MARGIN)


def cmd_info(cfg: RunConfig) -> ResultTable:
    cfg.validate()
    t = ResultTable(
        [("m", "count"), ("p_error", "1"), ("capacity", "bits"), ("heated_benchmark", "bits"),
         ("thermal_threshold", "bits"), ("above_threshold", "bool"), ("above_heated", "bool")],
        provenance=provenance("info", cfg.physics()),
    )
    fn = partial(_info_row, n_th=cfg.n_th, model=cfg.model, R=cfg.reflectivity, eta=cfg.eta)
    for row in _pmap(fn, [int(m) for m in cfg.m], cfg.jobs):
        t.add(*row)
    return t


def _sweep_r_row(R, n_th, m, eta):
    state, success = conditioned_state(n_th, m, "full", R, eta)
    return (R, success, available_work(state, n_th), max_mutual_information_z(float(state[0])))


def _non_increasing(values) -> bool:
    return bool(np.all(np.diff(values) <= 0))


def _strictly_decreasing(values) -> bool:
    return bool(np.all(np.diff(values) < 0))


def cmd_sweep_R(cfg: RunConfig) -> ResultTable:
    cfg.validate()
    m = int(cfg.m[0])
    n_th = cfg.n_th
    work_heated = heated_work_benchmark(n_th, m)
    info_heated = thermal_info_benchmark((m + 1) * n_th)
    work_tight = max(work_heated, work_cooling_benchmark(n_th))
    info_tight = max(info_heated, thermal_info_benchmark(n_th))
    t = ResultTable(
        [("R", "1"), ("success_probability", "1"), ("work", "kBT"), ("capacity", "bits"),
         ("above_work_benchmark", "bool"), ("above_info_benchmark", "bool"),
         ("above_tightest_benchmark", "bool")],
        provenance=provenance("sweep-r", cfg.physics()),
    )
    grid = sorted(float(r) for r in cfg.r_grid)
    rows = _pmap(partial(_sweep_r_row, n_th=n_th, m=m, eta=cfg.eta), grid, cfg.jobs)
    for R, success, w, cap in rows:
        aw, ai = w > work_tight + FLAG_MARGIN, cap > info_tight + FLAG_MARGIN
        t.add(R, success, w, cap, aw, ai, aw and ai)
    ideal = subtracted_thermal_pmf(n_th, m)
    t.summary = {
        "m": m,
        "work_monotone_non_increasing": _non_increasing(t.column("work")),
        "capacity_monotone_non_increasing": _non_increasing(t.column("capacity")),
        "work_tightest_benchmark_kBT": work_tight,
        "info_tightest_benchmark_bits": info_tight,
        "ideal_work_kBT": available_work(ideal, n_th),
        "ideal_capacity_bits": max_mutual_information_z(error_probability(n_th, m)),
    }
    return t


def _sweep_m_row(M, n_th, m):
    before = multimode_thermal_pmf(n_th, M)
    after = multimode_subtract(before, m)
    work = relative_entropy(after, before)
    cap_before = max_mutual_information_z(float(before[0]))
    cap_after = max_mutual_information_z(float(after[0]))
    return (M, shannon_entropy(before), shannon_entropy(after), work, work / M,
            cap_before / M, cap_after, cap_after / M)


def cmd_sweep_M(cfg: RunConfig) -> ResultTable:
    cfg.validate()
    m = int(cfg.m[0])
    t = ResultTable(
        [("M", "modes"), ("entropy_thermal", "nats"), ("entropy_subtracted", "nats"),
         ("work", "kBT"), ("work_per_mode", "kBT/mode"), ("info_thermal_per_mode", "bits/mode"),
         ("info", "bits"), ("info_per_mode", "bits/mode")],
        provenance=provenance("sweep-m", cfg.physics()),
    )
    grid = sorted(int(M) for M in cfg.modes)
    for row in _pmap(partial(_sweep_m_row, n_th=cfg.n_th, m=m), grid, cfg.jobs):
        t.add(*row)
    wpm = t.column("work_per_mode")
    t.summary = {
        "m": m,
        "work_per_mode_strictly_decreasing": _strictly_decreasing(wpm),
        "info_per_mode_strictly_decreasing": _strictly_decreasing(t.column("info_per_mode")),
        "entropy_increases_every_M": all(
            a > b for a, b in zip(t.column("entropy_subtracted"), t.column("entropy_thermal"))
        ),
        "work_per_mode_last_over_first": wpm[-1] / wpm[0] if wpm[0] > 0 else None,
    }
    return t


def cmd_simulate(cfg: RunConfig):
    """Run the Monte Carlo; returns (summary table, click histogram)."""
    cfg.validate()
    m = int(cfg.m[0])
    exp = ExperimentConfig(
        n_th=cfg.n_th, M_modes=int(cfg.modes[0]), R=cfg.reflectivity, eta_collect=cfg.eta,
        m_subtract=m, N_pnrd=cfg.channels, eta_pnrd=cfg.eta_pnrd,
    )
    seed = SeedSpec(cfg.seed, cfg.stream)
    summary = run_simulation(exp, cfg.shots, seed, workers=cfg.jobs)
    exact = herald(exp).success_probability
    t = ResultTable(
        [("shots", "count"), ("heralded_shots", "count"), ("heralding_rate", "1"),
         ("heralding_rate_stderr", "1"), ("exact_success_probability", "1"),
         ("mean", "photons"), ("g2", "1"), ("fano", "1"), ("mdr", "1"), ("mean_clicks", "clicks")],
        provenance=provenance("simulate", cfg.physics(), seed=cfg.seed),
    )
    if summary.heralded_shots:
        mo = moments(summary.heralded_distribution())
        freqs = summary.histogram.frequencies()
        mean_clicks = float(np.arange(freqs.size) @ freqs)
    else:
        mo = None
        mean_clicks = None
    t.add(
        cfg.shots, summary.heralded_shots, summary.heralding_rate, summary.heralding_rate_stderr, exact,
        mo.mean if mo else None, mo.g2 if mo else None, mo.fano if mo else None,
        mo.mdr if mo else None, mean_clicks,
    )
    hist = ClickHistogram(
        summary.histogram.counts, summary.shots, summary.heralded_shots,
        {"config_hash": t.provenance["config_hash"], "seed": cfg.seed, "eta_pnrd": cfg.eta_pnrd},
    )
    return t, hist


def cmd_reconstruct(cfg: RunConfig, hist: ClickHistogram = None):
    """EM reconstruction of a click histogram; returns (moments table, distribution table, result)."""
    cfg.validate()
    if hist is None:
        if not cfg.histogram:
            raise UsageError("reconstruct needs a histogram file")
        path = Path(cfg.histogram)
        if not path.exists():
            raise UsageError(f"histogram file {path} not found")
        hist = ClickHistogram.load(path, cfg.channels)
    if hist.N != cfg.channels:
        raise UsageError(f"histogram has {hist.N} channels, expected {cfg.channels}")
    if hist.heralded_shots == 0:
        raise UsageError("histogram is empty")
    model = forward_matrix(cfg.channels, cfg.eta_pnrd, default_n_max(cfg.channels, cfg.eta_pnrd))
    res = em_reconstruct(hist, model, max_iters=cfg.max_iters)
    mo = moments(res.estimate)
    prov = provenance("reconstruct", cfg.physics())
    t = ResultTable(
        [("mean", "photons"), ("variance", "photons^2"), ("g2", "1"), ("fano", "1"), ("mdr", "1"),
         ("entropy", "nats")],
        provenance=prov,
        summary={
            "iterations": res.iterations,
            "converged": res.converged,
            "final_log_likelihood": res.final_log_likelihood,
            "floored_bins": res.floored_bins,
            "n_max": model.n_max,
        },
    )
    t.add(mo.mean, mo.variance, mo.g2, mo.fano, mo.mdr, shannon_entropy(res.estimate))
    dist = ResultTable([("n", "photons"), ("p", "1")], provenance=prov)
    for n, p in enumerate(res.estimate.probs):
        dist.add(n, float(p))
    return t, dist, res


# ---------------------------------------------------------------------------
# argument handling

CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def _float_list(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    if text.count(":") == 2:
        a, b, n = text.split(":")
        return [float(x) for x in np.linspace(float(a), float(b), int(n))]
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list:
    values = _float_list(text)
    if any(int(v) != v for v in values):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return [int(v) for v in values]


def load_config_file(path) -> dict:
    """Flat TOML document; keys are RunConfig field names.  Unknown keys are errors."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found")
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config file {path}: {exc}")
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("m", "modes", "r_grid"):
        if key in data and not isinstance(data[key], list):
            data[key] = [data[key]]
    return data


COMMAND_DEFAULTS = {
    "sweep-r": {"m": [3]},
    "sweep-m": {"m": [1], "modes": [1, 2, 4, 8, 16, 32, 64]},
    "simulate": {"m": [1]},
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    a("--config", help="flat TOML file of run parameters; flags override it")
    a("--n-th", dest="n_th", type=float, help="mean thermal occupation (default 2)")
    a("--m", type=_int_list, help="subtracted photon numbers, e.g. 0,1,2,3")
    a("--reflectivity", type=float, help="tap reflectivity R (default 0.05)")
    a("--eta", type=float, help="herald-arm collection efficiency (default 0.5)")
    a("--eta-pnrd", dest="eta_pnrd", type=float, help="PNRD efficiency (default 1)")
    a("--channels", type=int, help="PNRD channel count (default 8)")
    a("--modes", type=_int_list, help="thermal mode number(s) M")
    a("--r-grid", dest="r_grid", type=_float_list, help="R values: list or start:stop:num")
    a("--model", choices=["ideal", "full"])
    a("--shots", type=int)
    a("--seed", type=int)
    a("--stream", type=int, help="RNG stream id")
    a("--format", choices=["csv", "json"])
    a("--out", help="output directory (default ./results)")
    a("--jobs", type=int, help="worker processes for sweeps and simulation")
    a("--max-iters", dest="max_iters", type=int, help="EM iteration limit for reconstruct (default 100000)")

    parser = argparse.ArgumentParser(prog="photonsub", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("stats", "mean, g2, Fano, MDR and entropy per m"),
        ("work", "available work and cooling/heating benchmarks per m"),
        ("info", "binary-channel capacity and benchmarks per m"),
        ("sweep-r", "work and capacity versus reflectivity (full model)"),
        ("sweep-m", "entropy, work and information versus thermal mode number"),
        ("simulate", "event-level Monte Carlo; writes summary and click histogram"),
        ("figures", "emit every data table behind the figures"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    rec = sub.add_parser("reconstruct", parents=[common], help="EM reconstruction from a click histogram")
    rec.add_argument("histogram", help="histogram file (.json or .csv)")
    return parser


def resolve_config(args) -> RunConfig:
    values = dict(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        values.update(load_config_file(args.config))
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise UsageError(str(exc))
    cfg.validate()
    return cfg


def _write(out: Path, stem: str, table: ResultTable, fmt: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stem}.{fmt}"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(table.render(fmt))
    return path


def _with(cfg: RunConfig, **changes) -> RunConfig:
    d = asdict(cfg)
    d.update(changes)
    return RunConfig(**d)


def run_figures(cfg: RunConfig) -> list:
    out, fmt = Path(cfg.out), cfg.format
    written = []
    for model in ("ideal", "full"):
        c = _with(cfg, model=model)
        written.append(_write(out, f"stats_{model}", cmd_stats(c), fmt))
        written.append(_write(out, f"work_{model}", cmd_work(c), fmt))
        written.append(_write(out, f"info_{model}", cmd_info(c), fmt))
    written.append(_write(out, "sweep_r", cmd_sweep_R(_with(cfg, m=[3])), fmt))
    written.append(_write(out, "sweep_m", cmd_sweep_M(_with(cfg, m=[1], modes=[1, 2, 4, 8, 16, 32, 64])), fmt))
    return written


def dispatch(cfg: RunConfig, command: str) -> int:
    out, fmt = Path(cfg.out), cfg.format
    simple = {"stats": cmd_stats, "work": cmd_work, "info": cmd_info,
              "sweep-r": cmd_sweep_R, "sweep-m": cmd_sweep_M}
    if command in simple:
        path = _write(out, command.replace("-", "_"), simple[command](cfg), fmt)
        print(path)
    elif command == "simulate":
        table, hist = cmd_simulate(cfg)
        print(_write(out, "simulate_summary", table, fmt))
        path = out / f"histogram.{fmt}"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(hist.to_json() if fmt == "json" else hist.to_csv())
        print(path)
    elif command == "reconstruct":
        table, dist, res = cmd_reconstruct(cfg)
        print(_write(out, "reconstruct_moments", table, fmt))
        print(_write(out, "reconstruct_distribution", dist, fmt))
        if not res.converged:
            raise NumericalFailure(f"EM did not converge in {res.iterations} iterations")
    elif command == "figures":
        for path in run_figures(cfg):
            print(path)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return dispatch(cfg, args.command)
    except (UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConditioningError, NumericalFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
