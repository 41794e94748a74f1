"""Experiment drivers: detector sizing sweep, attack scenarios, output files.

The sweep measures how the sketch-backed per-source limiter's false-positive
rate falls as the sketch grows, against populations where a known subset of
sources generates heavy miss counts. Attack scenarios run the full router
model twice per seed (defense on/off) so the effect of the defense is a
paired comparison on identical traffic.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cms import CountMinSketch, SketchDims
from .limiter import LimiterConfig
from .workloads import (PopulationProfile, BackgroundProfile, ScanProfile, Role,
                        gen_dos_stream, gen_miss_counts, gen_scan_stream, scan_prefixes)
from .xtr import Xtr, XtrConfig, XtrMetrics


class InvalidConfig(ValueError):
    """Configuration that cannot describe a runnable experiment."""


class IoFailure(Exception):
    """An output path could not be written."""


DEFAULT_SEEDS = tuple(range(1, 11))

SWEEP_CSV_HEADER = "n_nodes,attacker_fraction,w,d,size_bytes,seed,fp_rate,fn_rate"


@dataclass(frozen=True)
class SweepConfig:
    """Grid for the detector sizing sweep.

    Iteration i (1-based) uses width = w_start + (i-1)*w_step and a depth that
    grows by one every two iterations. With the default "even" phase the depth
    bumps after iterations 2, 4, 6, ... (depth = ceil(i/2)); the "odd" phase
    is the off-by-one variant (depth = ceil((i+1)/2)).
    """

    n_nodes: tuple[int, ...] = (50_000, 100_000, 500_000)
    attacker_fractions: tuple[float, ...] = (0.01, 0.10)
    threshold: int = 1000
    w_start: int = 1000
    w_step: int = 1000
    iterations: int = 26
    depth_phase: str = "even"
    cell_width_bytes: int = 2
    legit_miss_range: tuple[int, int] = (1, 10)
    attacker_miss_range: tuple[int, int] = (1000, 10000)
    seeds: tuple[int, ...] = DEFAULT_SEEDS

    def __post_init__(self) -> None:
        if not self.n_nodes or any(n < 1 for n in self.n_nodes):
            raise InvalidConfig("n_nodes must be a non-empty list of positive sizes")
        if not self.attacker_fractions or any(not 0 <= f <= 1 for f in self.attacker_fractions):
            raise InvalidConfig("attacker_fractions must be non-empty, each in [0, 1]")
        if self.iterations < 1:
            raise InvalidConfig("iterations must be >= 1")
        if self.w_start < 1 or self.w_step < 0:
            raise InvalidConfig("w_start must be >= 1 and w_step >= 0")
        if self.threshold < 1:
            raise InvalidConfig("threshold must be >= 1")
        if self.depth_phase not in ("even", "odd"):
            raise InvalidConfig("depth_phase must be 'even' or 'odd'")
        if not self.seeds:
            raise InvalidConfig("seeds must be non-empty")


@dataclass(frozen=True)
class SweepRow:
    n_nodes: int
    attacker_fraction: float
    w: int
    d: int
    size_bytes: int
    seed: int
    false_positive_rate: float
    false_negative_rate: float

    def csv_line(self) -> str:
        return (f"{self.n_nodes},{self.attacker_fraction!r},{self.w},{self.d},"
                f"{self.size_bytes},{self.seed},"
                f"{self.false_positive_rate!r},{self.false_negative_rate!r}")


def sweep_schedule(config: SweepConfig) -> list[tuple[int, int, int]]:
    """(iteration, width, depth) triples the sweep will visit."""
    schedule = []
    for i in range(1, config.iterations + 1):
        depth = math.ceil(i / 2) if config.depth_phase == "even" else math.ceil((i + 1) / 2)
        schedule.append((i, config.w_start + (i - 1) * config.w_step, depth))
    return schedule


def run_sweep(config: SweepConfig) -> list[SweepRow]:
    """Sweep sketch sizes over every (population, fraction, seed) cell.

    Each cell draws its miss counts once and reuses them across all sketch
    sizes, mirroring a single observed traffic sample being fed to detectors
    of different sizes. A source is flagged when its estimate exceeds the
    threshold. The false-positive rate is flagged legitimate sources over all
    legitimate sources; the false-negative rate counts sources whose true
    count exceeds the threshold yet whose estimate does not, over all
    attackers, and is structurally zero because estimates never undershoot.
    """
    schedule = sweep_schedule(config)
    rows = []
    for n in config.n_nodes:
        for fraction in config.attacker_fractions:
            for seed in config.seeds:
                profile = PopulationProfile(
                    n, fraction, legit_miss_range=config.legit_miss_range,
                    attacker_miss_range=config.attacker_miss_range, seed=seed)
                draw = gen_miss_counts(profile)
                legit_mask = ~draw.attacker_mask
                n_legit = int(legit_mask.sum())
                n_attackers = int(draw.attacker_mask.sum())
                oracle_flagged = draw.counts > config.threshold
                for _, width, depth in schedule:
                    sketch = CountMinSketch(SketchDims(width, depth), seed=seed,
                                            cell_width_bytes=config.cell_width_bytes)
                    sketch.add_counts(draw.sources, draw.counts)
                    estimates = sketch.estimate_many(draw.sources)
                    flagged = estimates > config.threshold
                    false_pos = int((flagged & legit_mask).sum())
                    false_neg = int((oracle_flagged & ~flagged).sum())
                    fp_rate = false_pos / n_legit if n_legit else 0.0
                    fn_rate = false_neg / n_attackers if n_attackers else 0.0
                    rows.append(SweepRow(n, fraction, width, depth,
                                         sketch.memory_bytes, seed, fp_rate, fn_rate))
    rows.sort(key=lambda r: (r.n_nodes, r.attacker_fraction, r.w, r.d,
                             r.size_bytes, r.seed))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    return SWEEP_CSV_HEADER + "\n" + "".join(row.csv_line() + "\n" for row in rows)


# --- attack scenarios -------------------------------------------------------

@dataclass(frozen=True)
class AttackConfig:
    """Knobs shared by the dos / overflow / scan scenarios.

    Scenario factories pick defaults that make the attack land when the
    defense is off and stay harmless when it is on.
    """

    scenario: str = "dos"
    n_legit: int = 100
    n_attackers: int = 10
    legit_miss_range: tuple[int, int] = (1, 10)
    attacker_miss_range: tuple[int, int] = (1000, 10000)
    duration: float = 1.0
    popular_pool: int = 50
    dest_strategy: str = "unallocated"
    attacker_timing: str = "uniform"
    threshold: int = 100
    limiter_period: float = 1.0
    limiter_backend: str = "cms"
    limiter_w: int = 1000
    limiter_d: int = 4
    dest_budget: int = 2000
    dest_period: float = 1.0
    pending_capacity: int = 100_000
    reply_latency: float = 0.010
    cache_capacity: int = 256
    cache_policy: str = "lru"
    age_interval: float = 2.0
    age_mode: str = "halve"
    # scan scenario shape
    scan_n_prefixes: int = 1000
    scan_rate: float = 400.0
    reshuffle_each_pass: bool = True
    bg_users: int = 25
    bg_destinations: int = 300
    bg_zipf_exponent: float = 1.0
    bg_rate: float = 20.0

    def __post_init__(self) -> None:
        if self.scenario not in ("dos", "overflow", "scan"):
            raise InvalidConfig(f"unknown scenario {self.scenario!r}")
        if self.n_legit < 1 or self.n_attackers < 0:
            raise InvalidConfig("population must have >= 1 legit and >= 0 attackers")
        if self.duration <= 0:
            raise InvalidConfig("duration must be > 0")


def dos_defaults() -> AttackConfig:
    """Miss flood against a shared Map-Request budget."""
    return AttackConfig(scenario="dos")


def overflow_defaults() -> AttackConfig:
    """Nonce-table exhaustion: generous budget, bounded pending table.

    Admitted misses sit in the pending table for one reply latency, so the
    attackers' admitted rate times the latency is the high-water mark; with
    the limiter off it clears the table size, with it on it cannot get near.
    """
    return AttackConfig(scenario="overflow", attacker_miss_range=(5000, 10000),
                        threshold=50, dest_budget=1_000_000_000,
                        pending_capacity=1000, reply_latency=0.040)


def scan_defaults() -> AttackConfig:
    """Prefix scan that churns the map-cache; the defense is the aging policy."""
    return AttackConfig(scenario="scan", duration=20.0, dest_budget=1_000_000_000,
                        pending_capacity=100_000, reply_latency=0.005,
                        cache_capacity=128)


@dataclass(frozen=True)
class AttackRun:
    scenario: str
    defense: str
    seed: int
    config_hash: str
    metrics: XtrMetrics
    victim_admission_ratio: float
    legit_hit_rate: float
    overflow_events: int


def _attack_xtr_config(config: AttackConfig, *, defended: bool) -> XtrConfig:
    limiter = LimiterConfig(threshold=config.threshold, period=config.limiter_period,
                            backend=config.limiter_backend,
                            sketch_dims=SketchDims(config.limiter_w, config.limiter_d))
    if config.scenario == "scan":
        policy = "lfu-aging" if defended else "lru"
        return XtrConfig(cache_capacity=config.cache_capacity, cache_policy=policy,
                         age_interval=config.age_interval, age_mode=config.age_mode,
                         source_limiter_enabled=False, limiter=limiter,
                         dest_budget=config.dest_budget, dest_period=config.dest_period,
                         pending_capacity=config.pending_capacity,
                         reply_latency=config.reply_latency)
    return XtrConfig(cache_capacity=config.cache_capacity, cache_policy=config.cache_policy,
                     age_interval=config.age_interval, age_mode=config.age_mode,
                     source_limiter_enabled=defended, limiter=limiter,
                     dest_budget=config.dest_budget, dest_period=config.dest_period,
                     pending_capacity=config.pending_capacity,
                     reply_latency=config.reply_latency)


def _attack_stream(config: AttackConfig, seed: int):
    if config.scenario == "scan":
        scan = ScanProfile(scan_prefixes(config.scan_n_prefixes), config.scan_rate,
                           config.duration, reshuffle_each_pass=config.reshuffle_each_pass,
                           seed=seed)
        background = BackgroundProfile(config.bg_users, config.bg_destinations,
                                       zipf_exponent=config.bg_zipf_exponent,
                                       packet_rate=config.bg_rate,
                                       duration=config.duration, seed=seed)
        return gen_scan_stream(scan, background)
    n = config.n_legit + config.n_attackers
    profile = PopulationProfile(n, config.n_attackers / n,
                                legit_miss_range=config.legit_miss_range,
                                attacker_miss_range=config.attacker_miss_range,
                                seed=seed)
    return gen_dos_stream(profile, config.dest_strategy, duration=config.duration,
                          popular_pool=config.popular_pool,
                          attacker_timing=config.attacker_timing)


def _defense_labels(scenario: str) -> tuple[str, str]:
    if scenario == "scan":
        return "lfu_aging", "lru"
    return "limiter_on", "limiter_off"


def config_hash(config: AttackConfig) -> str:
    return hashlib.sha256(repr(config).encode()).hexdigest()[:12]


def run_attack(config: AttackConfig, seeds: Sequence[int] = DEFAULT_SEEDS) -> list[AttackRun]:
    """Run the scenario defended and undefended on identical traffic per seed."""
    if not seeds:
        raise InvalidConfig("seeds must be non-empty")
    digest = config_hash(config)
    on_label, off_label = _defense_labels(config.scenario)
    runs = []
    for seed in seeds:
        stream = _attack_stream(config, seed)
        for defended, label in ((True, on_label), (False, off_label)):
            xtr = Xtr(_attack_xtr_config(config, defended=defended), seed=seed)
            metrics = xtr.run(stream)
            runs.append(AttackRun(
                scenario=config.scenario, defense=label, seed=seed, config_hash=digest,
                metrics=metrics,
                victim_admission_ratio=metrics.admission_ratio(Role.LEGIT),
                legit_hit_rate=metrics.hit_rate(Role.LEGIT),
                overflow_events=metrics.nonce_table_overflows.total))
    return runs


def attack_csv(runs: Sequence[AttackRun]) -> str:
    """One row per run: identity, all counters, then the scenario summaries."""
    if not runs:
        raise InvalidConfig("no runs to export")
    metric_cols = list(runs[0].metrics.as_row())
    header = ["scenario", "defense", "seed", "config_hash", *metric_cols,
              "victim_admission_ratio", "legit_hit_rate", "overflow_events"]
    lines = [",".join(header)]
    for run in sorted(runs, key=lambda r: (r.scenario, r.seed, r.defense)):
        row = run.metrics.as_row()
        values = [run.scenario, run.defense, str(run.seed), run.config_hash]
        values += [str(row[c]) for c in metric_cols]
        values += [repr(run.victim_admission_ratio), repr(run.legit_hit_rate),
                   str(run.overflow_events)]
        lines.append(",".join(values))
    return "\n".join(lines) + "\n"


_SUMMARY_METRIC = {"dos": "victim_admission_ratio",
                   "overflow": "overflow_events",
                   "scan": "legit_hit_rate"}


def attack_summary_csv(runs: Sequence[AttackRun]) -> str:
    """Per-seed defended/undefended pairs of the scenario's headline metric."""
    if not runs:
        raise InvalidConfig("no runs to export")
    scenario = runs[0].scenario
    metric = _SUMMARY_METRIC[scenario]
    on_label, off_label = _defense_labels(scenario)
    by_seed: dict[int, dict[str, AttackRun]] = {}
    for run in runs:
        by_seed.setdefault(run.seed, {})[run.defense] = run
    lines = [f"scenario,seed,metric,{on_label},{off_label}"]
    for seed in sorted(by_seed):
        pair = by_seed[seed]
        on_value = getattr(pair[on_label], metric)
        off_value = getattr(pair[off_label], metric)
        lines.append(f"{scenario},{seed},{metric},{on_value!r},{off_value!r}")
    return "\n".join(lines) + "\n"


# --- output emission --------------------------------------------------------

_PLOT_SCRIPT = '''\
#!/usr/bin/env python3
"""Plot mean false-positive rate against sketch size from {csv_name}.

One curve per network size, one figure per attacker fraction; the x axis is
sketch memory in KB (1 KB = 1000 bytes), the y axis the mean FP rate in
percent over seeds.
"""
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).parent
cells = defaultdict(list)
with open(here / "{csv_name}", newline="") as fh:
    for row in csv.DictReader(fh):
        key = (float(row["attacker_fraction"]), int(row["n_nodes"]),
               int(row["size_bytes"]))
        cells[key].append(float(row["fp_rate"]))

fractions = sorted({{k[0] for k in cells}})
for fraction in fractions:
    fig, ax = plt.subplots()
    sizes_by_n = defaultdict(list)
    for (frac, n, size), rates in sorted(cells.items()):
        if frac == fraction:
            sizes_by_n[n].append((size / 1000.0, 100.0 * sum(rates) / len(rates)))
    for n, points in sorted(sizes_by_n.items()):
        xs, ys = zip(*points)
        ax.plot(xs, ys, marker="o", label=f"{{n}} nodes")
    ax.set_xlabel("sketch size (KB)")
    ax.set_ylabel("false positive rate (%)")
    ax.set_title(f"attacker fraction {{fraction:g}}")
    ax.legend()
    out = here / f"fp_vs_size_frac{{fraction:g}}.png"
    fig.savefig(out, dpi=150)
    print(out)
'''


def emit_outputs(rows: Sequence[SweepRow], out_dir: Path | str,
                 formats: Sequence[str] = ("csv", "plot_script")) -> list[Path]:
    """Write sweep outputs; returns the created paths.

    "csv" writes sweep.csv; "plot_script" writes plot_sweep.py next to it.
    """
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for fmt in formats:
            if fmt == "csv":
                path = out_dir / "sweep.csv"
                path.write_text(sweep_csv(rows))
            elif fmt == "plot_script":
                path = out_dir / "plot_sweep.py"
                path.write_text(_PLOT_SCRIPT.format(csv_name="sweep.csv"))
            else:
                raise InvalidConfig(f"unknown output format {fmt!r}")
            written.append(path)
    except OSError as exc:
        raise IoFailure(f"cannot write outputs under {out_dir}: {exc}") from exc
    return written
