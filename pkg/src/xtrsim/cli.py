"""Command-line front end.

Subcommands: `sweep` (detector sizing sweep), `attack dos|overflow|scan`
(paired defended/undefended runs), `replay <trace>` (run a packet trace
through one router). Configuration comes from flat key=value files whose keys
carry a section prefix, e.g.::

    sweep.w_step=1000
    sweep.n_nodes=50000,100000
    attack.threshold=50
    xtr.cache_capacity=512

Exit codes: 0 on success, 1 for invalid configuration, 2 for I/O failures.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import fields, replace
from pathlib import Path

from .cms import SketchDims
from .experiment import (AttackConfig, DEFAULT_SEEDS, InvalidConfig, IoFailure,
                         SweepConfig, attack_csv, attack_summary_csv, dos_defaults,
                         emit_outputs, overflow_defaults, run_attack, run_sweep,
                         scan_defaults)
from .limiter import LimiterConfig
from .workloads import read_trace
from .xtr import Xtr, XtrConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors are configuration errors
        raise InvalidConfig(message)


def _parse_kv_file(path: Path) -> dict[str, str]:
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise InvalidConfig(f"config file not found: {path}") from exc
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise InvalidConfig(f"{path}:{lineno}: expected key=value, got {raw!r}")
        mapping[key.strip()] = value.strip()
    return mapping


def _convert(default, text: str, key: str):
    """Parse `text` into the same shape as the field's default value."""
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            element = default[0] if default else 0
            return tuple(_convert(element, part.strip(), key)
                         for part in text.split(",") if part.strip())
        return text
    except ValueError as exc:
        raise InvalidConfig(f"bad value for {key}: {exc}") from exc


def _apply_overrides(config, mapping: dict[str, str], prefix: str, *,
                     frozen_keys: tuple[str, ...] = ()):
    """Overlay `<prefix>.<field>=value` entries onto a config dataclass."""
    known = {f.name: getattr(config, f.name) for f in fields(config)}
    updates = {}
    for key, text in mapping.items():
        section, _, name = key.partition(".")
        if section != prefix:
            continue
        if name in frozen_keys:
            raise InvalidConfig(f"{key} is fixed by the subcommand")
        if name not in known:
            raise InvalidConfig(f"unknown config key: {key}")
        updates[name] = _convert(known[name], text, key)
    return replace(config, **updates) if updates else config


def _seed_list(args, default: tuple[int, ...]) -> tuple[int, ...]:
    if args.seed is None and args.seeds is None:
        return default
    base = args.seed if args.seed is not None else default[0]
    count = args.seeds if args.seeds is not None else len(default)
    if count < 1:
        raise InvalidConfig("--seeds must be >= 1")
    return tuple(base + i for i in range(count))


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def _cmd_sweep(args) -> int:
    config = SweepConfig()
    if args.config:
        config = _apply_overrides(config, _parse_kv_file(args.config), "sweep")
    config = replace(config, seeds=_seed_list(args, config.seeds))
    rows = run_sweep(config)
    for path in emit_outputs(rows, args.out):
        print(path)
    return 0


_ATTACK_DEFAULTS = {"dos": dos_defaults, "overflow": overflow_defaults,
                    "scan": scan_defaults}


def _cmd_attack(args) -> int:
    config = _ATTACK_DEFAULTS[args.scenario]()
    if args.config:
        config = _apply_overrides(config, _parse_kv_file(args.config), "attack",
                                  frozen_keys=("scenario",))
    seeds = _seed_list(args, DEFAULT_SEEDS)
    runs = run_attack(config, seeds)
    out = Path(args.out)
    print(_write(out / f"attack_{args.scenario}.csv", attack_csv(runs)))
    print(_write(out / f"attack_{args.scenario}_summary.csv", attack_summary_csv(runs)))
    return 0


def _replay_configs(mapping: dict[str, str]) -> XtrConfig:
    limiter = LimiterConfig(backend="cms", sketch_dims=SketchDims(1000, 4))
    limiter_keys = {k for k in mapping if k.startswith("limiter.")}
    if limiter_keys:
        dims_w = int(mapping.pop("limiter.w", limiter.sketch_dims.width))
        dims_d = int(mapping.pop("limiter.d", limiter.sketch_dims.depth))
        limiter = replace(limiter, sketch_dims=SketchDims(dims_w, dims_d))
        limiter = _apply_overrides(limiter, mapping, "limiter",
                                   frozen_keys=("sketch_dims", "sketch_params"))
    config = XtrConfig(limiter=limiter)
    if "xtr.pending_timeout" in mapping:
        text = mapping.pop("xtr.pending_timeout")
        config = replace(config, pending_timeout=None if text.lower() == "none" else float(text))
    return _apply_overrides(config, mapping, "xtr",
                            frozen_keys=("limiter", "reply_prefix_for", "source_key",
                                         "pending_timeout"))


def _cmd_replay(args) -> int:
    mapping = _parse_kv_file(args.config) if args.config else {}
    config = _replay_configs(mapping)
    try:
        text = Path(args.trace).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read trace {args.trace}: {exc}") from exc
    try:
        events = read_trace(text)
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc
    seed = args.seed if args.seed is not None else 0
    xtr = Xtr(config, seed=seed)
    metrics = xtr.run(events)
    digest = hashlib.sha256(repr(config).encode()).hexdigest()[:12]
    row = metrics.as_row()
    csv_text = ("seed,config_hash," + ",".join(row) + "\n"
                + f"{seed},{digest}," + ",".join(str(v) for v in row.values()) + "\n")
    out = Path(args.out)
    print(_write(out / "replay_metrics.csv", csv_text))
    if config.record_cache_trace:
        print(_write(out / "cache_trace.txt", "".join(line + "\n" for line in xtr.cache.trace)))
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="xtrsim",
                     description="Map-cache miss-flood attack and defense simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser) -> None:
        p.add_argument("--config", type=Path, help="key=value config file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="base seed")
        p.add_argument("--seeds", type=int, help="number of consecutive seeds")

    p_sweep = sub.add_parser("sweep", help="false-positive rate vs sketch size")
    common(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_attack = sub.add_parser("attack", help="paired defended/undefended runs")
    p_attack.add_argument("scenario", choices=("dos", "overflow", "scan"))
    common(p_attack)
    p_attack.set_defaults(func=_cmd_attack)

    p_replay = sub.add_parser("replay", help="run a 'ts src dst role' trace")
    p_replay.add_argument("trace", help="trace file to replay")
    common(p_replay)
    p_replay.set_defaults(func=_cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IoFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
