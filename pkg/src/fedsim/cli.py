"""Command-line front end: train / sweep / grid / inspect-partitions / checkpoint."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from .data.partition import Partition, partition_by_source, partition_iid
from .errors import (
    ConfigurationError,
    DataError,
    NumericFault,
    ProtocolError,
    ShapeError,
    WireFormatError,
)
from .experiments import (
    DataConfig,
    ExperimentConfig,
    client_sweep,
    component_seed,
    grid_search,
    prepare_data,
    run_centralized,
    run_federated,
    write_history_csv,
    write_summary_csv,
)
from .wire import decode_parameter_message, encode_parameter_message, save_checkpoint

_TOPOLOGIES = ("cl", "fl", "mefl")
_ONOFF = {"on": True, "off": False}


def _parse_bool(key: str, value: str) -> bool:
    if value not in _ONOFF:
        raise ConfigurationError(f"key {key!r}: expected on|off, got {value!r}")
    return _ONOFF[value]


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigurationError(f"key {key!r}: expected an integer, got {value!r}") from None


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigurationError(f"key {key!r}: expected a number, got {value!r}") from None


# every accepted config-file key with its converter
_KEYS = {
    "topology": lambda k, v: v,
    "clients": _parse_int,
    "lr": _parse_float,
    "rounds": _parse_int,
    "batch_size": _parse_int,
    "local_epochs": _parse_int,
    "seed": _parse_int,
    "min_epochs": _parse_int,
    "early_stop_delta": _parse_float,
    "data.kind": lambda k, v: v,
    "data.path": lambda k, v: v,
    "data.classes": _parse_int,
    "data.per_class": _parse_int,
    "data.skew": _parse_float,
    "augment": _parse_bool,
    "split_fraction": _parse_float,
    "image_size": _parse_int,
    "split_before_augment": _parse_bool,
}


def read_config_file(path) -> dict:
    """Parse a line-based `key = value` file. Blank lines and #-comments are
    allowed; unknown and duplicate keys are rejected."""
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file {path!r} does not exist")
    raw: dict = {}
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEYS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigurationError(f"{path}:{lineno}: duplicate key {key!r}")
        raw[key] = _KEYS[key](key, value)
    return raw


def config_from_mapping(raw: dict) -> ExperimentConfig:
    if "topology" not in raw:
        raise ConfigurationError("no topology given (config file key 'topology' or --topology)")
    if raw["topology"] not in _TOPOLOGIES:
        raise ConfigurationError(f"key 'topology': must be one of {_TOPOLOGIES}, got {raw['topology']!r}")
    data_kwargs = {}
    for key, attr in (
        ("data.kind", "kind"), ("data.path", "path"), ("data.classes", "classes"),
        ("data.per_class", "per_class"), ("data.skew", "skew"), ("augment", "augment"),
        ("split_fraction", "split_fraction"), ("image_size", "image_size"),
        ("split_before_augment", "split_before_augment"),
    ):
        if key in raw:
            data_kwargs[attr] = raw[key]
    exp_kwargs = {}
    for key in ("topology", "clients", "lr", "rounds", "batch_size", "local_epochs",
                "seed", "min_epochs", "early_stop_delta"):
        if key in raw:
            exp_kwargs[key] = raw[key]
    return ExperimentConfig(data=DataConfig(**data_kwargs), **exp_kwargs)


def parse_config(path) -> ExperimentConfig:
    return config_from_mapping(read_config_file(path))


def _resolve_config(args) -> ExperimentConfig:
    raw = read_config_file(args.config) if args.config else {}
    if getattr(args, "topology", None):
        raw["topology"] = args.topology
    if getattr(args, "clients", None) is not None:
        raw["clients"] = args.clients
    if getattr(args, "lr", None) is not None:
        raw["lr"] = args.lr
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    return config_from_mapping(raw)


def _config_as_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["data"]["source_tags"] = list(d["data"]["source_tags"])
    d["conv_filters"] = list(d["conv_filters"])
    return d


def _write_manifest(out_dir: Path, cfg: ExperimentConfig, fingerprint: str, artifacts: dict, extra: dict | None = None) -> Path:
    manifest = {
        "config": _config_as_dict(cfg),
        "data_fingerprint": fingerprint,
        "artifacts": artifacts,
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    data = prepare_data(cfg.data, cfg.seed)
    if cfg.topology == "cl":
        history = run_centralized(cfg, data, record_weights=True)
    else:
        history = run_federated(cfg, data, parallel=args.parallel, record_weights=True)
    csv_path = out / "metrics.csv"
    write_history_csv(history, csv_path, include_timing=args.timing)
    ckpt_path = out / "checkpoint.favg"
    final_params = history.weight_trajectory[-1]
    save_checkpoint(ckpt_path, final_params, len(history.records), len(data.train.records))

    manifest = _write_manifest(out, cfg, history.data_fingerprint, {
        "metrics_csv": str(csv_path),
        "checkpoint": str(ckpt_path),
    }, {"final_accuracy": history.final_accuracy, "stop_reason": history.stop_reason})
    print(f"{cfg.topology} run finished: final accuracy {history.final_accuracy:.4f} "
          f"({history.stop_reason} after {len(history.records)} rounds)")
    print(f"wrote {csv_path}, {ckpt_path}, {manifest}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    results = client_sweep(cfg)
    rows = [(cfg.topology, cfg.lr, k, acc) for k, acc in results]
    csv_path = out / "sweep.csv"
    write_summary_csv(rows, csv_path)
    data = prepare_data(cfg.data, cfg.seed)
    _write_manifest(out, cfg, data.fingerprint, {"sweep_csv": str(csv_path)})
    for k, acc in results:
        print(f"clients={k}: final accuracy {acc:.4f}")
    print(f"wrote {csv_path}")
    return 0


def cmd_grid(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    best, histories = grid_search(cfg)
    rows = [(cfg.topology, h.config.lr, h.config.clients, h.final_accuracy) for h in histories]
    csv_path = out / "grid.csv"
    write_summary_csv(rows, csv_path)
    _write_manifest(out, cfg, histories[0].data_fingerprint,
                    {"grid_csv": str(csv_path)}, {"best_lr": best})
    for h in histories:
        print(f"lr={h.config.lr}: final accuracy {h.final_accuracy:.4f}")
    print(f"best lr: {best}")
    print(f"wrote {csv_path}")
    return 0


def cmd_inspect_partitions(args) -> int:
    cfg = _resolve_config(args)
    data = prepare_data(cfg.data, cfg.seed)
    if cfg.topology == "fl":
        parts = partition_iid(data.train, cfg.clients, component_seed(cfg.seed, "partition"))
    elif cfg.topology == "mefl":
        parts = partition_by_source(data.train, cfg.clients)
    else:
        parts = [Partition(0, np.arange(len(data.train.records)), "*")]
    for p in parts:
        hist = Counter(data.train.records[i].source for i in p.indices)
        pretty = ", ".join(f"{tag}:{count}" for tag, count in sorted(hist.items()))
        print(f"client {p.client_id}: n={p.n_k} sources[{pretty}]")
    return 0


def cmd_checkpoint(args) -> int:
    with open(args.infile, "rb") as f:
        buf = f.read()
    msg = decode_parameter_message(buf)
    kind = "checkpoint" if msg.client_id == 0xFFFFFFFF else f"client {msg.client_id} update"
    shapes = ", ".join(str(t.shape) for t in msg.tensors)
    print(f"{kind}: round {msg.round_index}, n={msg.n_k}, {len(msg.tensors)} tensors ({shapes})")
    if args.outfile:
        Path(args.outfile).write_bytes(encode_parameter_message(msg))
        print(f"re-encoded to {args.outfile}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="line-based key = value config file")
    p.add_argument("--topology", choices=_TOPOLOGIES, help="override the config file topology")
    p.add_argument("--clients", type=int, help="override the client count")
    p.add_argument("--lr", type=float, help="override the learning rate")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", default="runs", help="output directory (default: runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one experiment and write metrics")
    _add_common(p_train)
    p_train.add_argument("--parallel", action="store_true", help="train clients on a thread pool")
    p_train.add_argument("--timing", action="store_true",
                         help="write real wall-clock seconds to the CSV (forfeits byte-identical output)")
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="final accuracy for every supported client count")
    _add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_grid = sub.add_parser("grid", help="learning-rate grid search")
    _add_common(p_grid)
    p_grid.set_defaults(func=cmd_grid)

    p_inspect = sub.add_parser("inspect-partitions", help="print each client's share of the training set")
    _add_common(p_inspect)
    p_inspect.set_defaults(func=cmd_inspect_partitions)

    p_ckpt = sub.add_parser("checkpoint", help="import a parameter message file; optionally re-export it")
    p_ckpt.add_argument("infile", help="message/checkpoint file to read")
    p_ckpt.add_argument("--out", dest="outfile", help="write a validated re-encoding here")
    p_ckpt.set_defaults(func=cmd_checkpoint)
    return parser


def run(argv=None) -> int:
    """Parse command-line arguments, dispatch the subcommand, return the exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ShapeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, WireFormatError, ProtocolError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return 4


main = run  # conventional console-script alias


if __name__ == "__main__":
    raise SystemExit(run())
