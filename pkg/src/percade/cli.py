"""Command-line front end: synth, features, train, eval, baseline, sweep.

Runs are configured through flat ``key=value`` files with CLI flag overrides
(flag wins; provenance is tracked).  Every report echoes the merged config so
a run can be reproduced exactly from its own output.  Reports are plain
``key=value`` text; tabular outputs are CSV.  Nothing written here contains
timestamps, so fixed-seed reruns are byte-identical.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import baselines, data, graphs, models, training


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise ConfigError(f"expected a boolean, got '{text}'")


# key -> (default, parser). The merged RunConfig always carries every key.
CONFIG_SCHEMA: dict[str, tuple] = {
    # synthetic data
    "graph_model": ("ba", str),
    "nodes": (300, int),
    "ba_m": (2, int),
    "er_p": (0.02, float),
    "cascades": (200, int),
    "base_prob": (0.1, float),
    "w_e": (0.4, float),
    "w_n": (0.4, float),
    "trait_low": (20.0, float),
    "trait_high": (80.0, float),
    "cascade_seeds": (1, int),
    "data_seed": (0, int),
    "prefix_fraction": (0.5, float),
    "val_fraction": (0.15, float),
    "test_fraction": (0.15, float),
    # model
    "base": ("gcn", str),
    "gated": (True, _parse_bool),
    "layers": (3, int),
    "d_c": (38, int),
    "d_p": (38, int),
    "embed_dim": (32, int),
    "gate_squash": ("sigmoid", str),
    "activation": ("relu", str),
    # training
    "learning_rate": (5e-4, float),
    "lambda": (1.0, float),
    "max_epochs": (100, int),
    "patience": (10, int),
    "batch_size": (16, int),
    "seed": (0, int),
    # sweep
    "lambdas": ("0,0.01,1,100", str),
    "sweep_seeds": ("0,1,2,3,4", str),
    # mlp baselines
    "mlp_epochs": (400, int),
}


class RunConfig:
    """Merged view of defaults, config file, and flag overrides."""

    def __init__(self):
        self.values = {k: default for k, (default, _) in CONFIG_SCHEMA.items()}
        self.provenance = {k: "default" for k in CONFIG_SCHEMA}

    def set(self, key: str, raw: str, source: str) -> None:
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config key '{key}'")
        _, parse = CONFIG_SCHEMA[key]
        try:
            self.values[key] = parse(raw)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"bad value for '{key}': {exc}") from exc
        self.provenance[key] = source

    def __getitem__(self, key: str):
        return self.values[key]

    def echo_lines(self) -> list[str]:
        out = []
        for key in CONFIG_SCHEMA:
            out.append(f"config.{key}={format_value(self.values[key])}")
        return out

    def synth_config(self) -> data.SynthConfig:
        return data.SynthConfig(
            graph_model=self["graph_model"], nodes=self["nodes"], ba_m=self["ba_m"],
            er_p=self["er_p"], cascades=self["cascades"], base_prob=self["base_prob"],
            w_e=self["w_e"], w_n=self["w_n"], trait_low=self["trait_low"],
            trait_high=self["trait_high"], cascade_seeds=self["cascade_seeds"],
            seed=self["data_seed"])

    def model_config(self) -> models.ModelConfig:
        return models.ModelConfig(
            base=self["base"], gated=self["gated"], layers=self["layers"],
            d_c=self["d_c"], d_p=self["d_p"], embed_dim=self["embed_dim"],
            gate_squash=self["gate_squash"], activation=self["activation"])

    def train_config(self) -> training.TrainConfig:
        return training.TrainConfig(
            learning_rate=self["learning_rate"], lam=self["lambda"],
            max_epochs=self["max_epochs"], patience=self["patience"],
            batch_size=self["batch_size"], seed=self["seed"])


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_file(path) -> dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, raw = stripped.partition("=")
            out[key.strip()] = raw.strip()
    return out


def build_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, raw in parse_config_file(args.config).items():
            cfg.set(key, raw, "file")
    for key, raw in getattr(args, "set", None) or []:
        cfg.set(key, raw, "flag")
    return cfg


# ---------------------------------------------------------------------------
# report plumbing


def next_slot_suffix(directory) -> str:
    """Next free artifact suffix in a run directory (append-only runs)."""
    os.makedirs(directory, exist_ok=True)
    idx = 1
    while True:
        suffix = "" if idx == 1 else f"_{idx}"
        if not os.path.exists(os.path.join(directory, f"report{suffix}.txt")):
            return suffix
        idx += 1


def write_report(directory, lines: list[str], suffix: str | None = None) -> str:
    """Write the next numbered report in a run directory (append-only)."""
    if suffix is None:
        suffix = next_slot_suffix(directory)
    path = os.path.join(directory, f"report{suffix}.txt")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_report(path) -> dict[str, str]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line and "=" in line:
                key, _, val = line.partition("=")
                out[key] = val
    return out


def run_dir(base, command: str, seed: int, lam: float) -> str:
    return os.path.join(base, f"{command}_seed{seed}_lam{format_value(float(lam))}")


def metrics_lines(prefix: str, record: training.MetricsRecord) -> list[str]:
    return [
        f"{prefix}.rmrse={repr(record.rmrse)}",
        f"{prefix}.mape={repr(record.mape)}",
    ]


# ---------------------------------------------------------------------------
# commands


def _prepare_dataset(cfg: RunConfig) -> data.Dataset:
    ds = data.synth_generate(cfg.synth_config())
    ds.cascades = [data.observe_prefix(c, cfg["prefix_fraction"]) for c in ds.cascades]
    ds.split = data.split_cascades(ds.cascades, cfg["val_fraction"],
                                   cfg["test_fraction"], cfg["data_seed"])
    return ds


def cmd_synth(args) -> int:
    cfg = build_config(args)
    ds = _prepare_dataset(cfg)
    data.export_dataset(ds, args.out)
    report = ["command=synth"] + cfg.echo_lines() + [
        f"result.nodes={ds.graph.node_count}",
        f"result.edges={ds.graph.edge_count}",
        f"result.cascades={len(ds.cascades)}",
        f"result.mean_cascade_size={repr(float(np.mean([c.total_size for c in ds.cascades])))}",
    ]
    write_report(args.out, report)
    print(f"dataset written to {args.out}")
    return 0


def cmd_features(args) -> int:
    graph = graphs.load_edge_list(args.graph)
    feats = graphs.structural_features(graph)
    graphs.validate_features(feats)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(graphs.features_to_csv(graph, feats))
    print(f"features written to {args.out}")
    return 0


def _train_once(cfg: RunConfig, ds: data.Dataset):
    result = training.train(cfg.model_config(), ds, cfg.train_config())
    test_cas, test_per = training.evaluate(result.store, ds, "test")
    return result, test_cas, test_per


def cmd_train(args) -> int:
    cfg = build_config(args)
    ds = data.import_dataset(args.data)
    result, test_cas, test_per = _train_once(cfg, ds)

    directory = run_dir(args.out, "train", cfg["seed"], cfg["lambda"])
    suffix = next_slot_suffix(directory)
    with open(os.path.join(directory, f"history{suffix}.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(training.history_to_csv(result.history))
    models.save_params(result.store, os.path.join(directory, f"checkpoint{suffix}"))

    report = ["command=train"] + cfg.echo_lines() + [
        f"result.epochs_run={len(result.history)}",
        f"result.best_epoch={result.best_epoch}",
        f"result.skipped_steps={result.skipped_steps}",
    ]
    report += metrics_lines("result.test.cascade", test_cas)
    report += metrics_lines("result.test.personality", test_per)
    path = write_report(directory, report, suffix)
    print(f"report written to {path}")
    return 0


def cmd_eval(args) -> int:
    store = models.load_params(args.checkpoint)
    ds = data.import_dataset(args.data)
    cas, per = training.evaluate(store, ds, args.split)
    lines = ["command=eval",
             f"config.checkpoint={args.checkpoint}",
             f"config.split={args.split}"]
    lines += metrics_lines(f"result.{args.split}.cascade", cas)
    lines += metrics_lines(f"result.{args.split}.personality", per)
    path = write_report(args.out, lines)
    print(f"report written to {path}")
    return 0


def cmd_baseline(args) -> int:
    cfg = build_config(args)
    ds = data.import_dataset(args.data)
    results = baselines.run_baselines(ds, mlp_epochs=cfg["mlp_epochs"], seed=cfg["seed"])
    lines = ["command=baseline"] + cfg.echo_lines()
    for name in sorted(results):
        lines += metrics_lines(f"result.{name}", results[name])
    path = write_report(args.out, lines)
    print(f"report written to {path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    ds = data.import_dataset(args.data)
    lams = [float(x) for x in cfg["lambdas"].split(",") if x.strip() != ""]
    seeds = [int(x) for x in cfg["sweep_seeds"].split(",") if x.strip() != ""]
    if not lams or not seeds:
        raise ConfigError("sweep needs at least one lambda and one seed")

    summary = ["lambda,seed,test_rmrse,test_mape,per_rmrse,per_mape"]
    by_lam: dict[float, list[float]] = {lam: [] for lam in lams}
    for lam in lams:
        for seed in seeds:
            cell = RunConfig()
            cell.values = dict(cfg.values)
            cell.provenance = dict(cfg.provenance)
            cell.set("lambda", repr(lam), "sweep")
            cell.set("seed", str(seed), "sweep")
            result, test_cas, test_per = _train_once(cell, ds)
            directory = run_dir(args.out, "sweep", seed, lam)
            report = ["command=sweep"] + cell.echo_lines()
            report += metrics_lines("result.test.cascade", test_cas)
            report += metrics_lines("result.test.personality", test_per)
            write_report(directory, report)
            summary.append(",".join([
                format_value(lam), str(seed), repr(test_cas.rmrse), repr(test_cas.mape),
                repr(test_per.rmrse), repr(test_per.mape)]))
            by_lam[lam].append(test_cas.rmrse)

    summary.append("")
    summary.append("lambda,mean_test_rmrse")
    for lam in lams:
        summary.append(f"{format_value(lam)},{repr(float(np.mean(by_lam[lam])))}")
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "summary.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(summary) + "\n")
    print(f"sweep summary written to {os.path.join(args.out, 'summary.csv')}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="percade",
        description="Trait-aware cascade prediction experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", nargs=2, action="append", metavar=("KEY", "VALUE"),
                       help="override one config key")

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="structural feature CSV for a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train one model on a dataset directory")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True, help="checkpoint path stem")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=data.SPLIT_NAMES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="fit the feature baselines")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("sweep", help="grid over lambda values and seeds")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


VALIDATION_ERRORS = (ConfigError, data.DataError, graphs.GraphError,
                     models.ModelError, training.TrainError,
                     baselines.BaselineError, FileNotFoundError)


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
