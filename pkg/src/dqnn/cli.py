"""Command-line front end: seeded runs, CSV/JSON tables, config files.

Subcommands
-----------
train       train one network on a random unitary-learning task
generalize  cost over a test pool vs. number of training pairs
noise       cost over the clean pool vs. number of corrupted training pairs
estimate    closed-form optimal-cost estimate for a unitary-learning task
swaptest    sampled SWAP-test fidelity estimate on random states
resources   gate/qubit budget of hardware-style cost estimation

Every run requires an explicit --seed, writes ``resolved-config.json`` (all
defaults materialised) next to its outputs, and is byte-for-byte reproducible
given the same arguments.  Values from a ``--config`` JSON document fill in
unspecified flags; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .experiments import (
    generalization_experiment,
    noise_experiment,
    optimal_cost_estimate,
    replicate_pool,
)
from .linalg import haar_random_state, split_rng
from .network import Network
from .statevector import format_resource_report, resource_count, swap_test
from .training import TrainingConfig, train

# per-subcommand mergeable fields and their defaults (None = mandatory)
_FIELDS = {
    "train": {
        "seed": None, "widths": "2,2", "pairs": 10, "epsilon": 0.1, "eta": 1.0,
        "rounds": 100, "record_k_norms": False, "out": ".", "format": "csv",
    },
    "generalize": {
        "seed": None, "widths": "3,3,3", "N": 10, "n": "1:8", "epsilon": 0.1,
        "eta": 2 / 3, "rounds": 1000, "replicates": 20, "workers": 1,
        "out": ".", "format": "csv",
    },
    "noise": {
        "seed": None, "widths": "2,3,2", "N": 100, "noisy": "0,30,60,100",
        "epsilon": 0.1, "eta": 1.0, "rounds": 300, "replicates": 5,
        "workers": 1, "out": ".", "format": "csv",
    },
    "estimate": {
        "seed": None, "n": None, "N": None, "D": None, "orthogonal": False,
        "out": ".", "format": "csv",
    },
    "swaptest": {
        "seed": None, "qubits": 2, "shots": 10_000, "out": ".", "format": "csv",
    },
    "resources": {
        "seed": None, "widths": "2,2", "pairs": 10, "shots": 100,
        "out": ".", "format": "csv",
    },
}


def _parse_widths(text, parser):
    try:
        widths = tuple(int(w) for w in str(text).split(","))
    except ValueError:
        parser.error(f"malformed value for field 'widths': {text!r}")
    if len(widths) < 2 or any(w < 1 for w in widths):
        parser.error(f"malformed value for field 'widths': {text!r}")
    return widths


def _parse_counts(text, parser, field):
    """Accept 'a:b' (inclusive range) or a comma list."""
    text = str(text)
    try:
        if ":" in text:
            lo, hi = text.split(":")
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(v) for v in text.split(",")]
    except ValueError:
        parser.error(f"malformed value for field '{field}': {text!r}")
    if not values:
        parser.error(f"malformed value for field '{field}': {text!r}")
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dqnn",
        description="Train and probe dissipative quantum neural networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="master seed (mandatory)")
        p.add_argument("--config", type=str, default=None, help="JSON config document")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="table format (default csv)")

    p = sub.add_parser("train", help="train one network on a random unitary task")
    common(p)
    p.add_argument("--widths", type=str, default=None, help="layer widths, e.g. 2,3,2")
    p.add_argument("--pairs", type=int, default=None, help="training pairs")
    p.add_argument("--epsilon", type=float, default=None, help="step size")
    p.add_argument("--eta", type=float, default=None, help="learning rate")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--record-k-norms", action=argparse.BooleanOptionalAction,
                   default=None, dest="record_k_norms")

    p = sub.add_parser("generalize", help="test cost vs. number of training pairs")
    common(p)
    p.add_argument("--widths", type=str, default=None)
    p.add_argument("--N", type=int, default=None, dest="N", help="test pool size")
    p.add_argument("--n", type=str, default=None, help="training-pair counts, e.g. 1:8")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("noise", help="good-pair cost vs. corrupted training pairs")
    common(p)
    p.add_argument("--widths", type=str, default=None)
    p.add_argument("--N", type=int, default=None, dest="N", help="training pool size")
    p.add_argument("--noisy", type=str, default=None, help="corrupted counts, e.g. 0,30,60")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("estimate", help="closed-form optimal-cost estimate")
    common(p)
    p.add_argument("--n", type=int, default=None, help="training pairs")
    p.add_argument("--N", type=int, default=None, dest="N", help="test pool size")
    p.add_argument("--D", type=int, default=None, dest="D", help="Hilbert space dimension")
    p.add_argument("--orthogonal", action=argparse.BooleanOptionalAction, default=None)

    p = sub.add_parser("swaptest", help="sampled fidelity estimate on random states")
    common(p)
    p.add_argument("--qubits", type=int, default=None)
    p.add_argument("--shots", type=int, default=None)

    p = sub.add_parser("resources", help="hardware budget of cost estimation")
    common(p)
    p.add_argument("--widths", type=str, default=None)
    p.add_argument("--pairs", type=int, default=None)
    p.add_argument("--shots", type=int, default=None)

    return parser


def _resolve(args, parser) -> dict:
    """Merge CLI flags over config-document values over defaults."""
    fields = _FIELDS[args.command]
    document = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                document = json.load(fh)
        except OSError as exc:
            parser.error(f"cannot read config document: {exc}")
        except json.JSONDecodeError as exc:
            parser.error(f"malformed config document: {exc}")
        if not isinstance(document, dict):
            parser.error("config document must be a JSON object")
        for key in document:
            if key not in fields:
                parser.error(f"unknown config key '{key}' for command {args.command!r}")
    resolved = {"command": args.command}
    for key, default in fields.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
        elif key in document:
            resolved[key] = document[key]
        elif default is not None:
            resolved[key] = default
        else:
            parser.error(f"missing required field: {key}")
    return resolved


def _write_resolved(resolved: dict, out_dir: str) -> None:
    path = os.path.join(out_dir, "resolved-config.json")
    with open(path, "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_table(out_dir, stem, fieldnames, rows, fmt):
    """Self-describing table: CSV with header or JSON with a schema field."""
    path = os.path.join(out_dir, f"{stem}.{fmt}")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fieldnames)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    else:
        doc = {
            "schema": f"dqnn-{stem}",
            "version": 1,
            "rows": [dict(zip(fieldnames, row)) for row in rows],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return path


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _cmd_train(resolved, parser):
    widths = _parse_widths(resolved["widths"], parser)
    config = TrainingConfig(
        epsilon=float(resolved["epsilon"]),
        eta=float(resolved["eta"]),
        rounds=int(resolved["rounds"]),
        seed=int(resolved["seed"]),
        record_k_norms=bool(resolved["record_k_norms"]),
    )
    data, net = replicate_pool(widths, int(resolved["pairs"]), config.seed, replicate=0)
    history = train(net, data, config)
    out = resolved["out"]
    rows = []
    norm_labels = list(history.k_norm_labels()) if history.k_norms is not None else []
    for r, c in enumerate(history.costs):
        row = [r, float(c)]
        if history.k_norms is not None:
            row += list(history.k_norms[r]) if r < len(history.k_norms) else [""] * len(norm_labels)
        rows.append(row)
    _write_table(out, "history", ["round", "cost"] + norm_labels, rows, resolved["format"])
    history.final_network.save(os.path.join(out, "network.json"))
    print(f"final cost {history.costs[-1]!r} after {config.rounds} rounds")
    return 0


def _cmd_generalize(resolved, parser):
    widths = _parse_widths(resolved["widths"], parser)
    counts = _parse_counts(resolved["n"], parser, "n")
    config = TrainingConfig(
        epsilon=float(resolved["epsilon"]), eta=float(resolved["eta"]),
        rounds=int(resolved["rounds"]), seed=int(resolved["seed"]),
    )
    records = generalization_experiment(
        widths, int(resolved["N"]), counts, config,
        replicates=int(resolved["replicates"]), master_seed=int(resolved["seed"]),
        workers=int(resolved["workers"]),
    )
    rows = [
        [r.variable, r.mean_cost, r.std_cost, r.estimate, r.replicates, r.master_seed]
        for r in records
    ]
    _write_table(
        resolved["out"], "generalization",
        ["n", "mean_cost", "std_cost", "estimate", "replicates", "master_seed"],
        rows, resolved["format"],
    )
    last = records[-1]
    print(f"mean test cost {last.mean_cost!r} at n={last.variable} "
          f"({last.replicates} replicates)")
    return 0


def _cmd_noise(resolved, parser):
    widths = _parse_widths(resolved["widths"], parser)
    counts = _parse_counts(resolved["noisy"], parser, "noisy")
    config = TrainingConfig(
        epsilon=float(resolved["epsilon"]), eta=float(resolved["eta"]),
        rounds=int(resolved["rounds"]), seed=int(resolved["seed"]),
    )
    records = noise_experiment(
        widths, int(resolved["N"]), counts, config,
        replicates=int(resolved["replicates"]), master_seed=int(resolved["seed"]),
        workers=int(resolved["workers"]),
    )
    rows = [
        [r.variable, r.mean_cost, r.std_cost, r.replicates, r.master_seed]
        for r in records
    ]
    _write_table(
        resolved["out"], "noise",
        ["n_noisy", "mean_good_cost", "std", "replicates", "master_seed"],
        rows, resolved["format"],
    )
    last = records[-1]
    print(f"mean good-pair cost {last.mean_cost!r} at {last.variable} noisy pairs "
          f"({last.replicates} replicates)")
    return 0


def _cmd_estimate(resolved, parser):
    value = optimal_cost_estimate(
        int(resolved["n"]), int(resolved["N"]), int(resolved["D"]),
        orthogonal=bool(resolved["orthogonal"]),
    )
    print(repr(value))
    return 0


def _cmd_swaptest(resolved, parser):
    seed = int(resolved["seed"])
    qubits = int(resolved["qubits"])
    dim = 1 << qubits
    phi = haar_random_state(dim, split_rng(seed, 0))
    preparation = haar_random_state(dim * dim, split_rng(seed, 1))
    result = swap_test(phi, preparation, int(resolved["shots"]), split_rng(seed, 2))
    row = [
        result.shots, result.zeros, result.p0_exact, result.p0_estimate,
        result.fidelity_raw, result.fidelity, result.fidelity_exact,
    ]
    _write_table(
        resolved["out"], "swaptest",
        ["shots", "zeros", "p0_exact", "p0_estimate", "fidelity_raw",
         "fidelity", "fidelity_exact"],
        [row], resolved["format"],
    )
    print(f"p0 estimate {result.p0_estimate!r} (exact {result.p0_exact!r}, "
          f"{result.shots} shots)")
    return 0


def _cmd_resources(resolved, parser):
    widths = _parse_widths(resolved["widths"], parser)
    net = Network.identity(widths)
    counts = resource_count(net, int(resolved["pairs"]), int(resolved["shots"]))
    report = format_resource_report(counts)
    with open(os.path.join(resolved["out"], "resources.txt"), "w") as fh:
        fh.write(report)
    sys.stdout.write(report)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "generalize": _cmd_generalize,
    "noise": _cmd_noise,
    "estimate": _cmd_estimate,
    "swaptest": _cmd_swaptest,
    "resources": _cmd_resources,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    resolved = _resolve(args, parser)
    try:
        os.makedirs(resolved["out"], exist_ok=True)
        _write_resolved(resolved, resolved["out"])
        return _COMMANDS[resolved["command"]](resolved, parser)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
