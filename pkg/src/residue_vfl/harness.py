"""Experiment orchestration shared by the CLI and the demo scripts."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import data
from .attack import attack_transcript
from .numeric import evaluate
from .protocol import TrainConfig, TrainResult, centralized_train, run_protocol

BUILTIN_DATASETS = ("breast-cancer", "digits")


@dataclass
class Prepared:
    train: data.VerticalSplit
    test: data.VerticalSplit
    meta: dict


def load_dataset(name: str, label_column: str | int = -1, seed: int = 0) -> data.Dataset:
    """Builtin name, ``synth[:n,d,separation]`` or a CSV path."""
    if name in BUILTIN_DATASETS:
        return data.load_builtin(name)
    if name.startswith("synth"):
        n, d, sep = 600, 30, 2.0
        if ":" in name:
            parts = name.split(":", 1)[1].split(",")
            n, d = int(parts[0]), int(parts[1])
            if len(parts) > 2:
                sep = float(parts[2])
        return data.synth(n, d, sep, seed)
    return data.load_csv(name, label_column)


def prepare(dataset: str | data.Dataset, d_alice: int | None = None, test_fraction: float = 0.2,
            split_seed: int = 0, label_column: str | int = -1) -> Prepared:
    """Split, standardize on the training part, and cut features between the parties.

    ``d_alice=None`` gives Alice every feature and Bob only the labels.
    """
    ds = dataset if isinstance(dataset, data.Dataset) else load_dataset(dataset, label_column, split_seed)
    train, test = data.train_test_split(ds, test_fraction, split_seed)
    train, means, stds = data.standardize(train)
    test = data.apply_standardization(test, means, stds)
    d_alice = ds.d if d_alice is None else d_alice
    meta = {
        "dataset": dataset if isinstance(dataset, str) else "<in-memory>",
        "n_train": train.n, "n_test": test.n, "d": ds.d, "d_alice": d_alice,
        "dropped_rows": ds.dropped_rows, "constant_columns": list(ds.constant_columns),
        "test_fraction": test_fraction, "split_seed": split_seed,
    }
    return Prepared(data.vertical_split(train, d_alice), data.vertical_split(test, d_alice), meta)


def run_experiment(prep: Prepared, cfg: TrainConfig, attack: bool = True) -> TrainResult:
    """Train with the configured protocol, score the joint model on the test split, replay the attack."""
    tr = prep.train
    result = run_protocol(tr.alice_X, tr.bob_X, tr.y, cfg)
    W = np.concatenate([result.w_alice, result.w_bob])
    report = result.report
    report.final_metrics = evaluate(prep.test.joined(), prep.test.y, W)
    report.meta = dict(prep.meta)
    if attack:
        ar = attack_transcript(result.transcript, tr.alice_X, tr.y, seed=cfg.seed)
        report.attack_success = ar.success_rate
        report.meta["attack"] = ar.to_dict()
    return result


def run_centralized(prep: Prepared, cfg: TrainConfig):
    W, report = centralized_train(prep.train.joined(), prep.train.y, cfg)
    report.final_metrics = evaluate(prep.test.joined(), prep.test.y, W)
    report.meta = dict(prep.meta)
    return W, report


def _mean_std(xs):
    xs = [x for x in xs if x is not None and not (isinstance(x, float) and math.isnan(x))]
    if not xs:
        return None, None
    return float(np.mean(xs)), float(np.std(xs))


def bench(prep: Prepared, configs: dict[str, TrainConfig], seeds: list[int]) -> dict:
    """Run each named config once per seed and tabulate metrics and timings.

    Adds ``hybrid_over_baseline`` (mean total time ratio) when both ``none``
    and ``hybrid`` are present.
    """
    rows = {}
    for name, cfg in configs.items():
        cells = []
        for s in seeds:
            rep = run_experiment(prep, replace(cfg, seed=s)).report
            cells.append(rep)
        row = {"defense": name, "seeds": list(seeds), "config": cfg.to_dict()}
        for key, getter in [
            ("accuracy", lambda r: r.final_metrics.accuracy),
            ("auc", lambda r: r.final_metrics.auc),
            ("attack_success", lambda r: r.attack_success),
            ("total_s", lambda r: r.timings["total_s"]),
            ("crypto_s", lambda r: r.timings["crypto_s"]),
            ("channel_s", lambda r: r.timings["channel_s"]),
        ]:
            mean, std = _mean_std([getter(r) for r in cells])
            row[key] = {"mean": mean, "std": std}
        l_rr = [rec.forwarded for r in cells for rec in r.rounds]
        row["mean_forwarded"] = float(np.mean(l_rr)) if l_rr else None
        rows[name] = row
    out = {"schema_version": 1, "meta": prep.meta, "rows": list(rows.values())}
    if "none" in rows and "hybrid" in rows:
        out["hybrid_over_baseline"] = rows["hybrid"]["total_s"]["mean"] / rows["none"]["total_s"]["mean"]
    return out


def format_bench(table: dict) -> str:
    lines = [f"{'defense':<8} {'acc':>14} {'auc':>14} {'attack':>8} {'total_s':>10} {'crypto_s':>10} {'L_RR':>6}"]
    for row in table["rows"]:
        acc, auc, atk = row["accuracy"], row["auc"], row["attack_success"]["mean"]
        lines.append(
            f"{row['defense']:<8} {acc['mean']:.4f}+-{acc['std']:.4f} "
            f"{(auc['mean'] or float('nan')):.4f}+-{(auc['std'] or 0):.4f} "
            f"{'-' if atk is None else format(atk, '.3f'):>8} "
            f"{row['total_s']['mean']:>10.3f} {row['crypto_s']['mean']:>10.3f} "
            f"{row['mean_forwarded'] or 0:>6.1f}")
    if "hybrid_over_baseline" in table:
        lines.append(f"hybrid/baseline time ratio: {table['hybrid_over_baseline']:.2f}")
    return "\n".join(lines)


def write_matrix_csv(path, M: np.ndarray) -> None:
    np.savetxt(Path(path), np.asarray(M, dtype=np.float64), delimiter=",", fmt="%.17g")


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    M = np.loadtxt(path, delimiter=",", ndmin=2)
    return M
