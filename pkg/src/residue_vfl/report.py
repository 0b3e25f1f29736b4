"""Run reports and their structured-text (JSON) serialization."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .numeric import Metrics

REPORT_SCHEMA_VERSION = 1


@dataclass
class RoundRecord:
    """Bob-side bookkeeping for one protocol round.

    ``batch`` lists the samples whose residues actually drive the gradient
    (the true batch), ``forwarded`` how many samples Alice was told about, and
    ``denom`` the gradient normalizer Bob applied.
    """

    epoch: int
    batch: list[int]
    forwarded: int
    denom: int
    redraws: int = 0

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "batch": list(self.batch), "forwarded": self.forwarded,
                "denom": self.denom, "redraws": self.redraws}


@dataclass
class TrainReport:
    per_epoch_loss: list[float] = field(default_factory=list)
    final_metrics: Metrics | None = None
    attack_success: float | None = None
    timings: dict = field(default_factory=lambda: {"total_s": 0.0, "crypto_s": 0.0, "channel_s": 0.0})
    config_echo: dict = field(default_factory=dict)
    rounds: list[RoundRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = True) -> dict:
        fm = self.final_metrics
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config_echo": self.config_echo,
            "meta": self.meta,
            "per_epoch_loss": list(self.per_epoch_loss),
            "final_metrics": None if fm is None else
            {"accuracy": fm.accuracy, "auc": _num(fm.auc), "loss": fm.loss},
            "attack_success": self.attack_success,
            "timings": dict(self.timings) if include_timings else None,
            "rounds": [r.to_dict() for r in self.rounds],
        }

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_dict(include_timings), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')}")
        fm = d.get("final_metrics")
        return cls(
            per_epoch_loss=list(d["per_epoch_loss"]),
            final_metrics=None if fm is None else
            Metrics(fm["accuracy"], float("nan") if fm["auc"] is None else fm["auc"], fm["loss"]),
            attack_success=d.get("attack_success"),
            timings=d.get("timings") or {},
            config_echo=d["config_echo"],
            rounds=[RoundRecord(**r) for r in d.get("rounds", [])],
            meta=d.get("meta", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "TrainReport":
        return cls.from_dict(json.loads(text))

    def save(self, path, include_timings: bool = True) -> None:
        Path(path).write_text(self.to_json(include_timings), encoding="utf-8")


def _num(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x
