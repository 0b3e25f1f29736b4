"""Training configuration and the defense selector."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Union

from ..errors import ConfigError
from ..mechanisms import AddNoiseParams, MultNoiseParams, RRParams


@dataclass(frozen=True)
class HybridParams:
    """Randomized-response + HE defense.

    ``epsilon`` drives the randomized response on the batch indicator, ``q`` is
    the fraction of ones placed in it and ``s_size`` the size of the announced
    subset. ``enforce_constraints=False`` skips the parameter feasibility
    checks so degenerate settings (keep probability 1) can be exercised.
    """

    epsilon: float
    q: float
    s_size: int
    enforce_constraints: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if self.s_size < 2:
            raise ConfigError("s_size must be >= 2")
        if not 0 < self.q < 1:
            raise ConfigError("q must lie in (0, 1)")
        if self.ones < 1:
            raise ConfigError("q * s_size rounds to zero ones")

    @property
    def rr(self) -> RRParams:
        return RRParams(self.epsilon)

    @property
    def ones(self) -> int:
        return int(round(self.q * self.s_size))

    def expected_lrr(self) -> float:
        p = self.rr.keep_probability
        return self.q * self.s_size * p + (1 - self.q) * self.s_size * (1 - p)

    def check_feasible(self, d_alice: int) -> None:
        """Raise :class:`ConfigError` unless ``d_alice < E[L_RR] < |S|``, ``0<q<1/2``, ``1/2<p<1``."""
        if not self.enforce_constraints:
            if self.ones <= d_alice and self.expected_lrr() <= d_alice:
                raise ConfigError(f"forwarded count can never exceed d_alice={d_alice}")
            return
        p = self.rr.keep_probability
        problems = []
        if not 0 < self.q < 0.5:
            problems.append(f"q={self.q} must satisfy 0 < q < 1/2")
        if not 0.5 < p < 1:
            problems.append(f"keep probability p={p:.6g} must satisfy 1/2 < p < 1")
        e = self.expected_lrr()
        if not d_alice < e < self.s_size:
            problems.append(f"expected L_RR={e:.2f} must satisfy d_alice={d_alice} < L_RR < |S|={self.s_size}")
        if problems:
            raise ConfigError("hybrid parameters infeasible: " + "; ".join(problems))


Defense = Union[None, AddNoiseParams, MultNoiseParams, HybridParams]

_DEFENSE_TYPES = {"add": AddNoiseParams, "mult": MultNoiseParams, "hybrid": HybridParams}


def defense_name(defense: Defense) -> str:
    if defense is None:
        return "none"
    for name, cls in _DEFENSE_TYPES.items():
        if isinstance(defense, cls):
            return name
    raise ConfigError(f"unknown defense {defense!r}")


@dataclass(frozen=True)
class TrainConfig:
    """Everything needed to reproduce a training run.

    ``fp_scale`` is the fixed-point scale used on the encrypted gradient path;
    gradients are decoded at ``fp_scale**2``.
    """

    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 16
    lam: float = 0.0
    seed: int = 0
    defense: Defense = None
    key_bits: int = 2048
    normalize_by_k: bool = True
    fp_scale: int = 10**9
    max_redraws: int = 100
    transport: str = "inprocess"

    def __post_init__(self):
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ConfigError("learning_rate must be finite and >= 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.fp_scale < 1:
            raise ConfigError("fp_scale must be >= 1")
        if self.transport not in ("inprocess", "socket"):
            raise ConfigError(f"unknown transport {self.transport!r}")

    @property
    def defense_name(self) -> str:
        return defense_name(self.defense)

    @property
    def uses_he(self) -> bool:
        return self.defense is None or isinstance(self.defense, HybridParams)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "defense"}
        out["defense"] = {"kind": self.defense_name,
                          **({} if self.defense is None else asdict(self.defense))}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        params = dict(d.pop("defense", {"kind": "none"}))
        kind = params.pop("kind")
        defense = None if kind == "none" else _DEFENSE_TYPES[kind](**params)
        return cls(defense=defense, **d)
