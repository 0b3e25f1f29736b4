"""Dense linear algebra, logistic regression primitives, metrics and seeded sampling.

Matrices and vectors are plain ``float64`` numpy arrays. Every function here is
pure given its inputs; randomness only enters through an explicit
:class:`RngStream`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.stats import rankdata

from .errors import DimensionError, DomainError

#: Singular values below ``RANK_RTOL * s_max`` count as zero.
RANK_RTOL = 1e-10

#: Probability threshold used by :func:`accuracy`.
DEFAULT_THRESHOLD = 0.5


def as_vector(x, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} has non-finite entries")
    return v


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError(f"{name} has non-finite entries")
    return m


class RngStream:
    """Seeded random stream backed by numpy's PCG64 bit generator.

    PCG64 output is fixed by numpy's stream-compatibility policy, so the same
    seed yields the same draws on every platform. Streams for separate roles
    are derived with :meth:`derive` rather than shared.
    """

    algorithm = "PCG64"

    def __init__(self, seed: int | np.random.SeedSequence):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
            self.seed = int(seed.entropy) if isinstance(seed.entropy, int) else None
        else:
            self.seed = int(seed)
            self._seq = np.random.SeedSequence(self.seed & 0xFFFFFFFFFFFFFFFF)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    @classmethod
    def derive(cls, seed: int, *keys: int) -> "RngStream":
        """Stream for ``(seed, key0, key1, ...)``, e.g. ``(seed, party_id, round)``."""
        entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
        return cls(np.random.SeedSequence(entropy))

    def uniform(self, size=None):
        """Uniform draws on [0, 1)."""
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def randbits(self, k: int) -> int:
        """Uniform non-negative integer below ``2**k`` (arbitrary precision)."""
        if k <= 0:
            return 0
        nbytes = (k + 7) // 8
        value = int.from_bytes(self.generator.bytes(nbytes), "big")
        return value >> (nbytes * 8 - k)

    def randbelow(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection sampling."""
        if n <= 0:
            raise DomainError("randbelow needs n > 0")
        k = n.bit_length()
        while True:
            v = self.randbits(k)
            if v < n:
                return v


def sigmoid(z):
    """Logistic function, stable for large ``|z|``.

    Negative inputs go through ``e^z / (1 + e^z)`` so ``exp`` never overflows.
    Accepts scalars or arrays.
    """
    z_arr = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z_arr)
    pos = z_arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z_arr[pos]))
    ez = np.exp(z_arr[~pos])
    out[~pos] = ez / (1.0 + ez)
    if out.ndim == 0:
        return float(out)
    return out


def _check_same_length(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"{what}: lengths {a.shape[0]} and {b.shape[0]} differ")


def _check_labels(labels: np.ndarray) -> None:
    if not np.all((labels == 0) | (labels == 1)):
        raise DomainError("labels must be 0 or 1")


def regularizer(W, kind: Literal["l2", "l1"] = "l2") -> float:
    W = as_vector(W, "W")
    if kind == "l2":
        return float(W @ W)
    if kind == "l1":
        return float(np.abs(W).sum())
    raise DomainError(f"unknown regularizer {kind!r}")


def logistic_loss(preds, labels, W=None, lam: float = 0.0,
                  reg: Literal["l2", "l1"] = "l2") -> float:
    """Mean negative log-likelihood plus ``lam`` times the regularizer of ``W``.

    The default regularizer is the squared L2 norm.
    """
    preds = as_vector(preds, "preds")
    labels = as_vector(labels, "labels")
    _check_same_length(preds, labels, "logistic_loss")
    _check_labels(labels)
    if np.any(preds <= 0.0) or np.any(preds >= 1.0):
        raise DomainError("predictions must lie strictly inside (0, 1)")
    if lam < 0:
        raise DomainError("lam must be >= 0")
    nll = -np.mean(labels * np.log(preds) + (1.0 - labels) * np.log1p(-preds))
    if lam and W is not None:
        nll += lam * regularizer(W, reg)
    return float(nll)


def logistic_loss_from_logits(logits, labels) -> float:
    """Same value as :func:`logistic_loss` with ``lam=0``, computed from logits.

    Saturated predictions (sigmoid rounding to exactly 0 or 1) stay finite.
    """
    z = as_vector(logits, "logits")
    labels = as_vector(labels, "labels")
    _check_same_length(z, labels, "logistic_loss_from_logits")
    # -[y log s(z) + (1-y) log(1-s(z))] = log(1+e^z) - y z
    return float(np.mean(np.logaddexp(0.0, z) - labels * z))


def residues(labels, preds) -> np.ndarray:
    """Per-sample prediction error ``y_i - f(x_i)``."""
    labels = as_vector(labels, "labels")
    preds = as_vector(preds, "preds")
    _check_same_length(labels, preds, "residues")
    return labels - preds


def gradient(X_batch, r, denom: int) -> np.ndarray:
    """Logistic-loss gradient ``-(1/denom) * X_batch.T @ r``."""
    X = as_matrix(X_batch, "X_batch")
    r = as_vector(r, "r")
    if X.shape[0] != r.shape[0]:
        raise DimensionError(f"X_batch has {X.shape[0]} rows but r has {r.shape[0]} entries")
    if denom < 1:
        raise DomainError("denom must be >= 1")
    return -(X.T @ r) / denom


@dataclass(frozen=True)
class SolveReport:
    """Outcome of :func:`solve_linear`.

    ``status`` is ``"unique"``, ``"underdetermined"`` or ``"inconsistent"``;
    ``solution`` is only set for ``"unique"``.
    """

    status: str
    rank_A: int
    rank_Ab: int
    solution: np.ndarray | None = None

    @property
    def unique(self) -> bool:
        return self.status == "unique"


def numerical_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def solve_linear(A, b, rtol: float = RANK_RTOL) -> SolveReport:
    """Classify and solve ``A x = b`` by comparing numerical ranks.

    Ranks come from singular values, with anything below ``rtol`` times the
    largest treated as zero. A unique system is solved by least squares so
    that slightly noisy right-hand sides still give the closest solution.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    if A.shape[0] != b.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
    cols = A.shape[1]
    rank_A = numerical_rank(A, rtol)
    rank_Ab = numerical_rank(np.column_stack([A, b]), rtol)
    if rank_A != rank_Ab:
        return SolveReport("inconsistent", rank_A, rank_Ab)
    if rank_A < cols:
        return SolveReport("underdetermined", rank_A, rank_Ab)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return SolveReport("unique", rank_A, rank_Ab, x)


def accuracy(preds, labels, threshold: float = DEFAULT_THRESHOLD) -> float:
    preds = as_vector(preds, "preds")
    labels = as_vector(labels, "labels")
    _check_same_length(preds, labels, "accuracy")
    if preds.size == 0:
        raise DomainError("accuracy of an empty sample")
    return float(np.mean((preds >= threshold).astype(np.float64) == labels))


def auc(scores, labels) -> float:
    """ROC AUC via the Mann-Whitney rank statistic; tied scores count 1/2."""
    scores = as_vector(scores, "scores")
    labels = as_vector(labels, "labels")
    _check_same_length(scores, labels, "auc")
    _check_labels(labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DomainError("auc needs both classes present")
    ranks = rankdata(scores)  # average ranks handle ties
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    auc: float
    loss: float


def evaluate(X, y, W) -> Metrics:
    """Accuracy, AUC and mean log-loss of weights ``W`` on ``(X, y)``."""
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    z = X @ as_vector(W, "W")
    p = sigmoid(z)
    try:
        a = auc(p, y)
    except DomainError:
        a = float("nan")
    return Metrics(accuracy(p, y), a, logistic_loss_from_logits(z, y))


def laplace_icdf(u, scale: float):
    """Inverse CDF of Laplace(0, scale) at ``u`` in (0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    out = np.where(u < 0.5,
                   scale * np.log(2.0 * np.maximum(u, 1e-300)),
                   -scale * np.log(2.0 * np.maximum(1.0 - u, 1e-300)))
    if out.ndim == 0:
        return float(out)
    return out


def sample_laplace(scale: float, rng: RngStream, size=None):
    """Laplace(0, scale) draws by inverting the CDF of uniform draws."""
    if not scale > 0:
        raise DomainError(f"Laplace scale must be > 0, got {scale}")
    return laplace_icdf(rng.uniform(size), scale)
