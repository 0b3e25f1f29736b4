"""Label inference by the passive party from what it legitimately observes.

Alice knows her own features, the announced batch indices and, after removing
her own mask, the plaintext gradient ``g = -(1/|B|) X_B^T r``. Whenever
``X_B^T`` has full column rank the residues, and with them the labels, follow
by solving a linear system.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .errors import DimensionError, ParseError
from .numeric import RngStream, as_matrix, as_vector, solve_linear
from .protocol.wire import Kind, Transcript

#: Relative singular-value cutoff for the rank test. Decoded gradients carry
#: fixed-point rounding, so an exactly consistent system is only consistent up
#: to roughly 1/scale; 1e-6 separates that from genuine inconsistency.
ATTACK_RTOL = 1e-6

#: Largest forwarded set the brute-force demonstrator will enumerate.
BRUTE_FORCE_LIMIT = 12


@dataclass(frozen=True)
class AttackInput:
    X_A_batch: np.ndarray
    g_A: np.ndarray
    batch_denom: int

    def __post_init__(self):
        X = as_matrix(self.X_A_batch, "X_A_batch")
        g = as_vector(self.g_A, "g_A")
        if X.shape[1] != g.size:
            raise DimensionError(f"{X.shape[1]} feature columns but gradient has {g.size} entries")
        object.__setattr__(self, "X_A_batch", X)
        object.__setattr__(self, "g_A", g)


def build_system(inp: AttackInput) -> tuple[np.ndarray, np.ndarray]:
    """``A = X_B^T`` and ``b = -|B| g`` so that ``A r = b``."""
    return inp.X_A_batch.T.copy(), -float(inp.batch_denom) * inp.g_A


def check_recoverable(A, b, rtol: float = ATTACK_RTOL) -> bool:
    """True iff ``rank(A) == rank([A|b]) ==`` number of unknowns."""
    return solve_linear(A, b, rtol).unique


def infer_labels(residues) -> np.ndarray:
    """Sign rule: non-negative residue means label 1 (an exact zero goes to 1)."""
    return (np.asarray(residues, dtype=np.float64) >= 0).astype(np.int8)


def hybrid_search_cost(l_rr: int) -> int:
    """Enumeration cost ``sum_k k^2 C(L, k) = L (L+1) 2^(L-2)`` for ``L = l_rr``."""
    if l_rr < 1:
        raise ValueError("l_rr must be >= 1")
    if l_rr == 1:
        return 1
    return l_rr * (l_rr + 1) * 2 ** (l_rr - 2)


def hybrid_search_cost_bruteforce(l_rr: int) -> int:
    return sum(k * k * comb(l_rr, k) for k in range(1, l_rr + 1))


def brute_force_candidates(X_fwd, g_A, denom: int, max_unknowns: int = BRUTE_FORCE_LIMIT,
                           rtol: float = ATTACK_RTOL):
    """Enumerate sample subsets of the forwarded set whose system is uniquely solvable.

    Only for tiny forwarded sets; the work grows like ``L^2 2^L``. Yields
    ``(subset_positions, residues)`` pairs, positions relative to ``X_fwd``.
    """
    X_fwd = as_matrix(X_fwd, "X_fwd")
    L = X_fwd.shape[0]
    if L > max_unknowns:
        raise ValueError(f"forwarded set of {L} exceeds the brute-force limit {max_unknowns}")
    b = -float(denom) * as_vector(g_A, "g_A")
    for k in range(1, L + 1):
        for subset in combinations(range(L), k):
            rep = solve_linear(X_fwd[list(subset)].T, b, rtol)
            if rep.unique:
                yield subset, rep.solution


@dataclass
class RoundAttack:
    round: int
    indices: np.ndarray
    recoverable: bool
    residue_estimates: np.ndarray | None = None


@dataclass
class AttackReport:
    """Outcome of replaying a transcript.

    ``inferred_labels`` (aligned with ``sample_indices``) aggregates labels
    from recoverable rounds by majority vote and is ``None`` when no round
    was recoverable. ``success_rate`` covers every sample Alice saw; samples
    never recovered are scored with the attacker's coin-flip fallback.
    """

    recoverable: bool
    rounds: list[RoundAttack] = field(default_factory=list)
    sample_indices: np.ndarray | None = None
    inferred_labels: np.ndarray | None = None
    success_rate: float | None = None
    n_labels: int = 0

    @property
    def residue_estimates(self) -> np.ndarray | None:
        parts = [r.residue_estimates for r in self.rounds if r.residue_estimates is not None]
        return np.concatenate(parts) if parts else None

    @property
    def rounds_recoverable(self) -> int:
        return sum(r.recoverable for r in self.rounds)

    def to_dict(self) -> dict:
        return {
            "recoverable": self.recoverable,
            "rounds": len(self.rounds),
            "rounds_recoverable": self.rounds_recoverable,
            "labels_attacked": self.n_labels,
            "recovered_samples": None if self.inferred_labels is None else int(self.inferred_labels.size),
            "success_rate": self.success_rate,
        }


def attack_round(inp: AttackInput, rtol: float = ATTACK_RTOL):
    """Solve one round. Returns ``(recoverable, residue_estimates or None)``."""
    A, b = build_system(inp)
    rep = solve_linear(A, b, rtol)
    return rep.unique, rep.solution


def _majority(votes: list[int]) -> int:
    return 1 if 2 * sum(votes) >= len(votes) else 0


def attack_transcript(transcript: Transcript, alice_features, labels=None,
                      seed: int = 0, rtol: float = ATTACK_RTOL) -> AttackReport:
    """Replay every round of ``transcript`` from Alice's point of view."""
    X = as_matrix(alice_features, "alice_features")
    try:
        messages = transcript.messages
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed transcript: {exc}") from exc
    scale2 = None
    fwd: dict[int, np.ndarray] = {}
    masks: dict[int, list[int]] = {}
    rounds: list[RoundAttack] = []
    for m in messages:
        if m.kind == Kind.PUBLIC_KEY:
            scale2 = m.value[1] ** 2
        elif m.kind == Kind.BATCH_ANNOUNCE:
            idx, bits = m.value
            fwd[m.round] = idx[bits == 1]
            if fwd[m.round].size and fwd[m.round].max() >= X.shape[0]:
                raise ParseError(f"round {m.round} references sample beyond Alice's features")
        elif m.kind == Kind.ALICE_MASK:
            masks[m.round] = m.value
        elif m.kind == Kind.DEC_MASKED_GRADIENT:
            if scale2 is None or m.round not in masks or m.round not in fwd:
                raise ParseError(f"round {m.round}: gradient without key, mask or batch announcement")
            g = np.array([(v - xi) / scale2 for v, xi in zip(m.value, masks[m.round])])
            idx = fwd[m.round]
            ok, est = attack_round(AttackInput(X[idx], g, max(1, idx.size)), rtol)
            rounds.append(RoundAttack(m.round, idx, ok, est))
        elif m.kind == Kind.PLAIN_NOISED_RESIDUES:
            if m.round not in fwd:
                raise ParseError(f"round {m.round}: residues without batch announcement")
            rounds.append(RoundAttack(m.round, fwd[m.round], True, np.asarray(m.value)))

    votes: dict[int, list[int]] = defaultdict(list)
    guesses: dict[int, list[int]] = defaultdict(list)
    coin = RngStream(seed)
    for r in rounds:
        if r.recoverable:
            for i, lab in zip(r.indices.tolist(), infer_labels(r.residue_estimates).tolist()):
                votes[i].append(lab)
        else:
            for i, lab in zip(r.indices.tolist(), (coin.uniform(r.indices.size) < 0.5).tolist()):
                guesses[i].append(int(lab))

    seen = sorted(set(votes) | set(guesses))
    report = AttackReport(recoverable=bool(rounds) and all(r.recoverable for r in rounds),
                          rounds=rounds, n_labels=len(seen))
    if votes:
        report.sample_indices = np.array(sorted(votes))
        report.inferred_labels = np.array([_majority(votes[i]) for i in report.sample_indices],
                                          dtype=np.int8)
    if labels is not None and seen:
        y = as_vector(labels, "labels")
        final = [_majority(votes[i]) if i in votes else _majority(guesses[i]) for i in seen]
        report.success_rate = float(np.mean(np.array(final) == y[seen]))
    return report


def alice_gradients(transcript: Transcript) -> list[np.ndarray]:
    """Per-round plaintext gradients Alice recovers after unmasking (HE transcripts)."""
    scale2, masks, out = None, {}, []
    for m in transcript.messages:
        if m.kind == Kind.PUBLIC_KEY:
            scale2 = m.value[1] ** 2
        elif m.kind == Kind.ALICE_MASK:
            masks[m.round] = m.value
        elif m.kind == Kind.DEC_MASKED_GRADIENT:
            out.append(np.array([(v - xi) / scale2 for v, xi in zip(m.value, masks[m.round])]))
    return out
