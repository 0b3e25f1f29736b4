"""Two-party training: baseline encrypted-residue protocol, LDP variants, hybrid, and the centralized oracle.

Bob (active party) holds features ``X^B`` and labels; Alice (passive party)
holds features ``X^A`` only. Alice runs in her own thread and reacts to
messages; Bob drives the rounds. Every frame goes through a channel that
records it into the run's :class:`~.wire.Transcript`.

Random streams are derived from ``(seed, party, purpose, index)``; see
:func:`stream`.
"""
from __future__ import annotations

import re
import threading
import time
from typing import NamedTuple

import numpy as np

from .. import paillier
from ..errors import ConfigError, DimensionError, ProtocolError
from ..mechanisms import AddNoiseParams, MultNoiseParams, m_add, m_mult, random_response
from ..numeric import RngStream, gradient, logistic_loss_from_logits, sigmoid
from ..report import RoundRecord, TrainReport
from .channel import Endpoint, make_channel
from .config import HybridParams, TrainConfig
from .wire import Kind, Party, ProtocolMessage, Transcript

# stream purposes
BATCHES, KEYGEN, ENCRYPT, NOISE, INDICATOR, RR, MASK = range(7)

#: Alice's gradient mask is uniform on [-MASK_BOUND, MASK_BOUND) in real units.
MASK_BOUND = 2**16


def stream(seed: int, party: Party, purpose: int, *index: int) -> RngStream:
    return RngStream.derive(seed, int(party), purpose, *index)


class TrainResult(NamedTuple):
    w_alice: np.ndarray
    w_bob: np.ndarray
    transcript: Transcript
    report: TrainReport


class _CryptoClock:
    def __init__(self):
        self.seconds = 0.0

    def __enter__(self):
        self._t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.seconds += time.perf_counter() - self._t0


def epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Bob's mini-batch partition for one epoch (last batch may be short)."""
    perm = stream(seed, Party.BOB, BATCHES, epoch).permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def epoch_subsets(n: int, s_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Hybrid subsets ``S`` for one epoch; an incomplete trailing subset is dropped."""
    perm = stream(seed, Party.BOB, BATCHES, epoch).permutation(n)
    return [perm[i:i + s_size] for i in range(0, n - s_size + 1, s_size)]


def draw_indicator(params: HybridParams, s: int, d_alice: int, seed: int, round_no: int,
                   max_redraws: int = 100) -> tuple[np.ndarray, np.ndarray, int]:
    """Bob's batch indicator ``m`` and its randomized response for one hybrid round.

    The response is redrawn until ``d_alice < L_RR < s`` (upper bound only
    when constraints are enforced) and at least one true-batch sample
    survives. Returns ``(m, rr_m, attempt)``.
    """
    m = np.zeros(s, dtype=np.int8)
    m[stream(seed, Party.BOB, INDICATOR, round_no).choice(s, params.ones)] = 1
    for attempt in range(max_redraws):
        rr_m = random_response(m, params.rr, stream(seed, Party.BOB, RR, round_no, attempt))
        l_rr = int(rr_m.sum())
        k = int(((m == 1) & (rr_m == 1)).sum())
        if d_alice < l_rr and (l_rr < s or not params.enforce_constraints) and k >= 1:
            return m, rr_m, attempt
    raise ProtocolError(f"round {round_no}: no admissible randomized response in {max_redraws} "
                        f"draws (need d_alice={d_alice} < L_RR < {s}, k >= 1)")


# -- Alice -------------------------------------------------------------------

class PassiveParty:
    """Alice: features only. Reacts to Bob's messages strictly in order."""

    def __init__(self, X: np.ndarray, cfg: TrainConfig, endpoint: Endpoint):
        self.X = np.asarray(X, dtype=np.float64)
        self.cfg = cfg
        self.ep = endpoint
        self.W = np.zeros(self.X.shape[1])
        self.crypto = _CryptoClock()
        self.pk: paillier.PublicKey | None = None
        self.codec: paillier.FixedPointCodec | None = None
        self.forwarded: np.ndarray | None = None
        self.mask: list[int] | None = None
        self.round = 0
        self.gradients: list[np.ndarray] = []
        self.error: BaseException | None = None

    def serve(self) -> None:
        try:
            while True:
                msg = self.ep.recv()
                if msg is None:
                    return
                self.handle(msg)
        except BaseException as exc:  # surfaced by the driver after join
            self.error = exc
        finally:
            self.ep.close()

    def handle(self, msg: ProtocolMessage) -> None:
        if msg.sender != Party.BOB:
            raise ProtocolError("Alice received a message not sent by Bob")
        kind = msg.kind
        if kind == Kind.PUBLIC_KEY:
            n, scale = msg.value
            self.pk = paillier.PublicKey(n)
            self.codec = paillier.FixedPointCodec(n, scale)
        elif kind == Kind.BATCH_ANNOUNCE:
            idx, bits = msg.value
            if idx.size != bits.size:
                raise ProtocolError("indicator length differs from subset length")
            if idx.size and idx.max() >= self.X.shape[0]:
                raise DimensionError("announced index beyond Alice's sample count")
            self.round = msg.round
            self.forwarded = idx[bits == 1]
            lin = self.X[self.forwarded] @ self.W
            self.ep.send(ProtocolMessage(Kind.PARTIAL_LIN_PRED, msg.round, Party.ALICE, lin))
        elif kind == Kind.ENC_RESIDUES:
            self._on_enc_residues(msg)
        elif kind == Kind.DEC_MASKED_GRADIENT:
            self._on_dec_gradient(msg)
        elif kind == Kind.PLAIN_NOISED_RESIDUES:
            self._expect_round(msg)
            noised = msg.value
            if noised.size != self.forwarded.size:
                raise DimensionError("residue count differs from announced batch")
            self._update(gradient(self.X[self.forwarded], noised, max(1, noised.size)))
        else:
            raise ProtocolError(f"Alice cannot handle {kind.name}")

    def _expect_round(self, msg):
        if self.forwarded is None or msg.round != self.round:
            raise ProtocolError(f"{msg.kind.name} for round {msg.round} outside announced round {self.round}")

    def _on_enc_residues(self, msg):
        self._expect_round(msg)
        if self.pk is None:
            raise ProtocolError("encrypted residues before public key")
        enc_r = [paillier.Ciphertext(c, 1) for c in msg.value]
        if len(enc_r) != self.forwarded.size:
            raise DimensionError("ciphertext count differs from announced batch")
        denom = max(1, len(enc_r))
        rng = stream(self.cfg.seed, Party.ALICE, MASK, msg.round)
        bound = MASK_BOUND * self.codec.scale ** 2
        self.mask = [rng.randbelow(2 * bound) - bound for _ in range(self.X.shape[1])]
        self.ep.record_local(ProtocolMessage(Kind.ALICE_MASK, msg.round, Party.ALICE, self.mask))
        with self.crypto:
            enc_g = paillier.encrypted_transpose_matvec(
                self.pk, self.codec, self.X[self.forwarded], enc_r, coef=-1.0 / denom)
            enc_rng = stream(self.cfg.seed, Party.ALICE, ENCRYPT, msg.round)
            masked = []
            for c, xi in zip(enc_g, self.mask):
                c_xi = paillier.encrypt(self.pk, xi % self.pk.n, enc_rng, exponent=2)
                masked.append(paillier.add_cipher(self.pk, c, c_xi).value)
        self.ep.send(ProtocolMessage(Kind.MASKED_ENC_GRADIENT, msg.round, Party.ALICE, masked))

    def _on_dec_gradient(self, msg):
        self._expect_round(msg)
        if self.mask is None or len(msg.value) != len(self.mask):
            raise ProtocolError("decrypted gradient does not match an outstanding mask")
        g_int = [v - xi for v, xi in zip(msg.value, self.mask)]
        self.mask = None
        s2 = self.codec.scale ** 2
        self._update(np.array([g / s2 for g in g_int]))

    def _update(self, g: np.ndarray) -> None:
        self.gradients.append(g)
        if self.cfg.lam:
            g = g + 2.0 * self.cfg.lam * self.W
        self.W = self.W - self.cfg.learning_rate * g


# -- Bob ---------------------------------------------------------------------

class ActiveParty:
    """Bob: features, labels, private key. Drives every round."""

    def __init__(self, X: np.ndarray, y: np.ndarray, cfg: TrainConfig, endpoint: Endpoint,
                 d_alice: int):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.cfg = cfg
        self.ep = endpoint
        self.d_alice = d_alice
        self.W = np.zeros(self.X.shape[1])
        self.crypto = _CryptoClock()
        self.sk: paillier.PrivateKey | None = None
        self.codec: paillier.FixedPointCodec | None = None
        self.round = 0
        self.records: list[RoundRecord] = []
        self.epoch_losses: list[float] = []

    # step 0
    def setup(self) -> None:
        if not self.cfg.uses_he:
            return
        with self.crypto:
            pk, self.sk = paillier.keygen(self.cfg.key_bits, stream(self.cfg.seed, Party.BOB, KEYGEN))
        self.codec = paillier.FixedPointCodec(pk.n, self.cfg.fp_scale)
        self.ep.send(ProtocolMessage(Kind.PUBLIC_KEY, 0, Party.BOB, (pk.n, self.cfg.fp_scale)))

    def _recv(self, kind: Kind) -> ProtocolMessage:
        msg = self.ep.recv()
        if msg is None:
            raise ProtocolError(f"Alice closed the channel while Bob awaited {kind.name}")
        if msg.kind != kind or msg.round != self.round or msg.sender != Party.ALICE:
            raise ProtocolError(f"expected {kind.name} for round {self.round}, got {msg.kind.name} "
                                f"round {msg.round}")
        return msg

    def _residues(self, fwd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lin_a = self._recv(Kind.PARTIAL_LIN_PRED).value
        if lin_a.size != fwd.size:
            raise DimensionError("partial prediction length differs from forwarded count")
        z = lin_a + self.X[fwd] @ self.W
        return z, self.y[fwd] - sigmoid(z)

    def _he_exchange(self, r_send: np.ndarray) -> None:
        pk = self.sk.public_key
        enc_rng = stream(self.cfg.seed, Party.BOB, ENCRYPT, self.round)
        with self.crypto:
            cts = [c.value for c in paillier.encrypt_vector(pk, self.codec, r_send, enc_rng)]
        self.ep.send(ProtocolMessage(Kind.ENC_RESIDUES, self.round, Party.BOB, cts))
        masked = self._recv(Kind.MASKED_ENC_GRADIENT).value
        with self.crypto:
            plain = [self.codec.signed(paillier.decrypt(self.sk, paillier.Ciphertext(c, 2)))
                     for c in masked]
        self.ep.send(ProtocolMessage(Kind.DEC_MASKED_GRADIENT, self.round, Party.BOB, plain))

    def _local_update(self, rows: np.ndarray, r: np.ndarray, denom: int) -> None:
        g = gradient(self.X[rows], r, denom)
        if self.cfg.lam:
            g = g + 2.0 * self.cfg.lam * self.W
        self.W = self.W - self.cfg.learning_rate * g

    def plain_round(self, epoch: int, batch: np.ndarray) -> float:
        """One round of the baseline or LDP protocol. Returns the batch loss."""
        self.round += 1
        ones = np.ones(batch.size, dtype=np.int8)
        self.ep.send(ProtocolMessage(Kind.BATCH_ANNOUNCE, self.round, Party.BOB, (batch, ones)))
        z, r = self._residues(batch)
        denom = batch.size
        defense = self.cfg.defense
        if defense is None:
            self._he_exchange(r)
        else:
            rng = stream(self.cfg.seed, Party.BOB, NOISE, self.round)
            if isinstance(defense, AddNoiseParams):
                noised = m_add(r, defense, rng)
            elif isinstance(defense, MultNoiseParams):
                noised = m_mult(r, defense, rng)
            else:
                raise ConfigError(f"plain round cannot run defense {defense!r}")
            self.ep.send(ProtocolMessage(Kind.PLAIN_NOISED_RESIDUES, self.round, Party.BOB,
                                         np.asarray(noised, dtype=np.float64)))
        # true residues for Bob's own gradient; noise only protects outbound data
        self._local_update(batch, r, denom)
        self.records.append(RoundRecord(epoch, batch.tolist(), int(batch.size), int(denom)))
        return logistic_loss_from_logits(z, self.y[batch])

    def hybrid_round(self, epoch: int, subset: np.ndarray) -> float | None:
        """One round of the randomized-response + HE protocol."""
        params: HybridParams = self.cfg.defense
        self.round += 1
        s = subset.size
        m, rr_m, attempt = draw_indicator(params, s, self.d_alice, self.cfg.seed, self.round,
                                          self.cfg.max_redraws)
        l_rr = int(rr_m.sum())
        k = int(((m == 1) & (rr_m == 1)).sum())
        self.ep.send(ProtocolMessage(Kind.BATCH_ANNOUNCE, self.round, Party.BOB, (subset, rr_m)))
        fwd_mask = rr_m == 1
        fwd = subset[fwd_mask]
        live = (m[fwd_mask] == 1)
        z, r = self._residues(fwd)
        r_send = np.where(live, r, 0.0)
        denom = k if self.cfg.normalize_by_k else l_rr
        if self.cfg.normalize_by_k:
            # Alice divides by L_RR; rescale so the net normalizer is k
            r_send = r_send * (l_rr / k)
        self._he_exchange(r_send)
        true_batch = fwd[live]
        self._local_update(true_batch, r[live], denom)
        self.records.append(RoundRecord(epoch, true_batch.tolist(), l_rr, int(denom), attempt))
        return logistic_loss_from_logits(z[live], self.y[true_batch])

    def train(self) -> None:
        cfg = self.cfg
        n = self.y.size
        self.setup()
        for epoch in range(cfg.epochs):
            losses = []
            if isinstance(cfg.defense, HybridParams):
                for subset in epoch_subsets(n, cfg.defense.s_size, cfg.seed, epoch):
                    losses.append(self.hybrid_round(epoch, subset))
            else:
                for batch in epoch_batches(n, cfg.batch_size, cfg.seed, epoch):
                    losses.append(self.plain_round(epoch, batch))
            self.epoch_losses.append(float(np.mean(losses)) if losses else float("nan"))


# -- drivers -----------------------------------------------------------------

def _check_inputs(alice_X, bob_X, y):
    alice_X = np.asarray(alice_X, dtype=np.float64)
    bob_X = np.asarray(bob_X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if alice_X.ndim != 2 or bob_X.ndim != 2:
        raise DimensionError("feature blocks must be 2-D")
    if not alice_X.shape[0] == bob_X.shape[0] == y.shape[0]:
        raise DimensionError(f"unaligned sample counts: Alice {alice_X.shape[0]}, "
                             f"Bob {bob_X.shape[0]}, labels {y.shape[0]}")
    return alice_X, bob_X, y


def _run(alice_X, bob_X, y, cfg: TrainConfig) -> TrainResult:
    alice_X, bob_X, y = _check_inputs(alice_X, bob_X, y)
    a_ep, b_ep, transcript = make_channel(cfg.transport)
    alice = PassiveParty(alice_X, cfg, a_ep)
    bob = ActiveParty(bob_X, y, cfg, b_ep, alice_X.shape[1])
    t0 = time.perf_counter()
    worker = threading.Thread(target=alice.serve, name="alice", daemon=True)
    worker.start()
    bob_error = None
    try:
        bob.train()
    except BaseException as exc:
        bob_error = exc
    finally:
        b_ep.close()
        worker.join()
        a_ep.dispose()
        b_ep.dispose()
    total = time.perf_counter() - t0
    if alice.error is not None:
        raise alice.error
    if bob_error is not None:
        raise bob_error
    report = TrainReport(
        per_epoch_loss=bob.epoch_losses,
        timings={"total_s": total,
                 "crypto_s": alice.crypto.seconds + bob.crypto.seconds,
                 "channel_s": a_ep.channel_seconds + b_ep.channel_seconds},
        config_echo=cfg.to_dict(),
        rounds=bob.records,
    )
    return TrainResult(alice.W, bob.W, transcript, report)


def run_baseline(alice_X, bob_X, y, cfg: TrainConfig) -> TrainResult:
    """Encrypted-residue protocol with no residue protection."""
    if cfg.defense is not None:
        raise ConfigError("run_baseline expects defense=None")
    return _run(alice_X, bob_X, y, cfg)


def run_ldp(alice_X, bob_X, y, cfg: TrainConfig) -> TrainResult:
    """Plaintext protocol where Bob sends noised residues (additive or multiplicative)."""
    if not isinstance(cfg.defense, (AddNoiseParams, MultNoiseParams)):
        raise ConfigError("run_ldp expects an add or mult defense")
    return _run(alice_X, bob_X, y, cfg)


def run_hybrid(alice_X, bob_X, y, cfg: TrainConfig) -> TrainResult:
    """Randomized-response + HE protocol."""
    if not isinstance(cfg.defense, HybridParams):
        raise ConfigError("run_hybrid expects a hybrid defense")
    d_alice = np.asarray(alice_X).shape[1]
    cfg.defense.check_feasible(d_alice)
    if cfg.defense.s_size > np.asarray(y).shape[0]:
        raise ConfigError("s_size exceeds the number of training samples")
    return _run(alice_X, bob_X, y, cfg)


def run_protocol(alice_X, bob_X, y, cfg: TrainConfig) -> TrainResult:
    """Dispatch on ``cfg.defense``."""
    if cfg.defense is None:
        return run_baseline(alice_X, bob_X, y, cfg)
    if isinstance(cfg.defense, HybridParams):
        return run_hybrid(alice_X, bob_X, y, cfg)
    return run_ldp(alice_X, bob_X, y, cfg)


def centralized_train(X, y, cfg: TrainConfig, batches=None, denominators=None,
                      record_gradients: bool = False):
    """Plain mini-batch SGD on pooled features.

    Without ``batches`` the batch sequence is Bob's own (same seed derivation as
    the protocols), so the baseline protocol can be compared step for step.
    ``batches`` injects an explicit sequence, e.g. the true batches of a hybrid
    run; ``denominators`` overrides the per-batch gradient normalizer.

    Returns ``(W, report)``, or ``(W, report, gradients)`` with
    ``record_gradients``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    W = np.zeros(X.shape[1])
    grads = []
    losses = []
    t0 = time.perf_counter()

    def step(idx, denom):
        nonlocal W
        z = X[idx] @ W
        r = y[idx] - sigmoid(z)
        g = gradient(X[idx], r, denom)
        if record_gradients:
            grads.append(g)
        if cfg.lam:
            g = g + 2.0 * cfg.lam * W
        W = W - cfg.learning_rate * g
        return logistic_loss_from_logits(z, y[idx])

    if batches is None:
        for epoch in range(cfg.epochs):
            ls = [step(b, b.size) for b in epoch_batches(y.size, cfg.batch_size, cfg.seed, epoch)]
            losses.append(float(np.mean(ls)))
    else:
        batches = [np.asarray(b, dtype=np.int64) for b in batches]
        denoms = denominators or [b.size for b in batches]
        ls = [step(b, d) for b, d in zip(batches, denoms)]
        if ls:
            losses.append(float(np.mean(ls)))
    report = TrainReport(per_epoch_loss=losses,
                         timings={"total_s": time.perf_counter() - t0, "crypto_s": 0.0, "channel_s": 0.0},
                         config_echo=cfg.to_dict())
    if record_gradients:
        return W, report, grads
    return W, report


# -- transcript grammar --------------------------------------------------------

_LETTER = {Kind.PUBLIC_KEY: "P", Kind.BATCH_ANNOUNCE: "B", Kind.PARTIAL_LIN_PRED: "L",
           Kind.ENC_RESIDUES: "E", Kind.ALICE_MASK: "X", Kind.MASKED_ENC_GRADIENT: "M",
           Kind.DEC_MASKED_GRADIENT: "D", Kind.PLAIN_NOISED_RESIDUES: "N"}

_GRAMMAR = {
    "he": re.compile(r"P(BLEXMD)*"),
    "ldp": re.compile(r"(BLN)*"),
}


def transcript_conforms(transcript: Transcript, mode: str) -> bool:
    """Check message order, senders and round numbering against the protocol.

    ``mode`` is ``"he"`` (baseline and hybrid) or ``"ldp"``.
    """
    msgs = transcript.messages
    letters = "".join(_LETTER[m.kind] for m in msgs)
    if not _GRAMMAR[mode].fullmatch(letters):
        return False
    alice_kinds = {Kind.PARTIAL_LIN_PRED, Kind.MASKED_ENC_GRADIENT, Kind.ALICE_MASK}
    expected_round = 0
    for m in msgs:
        if (m.sender == Party.ALICE) != (m.kind in alice_kinds):
            return False
        if m.kind == Kind.PUBLIC_KEY:
            if m.round != 0:
                return False
            continue
        if m.kind == Kind.BATCH_ANNOUNCE:
            expected_round += 1
        if m.round != expected_round:
            return False
    return True
