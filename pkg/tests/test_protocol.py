import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from residue_vfl import data
from residue_vfl.attack import alice_gradients
from residue_vfl.errors import ConfigError, DimensionError, ProtocolError
from residue_vfl.mechanisms import AddNoiseParams, MultNoiseParams
from residue_vfl.protocol import (
    HybridParams, Kind, Party, ProtocolMessage, TrainConfig, Transcript, centralized_train,
    draw_indicator, epoch_batches, epoch_subsets, run_baseline, run_hybrid, run_ldp,
    run_protocol, transcript_conforms,
)
from residue_vfl.protocol.training import MASK_BOUND

HYBRID = HybridParams(math.log(2), 0.25, 96)


def split(n=64, d=6, d_alice=None, sep=2.0, seed=0):
    ds = data.synth(n, d, sep, seed)
    return data.vertical_split(ds, d if d_alice is None else d_alice)


def cfg(**kw):
    base = dict(epochs=1, batch_size=16, key_bits=512, seed=3)
    base.update(kw)
    return TrainConfig(**base)


def test_zero_learning_rate_keeps_parameters():
    s = split(d=6, d_alice=4)
    res = run_baseline(s.alice_X, s.bob_X, s.y, cfg(learning_rate=0.0))
    assert not res.w_alice.any() and not res.w_bob.any()
    res = run_ldp(s.alice_X, s.bob_X, s.y, cfg(learning_rate=0.0, defense=AddNoiseParams(1.0)))
    assert not res.w_alice.any() and not res.w_bob.any()


def test_single_round_matches_centralized_step():
    s = split(n=16, d=8)
    c = cfg(batch_size=16)
    res = run_baseline(s.alice_X, s.bob_X, s.y, c)
    assert len(res.report.rounds) == 1
    W, _ = centralized_train(s.joined(), s.y, c)
    np.testing.assert_allclose(res.w_alice, W, rtol=0, atol=2 * 8 / c.fp_scale)


def test_baseline_per_round_gradients_match_centralized():
    s = split(n=80, d=6)
    c = cfg(epochs=2)
    res = run_baseline(s.alice_X, s.bob_X, s.y, c)
    W, _, grads = centralized_train(s.joined(), s.y, c, record_gradients=True)
    got = alice_gradients(res.transcript)
    assert len(got) == len(grads) == 10
    for g_proto, g_ref in zip(got, grads):
        np.testing.assert_allclose(g_proto, g_ref, rtol=0, atol=2 * 6 / c.fp_scale)
    np.testing.assert_allclose(res.w_alice, W, atol=1e-8)


def test_mixed_split_matches_centralized():
    s = split(n=64, d=7, d_alice=3)
    c = cfg(epochs=2, lam=0.01)
    res = run_baseline(s.alice_X, s.bob_X, s.y, c)
    W, _ = centralized_train(s.joined(), s.y, c)
    np.testing.assert_allclose(np.concatenate([res.w_alice, res.w_bob]), W, atol=1e-8)


def test_masking_roundtrip_is_exact():
    s = split(n=48, d=5)
    res = run_baseline(s.alice_X, s.bob_X, s.y, cfg())
    msgs = res.transcript.messages
    scale2 = msgs[0].value[1] ** 2
    masks = {m.round: m.value for m in msgs if m.kind == Kind.ALICE_MASK}
    decs = [m for m in msgs if m.kind == Kind.DEC_MASKED_GRADIENT]
    assert len(decs) == 3 and set(masks) == {1, 2, 3}
    bound = MASK_BOUND * scale2
    for m in decs:
        xi = masks[m.round]
        assert all(-bound <= x < bound for x in xi)
        unmasked = [v - x for v, x in zip(m.value, xi)]
        # what Bob saw differs from the gradient, what Alice keeps is the integer gradient
        assert unmasked != m.value
        assert all(abs(u) < scale2 * 10 for u in unmasked)
    for g, m in zip(alice_gradients(res.transcript), decs):
        np.testing.assert_array_equal(g, [(v - x) / scale2 for v, x in zip(m.value, masks[m.round])])


def test_alice_mask_never_sent_to_bob():
    s = split(n=32, d=4)
    res = run_baseline(s.alice_X, s.bob_X, s.y, cfg())
    for m in res.transcript.messages:
        if m.kind == Kind.ALICE_MASK:
            assert m.sender == Party.ALICE


def test_socket_transport_is_byte_identical():
    s = split(n=48, d=6, d_alice=4)
    a = run_baseline(s.alice_X, s.bob_X, s.y, cfg(transport="inprocess"))
    b = run_baseline(s.alice_X, s.bob_X, s.y, cfg(transport="socket"))
    assert a.transcript.to_bytes() == b.transcript.to_bytes()
    np.testing.assert_array_equal(a.w_alice, b.w_alice)
    h = dict(defense=HYBRID)
    big = split(n=192, d=6)
    a = run_hybrid(big.alice_X, big.bob_X, big.y, cfg(**h))
    b = run_hybrid(big.alice_X, big.bob_X, big.y, cfg(transport="socket", **h))
    assert a.transcript.to_bytes() == b.transcript.to_bytes()


def test_runs_are_deterministic():
    s = split(n=48, d=6, d_alice=3)
    a = run_baseline(s.alice_X, s.bob_X, s.y, cfg())
    b = run_baseline(s.alice_X, s.bob_X, s.y, cfg())
    assert a.transcript.to_bytes() == b.transcript.to_bytes()
    assert a.report.to_json(include_timings=False) == b.report.to_json(include_timings=False)


@settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 2**31), n=st.integers(1, 60), bs=st.integers(1, 20),
       epochs=st.integers(0, 2), kind=st.sampled_from(["none", "add", "mult"]))
def test_transcripts_follow_grammar(seed, n, bs, epochs, kind):
    s = split(n=n, d=3, d_alice=2, seed=seed)
    defense = {"none": None, "add": AddNoiseParams(1.0), "mult": MultNoiseParams(1.0)}[kind]
    c = TrainConfig(epochs=epochs, batch_size=bs, key_bits=512, seed=seed, defense=defense)
    res = run_protocol(s.alice_X, s.bob_X, s.y, c)
    mode = "he" if kind == "none" else "ldp"
    assert transcript_conforms(res.transcript, mode)
    assert not transcript_conforms(res.transcript, "ldp" if mode == "he" else "he")
    assert len(res.report.rounds) == epochs * math.ceil(n / bs)


def test_grammar_rejects_tampering():
    s = split(n=32, d=4)
    res = run_baseline(s.alice_X, s.bob_X, s.y, cfg())
    frames = list(res.transcript.frames)
    assert transcript_conforms(Transcript(frames), "he")
    assert not transcript_conforms(Transcript(frames[:1] + frames[2:]), "he")
    assert not transcript_conforms(Transcript(frames[:1] + frames[1:7] * 2), "he")
    wrong_sender = ProtocolMessage(Kind.BATCH_ANNOUNCE, 1, Party.ALICE,
                                   (np.arange(2), np.ones(2, dtype=np.int8))).to_frame()
    assert not transcript_conforms(Transcript([frames[0], wrong_sender] + frames[2:]), "he")


def test_transcript_file_roundtrip(tmp_path):
    s = split(n=32, d=4)
    res = run_baseline(s.alice_X, s.bob_X, s.y, cfg())
    path = tmp_path / "t.vflt"
    res.transcript.save(path)
    assert path.read_bytes()[:5] == b"VFLT\x01"
    again = Transcript.load(path)
    assert again.to_bytes() == res.transcript.to_bytes()
    assert [m.kind for m in again.messages] == [m.kind for m in res.transcript.messages]


def test_frame_layout():
    msg = ProtocolMessage(Kind.PARTIAL_LIN_PRED, 7, Party.ALICE, np.array([1.5, -2.0]))
    frame = msg.to_frame()
    length = int.from_bytes(frame[:4], "big")
    assert length == len(frame) - 5 and frame[4] == Kind.PARTIAL_LIN_PRED
    back = ProtocolMessage.from_frame(frame)
    assert back.round == 7 and back.sender == Party.ALICE
    np.testing.assert_array_equal(back.value, [1.5, -2.0])
    big = ProtocolMessage(Kind.DEC_MASKED_GRADIENT, 1, Party.BOB, [-(2**300), 0, 5])
    assert ProtocolMessage.from_frame(big.to_frame()).value == [-(2**300), 0, 5]


def test_ldp_identity_noise_matches_baseline():
    s = split(n=64, d=6)
    base = run_baseline(s.alice_X, s.bob_X, s.y, cfg(epochs=2))
    # scale 2/eps = 2e-300: every draw rounds back to the exact residue
    ldp = run_ldp(s.alice_X, s.bob_X, s.y, cfg(epochs=2, defense=AddNoiseParams(1e300)))
    np.testing.assert_allclose(ldp.w_alice, base.w_alice, atol=1e-8)
    assert transcript_conforms(ldp.transcript, "ldp")
    assert ldp.report.timings["crypto_s"] == 0.0


def test_ldp_bob_uses_true_residues():
    s = split(n=16, d=6, d_alice=3)
    c = cfg(batch_size=16)
    noisy = run_ldp(s.alice_X, s.bob_X, s.y, cfg(batch_size=16, defense=AddNoiseParams(0.01)))
    W, _ = centralized_train(s.joined(), s.y, c)
    # one round from W = 0: Bob's step uses the true residues, Alice's the noised ones
    np.testing.assert_allclose(noisy.w_bob, W[3:], atol=1e-12)
    assert not np.allclose(noisy.w_alice, W[:3], atol=1e-3)
    sent = [m.value for m in noisy.transcript.messages if m.kind == Kind.PLAIN_NOISED_RESIDUES][0]
    assert sent.size == 16 and np.max(np.abs(sent)) > 1.0


def test_hybrid_degenerate_equals_baseline_gradient():
    s = split(n=96, d=6)
    params = HybridParams(60.0, 0.25, 96, enforce_constraints=False)
    res = run_hybrid(s.alice_X, s.bob_X, s.y, cfg(defense=params))
    rec = res.report.rounds[0]
    assert rec.forwarded == len(rec.batch) == params.ones
    W, _, grads = centralized_train(s.joined(), s.y, cfg(), batches=[rec.batch], record_gradients=True)
    np.testing.assert_allclose(alice_gradients(res.transcript)[0], grads[0], atol=1e-8)
    np.testing.assert_allclose(res.w_alice, W, atol=1e-8)


def test_hybrid_lossless_against_injected_batches():
    s = split(n=384, d=6, d_alice=4)
    c = cfg(epochs=2, defense=HYBRID)
    res = run_hybrid(s.alice_X, s.bob_X, s.y, c)
    batches = [r.batch for r in res.report.rounds]
    W, _, grads = centralized_train(s.joined(), s.y, c, batches=batches, record_gradients=True)
    for rec, g_proto, g_ref in zip(res.report.rounds, alice_gradients(res.transcript), grads):
        assert len(rec.batch) == rec.denom
        np.testing.assert_allclose(g_proto, g_ref[:4], rtol=0, atol=rec.forwarded / c.fp_scale)
    np.testing.assert_allclose(np.concatenate([res.w_alice, res.w_bob]), W, atol=1e-6)


def test_hybrid_paper_denominator_rescales():
    s = split(n=192, d=6)
    c = cfg(defense=HYBRID, normalize_by_k=False)
    res = run_hybrid(s.alice_X, s.bob_X, s.y, c)
    batches = [r.batch for r in res.report.rounds]
    denoms = [r.forwarded for r in res.report.rounds]
    assert all(r.denom == r.forwarded for r in res.report.rounds)
    W, _, grads = centralized_train(s.joined(), s.y, c, batches=batches, denominators=denoms,
                                    record_gradients=True)
    for g_proto, g_ref in zip(alice_gradients(res.transcript), grads):
        np.testing.assert_allclose(g_proto, g_ref, atol=1e-6)


def test_hybrid_round_invariants():
    s = split(n=480, d=6)
    res = run_hybrid(s.alice_X, s.bob_X, s.y, cfg(defense=HYBRID))
    announces = [m for m in res.transcript.messages if m.kind == Kind.BATCH_ANNOUNCE]
    for rec, ann in zip(res.report.rounds, announces):
        idx, bits = ann.value
        assert idx.size == 96
        assert rec.forwarded == int(bits.sum())
        assert 6 < rec.forwarded < 96
        k = len(rec.batch)
        assert 1 <= k <= min(rec.forwarded, HYBRID.ones)
        assert set(rec.batch) <= set(idx[bits == 1].tolist())


def test_protocol_rounds_use_draw_indicator():
    s = split(n=288, d=6)
    c = cfg(defense=HYBRID)
    res = run_hybrid(s.alice_X, s.bob_X, s.y, c)
    announces = [m for m in res.transcript.messages if m.kind == Kind.BATCH_ANNOUNCE]
    for round_no, ann in enumerate(announces, start=1):
        _, rr_m, _ = draw_indicator(HYBRID, 96, 6, c.seed, round_no, c.max_redraws)
        np.testing.assert_array_equal(ann.value[1], rr_m)


def test_expected_lrr_formula():
    p = HYBRID.rr.keep_probability
    assert p == pytest.approx(2 / 3)
    assert HYBRID.expected_lrr() == pytest.approx(40.0)
    lrr = [int(draw_indicator(HYBRID, 96, 0, 11, r)[1].sum()) for r in range(1, 301)]
    assert np.mean(lrr) == pytest.approx(40.0, rel=0.05)


def test_hybrid_config_errors():
    s = split(n=192, d=50)
    with pytest.raises(ConfigError, match="d_alice"):
        run_hybrid(s.alice_X, s.bob_X, s.y, cfg(defense=HYBRID))
    with pytest.raises(ConfigError):
        HybridParams(1.0, 0.6, 96).check_feasible(3)
    with pytest.raises(ConfigError):
        HybridParams(1.0, 0.001, 96)
    small = split(n=50, d=6)
    with pytest.raises(ConfigError, match="s_size"):
        run_hybrid(small.alice_X, small.bob_X, small.y, cfg(defense=HYBRID))


def test_hybrid_redraw_limit_is_protocol_error():
    # feasible in expectation but each draw must clear d_alice; one redraw is too few
    params = HybridParams(0.2, 0.45, 40)
    with pytest.raises(ProtocolError, match="admissible"):
        for r in range(1, 200):
            draw_indicator(params, 40, 19, 0, r, max_redraws=1)


def test_wrong_runner_and_dimension_errors():
    s = split(n=32, d=4)
    with pytest.raises(ConfigError):
        run_baseline(s.alice_X, s.bob_X, s.y, cfg(defense=AddNoiseParams(1.0)))
    with pytest.raises(ConfigError):
        run_ldp(s.alice_X, s.bob_X, s.y, cfg())
    with pytest.raises(ConfigError):
        run_hybrid(s.alice_X, s.bob_X, s.y, cfg())
    with pytest.raises(DimensionError):
        run_baseline(s.alice_X[:-1], s.bob_X, s.y, cfg())
    with pytest.raises(ConfigError):
        run_baseline(s.alice_X, s.bob_X, s.y, cfg(key_bits=123))
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(transport="carrier-pigeon")


def test_batches_and_subsets_partition():
    batches = epoch_batches(50, 16, 0, 0)
    assert [b.size for b in batches] == [16, 16, 16, 2]
    assert sorted(np.concatenate(batches).tolist()) == list(range(50))
    subsets = epoch_subsets(200, 96, 0, 0)
    assert [x.size for x in subsets] == [96, 96]
    assert not np.array_equal(epoch_batches(50, 16, 0, 1)[0], batches[0])


def test_centralized_edge_cases():
    s = split(n=40, d=3)
    c = TrainConfig(epochs=0)
    W, rep = centralized_train(s.joined(), s.y, c)
    assert not W.any() and rep.per_epoch_loss == []
    c = TrainConfig(epochs=3, seed=9)
    a = centralized_train(s.joined(), s.y, c)
    b = centralized_train(s.joined(), s.y, c)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1].per_epoch_loss == b[1].per_epoch_loss


def test_config_roundtrip():
    for d in (None, AddNoiseParams(2.0), MultNoiseParams(1.0, 0.2, 5.0, True), HYBRID):
        c = TrainConfig(defense=d, seed=5, lam=0.1)
        assert TrainConfig.from_dict(c.to_dict()) == c
