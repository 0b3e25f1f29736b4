"""
Label leakage from encrypted residues
=====================================

Bob holds the labels and encrypts the residues before sending them, yet
Alice recovers every label once she has at least as many features as
there are samples in a batch.
"""

from residue_vfl import data
from residue_vfl.attack import attack_transcript
from residue_vfl.protocol import TrainConfig, run_baseline, transcript_conforms

# 30 features on Alice's side, batches of 16, so each round is solvable
ds = data.synth(320, 30, separation=2.0, seed=0)
split = data.vertical_split(ds, d_alice=30)
cfg = TrainConfig(epochs=1, batch_size=16, key_bits=512)
result = run_baseline(split.alice_X, split.bob_X, split.y, cfg)
print("rounds:", len(result.report.rounds), "grammar ok:", transcript_conforms(result.transcript, "he"))

# Alice replays what she saw: batch indices, her own mask, the decrypted masked gradient
report = attack_transcript(result.transcript, split.alice_X, split.y)
print("solvable rounds:", report.rounds_recoverable, "of", len(report.rounds))
print("label recovery:", report.success_rate)

# With fewer features than batch samples the same system is underdetermined
narrow = data.vertical_split(ds, d_alice=10)
result = run_baseline(narrow.alice_X, narrow.bob_X, narrow.y, cfg)
report = attack_transcript(result.transcript, narrow.alice_X, narrow.y)
print("d_alice=10: solvable rounds", report.rounds_recoverable, "success", round(report.success_rate, 3))
