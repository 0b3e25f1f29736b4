"""``vfl-lab`` command line: keygen, train, attack, bench.

Exit codes: 0 success, 2 configuration error, 3 protocol error, 4 ingestion
or file-format error.
"""
from __future__ import annotations

import argparse
import json
import math
import secrets
import sys
from pathlib import Path


from . import harness, paillier
from .attack import attack_transcript
from .errors import ConfigError, IngestionError, ParseError, ProtocolError
from .mechanisms import AddNoiseParams, MultNoiseParams
from .numeric import RngStream
from .protocol import HybridParams, TrainConfig, Transcript

EXIT_OK, EXIT_CONFIG, EXIT_PROTOCOL, EXIT_INGEST = 0, 2, 3, 4

HYBRID_DEFAULTS = {"epsilon": math.log(2), "q": 0.25, "s_size": 96}
MULT_DEFAULTS = {"b1": 0.1, "b2": 10.0}


def build_defense(name: str, epsilon=None, b1=None, b2=None, q=None, s_size=None,
                  strict_clipping=False):
    """Turn CLI-style options into a defense object, rejecting flags the defense does not use."""
    if name != "mult" and (b1 is not None or b2 is not None or strict_clipping):
        raise ConfigError("--b1/--b2/--strict-clipping only apply to --defense mult")
    if name != "hybrid" and (q is not None or s_size is not None):
        raise ConfigError("--q/--s-size only apply to --defense hybrid")
    if name == "none":
        if epsilon is not None:
            raise ConfigError("--epsilon does not apply to --defense none")
        return None
    if name == "add":
        if epsilon is None:
            raise ConfigError("--defense add needs --epsilon")
        return AddNoiseParams(epsilon)
    if name == "mult":
        if epsilon is None:
            raise ConfigError("--defense mult needs --epsilon")
        return MultNoiseParams(epsilon, MULT_DEFAULTS["b1"] if b1 is None else b1,
                               MULT_DEFAULTS["b2"] if b2 is None else b2, strict_clipping)
    if name == "hybrid":
        return HybridParams(HYBRID_DEFAULTS["epsilon"] if epsilon is None else epsilon,
                            HYBRID_DEFAULTS["q"] if q is None else q,
                            HYBRID_DEFAULTS["s_size"] if s_size is None else s_size)
    raise ConfigError(f"unknown defense {name!r}")


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", default="breast-cancer",
                   help="breast-cancer, digits, synth[:n,d,sep] or a CSV path")
    p.add_argument("--label-column", default="-1", help="label column name or index for CSV input")
    p.add_argument("--d-alice", type=int, default=None, help="features given to Alice (default: all)")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--key-bits", type=int, default=2048)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--transport", choices=["inprocess", "socket"], default="inprocess")
    p.add_argument("--paper-denominator", action="store_true",
                   help="hybrid: normalize gradients by L_RR instead of the true batch size")


def _config(args, defense, seed: int) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                       lam=args.lam, seed=seed, defense=defense, key_bits=args.key_bits,
                       normalize_by_k=not args.paper_denominator, transport=args.transport)


def _label_column(raw: str):
    try:
        return int(raw)
    except ValueError:
        return raw


def _check_key_bits(bits: int, needed: bool) -> None:
    if needed and bits not in paillier.SUPPORTED_KEY_BITS:
        raise ConfigError(f"unsupported key length {bits}; choose one of {paillier.SUPPORTED_KEY_BITS}")


def cmd_keygen(args) -> int:
    out = Path(args.out)
    pub = out.with_name(out.name + ".pub")
    for path in (out, pub):
        if path.exists() and not args.force:
            raise ConfigError(f"{path} exists; use --force to overwrite")
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    pk, sk = paillier.keygen(args.bits, RngStream(seed))
    paillier.save_key(sk, out, force=True)
    paillier.save_key(pk, pub, force=True)
    print(f"wrote {out} and {pub} ({args.bits}-bit modulus)")
    return EXIT_OK


def cmd_train(args) -> int:
    defense = build_defense(args.defense, args.epsilon, args.b1, args.b2, args.q, args.s_size,
                            args.strict_clipping)
    cfg = _config(args, defense, args.seed)
    _check_key_bits(cfg.key_bits, cfg.uses_he)
    prep = harness.prepare(args.dataset, args.d_alice, args.test_fraction, args.split_seed,
                           _label_column(args.label_column))
    result = harness.run_experiment(prep, cfg)
    report = result.report
    text = report.to_json(include_timings=args.timings)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.transcript:
        result.transcript.save(args.transcript)
    if args.export_alice:
        harness.write_matrix_csv(args.export_alice, prep.train.alice_X)
    if args.export_labels:
        harness.write_matrix_csv(args.export_labels, prep.train.y.reshape(-1, 1))
    m = report.final_metrics
    print(f"{cfg.defense_name}: accuracy={m.accuracy:.4f} auc={m.auc:.4f} "
          f"attack_success={report.attack_success}", file=sys.stderr)
    return EXIT_OK


def cmd_attack(args) -> int:
    transcript = Transcript.load(args.transcript)
    try:
        X = harness.read_matrix(args.alice_features)
        y = harness.read_matrix(args.labels).ravel() if args.labels else None
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot read matrix: {exc}") from exc
    rep = attack_transcript(transcript, X, y, seed=args.seed)
    text = json.dumps({"schema_version": 1, **rep.to_dict()}, indent=2, sort_keys=True) + "\n"
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    names = [s.strip() for s in args.defenses.split(",") if s.strip()]
    configs = {}
    for name in names:
        eps = args.epsilon if name in ("add", "mult") else None
        defense = build_defense(name, eps)
        configs[name] = _config(args, defense, 0)
        _check_key_bits(args.key_bits, configs[name].uses_he)
    prep = harness.prepare(args.dataset, args.d_alice, args.test_fraction, 0,
                           _label_column(args.label_column))
    table = harness.bench(prep, configs, list(range(args.seeds)))
    if args.out:
        Path(args.out).write_text(json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(harness.format_bench(table))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vfl-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a Paillier keypair")
    p.add_argument("--bits", type=int, default=2048)
    p.add_argument("--out", required=True, help="private key path; public key goes to <out>.pub")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("train", help="run one training protocol end to end")
    _add_training_flags(p)
    p.add_argument("--defense", choices=["none", "add", "mult", "hybrid"], default="none")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--b1", type=float, default=None)
    p.add_argument("--b2", type=float, default=None)
    p.add_argument("--strict-clipping", action="store_true",
                   help="mult: clip to unsigned bounds instead of keeping the sign")
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--s-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--report", default=None)
    p.add_argument("--transcript", default=None)
    p.add_argument("--export-alice", default=None, help="write Alice's training features as CSV")
    p.add_argument("--export-labels", default=None, help="write Bob's training labels as CSV")
    p.add_argument("--timings", action="store_true", help="include wall-clock timings in the report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="replay a transcript as the passive party")
    p.add_argument("--transcript", required=True)
    p.add_argument("--alice-features", required=True, help="CSV or .npy matrix")
    p.add_argument("--labels", default=None, help="ground-truth labels for scoring")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("bench", help="compare defenses on matched configs")
    _add_training_flags(p)
    p.add_argument("--defenses", default="none,add,mult,hybrid")
    p.add_argument("--epsilon", type=float, default=10.0, help="privacy budget for add/mult")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (IngestionError, ParseError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INGEST


if __name__ == "__main__":
    sys.exit(main())
