import json
from pathlib import Path

import numpy as np
import pytest

from residue_vfl import paillier
from residue_vfl.cli import build_defense, main
from residue_vfl.errors import ConfigError
from residue_vfl.numeric import RngStream
from residue_vfl.paillier import decrypt, encrypt
from residue_vfl.report import TrainReport

GOLDEN = Path(__file__).parent / "golden" / "report_schema.json"
SMALL = ["--key-bits", "512", "--epochs", "1"]


def schema_of(obj):
    """Key structure and value types, with lists described by their first element."""
    if isinstance(obj, dict):
        return {k: schema_of(v) for k, v in sorted(obj.items())}
    if isinstance(obj, list):
        return [schema_of(obj[0])] if obj else []
    if obj is None:
        return "null"
    return {bool: "bool", int: "int", float: "float", str: "str"}[type(obj)]


def test_keygen_roundtrip(tmp_path, capsys):
    out = tmp_path / "key"
    assert main(["keygen", "--bits", "512", "--out", str(out), "--seed", "4"]) == 0
    sk = paillier.load_key(out)
    pk = paillier.load_key(str(out) + ".pub")
    assert pk.n == sk.public_key.n and pk.n.bit_length() == 512
    assert decrypt(sk, encrypt(pk, 31337, RngStream(0))) == 31337
    assert main(["keygen", "--bits", "512", "--out", str(out)]) == 2
    assert "exists" in capsys.readouterr().err
    assert main(["keygen", "--bits", "512", "--out", str(out), "--force"]) == 0
    assert main(["keygen", "--bits", "123", "--out", str(tmp_path / "k2")]) == 2


def test_train_attack_baseline(tmp_path):
    rep, tr = tmp_path / "r.json", tmp_path / "t.vflt"
    feats, labels = tmp_path / "a.csv", tmp_path / "y.csv"
    code = main(["train", "--dataset", "breast-cancer", *SMALL, "--report", str(rep),
                 "--transcript", str(tr), "--export-alice", str(feats), "--export-labels", str(labels)])
    assert code == 0
    report = TrainReport.from_json(rep.read_text())
    assert report.attack_success == 1.0
    assert report.config_echo["batch_size"] == 16
    assert report.meta["d_alice"] == 30
    ar = tmp_path / "attack.json"
    assert main(["attack", "--transcript", str(tr), "--alice-features", str(feats),
                 "--labels", str(labels), "--report", str(ar)]) == 0
    out = json.loads(ar.read_text())
    assert out["success_rate"] == 1.0 and out["recoverable"] is True
    assert main(["attack", "--transcript", str(tr), "--alice-features", str(feats),
                 "--report", str(ar)]) == 0
    assert json.loads(ar.read_text())["success_rate"] is None


def test_train_hybrid_attack_fails(tmp_path):
    tr, feats = tmp_path / "h.vflt", tmp_path / "a.npy"
    assert main(["train", "--defense", "hybrid", *SMALL, "--report", str(tmp_path / "r.json"),
                 "--transcript", str(tr)]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert all(r["forwarded"] > 30 for r in report["rounds"])
    from residue_vfl import harness
    np.save(feats, harness.prepare("breast-cancer").train.alice_X)
    ar = tmp_path / "a.json"
    assert main(["attack", "--transcript", str(tr), "--alice-features", str(feats),
                 "--report", str(ar)]) == 0
    out = json.loads(ar.read_text())
    assert out["recoverable"] is False and out["rounds_recoverable"] == 0


def test_same_seed_gives_identical_reports(tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert main(["train", "--dataset", "synth:200,8", "--defense", "add", "--epsilon", "1",
                     "--epochs", "2", "--report", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_report_schema_matches_golden(tmp_path):
    p = tmp_path / "r.json"
    assert main(["train", "--dataset", "synth:120,6", "--defense", "mult", "--epsilon", "1",
                 "--epochs", "1", "--timings", "--report", str(p)]) == 0
    got = schema_of(json.loads(p.read_text()))
    assert got == json.loads(GOLDEN.read_text())


def test_report_roundtrip_is_lossless(tmp_path):
    p = tmp_path / "r.json"
    assert main(["train", "--dataset", "synth:120,6", *SMALL, "--timings", "--report", str(p)]) == 0
    text = p.read_text()
    assert TrainReport.from_json(text).to_json() == text


@pytest.mark.parametrize("argv", [
    ["train", "--defense", "none", "--b1", "0.1"],
    ["train", "--defense", "add"],
    ["train", "--defense", "add", "--epsilon", "1", "--q", "0.2"],
    ["train", "--defense", "none", "--epsilon", "1"],
    ["train", "--defense", "hybrid", "--q", "0.6"],
    ["train", "--defense", "hybrid", "--dataset", "synth:400,60", *SMALL],
    ["train", "--key-bits", "1000", "--epochs", "1"],
])
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "config error" in capsys.readouterr().err


def test_ingestion_errors_exit_4(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1,0\n2,1\n3,7\n")
    assert main(["train", "--dataset", str(bad), "--defense", "add", "--epsilon", "1"]) == 4
    garbage = tmp_path / "t.vflt"
    garbage.write_bytes(b"VFLT\x07")
    np.save(tmp_path / "a.npy", np.zeros((3, 2)))
    assert main(["attack", "--transcript", str(garbage), "--alice-features", str(tmp_path / "a.npy")]) == 4
    assert main(["attack", "--transcript", str(garbage), "--alice-features", str(tmp_path / "nope.csv")]) == 4


def test_csv_dataset(tmp_path):
    fixture = Path(__file__).parent / "fixtures" / "census10.csv"
    p = tmp_path / "r.json"
    assert main(["train", "--dataset", str(fixture), "--label-column", "income", "--defense", "add",
                 "--epsilon", "10", "--epochs", "1", "--test-fraction", "0.3", "--report", str(p)]) == 0
    meta = json.loads(p.read_text())["meta"]
    assert meta["dropped_rows"] == 1 and meta["n_train"] + meta["n_test"] == 9


def test_bench(tmp_path, capsys):
    out = tmp_path / "b.json"
    assert main(["bench", "--dataset", "synth:200,12", "--defenses", "none,add,mult,hybrid",
                 "--seeds", "3", *SMALL, "--out", str(out)]) == 0
    table = json.loads(out.read_text())
    assert "hybrid_over_baseline" in table
    rows = {r["defense"]: r for r in table["rows"]}
    for name in ("add", "mult"):
        assert rows[name]["crypto_s"]["mean"] == 0.0
    assert rows["none"]["accuracy"]["std"] is not None and rows["none"]["seeds"] == [0, 1, 2]
    text = capsys.readouterr().out
    assert "hybrid/baseline time ratio" in text and "+-" in text


def test_build_defense():
    assert build_defense("none") is None
    assert build_defense("add", 2.0).scale == 1.0
    assert build_defense("mult", 10.0).scale == pytest.approx(20.0)
    assert build_defense("hybrid").expected_lrr() == pytest.approx(40.0)
    with pytest.raises(ConfigError):
        build_defense("bogus")
