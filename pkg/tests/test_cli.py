import json

import pytest

from rotcocycles import cli
from rotcocycles.errors import AuditFailure


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def test_cf_writes_json_and_csv(tmp_path):
    assert run(tmp_path, "cf", "--alpha", "golden", "--depth", "6") == 0
    doc = json.loads((tmp_path / "cf.json").read_text())
    assert doc["schema_version"] == 1 and doc["command"] == "cf"
    rows = (tmp_path / "cf.csv").read_text().splitlines()
    assert len(rows) == 1 + 7


def test_same_seed_same_bytes(tmp_path):
    argv = ["weyl", "--seed", "11", "--pairs", "2", "--N", "150", "--out", str(tmp_path)]
    snapshots = []
    for _ in range(2):
        assert cli.main(argv) == 0
        snapshots.append([(tmp_path / n).read_bytes() for n in ("weyl.json", "weyl.csv")])
    assert snapshots[0] == snapshots[1]


def test_different_seed_differs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["weyl", "--seed", "1", "--pairs", "1", "--N", "100", "--out", str(a)])
    cli.main(["weyl", "--seed", "2", "--pairs", "1", "--N", "100", "--out", str(b)])
    assert (a / "weyl.csv").read_bytes() != (b / "weyl.csv").read_bytes()


def test_sampling_needs_seed(tmp_path):
    assert run(tmp_path, "weyl", "--pairs", "1") == 1


def test_undeclared_relation_exit_code(tmp_path):
    code = run(tmp_path, "pushforward", "--beta", "b=sqrt:5", "--beta", "c=sqrt:5",
               "--phi", "indicator(b) - indicator(c)", "--n", "3")
    assert code == 3


def test_audit_failure_exit_code(tmp_path, monkeypatch):
    def boom(*args):
        raise AuditFailure("forced", None)

    monkeypatch.setattr(cli, "run", boom)
    assert run(tmp_path, "cf") == 2


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "session.json"
    cfg.write_text(json.dumps({"alpha": "golden", "phi": "indicator(1/3)", "params": {"n": 8}}))
    assert cli.main(["pushforward", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "pushforward.json").read_text())
    values = sorted(a["value"][0]["rat"] for a in doc["result"]["atoms"])
    assert values == ["-2/3", "1/3", "4/3"]
    assert cli.main(["pushforward", "--config", str(cfg), "--n", "1", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "pushforward.json").read_text())
    assert len(doc["result"]["atoms"]) == 2


@pytest.mark.parametrize("text", ['{"alpha": "golden", "colour": 1}', '{"alpha": "golden",\n "phi": }'])
def test_bad_config_exit_one(tmp_path, text, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(text)
    assert cli.main(["cf", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_malformed_json_reports_position(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"alpha": "golden",\n "phi": }')
    cli.main(["cf", "--config", str(cfg), "--out", str(tmp_path)])
    assert "line 2" in capsys.readouterr().err


def test_report_command(tmp_path):
    assert run(tmp_path, "report", "--phi", "phi_d(1/2)") == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["result"]["verdict"] == "RegularEvidence"


def test_witness_command(tmp_path):
    assert run(tmp_path, "witness", "--g", "1", "--phi", "indicator(1/2)", "--Nmax", "300") == 0
    doc = json.loads((tmp_path / "witness.json").read_text())
    assert doc["result"]["all_witnessed"] is True


def test_session_json_round_trip():
    from rotcocycles.session import SessionConfig

    text = json.dumps({"alpha": "golden", "betas": {"b": "sqrt:5"}, "phi": "indicator(b)", "seed": 3,
                       "thresholds": {"delta": "1/10", "N": 12}})
    cfg = SessionConfig.parse(text)
    assert SessionConfig.parse(json.dumps(cfg.to_json())).to_json() == cfg.to_json()


def test_shorthand_cocycle():
    from fractions import Fraction

    from rotcocycles.arithmetic import PartialQuotients
    from rotcocycles.cocycles import birkhoff_eval
    from rotcocycles.session import parse_cocycle

    basis = PartialQuotients.golden().basis
    phi = parse_cocycle("stack(indicator(1/3), rotate(2*indicator(1/5), 1/7))", basis)
    assert phi.d == 2
    # the second coordinate is x -> 2 (1_[0,1/5)(x + 1/7) - 1/5)
    assert birkhoff_eval(phi, 1, Fraction(0)) == (Fraction(2, 3), Fraction(8, 5))
    assert birkhoff_eval(phi, 1, Fraction(1, 2)) == (Fraction(-1, 3), Fraction(-2, 5))
