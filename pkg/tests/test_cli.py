import textwrap

import pytest

from mssa.cli import fmt, main
from mssa.network import HEAT_SHOCK_DOCUMENT


@pytest.fixture
def model_file(tmp_path):
    p = tmp_path / "hs.yaml"
    p.write_text(HEAT_SHOCK_DOCUMENT)
    return p


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(3) == "3" and fmt(None) == "" and fmt(True) == "1"


def test_validate(model_file, tmp_path, capsys):
    assert main(["validate", str(model_file)]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text(textwrap.dedent("""\
        species: [A]
        initial_state: [2]
        N0: 1
        theta: 1.0
        reactions:
          - {reactants: {A: 2}, products: {A: 3}, rate_base: 1.0, rate_theta_exponent: 0, beta: 0}
        """))
    assert main(["validate", str(bad)]) == 2
    assert "R1" in capsys.readouterr().out
    broken = tmp_path / "broken.yaml"
    broken.write_text("species: [A\n  reactions: {")
    assert main(["validate", str(broken)]) == 1
    assert "line" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.yaml")]) == 1


def test_sens_constant(model_file, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sens", str(model_file), "--f", "7", "--out", str(out)]) == 0
    raw = out.read_bytes()
    assert b"\r" not in raw
    header, row = raw.decode().splitlines()
    assert header.startswith("method,f,theta,h,t,N,value,halfwidth95,samples,wall_seconds,seed")
    cols = dict(zip(header.split(","), row.split(",")))
    assert cols["value"] == "0" and cols["samples"] == "1000" and cols["wall_seconds"] == ""


def test_sens_parse_error(model_file):
    assert main(["sens", str(model_file), "--f", "x9"]) == 1
    assert main(["sens", str(model_file), "--f", "x1 +"]) == 1


def test_sens_non_convergence(model_file, tmp_path):
    out = tmp_path / "s.csv"
    rc = main(["sens", str(model_file), "--f", "x3", "--rel-halfwidth", "1e-6",
               "--max-samples", "1000", "--out", str(out)])
    assert rc == 3
    assert out.read_text().splitlines()[1].endswith(",0")


def test_sens_both_and_seed_env(model_file, tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sens", str(model_file), "--method", "both", "--f", "x3", "--N", "20",
            "--rel-halfwidth", "0.5", "--max-samples", "2000"]
    monkeypatch.setenv("MSSA_SEED", "5")
    assert main(args + ["--seed", "1", "--out", str(a)]) == 0
    assert main(args + ["--seed", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = a.read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["cfd-reduced", "cfd-full", "gap"]
    assert all(r.split(",")[10] == "5" for r in rows[1:])


def test_reduce(model_file, tmp_path, capsys):
    assert main(["reduce", str(model_file), "--steps", "2"]) == 0
    out = capsys.readouterr().out
    assert "gamma2=1" in out and "stopped" in out
    single = tmp_path / "single.yaml"
    single.write_text(textwrap.dedent("""\
        species: [A]
        initial_state: [0]
        N0: 1
        theta: 1.0
        reactions:
          - {reactants: {}, products: {A: 1}, rate_base: 1.0, rate_theta_exponent: 1, beta: 0}
          - {reactants: {A: 1}, products: {}, rate_base: 1.0, rate_theta_exponent: 0, beta: 0}
        """))
    assert main(["reduce", str(single)]) == 4
    assert main(["sens", str(single), "--f", "A"]) == 4


def test_simulate_and_oracle(model_file, tmp_path):
    out = tmp_path / "path.csv"
    assert main(["simulate", str(model_file), "--gamma", "1", "--N", "10", "--seed", "3",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "time,reaction,S1,S2,S3"
    assert lines[1] == "0,,20,0,0"
    assert all(sum(map(int, l.split(",")[2:])) == 20 for l in lines[1:])
    out2 = tmp_path / "mean.csv"
    assert main(["simulate", "heatshock", "--gamma", "1", "--N", "10", "--samples", "100",
                 "--f", "x3", "--out", str(out2)]) == 0
    out3 = tmp_path / "oracle.csv"
    assert main(["oracle", "heatshock", "--N", "100", "--points", "5", "--out", str(out3)]) == 0
    assert out3.read_text().splitlines()[0] == "t,survival,rho0,rho_R3"
