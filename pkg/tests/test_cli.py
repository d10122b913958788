import json

import pytest

from umcsim import cli, gateset

BELL = "qubits 2\nprep q0\nprep q1\nry q0 90\ncz q1 q0\nry q1 90\nmeasure q0\nmeasure q1\n"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


@pytest.fixture
def bell(tmp_path):
    path = tmp_path / "bell.circ"
    path.write_text(BELL)
    return path


def test_validate(capsys):
    code, out = run(capsys, "validate", "--gateset", "paper_like")
    assert code == 0
    data = json.loads(out.out)
    assert data["schema_version"] == cli.SCHEMA_VERSION
    assert {r["gate"] for r in data["gates"]} >= {"ry90", "cz"}


def test_validate_bad_file_exits_2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code, out = run(capsys, "validate", "--gateset", bad)
    assert code == 2 and "umcsim" in out.err
    code, _ = run(capsys, "validate", "--gateset", tmp_path / "missing.json")
    assert code == 2


def test_decompose_ideal_is_exact(capsys, tmp_path):
    code, _ = run(capsys, "decompose", "--gateset", "ideal", "--method", "umc", "--gates", "ry90,cz",
                  "--restarts", 2, "--out", tmp_path)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["spam"]["prep"]["converged"]
    for row in summary["table"]:
        assert row["status"] == "ok"
        assert row["diamond_distance"] <= 1e-7
    assert (tmp_path / "umc_cz.json").exists() and (tmp_path / "table.csv").exists()
    assert (tmp_path / "table.csv").read_text().startswith("# schema_version=1")


def test_dnorm(capsys):
    code, out = run(capsys, "dnorm", "ideal:x", "ideal:i")
    assert code == 0
    assert json.loads(out.out)["value"] == pytest.approx(2.0, abs=1e-6)
    code, out = run(capsys, "dnorm", "--gateset", "paper_like", "ry90", "ideal:ry90", "--format", "csv")
    assert code == 0 and out.out.startswith("# schema_version=1")
    code, _ = run(capsys, "dnorm", "nothing", "ideal:x")
    assert code == 2


def test_simulate_sample_and_density(capsys, bell):
    code, out = run(capsys, "simulate", "--gateset", "ideal", "--method", "none", "--shots", 1000, bell)
    assert code == 0
    counts = json.loads(out.out)["counts"]
    assert sum(counts.values()) == 1000
    code, out = run(capsys, "simulate", "--gateset", "paper_like", "--method", "exact", "--backend", "density", bell)
    assert code == 0
    probs = json.loads(out.out)["probabilities"]
    assert sum(probs.values()) == pytest.approx(1.0)
    code, _ = run(capsys, "simulate", "--gateset", "paper_like", "--method", "exact", bell)
    assert code == 2


def test_simulate_bad_circuit_and_guard(capsys, tmp_path):
    bad = tmp_path / "bad.circ"
    bad.write_text("qubits 1\nprep q0\nwiggle q0\n")
    code, out = run(capsys, "simulate", "--gateset", "ideal", "--method", "none", bad)
    assert code == 2 and "line 3" in out.err
    wide = tmp_path / "wide.circ"
    wide.write_text("qubits 7\n" + "".join(f"prep q{q}\n" for q in range(7)))
    code, _ = run(capsys, "simulate", "--gateset", "ideal", "--method", "none", "--backend", "density", wide)
    assert code == 4


def test_same_seed_gives_identical_bytes(capsys, tmp_path, bell):
    outs = []
    for k in range(2):
        path = tmp_path / f"run{k}.json"
        code, _ = run(capsys, "simulate", "--gateset", "paper_like", "--method", "pta", "--shots", 2000,
                      "--seed", 5, "--out", path, bell)
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    path = tmp_path / "workers.json"
    run(capsys, "simulate", "--gateset", "paper_like", "--method", "pta", "--shots", 2000,
        "--seed", 5, "--workers", 2, "--out", path, bell)
    assert json.loads(path.read_text())["counts"] == json.loads(outs[0])["counts"]


def test_grover(capsys, tmp_path):
    code, _ = run(capsys, "grover", "--gateset", "ideal", "--method", "pta", "--shots", 500, "--out", tmp_path)
    assert code == 0
    data = json.loads((tmp_path / "grover.json").read_text())
    assert [r["marked"] for r in data["results"]] == ["00", "01", "10", "11"]
    for row in data["results"]:
        assert row["sampled"] == 1.0 and row["exact"] == pytest.approx(1.0)


def test_bundled_names_resolve():
    for name in gateset.BUNDLED:
        assert gateset.resolve_gateset(name).gates
