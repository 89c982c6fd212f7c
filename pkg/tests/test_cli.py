import json

import pytest

from chordmix.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_mix_small_chain(capsys):
    code, out, _ = run(capsys, "mix", "--n", "5", "--k", "2", "--eps", "0.25")
    assert code == 0
    payload = json.loads(out)
    assert payload["t_mix"] == 4 and payload["policy"] == "exact"


def test_mix_writes_curve(tmp_path, capsys):
    out = tmp_path / "curve.csv"
    assert run(capsys, "mix", "--n", "20", "--k", "7", "--out", str(out))[0] == 0
    assert out.read_text().startswith("t,d,policy\n")
    assert json.loads((tmp_path / "curve.csv.meta.json").read_text())["t_mix"] > 0


def test_kernel_export(tmp_path, capsys):
    out = tmp_path / "k.json"
    assert run(capsys, "kernel", "--n", "10", "--k", "4", "--out", str(out))[0] == 0
    payload = json.loads(out.read_text())
    assert len(payload["triplets"]) == 22


def test_exitprobs_columns_agree(tmp_path, capsys):
    out = tmp_path / "e.csv"
    assert run(capsys, "exitprobs", "--n", "10", "--k", "4", "--L", "40", "--out", str(out))[0] == 0
    rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
    assert rows
    total = sum(float(r[5]) for r in rows)
    assert abs(total - 1) < 1e-9
    assert all(abs(float(r[5]) - float(r[6])) < 1e-12 for r in rows)


def test_gaps_report(capsys):
    code, out, _ = run(capsys, "gaps", "--n", "1000")
    assert code == 0
    payload = json.loads(out)
    assert payload["fraction"] >= payload["bound"] - 0.05


@pytest.mark.parametrize(
    "argv",
    [
        ["gaps", "--n", "1000", "--gamma3", "0.9"],
        ["mix", "--n", "5", "--k", "2", "--bogus"],
        ["mc", "--n", "50", "--k", "17", "--trials", "10"],
        ["mix", "--variant", "lazy-reversible", "--n", "10", "--k", "3"],
        ["mix", "--n", "10", "--k", "1"],
        ["scaling", "--nmin", "64", "--nmax", "256", "--out", "x.csv"],
        ["lower", "--n-grid", "32,64"],
        ["fit", "--in", "/nonexistent/file.csv"],
    ],
)
def test_invalid_input_exits_one(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(capsys, *argv)[0] == 1


def test_scaling_then_fit(tmp_path, capsys):
    out = tmp_path / "s.csv"
    argv = ["scaling", "--variant", "drift-no-chord", "--nmin", "16", "--nmax", "128", "--out", str(out)]
    assert run(capsys, *argv)[0] == 0
    code, text, _ = run(capsys, "fit", "--in", str(out))
    assert code == 0
    assert 1.8 < json.loads(text)["slope"] < 2.2


def _twice(tmp_path, capsys, argv, name):
    files = []
    for i in range(2):
        d = tmp_path / str(i)
        d.mkdir()
        path = d / name
        assert run(capsys, *argv, "--out", str(path))[0] == 0
        files.append(sorted(p.read_bytes() for p in d.iterdir()))
    return files


@pytest.mark.parametrize(
    "argv,name",
    [
        (["mc", "--n", "64", "--k", "23", "--trials", "5000", "--seed", "3"], "mc.json"),
        (["mc", "--n", "64", "--k", "23", "--trials", "5000", "--seed", "3", "--mode", "coin"], "coin.json"),
        (["scaling", "--nmin", "64", "--nmax", "256", "--seeds", "1,2"], "s.csv"),
        (["scaling", "--nmin", "64", "--nmax", "256", "--seeds", "1", "--format", "jsonl"], "s.jsonl"),
        (["lower", "--n-grid", "32,64", "--k-sample", "4", "--seed", "5"], "lb.json"),
        (["khub", "--K", "3", "--n-grid", "32,64,128", "--seed", "2"], "kh.json"),
    ],
)
def test_seeded_commands_byte_identical(tmp_path, capsys, argv, name):
    a, b = _twice(tmp_path, capsys, argv, name)
    assert a == b


def test_different_seed_changes_output(tmp_path, capsys):
    outs = []
    for seed in ("1", "2"):
        path = tmp_path / f"{seed}.json"
        run(capsys, "mc", "--n", "64", "--k", "23", "--trials", "2000", "--seed", seed, "--out", str(path))
        outs.append(json.loads(path.read_text())["counts"])
    assert outs[0] != outs[1]


def test_mc_hitbound(capsys):
    code, out, _ = run(capsys, "mc", "--n", "512", "--k", "121", "--mode", "hitbound")
    assert code == 0
    assert json.loads(out)["min_scaled"] > 0


def test_zigzag(capsys):
    code, out, _ = run(capsys, "zigzag", "--n", "200", "--k", "37")
    assert code == 0
    payload = json.loads(out)
    assert payload["hits"][payload["selected"]] >= payload["threshold"]


def test_meta_echoes_configuration(capsys):
    payload = json.loads(run(capsys, "mc", "--n", "64", "--k", "23", "--trials", "100", "--seed", "9")[1])
    meta = payload["meta"]
    assert meta["seed"] == 9 and meta["config"]["n"] == 64 and "generator" in meta
    assert "out" not in meta["config"]
