import numpy as np
import pytest

from ilscape.cli import main
from ilscape.descriptor import load_descriptor
from ilscape.geometry import load_mesh

SCENE = ["--max-depth", "5", "--resolution", "4", "--param", "count=60", "--param", "duration=1.0"]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["shape", "cup", "--out", str(d / "cup.obj")]) == 0
    db = d / "db"
    db.mkdir()
    for preset in ("swirl", "translate"):
        for seed in (0, 1):
            out = db / f"{preset}{seed}.ild"
            rc = main(["encode", "--mesh", str(d / "cup.obj"), "--preset", preset, "--seed", str(seed),
                       "--out", str(out), "--segments", "3", *SCENE])
            assert rc == 0
    return d


def test_encode_outputs(work, capsys):
    rc = main(["encode", "--mesh", str(work / "cup.obj"), "--preset", "swirl", "--out", str(work / "x.ild"), *SCENE])
    out = capsys.readouterr().out
    assert rc == 0
    assert "active sensors:" in out and "trajectory samples:" in out and "wall time:" in out
    assert load_descriptor(work / "x.ild").label == "swirl"
    assert (work / "db" / "swirl0.seg3.ild").exists()


def test_compare_self_is_zero(work, capsys):
    p = str(work / "db" / "swirl0.ild")
    assert main(["compare", p, p]) == 0
    assert capsys.readouterr().out.strip() == "0.000000"
    assert main(["compare", p, str(work / "db" / "translate0.ild"), "--per-attribute"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 7 and float(lines[-1]) > 0


def test_exit_codes(work, tmp_path, capsys):
    assert main(["compare", str(tmp_path / "nope.ild"), str(tmp_path / "nope.ild")]) == 1
    odd = tmp_path / "odd.ild"
    rc = main(["encode", "--mesh", str(work / "cup.obj"), "--preset", "swirl", "--out", str(odd), "--bins", "8",
               *SCENE])
    assert rc == 0
    assert main(["compare", str(odd), str(work / "db" / "swirl0.ild")]) == 2
    assert "bins" in capsys.readouterr().err
    assert main(["encode", "--preset", "swirl", "--out", str(odd)]) == 1  # no mesh


def test_bad_thread_count(work, monkeypatch):
    monkeypatch.setenv("ILSCAPE_THREADS", "abc")
    p = str(work / "db" / "swirl0.ild")
    assert main(["compare", p, p]) == 1


def test_gen_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["gen", "--preset", "pour", "--seed", "3", "--count", "20", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_db_commands(work, capsys):
    db = str(work / "db")
    assert main(["db", "build", db]) == 0
    assert (work / "db" / "manifest.json").exists()
    assert main(["db", "matrix", db, "--out", str(work / "m.csv")]) == 0
    m = np.loadtxt(work / "m.csv", delimiter=",", skiprows=1, usecols=range(1, 5))
    assert np.array_equal(m, m.T) and np.all(np.diag(m) == 0)
    capsys.readouterr()
    assert main(["db", "retrieve", db, "--query", str(work / "db" / "swirl1.ild"), "--out-pr", str(work / "pr.csv"),
                 "--out-ranking", str(work / "rank.csv")]) == 0
    first = capsys.readouterr().out.splitlines()[0].split("\t")
    assert first[1] == "swirl1" and float(first[3]) == 0.0
    assert (work / "pr.csv").read_text().startswith("recall,precision")
    assert main(["db", "retrieve", db]) == 0
    assert "leave-one-out" in capsys.readouterr().out
    assert main(["db", "mds", db, "--out-svg", str(work / "e.svg"), "--out-csv", str(work / "e.csv")]) == 0
    assert (work / "e.svg").read_text().count("<circle") == 4
    assert main(["db", "predict", db, "--out", str(work / "pred")]) == 0
    assert (work / "pred" / "summary.csv").read_text().splitlines()[0].startswith("k,")
    assert (work / "pred" / "pr_k3.csv").exists()
    assert main(["db", "predict", db, "--query", str(work / "db" / "swirl0.seg1.ild"), "--k", "1"]) == 0
    assert main(["db", "predict", db, "--query", str(work / "db" / "swirl0.seg1.ild"), "--k", "9"]) == 1


def test_saliency_and_correspond(work, capsys):
    csv, obj = work / "s.csv", work / "s.obj"
    rc = main(["saliency", "--mesh", str(work / "cup.obj"), "--preset", "swirl", "--radius", "0.05",
               "--out-csv", str(csv), "--out-obj", str(obj), *SCENE])
    assert rc == 0
    mesh = load_mesh(obj)
    assert len(mesh.vertices) == len(load_mesh(work / "cup.obj").vertices)
    vals = np.loadtxt(csv, delimiter=",", skiprows=1)[:, 1]
    assert vals.min() >= 0 and vals.max() <= 1
    capsys.readouterr()
    rc = main(["correspond", "--mesh1", str(work / "cup.obj"), "--saliency1", str(csv), "--mesh2",
               str(work / "cup.obj"), "--saliency2", str(csv), "--out", str(work / "c.csv")])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert all(line.endswith("1.000000") for line in lines[:-1])
