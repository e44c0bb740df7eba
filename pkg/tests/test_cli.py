import subprocess
import sys

import pandas as pd
import pytest

from retailcast.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "tiny.ini").write_text(
        "[panel]\nn_products = 6\nn_stores = 2\nn_groups = 2\nhorizon_days = 150\n"
        "[gbdt]\nn_rounds = 5\n"
        "[boruta]\nmax_iters = 3\n"
        "[experiment]\nboruta_rows = 400\n")
    return d


def test_generate_classify(workdir, capsys):
    panel = workdir / "panel.csv"
    assert main(["generate", "--config", str(workdir / "tiny.ini"), "--seed", "3", "-o", str(panel)]) == 0
    assert "wrote" in capsys.readouterr().out
    out = workdir / "classes.csv"
    assert main(["classify", "--panel", str(panel), "-o", str(out)]) == 0
    tab = pd.read_csv(out)
    assert list(tab.columns) == ["series_key", "adi", "cv2", "class"] and len(tab) == 12


def test_select(workdir):
    out = workdir / "sel.csv"
    assert main(["select", "--config", str(workdir / "tiny.ini"), "-o", str(out)]) == 0
    assert list(pd.read_csv(out).columns) == ["feature", "decision", "hits", "iters"]


def test_run_and_report(workdir, capsys):
    out = workdir / "out"
    code = main(["run", "--config", str(workdir / "tiny.ini"), "--out", str(out), "--cases", "B",
                 "--models", "naive", "--plot"])
    assert code == 0
    assert len(pd.read_csv(out / "summary.csv")) == 1
    assert any((out / "B" / "naive" / "plots").glob("*.csv"))
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    assert "naive" in capsys.readouterr().out
    assert main(["report", "--out", str(workdir / "missing")]) == 1


def test_errors_return_two(workdir, capsys):
    bad = workdir / "bad.ini"
    bad.write_text("[nope]\nx = 1\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["classify", "--panel", str(workdir / "absent.csv"), "-o", "x.csv"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "retailcast", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "generate" in res.stdout
