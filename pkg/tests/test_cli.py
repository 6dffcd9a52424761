import filecmp
from pathlib import Path

import pytest

from cr_henkin.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_type_report(tmp_path, capsys):
    assert _run(tmp_path, "type-report", "--config", str(CONFIGS / "type_report.ini")) == 0
    assert "verdict: PASS" in capsys.readouterr().out
    assert (tmp_path / "type_report.csv").exists()
    assert (tmp_path / "type_report_summary.txt").read_text().endswith("PASS\n")


def test_grid_export(tmp_path):
    assert _run(tmp_path, "grid-export", "--config", str(CONFIGS / "grid_export.ini")) == 0
    rows = (tmp_path / "grid.csv").read_text().splitlines()
    assert len(rows) == 2048 + 1


def test_lemma_scan_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["lemma-scan", "--config", str(CONFIGS / "om1_lemma.ini"), "--out", str(d)]) == 0
    assert filecmp.cmp(a / "lemma22_samples.csv", b / "lemma22_samples.csv", shallow=False)
    main(["lemma-scan", "--config", str(CONFIGS / "om1_lemma.ini"), "--out", str(b), "--seed", "99"])
    assert not filecmp.cmp(a / "lemma22_samples.csv", b / "lemma22_samples.csv", shallow=False)


@pytest.mark.parametrize("text", [
    "[run]\nseeds = 3\n",
    "[grids]\nresolutions = 8, twelve\n",
    "[run\nseed = 3\n",
    "[type]\nexponential =\nmonomial =\n",
])
def test_config_errors_exit_2(tmp_path, capsys, text):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    assert _run(tmp_path, "type-report", "--config", str(p)) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_threads_exit_2(tmp_path):
    assert _run(tmp_path, "type-report", "--threads", "0") == 2


def test_precondition_exit_3(tmp_path, capsys):
    # the real-setting estimate on a complex-setting domain is refused
    p = tmp_path / "c.ini"
    p.write_text("[domain]\nfamily = ball\n[lemma]\nwhich = 23\nsamples = 100\n")
    assert _run(tmp_path, "lemma-scan", "--config", str(p)) == 3
    assert "numeric error" in capsys.readouterr().err


def test_missing_divisor_exit_3(tmp_path):
    p = tmp_path / "n.ini"
    p.write_text("[nevanlinna]\nh = z1 - 0.3\ndivisor =\nresolution = 8\n")
    assert _run(tmp_path, "nevanlinna", "--config", str(p)) == 3


def test_bad_h_exit_2(tmp_path):
    p = tmp_path / "n.ini"
    p.write_text("[nevanlinna]\nh = open('x')\n")
    assert _run(tmp_path, "nevanlinna", "--config", str(p)) == 2


def test_incompatible_form_exit_3(tmp_path):
    p = tmp_path / "b.ini"
    p.write_text("[grids]\nresolutions = 8\n[dbarb]\nincompatible = true\n")
    assert _run(tmp_path, "verify-dbarb", "--config", str(p)) == 3


def test_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
