import json
import os
from pathlib import Path

import pytest

from tissuepheno.cli import main
from tissuepheno.errors import (
    CollinearityError,
    ConfigError,
    NumericalError,
    ParseError,
    ValidationError,
)
from tissuepheno.pipeline import (
    RunConfig,
    exit_code,
    parse_k_range,
    read_config_file,
)

FAST = ["--k", "6", "--restarts", "5", "--bootstrap", "5"]


def _files(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def _run(fx, out, *extra):
    return main(["run", "--config", str(fx / "run.cfg"), "--out", str(out), *FAST, *extra])


def test_run_outputs_and_manifest(small_fixture, tmp_path):
    assert _run(small_fixture, tmp_path / "o") == 0
    out = tmp_path / "o"
    names = set(os.listdir(out))
    assert {"cf_vectors.csv", "model.json", "assignments.csv", "features.csv",
            "report.json", "manifest.json", "run.cfg", "km"} <= names
    assert not [n for n in names if n.startswith(".staging")]
    m = json.loads((out / "manifest.json").read_text())
    assert m["chosen_k"] == 6 and m["k_selection_fallback"] is None
    assert set(m) >= {"version", "seed", "config_hash", "config", "inputs", "outputs"}
    assert "clinical" in m["inputs"]
    assert any(k.startswith("cells/") for k in m["inputs"])
    assert list((out / "km").glob("*.svg"))


def test_rerun_identical(small_fixture, tmp_path):
    assert _run(small_fixture, tmp_path / "a") == 0
    assert _run(small_fixture, tmp_path / "b") == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_threads_do_not_change_outputs(small_fixture, tmp_path):
    assert _run(small_fixture, tmp_path / "a") == 0
    assert _run(small_fixture, tmp_path / "b", "--threads", "3") == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_staged_equals_single_shot(small_fixture, tmp_path):
    fx = small_fixture
    one = tmp_path / "one"
    assert _run(fx, one) == 0
    st = tmp_path / "st"
    common = ["--out", str(st), "--seed", "0"]
    assert main(["tile", "--cells", str(fx / "cells"), *common]) == 0
    assert main(["phenotype", "--cf", str(st / "cf_vectors.csv"), "--k", "6",
                 "--restarts", "5", *common]) == 0
    assert main(["features", "--assignments", str(st / "assignments.csv"),
                 "--model", str(st / "model.json"), "--tissue", str(fx / "tissue"),
                 "--cells", str(fx / "cells"), *common]) == 0
    assert main(["analyze", "--features", str(st / "features.csv"),
                 "--clinical", str(fx / "clinical.csv"), "--bootstrap", "5", *common]) == 0
    a, b = _files(one), _files(st)
    for name in b:
        assert a[name] == b[name], name
    assert set(a) - set(b) == {"manifest.json", "run.cfg"}


def test_k_selection_written_when_k_is_chosen(small_fixture, tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(small_fixture / "run.cfg"), "--out", str(out),
                 "--k-range", "5-7", "--restarts", "5", "--no-stats"]) == 0
    sel = json.loads((out / "k_selection.json").read_text())
    assert sel["chosen_k"] == json.loads((out / "manifest.json").read_text())["chosen_k"]
    assert not (out / "report.json").exists()
    # a later fixed-k run into the same directory removes the stale selection
    assert _run(small_fixture, out) == 0
    assert not (out / "k_selection.json").exists()
    assert (out / "report.json").exists()


def test_stats_without_clinical_fails_before_compute(small_fixture, tmp_path, capsys):
    out = tmp_path / "o"
    rc = main(["run", "--cells", str(small_fixture / "cells"), "--tissue",
               str(small_fixture / "tissue"), "--out", str(out), "--stats"])
    assert rc == 2
    assert "clinical" in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())


def test_missing_input_directory_exit_2(tmp_path):
    assert main(["run", "--cells", str(tmp_path / "nope"), "--tissue", str(tmp_path),
                 "--out", str(tmp_path / "o")]) == 2


def test_malformed_cell_file_exit_2(small_fixture, tmp_path):
    cells = tmp_path / "cells"
    cells.mkdir()
    (cells / "bad.csv").write_text("x,y,class\n1,2,Q\n")
    assert main(["tile", "--cells", str(cells), "--out", str(tmp_path / "o")]) == 2


def test_failed_run_publishes_nothing(small_fixture, tmp_path, monkeypatch):
    import tissuepheno.pipeline as pl

    def boom(*a, **k):
        raise CollinearityError("forced")

    monkeypatch.setattr(pl, "analyze_stage", boom)
    out = tmp_path / "o"
    assert _run(small_fixture, out) == 3
    assert list(out.iterdir()) == []


def test_exit_codes():
    assert exit_code(ConfigError("x")) == 2
    assert exit_code(ParseError("x", "f", 1)) == 2
    assert exit_code(ValidationError("x")) == 2
    assert exit_code(NumericalError("x")) == 3
    assert exit_code(CollinearityError("x")) == 3
    assert exit_code(RuntimeError("x")) == 1


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "sub" / "r.cfg"
    cfg.parent.mkdir()
    cfg.write_text("# comment\ncells = cells\nseed = 7   # trailing\nk-range = 3-5\nstats = no\n")
    s = read_config_file(cfg)
    assert s["cells"] == cfg.parent / "cells"
    assert s["seed"] == 7 and s["k_range"] == (3, 5) and s["stats"] is False

    from tissuepheno.cli import _build_parser, resolve_config
    args = _build_parser().parse_args(["run", "--config", str(cfg), "--seed", "9"])
    rc = resolve_config(args)
    assert rc.seed == 9 and rc.k_range == (3, 5) and rc.restarts == RunConfig().restarts


@pytest.mark.parametrize("text", ["seed = x\n", "colour = red\n", "justtext\n"])
def test_bad_config_file(tmp_path, text):
    cfg = tmp_path / "r.cfg"
    cfg.write_text(text)
    with pytest.raises(ParseError):
        read_config_file(cfg)
    assert main(["run", "--config", str(cfg)]) == 2


def test_config_validation():
    for kw in ({"k": 1}, {"k_range": (5, 3)}, {"restarts": 0}, {"threads": 0},
               {"tile_size": 0.0}, {"bootstrap": -1}):
        with pytest.raises(ConfigError):
            RunConfig(**kw)
    assert parse_k_range("2:8") == parse_k_range("2,8") == (2, 8)
    with pytest.raises(ConfigError):
        parse_k_range("eight")


def test_config_hash_ignores_out_and_threads():
    a = RunConfig(out=Path("x"), threads=1)
    b = RunConfig(out=Path("y"), threads=4)
    assert a.hash() == b.hash()
    assert a.hash() != RunConfig(seed=1).hash()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "tissuepheno" in capsys.readouterr().out


@pytest.mark.slow
def test_default_fixture_selects_six(tmp_path):
    fx = tmp_path / "fx"
    assert main(["synth", "--out", str(fx)]) == 0
    assert main(["run", "--config", str(fx / "run.cfg"), "--out", str(tmp_path / "o"),
                 "--restarts", "20", "--bootstrap", "10"]) == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["chosen_k"] == 6


def test_written_config_replays_identically(small_fixture, tmp_path, monkeypatch):
    monkeypatch.chdir(small_fixture)
    first = tmp_path / "first"
    assert main(["run", "--cells", "cells", "--tissue", "tissue", "--clinical", "clinical.csv",
                 "--out", str(first), *FAST]) == 0
    again = tmp_path / "again"
    monkeypatch.chdir(tmp_path)
    assert main(["run", "--config", str(first / "run.cfg"), "--out", str(again)]) == 0
    assert _files(first) == _files(again)
