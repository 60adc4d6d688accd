# tests/test_cli.py
import json
import shutil
from pathlib import Path

import pytest

from nodulemorph.cli import EXIT_ERROR, EXIT_OK, EXIT_USAGE, build_config, build_parser, main

# Allow pytest fixtures to intentionally shadow outer-scope names (e.g. `suite`).
# pylint: disable=redefined-outer-name


@pytest.fixture
def suite(tmp_path):
    """Manifest of a small phantom suite written through the CLI."""
    out = tmp_path / "suite"
    assert main(["phantom", "--seed", "3", "-n", "5", "-o", str(out), "--box-size", "40"]) == EXIT_OK
    return out / "manifest.json"


def _files(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_phantom_segment_eval(suite, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["segment", str(suite), "-o", str(out), "--baselines"]) == EXIT_OK
    for method in ("coarse-to-fine", "plain-thresholding", "plain-deformable"):
        assert (out / method / "case_000" / "slice_001.pgm").exists()
        assert (out / method / "case_000" / "traces.json").exists()

    assert main(["eval", str(out), str(suite), "--excel", str(tmp_path / "r.xlsx")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "coarse-to-fine" in text
    assert "plain-thresholding" in text

    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert set(report["rows"]) == {"coarse-to-fine", "plain-thresholding", "plain-deformable"}
    assert (tmp_path / "r.xlsx").exists()


def test_ground_truth_scores_perfectly(suite, tmp_path, capsys):
    pred = tmp_path / "truth"
    for entry in json.loads(suite.read_text(encoding="utf-8")):
        case_dir = pred / entry["case_id"]
        case_dir.mkdir(parents=True)
        for i, s in enumerate(entry["slices"]):
            shutil.copy(suite.parent / s["gt_mask_path"], case_dir / f"slice_{i:03d}.pgm")

    assert main(["eval", str(pred), str(suite)]) == EXIT_OK
    row = json.loads((pred / "report.json").read_text(encoding="utf-8"))["rows"]["truth"]
    assert row["Avg"] == 1.0
    assert "1.000" in capsys.readouterr().out


def test_missing_predictions_fail(suite, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["eval", str(empty), str(suite)]) == EXIT_ERROR
    assert main(["eval", str(tmp_path / "absent"), str(suite)]) == EXIT_ERROR


def test_stage_dump(suite, tmp_path):
    out = tmp_path / "out"
    assert main(["segment", str(suite), "-o", str(out), "--dump-stages"]) == EXIT_OK
    stage_dir = out / "coarse-to-fine" / "case_001" / "stages" / "slice_001"
    assert (stage_dir / "05_final.pgm").exists()
    trace = json.loads((stage_dir / "trace.json").read_text(encoding="utf-8"))
    assert trace["slice_index"] == 1


def test_jobs_do_not_change_output(suite, tmp_path):
    for name, jobs in (("one", "1"), ("eight", "8")):
        out = tmp_path / name
        assert main(["segment", str(suite), "-o", str(out), "--jobs", jobs, "--baselines"]) == EXIT_OK
        assert main(["eval", str(out), str(suite)]) == EXIT_OK

    one, eight = _files(tmp_path / "one"), _files(tmp_path / "eight")
    assert one == eight
    assert one[Path("report.json")]


def test_zero_cases_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["phantom", "-n", "0", "-o", str(tmp_path)])
    assert err.value.code == EXIT_USAGE


def test_bad_manifest_fails(tmp_path):
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps([{"case_id": "x"}]), encoding="utf-8")
    assert main(["segment", str(manifest), "-o", str(tmp_path / "out")]) == EXIT_ERROR


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alpha": 5.0, "tau": 0.3}), encoding="utf-8")
    args = build_parser().parse_args(
        ["segment", "m.json", "-o", "out", "--config", str(cfg), "--alpha", "7", "--method", "plain", "--no-ggo-stop"]
    )
    config = build_config(args)
    assert config.alpha == 7.0
    assert config.tau == 0.3
    assert config.coarse_method.value == "plain_threshold"
    assert config.ggo_stop is False
