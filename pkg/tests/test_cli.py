import json

import numpy as np
import pytest

from rffdr.cli import main, synthetic_pixels
from rffdr.fileio import load_array, load_labels_csv, save_array, save_labels_csv

FAST = ["--per-class", "5", "--folds", "3", "--cost-exponents=0,4", "--gamma-exponents=-3,-1"]


@pytest.fixture
def files(tmp_path, small_cube):
    values, labels = small_cube
    save_array(tmp_path / "cube.npy", values)
    save_labels_csv(tmp_path / "labels.csv", labels)
    return tmp_path, ["--cube", str(tmp_path / "cube.npy"), "--labels", str(tmp_path / "labels.csv")]


def test_reduce_and_inspect(files, capsys):
    tmp, data = files
    assert main(["reduce", *data, "--method", "rffica", "--components", "3", "--rff-features", "12",
                 "--out-model", str(tmp / "m.rdm"), "--out-features", str(tmp / "f.npy")]) == 0
    assert load_array(tmp / "f.npy").shape == (3, 72)
    capsys.readouterr()
    assert main(["inspect", str(tmp / "m.rdm")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["kind"] == "reducer"
    assert info["arrays"]["rff.coefficients"] == [5, 12]


def test_classify(files, capsys):
    tmp, data = files
    main(["reduce", *data, "--method", "lda", "--components", "2", "--per-class", "5",
          "--out-model", str(tmp / "m.rdm"), "--out-features", str(tmp / "f.npy")])
    assert main(["classify", "--features", str(tmp / "f.npy"), "--labels", str(tmp / "labels.csv"), *FAST,
                 "--out-model", str(tmp / "c.rdm"), "--out-pred", str(tmp / "pred.csv")]) == 0
    assert "Overall Accuracy" in capsys.readouterr().out
    assert load_labels_csv(tmp / "pred.csv").shape == (8, 9)
    assert (tmp / "c.rdm").is_file()


def test_evaluate_outputs_and_determinism(files):
    tmp, data = files
    args = ["evaluate", *data, "--method", "gda", "--components", "2", "--landmarks", "20", "--runs", "2", *FAST]
    assert main([*args, "--out", str(tmp / "a")]) == 0
    assert main([*args, "--out", str(tmp / "b")]) == 0
    names = {"report.csv", "per_class.csv", "report.txt", "confusion.csv", "model.rdm", "classifier.rdm",
             "groundtruth.ppm", "map.ppm", "map_masked.ppm", "timings.csv"}
    assert {p.name for p in (tmp / "a").iterdir()} == names
    for n in names - {"timings.csv"}:
        assert (tmp / "a" / n).read_bytes() == (tmp / "b" / n).read_bytes(), n


def test_lda_component_cap_rejected_before_compute(files, capsys):
    tmp, data = files
    rc = main(["evaluate", *data, "--method", "lda", "--components", "3", "--out", str(tmp / "o"), *FAST])
    assert rc != 0
    assert "C-1" in capsys.readouterr().err
    assert not (tmp / "o").exists()


def test_too_few_samples_rejected(files, capsys):
    tmp, data = files
    rc = main(["evaluate", *data, "--method", "lda", "--components", "2", "--out", str(tmp / "o"),
               "--per-class", "12", "--folds", "3"])
    assert rc == 1
    assert "error: usage:" in capsys.readouterr().err


def test_missing_file_is_io_error(tmp_path, capsys):
    rc = main(["reduce", "--cube", str(tmp_path / "nope.npy"), "--out-model", str(tmp_path / "m.rdm")])
    assert rc == 1
    assert "error: io:" in capsys.readouterr().err


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_benchmark_synthetic(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["benchmark", "--synthetic", "400,8", "--methods", "ica,rffica", "--components", "2,3",
                 "--repeats", "1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "method,2,3"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["ICA", "RFFICA"]
    assert all(len(ln.split(",")) == 3 for ln in lines)
    assert main(["benchmark", "--synthetic", "400,8", "--methods", "lda"]) == 1


def test_sweeps(files):
    tmp, data = files
    assert main(["sweep-d", *data, "--components", "2", "--features-list", "8,16", "--runs", "1", *FAST,
                 "--out", str(tmp / "d.csv")]) == 0
    lines = (tmp / "d.csv").read_text().splitlines()
    assert lines[0] == "rff_features,overall_accuracy" and len(lines) == 3
    assert main(["sweep-sigma", *data, "--components", "2", "--rff-features", "16", "--sigma-multipliers", "0.5,1",
                 "--runs", "1", *FAST, "--out", str(tmp / "s.csv"), "--compare", str(tmp / "c.csv")]) == 0
    assert len((tmp / "s.csv").read_text().splitlines()) == 3
    cmp = (tmp / "c.csv").read_text().splitlines()
    assert cmp[0] == "rule,sigma,overall_accuracy"
    assert [c.split(",")[0] for c in cmp[1:]] == ["empirical", "cross_validation"]


def test_config_file(files):
    tmp, data = files
    (tmp / "cfg.json").write_text(json.dumps({"method": "ica", "components": 2}))
    assert main(["reduce", *data, "--config", str(tmp / "cfg.json"), "--out-model", str(tmp / "m.rdm")]) == 0
    (tmp / "bad.json").write_text(json.dumps({"bogus": 1}))
    assert main(["reduce", *data, "--config", str(tmp / "bad.json"), "--out-model", str(tmp / "m.rdm")]) == 1


def test_synthetic_pixels_deterministic():
    a = synthetic_pixels(50, 10, 3)
    assert a.shape == (10, 50)
    np.testing.assert_array_equal(a, synthetic_pixels(50, 10, 3))
