import csv
import io

import pytest

from zepeye.cli import main
from zepeye.config import Config
from zepeye.mlp import Head, load_model, mlp_new, save_model


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def corpus_dir(tmp_path, capsys):
    d = tmp_path / "faces"
    assert run(capsys, "synth", "--out", str(d), "--faces", "3", "--seed", "2")[0] == 0
    return d


@pytest.fixture
def untrained_models(tmp_path):
    f, lat = tmp_path / "f.mdl", tmp_path / "l.mdl"
    save_model(mlp_new(60, head=Head.REGRESSION, seed=0), f)
    save_model(mlp_new(60, head=Head.BINARY, seed=0), lat)
    return str(f), str(lat)


def test_print_config(capsys):
    code, out, _ = run(capsys, "--print-config")
    assert code == 0
    assert Config.loads(out) == Config()
    for line in ("frontal.darkness_threshold = 0.15", "lateral.darkness_threshold = 0.3",
                 "frontal.accept_threshold = 0", "lateral.accept_threshold = -0.5"):
        assert line in out.splitlines()


def test_config_file_and_env(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# ablation\nscan_stride = 4\nlateral.accept_threshold = -0.25\n")
    _, out, _ = run(capsys, "--config", str(cfg), "--print-config")
    assert "scan_stride = 4" in out and "lateral.accept_threshold = -0.25" in out
    monkeypatch.setenv("ZEPEYE_CONFIG", str(cfg))
    _, out, _ = run(capsys, "--print-config")
    assert "scan_stride = 4" in out
    cfg.write_text("nonsense = 1\n")
    assert run(capsys, "--print-config")[0] == 2


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["synth"], ["--threads", "0", "synth", "--out", "x"],
                                  ["project"]])
def test_usage_errors_exit_1(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        code = main(argv)
        raise SystemExit(code)
    assert exc.value.code == 1


def test_synth_layout(corpus_dir):
    names = sorted(p.name for p in corpus_dir.iterdir())
    assert names == ["annotations.csv", "f0_00000.pgm", "f0_00001.pgm", "f0_00002.pgm"]


def test_project_and_encode(corpus_dir, capsys):
    img = str(corpus_dir / "f0_00000.pgm")
    code, out, _ = run(capsys, "project", "--image", img, "--rect", "80,150,60,130", "--axis", "V", "--kind", "edge")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "index,value" and len(lines) == 72
    assert all(len(l.split(",")[1].split(".")[1]) == 6 for l in lines[1:])
    code, out, _ = run(capsys, "encode", "--image", img, "--rect", "80,150,60,130")
    assert code == 0 and out.startswith("index,duration,amplitude,shape\n")
    code, out, _ = run(capsys, "encode", "--zep", "--image", img, "--rect", "80,150,60,130")
    assert len(out.splitlines()) == 61


def test_encode_signal(capsys):
    sig = "40,114,80,20,-30,-70,-128,-90,-60,-40,-50,-80,-100,-110,-95,-70,-50,-30,-20,-15,-10,-5," \
          "10,60,127,90,50,30,25,20,22,28,35,40,45,50"
    code, out, _ = run(capsys, "encode", "--signal", sig, "--normalized")
    rows = [r.split(",") for r in out.splitlines()[1:]]
    assert code == 0
    assert [(int(d), float(a), int(s)) for _, d, a, s in rows] == [(4, 114, 1), (18, -128, 3), (14, 127, 2)]


def test_project_bad_image(capsys, tmp_path):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n4 4\n255\n\x00")
    assert run(capsys, "project", "--image", str(bad))[0] == 2
    assert run(capsys, "project", "--image", str(tmp_path / "missing.pgm"))[0] == 2


def test_localize_csv(corpus_dir, untrained_models, capsys, tmp_path):
    f, lat = untrained_models
    args = ["localize", "--annotations", str(corpus_dir / "annotations.csv"), "--images", str(corpus_dir),
            "--frontal-model", f, "--lateral-model", lat]
    code, out, _ = run(capsys, *args)
    rows = list(csv.reader(io.StringIO(out)))
    assert code in (0, 3)
    assert rows[0] == ["id", "left_row", "left_col", "right_row", "right_col", "illumination",
                       "left_confidence", "right_confidence"]
    assert [r[0] for r in rows[1:]] == ["f0_00000", "f0_00001", "f0_00002"]
    for r in rows[1:]:
        assert r[5] in ("frontal", "lateral")
        assert all(v == "" or len(v.split(".")[1]) == 2 for v in r[1:5])
    # determinism, with and without threads
    out_file = tmp_path / "a.csv"
    run(capsys, *args, "--out", str(out_file))
    assert out_file.read_text() == out
    assert run(capsys, "--threads", "3", *args)[1] == out


def test_localize_flags_no_candidates(corpus_dir, tmp_path, capsys):
    never = mlp_new(60, head=Head.REGRESSION, seed=0)
    never.b2[:] = -100.0
    never_l = mlp_new(60, head=Head.BINARY, seed=0)
    never_l.b2[:] = -100.0
    save_model(never, tmp_path / "f.mdl")
    save_model(never_l, tmp_path / "l.mdl")
    code, out, err = run(capsys, "localize", "--annotations", str(corpus_dir / "annotations.csv"),
                         "--images", str(corpus_dir), "--frontal-model", str(tmp_path / "f.mdl"),
                         "--lateral-model", str(tmp_path / "l.mdl"))
    assert code == 3 and "no candidates" in err
    assert all(r.split(",")[1:5] == ["", "", "", ""] for r in out.splitlines()[1:])


def test_localize_missing_model_and_images(corpus_dir, untrained_models, capsys):
    f, lat = untrained_models
    code, _, err = run(capsys, "localize", "--annotations", str(corpus_dir / "annotations.csv"),
                       "--images", str(corpus_dir), "--frontal-model", "nope.mdl", "--lateral-model", lat)
    assert code == 2 and "nope.mdl" in err
    (corpus_dir / "f0_00001.pgm").unlink()
    (corpus_dir / "f0_00002.pgm").unlink()
    code, _, err = run(capsys, "localize", "--annotations", str(corpus_dir / "annotations.csv"),
                       "--images", str(corpus_dir), "--frontal-model", f, "--lateral-model", lat)
    assert code == 2 and "f0_00001" in err and "f0_00002" in err


def test_eval_outputs(corpus_dir, untrained_models, capsys, tmp_path):
    f, lat = untrained_models
    code, out, _ = run(capsys, "eval", "--annotations", str(corpus_dir / "annotations.csv"),
                       "--images", str(corpus_dir), "--frontal-model", f, "--lateral-model", lat,
                       "--errors", str(tmp_path / "e.csv"), "--curve", str(tmp_path / "c.csv"),
                       "--noise", "0,5,15,30")
    assert code == 0
    assert "threshold" in out and "0.05" in out and "0.10" in out and "0.25" in out
    sweep = out.split("sigma,accuracy\n")[1].splitlines()
    assert [r.split(",")[0] for r in sweep] == ["0", "5", "15", "30"]
    assert (tmp_path / "e.csv").read_text().startswith("id,eps_l,eps_r,eps\n")
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 4


def test_train_epochs_zero_is_initialization(tmp_path, capsys):
    out = tmp_path / "m.mdl"
    code, text, _ = run(capsys, "train", "--out", str(out), "--faces", "1", "--val-faces", "1",
                        "--epochs", "0", "--seed", "4")
    assert code == 0 and "final_loss,\n" in text and "validation_accuracy," in text
    assert load_model(out).same_params(mlp_new(60, head=Head.BINARY, seed=4))


def test_train_reports_and_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.mdl", tmp_path / "b.mdl"
    args = ["train", "--branch", "frontal", "--faces", "1", "--val-faces", "1", "--epochs", "2"]
    code, text, _ = run(capsys, *args, "--out", str(a))
    assert code == 0 and "validation_mse," in text
    run(capsys, *args, "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    assert load_model(a).head is Head.REGRESSION


def test_train_from_annotations(corpus_dir, tmp_path, capsys):
    code, text, _ = run(capsys, "train", "--out", str(tmp_path / "m.mdl"), "--annotations",
                        str(corpus_dir / "annotations.csv"), "--images", str(corpus_dir), "--epochs", "1")
    assert code == 0 and text.startswith("samples,500\n")


def test_train_bad_output_path(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--out", str(tmp_path / "no" / "such" / "m.mdl"), "--faces", "1")
    assert code == 2 and "cannot write model" in err


def test_bench_single_iteration(capsys):
    code, out, _ = run(capsys, "bench", "--iterations", "1", "--face-size", "150")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "stage,mean_ms,p95_ms"
    stages = [l.split(",")[0] for l in lines]
    assert stages[1:8] == ["context", "prefilter", "projections", "encoding", "mlp", "postprocess", "total"]
    for l in lines[1:10]:
        _, mean, p95 = l.split(",")
        assert mean == p95
    assert stages[-2:] == ["speedup", "tp_score"]
