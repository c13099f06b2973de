import json

import numpy as np
import pytest
from PIL import Image

from spdps import cache
from spdps.cli import main


def run_cli(*argv):
    return main([str(a) for a in argv])


def write_image_dataset(root, classes=("grass", "sand"), per_class=2, size=16, seed=4):
    rng = np.random.default_rng(seed)
    for name in classes:
        class_dir = root / name
        class_dir.mkdir(parents=True)
        for i in range(per_class):
            pixels = (rng.random((size, size)) * 255).astype(np.uint8)
            Image.fromarray(pixels, mode="L").save(class_dir / f"{i}.png")


def test_synth_writes_labeled_descriptors(tmp_path, capsys):
    out = tmp_path / "pts.bin"
    code = run_cli(
        "synth", "--classes", 2, "--per-class", 5, "--dim", 4, "--seed", 3, "--out", out
    )
    assert code == 0
    assert "wrote 10 descriptors" in capsys.readouterr().out
    points, labels = cache.load_descriptors(out)
    assert len(points) == 10
    assert labels.tolist() == [0] * 5 + [1] * 5


def test_stage_chain_synth_gram_project_da_dl(tmp_path, capsys):
    pts = tmp_path / "pts.bin"
    g = tmp_path / "g.bin"
    proj = tmp_path / "w.bin"
    da = tmp_path / "da.bin"
    dicts = tmp_path / "dicts"
    assert run_cli("synth", "--classes", 2, "--per-class", 10, "--dim", 4,
                   "--spread", 1.2, "--noise", 0.15, "--seed", 1, "--out", pts) == 0
    assert run_cli("gram", "--points", pts, "--sigma", 0.5, "--out", g) == 0
    assert run_cli("project", "--gram", g, "--variant", "h-dps", "--out", proj) == 0
    assert run_cli("train-da", "--gram", g, "--projection", proj, "--points", pts,
                   "--r", 3, "--out", da) == 0
    assert run_cli("train-dl", "--gram", g, "--projection", proj, "--points", pts,
                   "--m", 6, "--t0", 2, "--iterations", 5, "--out", dicts) == 0
    output = capsys.readouterr().out
    assert "20 x 20 gram" in output
    assert "hybrid projection (20 x" in output
    assert "discriminant (" in output
    assert "2 class dictionaries" in output

    fitted = cache.load_gram(g)
    model = cache.load_projection(proj)
    assert fitted.n == 20
    assert model.projection.shape[0] == 20
    assert cache.load_discriminant(da).r == 3
    for cls in (0, 1):
        learned = cache.load_dictionary(dicts / f"class_{cls}.dict")
        assert learned.m == 6


def test_project_rose_uses_seed_and_k(tmp_path):
    pts = tmp_path / "pts.bin"
    g = tmp_path / "g.bin"
    run_cli("synth", "--classes", 2, "--per-class", 8, "--dim", 3, "--out", pts)
    run_cli("gram", "--points", pts, "--out", g)
    a, b, c = tmp_path / "a.bin", tmp_path / "b.bin", tmp_path / "c.bin"
    assert run_cli("project", "--gram", g, "--variant", "rose", "--rose-k", 12,
                   "--seed", 7, "--out", a) == 0
    assert run_cli("project", "--gram", g, "--variant", "rose", "--rose-k", 12,
                   "--seed", 7, "--out", b) == 0
    assert run_cli("project", "--gram", g, "--variant", "rose", "--rose-k", 12,
                   "--seed", 8, "--out", c) == 0
    first = cache.load_projection(a)
    assert first.k == 12
    assert np.array_equal(first.projection, cache.load_projection(b).projection)
    assert not np.array_equal(first.projection, cache.load_projection(c).projection)


def test_extract_writes_one_descriptor_per_tile(tmp_path, capsys):
    data = tmp_path / "data"
    write_image_dataset(data)
    out = tmp_path / "pts.bin"
    code = run_cli("extract", "--dataset", data, "--descriptor", "texture5",
                   "--tiling", 2, 2, "--out", out)
    assert code == 0
    assert "16 texture5 descriptors (2 classes)" in capsys.readouterr().out
    points, labels = cache.load_descriptors(out)
    assert len(points) == 16
    assert labels.tolist() == [0] * 8 + [1] * 8
    assert points[0].dim == 5


def test_evaluate_writes_reports_and_prints_summary(tmp_path, capsys):
    out = tmp_path / "rep"
    code = run_cli(
        "evaluate",
        "--synthetic-classes", 2, "--synthetic-per-class", 12, "--synthetic-dim", 4,
        "--synthetic-spread", 1.2, "--synthetic-noise", 0.15,
        "--variants", "rose,h-dps", "--rose-k", 16,
        "--repetitions", 2, "--seed", 1, "--out", out,
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "rose:" in printed and "h-dps:" in printed
    assert (out / "report.json").is_file()
    assert (out / "report.csv").is_file()
    data = json.loads((out / "report.json").read_text())
    assert data["config"]["variants"] == ["rose", "h-dps"]
    assert len(data["runs"]) == 4


def test_evaluate_flags_override_config_file(tmp_path):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "synthetic_classes": 2,
        "synthetic_per_class": 10,
        "synthetic_dim": 4,
        "variants": ["rose"],
        "rose_k": 12,
        "repetitions": 1,
        "seed": 0,
    }))
    out = tmp_path / "rep"
    code = run_cli("evaluate", "--config", config_path,
                   "--repetitions", 2, "--seed", 9, "--out", out)
    assert code == 0
    written = json.loads((out / "report.json").read_text())["config"]
    assert written["repetitions"] == 2
    assert written["seed"] == 9
    assert written["rose_k"] == 12
    assert written["variants"] == ["rose"]


def test_evaluate_partial_run_returns_one(tmp_path, capsys):
    out = tmp_path / "rep"
    code = run_cli(
        "evaluate",
        "--synthetic-classes", 2, "--synthetic-per-class", 1, "--synthetic-dim", 3,
        "--variants", "rose", "--repetitions", 1, "--out", out,
    )
    assert code == 1
    captured = capsys.readouterr()
    assert "no successful runs" in captured.out
    assert "warning:" in captured.err
    assert json.loads((out / "report.json").read_text())["partial"]


def test_report_reads_directory_or_file(tmp_path, capsys):
    out = tmp_path / "rep"
    run_cli("evaluate", "--synthetic-classes", 2, "--synthetic-per-class", 10,
            "--synthetic-dim", 3, "--variants", "rose", "--rose-k", 8,
            "--repetitions", 1, "--out", out)
    capsys.readouterr()
    assert run_cli("report", out) == 0
    from_dir = capsys.readouterr().out
    assert run_cli("report", out / "report.json") == 0
    assert capsys.readouterr().out == from_dir
    assert "rose:" in from_dir


def test_errors_print_message_and_return_two(tmp_path, capsys):
    code = run_cli("gram", "--points", tmp_path / "missing.bin", "--out", tmp_path / "g.bin")
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_train_da_requires_labels(tmp_path, capsys):
    pts = tmp_path / "pts.bin"
    g = tmp_path / "g.bin"
    proj = tmp_path / "w.bin"
    run_cli("synth", "--classes", 2, "--per-class", 6, "--dim", 3, "--out", pts)
    points, _ = cache.load_descriptors(pts)
    unlabeled = tmp_path / "unlabeled.bin"
    cache.save_descriptors(unlabeled, points)
    run_cli("gram", "--points", pts, "--out", g)
    run_cli("project", "--gram", g, "--variant", "l-dps", "--out", proj)
    capsys.readouterr()
    code = run_cli("train-da", "--gram", g, "--projection", proj,
                   "--points", unlabeled, "--out", tmp_path / "da.bin")
    assert code == 2
    assert "no labels" in capsys.readouterr().err


def test_unknown_variant_flag_is_rejected(tmp_path):
    with pytest.raises(SystemExit):
        run_cli("project", "--gram", tmp_path / "g.bin", "--variant", "pca",
                "--out", tmp_path / "w.bin")


def test_module_entry_point_help():
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "spdps.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "evaluate" in proc.stdout
