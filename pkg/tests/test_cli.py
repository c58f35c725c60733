import json
import math

import numpy as np
import pytest

from cli import main
from conftest import unit_rows
from service.emb_file import read_emb, write_emb


@pytest.fixture
def synth_dir(tmp_path, capsys):
    out = tmp_path / "synth"
    assert main(["synth", "--m", "32", "--d", "8", "--coupling", "0.25", "--seed", "3", "--out", str(out), "--json"]) == 0
    capsys.readouterr()
    return out


@pytest.fixture
def pair_files(tmp_path, rng):
    image, text = unit_rows(rng, 6, 4), unit_rows(rng, 6, 4)
    write_emb(tmp_path / "image.emb", image)
    write_emb(tmp_path / "text.emb", text)
    return tmp_path / "image.emb", tmp_path / "text.emb"


def test_synth_writes_manifest_and_summary(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["synth", "--m", "10", "--d", "4", "--out", str(out), "--json"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["n_pairs"] == 10 and summary["dim"] == 4
    assert read_emb(out / "image.emb").shape == (10, 4)
    assert json.loads((out / "manifest.json").read_text())["text_emb"] == "text.emb"


def test_analyze_synth_manifest(synth_dir, capsys):
    assert main(["analyze", "--manifest", str(synth_dir / "manifest.json"), "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_pairs"] == 32
    assert report["modality_gap_norm"] > 0.5
    assert report["uniformity_count"] == 32 * 31


def test_analyze_shift_sweep_csv(synth_dir, capsys):
    assert main(["analyze", "--manifest", str(synth_dir / "manifest.json"), "--shift-sweep", "--csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 22
    assert lines[0].startswith("alignment,uniformity,modality_gap_norm")


def test_analyze_table_output(pair_files, capsys):
    image, text = pair_files
    assert main(["analyze", "--image", str(image), "--text", str(text)]) == 0
    assert "embedding metrics" in capsys.readouterr().out


def test_analyze_thread_count_does_not_change_output(synth_dir, capsys):
    manifest = str(synth_dir / "manifest.json")
    main(["analyze", "--manifest", manifest, "--json", "--threads", "1"])
    single = capsys.readouterr().out
    main(["analyze", "--manifest", manifest, "--json", "--threads", "4"])
    assert capsys.readouterr().out == single


def test_missing_file_exits_2(tmp_path):
    assert main(["analyze", "--image", str(tmp_path / "nope.emb"), "--text", str(tmp_path / "nope.emb")]) == 2


def test_bad_magic_exits_2(tmp_path, pair_files):
    bogus = tmp_path / "bogus.emb"
    bogus.write_bytes(b"XXXX" + pair_files[0].read_bytes()[4:])
    assert main(["analyze", "--image", str(bogus), "--text", str(pair_files[1])]) == 2


def test_shape_mismatch_exits_3(tmp_path, rng, pair_files):
    write_emb(tmp_path / "short.emb", unit_rows(rng, 5, 4))
    assert main(["analyze", "--image", str(pair_files[0]), "--text", str(tmp_path / "short.emb")]) == 3


def test_antipodal_mix_exits_4_with_row(tmp_path, rng, caplog):
    image = unit_rows(rng, 3, 4)
    text = unit_rows(rng, 3, 4)
    text[1] = -image[1]
    write_emb(tmp_path / "i.emb", image)
    write_emb(tmp_path / "t.emb", text)
    code = main(["mix", "--image", str(tmp_path / "i.emb"), "--text", str(tmp_path / "t.emb"), "--lambda", "0.5", "--out", str(tmp_path / "m.emb")])
    assert code == 4
    assert "row 1" in caplog.text
    assert not (tmp_path / "m.emb").exists()


def test_antipodal_linear_mix_exits_4_with_row(tmp_path, rng, caplog):
    image = unit_rows(rng, 3, 4)
    text = unit_rows(rng, 3, 4)
    text[1] = -image[1]
    write_emb(tmp_path / "i.emb", image)
    write_emb(tmp_path / "t.emb", text)
    args = ["mix", "--image", str(tmp_path / "i.emb"), "--text", str(tmp_path / "t.emb"), "--out", str(tmp_path / "m.emb")]
    assert main([*args, "--lambda", "0.5", "--linear"]) == 4
    assert "row 1" in caplog.text
    assert not (tmp_path / "m.emb").exists()
    # off the midpoint the linear blend does not cancel
    assert main([*args, "--lambda", "0.3", "--linear"]) == 0


@pytest.mark.parametrize("lam,source", [("1", 0), ("0", 1)])
def test_mix_endpoints_are_byte_identical(tmp_path, pair_files, lam, source):
    out = tmp_path / "mixed.emb"
    assert main(["mix", "--image", str(pair_files[0]), "--text", str(pair_files[1]), "--lambda", lam, "--out", str(out)]) == 0
    assert out.read_bytes() == pair_files[source].read_bytes()


def test_mix_linear_midpoint_is_unit(tmp_path, pair_files):
    out = tmp_path / "linear.emb"
    assert main(["mix", "--image", str(pair_files[0]), "--text", str(pair_files[1]), "--lambda", "0.5", "--linear", "--out", str(out)]) == 0
    np.testing.assert_allclose(np.linalg.norm(read_emb(out), axis=1), 1.0, atol=1e-6)


def test_missing_pair_arguments_exit_5(pair_files):
    assert main(["analyze", "--image", str(pair_files[0])]) == 5


def test_bad_train_config_exits_5_naming_field(tmp_path, pair_files, caplog):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"epochs": 1, "lr": -0.1}))
    code = main(["train", "--image", str(pair_files[0]), "--text", str(pair_files[1]), "--config", str(config), "--out", str(tmp_path / "run")])
    assert code == 5
    assert "lr" in caplog.text


def test_theorem_equal_means_exits_6():
    assert main(["theorem", "--kappa", "50", "--mu1", "1.0", "--mu2", "1.0"]) == 6


def test_theorem_single_check(capsys):
    assert main(["theorem", "--kappa", "50", "--mu2", str(math.pi / 3), "--n", "20000", "--json"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["holds"] is True
    assert record["kl_mixed"] < record["kl_cross"]


def test_retrieve_identity_pairs(tmp_path, capsys):
    write_emb(tmp_path / "e.emb", np.eye(4))
    assert main(["retrieve", "--image", str(tmp_path / "e.emb"), "--text", str(tmp_path / "e.emb"), "--k", "1", "2", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 4
    assert {r["direction"] for r in rows} == {"image_to_text", "text_to_image"}
    assert all(r["recall"] == 1.0 for r in rows)


def test_retrieve_k_too_large_exits_6(pair_files):
    assert main(["retrieve", "--image", str(pair_files[0]), "--text", str(pair_files[1]), "--k", "7"]) == 6


def test_calibrate_writes_bins(tmp_path, pair_files, capsys):
    bins = tmp_path / "bins.csv"
    args = ["calibrate", "--image", str(pair_files[0]), "--text", str(pair_files[1]), "--tau", "0.05", "--bins", "5"]
    assert main([*args, "--bins-csv", str(bins), "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_bins"] == 5 and report["n_queries"] == 6
    assert 0.0 <= report["ece"] <= 1.0
    lines = bins.read_text().strip().splitlines()
    assert lines[0] == "bin_lo,bin_hi,count,mean_conf,mean_acc"
    assert len(lines) == 6


def test_calibrate_tau_sweep(pair_files, capsys):
    args = ["calibrate", "--image", str(pair_files[0]), "--text", str(pair_files[1]), "--tau-sweep", "0.01", "0.05", "0.1", "--json"]
    assert main(args) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["tau"] for r in rows] == [0.01, 0.05, 0.1]


def test_arith_reports_gallery_hit(tmp_path, capsys):
    write_emb(tmp_path / "e.emb", np.eye(3))
    args = ["arith", "--image", str(tmp_path / "e.emb"), "--text", str(tmp_path / "e.emb"), "--source", "0", "--target", "2"]
    assert main([*args, "--json"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["top_index"] == 2 and result["hit_target"] is True
    assert main([*args[:-1], "9"]) == 6


def test_train_zero_epochs(tmp_path, pair_files, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"epochs": 0}))
    out = tmp_path / "run"
    code = main(["train", "--image", str(pair_files[0]), "--text", str(pair_files[1]), "--config", str(config), "--out", str(out), "--no-progress", "--json"])
    assert code == 0
    assert json.loads(capsys.readouterr().out) == []
    assert (out / "model.bin").exists()
    assert json.loads((out / "resolved_config.json").read_text())["epochs"] == 0


def test_train_history_reproducible(tmp_path, synth_dir):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"epochs": 2, "batch_size": 16, "seed": 4}))
    histories = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["train", "--manifest", str(synth_dir / "manifest.json"), "--config", str(config), "--out", str(out), "--no-progress"])
        assert code == 0
        histories.append((out / "history.csv").read_bytes())
    assert histories[0] == histories[1]
    assert len(histories[0].decode().strip().splitlines()) == 3
