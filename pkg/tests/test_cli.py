import shutil

import numpy as np
import pytest

from latmmi import latio
from latmmi.cli import main

SMALL_CONFIG = """\
[synth]
vocab_size = 2
max_sentence_len = 2
frames = 7
feature_dim = 3
noise = 1.0
num_train = 6
num_heldout = 4
enum_cap = 100000
seed = 0

[ce]
iterations = 25
learning_rate = 0.5
seed = 0

[train]
mode = otf
numerator = fixed
k = 3
learning_rate = 0.4
iterations = 8
epoch_size = 0
seed = 0
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "exp.ini"
    cfg.write_text(SMALL_CONFIG)
    out = root / "out"
    assert main(["gen-data", "--config", str(cfg), "--out-dir", str(out)]) == 0
    assert main(["train-ce", "--config", str(cfg), "--out-dir", str(out)]) == 0
    assert main(["make-lattices", "--config", str(cfg), "--out-dir", str(out)]) == 0
    return cfg, out


def test_gen_data_is_byte_identical(tmp_path, workdir):
    cfg, out = workdir
    out2 = tmp_path / "again"
    assert main(["gen-data", "--config", str(cfg), "--out-dir", str(out2)]) == 0
    for name in ("dataset_train.txt", "dataset_heldout.txt"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def test_make_lattices_reports_size_ratio(workdir, capsys):
    cfg, out = workdir
    main(["make-lattices", "--config", str(cfg), "--out-dir", str(out)])
    text = capsys.readouterr().out
    line = [l for l in text.splitlines() if "raw/det size ratio" in l][0]
    ratio = float(line.split(":")[1].strip().split()[0])
    assert ratio > 1.0


def test_lattice_files_round_trip(workdir):
    _, out = workdir
    lat_file = out / "lattices" / "train0000.raw.lat"
    lat = latio.read_lattice(lat_file)
    assert latio.format_lattice(lat) == lat_file.read_text()


def test_missing_ce_model_is_an_error(tmp_path, workdir):
    cfg, out = workdir
    fresh = tmp_path / "fresh"
    assert main(["gen-data", "--config", str(cfg), "--out-dir", str(fresh)]) == 0
    assert main(["make-lattices", "--config", str(cfg), "--out-dir", str(fresh)]) == 2


def test_train_writes_model_and_metrics(workdir):
    cfg, out = workdir
    assert main(["train", "--config", str(cfg), "--out-dir", str(out)]) == 0
    rows = latio.read_metrics(out / "metrics.jsonl")
    assert len(rows) == 8
    expected_keys = {"iteration", "loss_true", "loss_baseline", "loss_otf", "numerator_mode",
                     "ineq13_min_residual", "ineq14_residual", "normalization_residual",
                     "muhat_loss_gap", "heldout_sentence_error"}
    for row in rows:
        assert set(row) == expected_keys
        assert all(np.isfinite(v) for k, v in row.items() if isinstance(v, float))
    assert (out / "model.npz").exists()
    assert (out / "model_final.npz").exists()


def test_train_mode_flag_overrides_config(workdir, capsys):
    cfg, out = workdir
    assert main(["train", "--config", str(cfg), "--out-dir", str(out),
                 "--mode", "baseline", "--numerator", "viterbi"]) == 0
    text = capsys.readouterr().out
    assert "mode=baseline" in text and "numerator=viterbi" in text
    rows = latio.read_metrics(out / "metrics.jsonl")
    assert rows[0]["numerator_mode"] == "viterbi"


def test_baseline_and_otf_agree_at_iteration_zero(workdir, tmp_path):
    cfg, out = workdir
    rows = {}
    for mode in ("baseline", "otf"):
        assert main(["train", "--config", str(cfg), "--out-dir", str(out), "--mode", mode]) == 0
        rows[mode] = latio.read_metrics(out / "metrics.jsonl")
    assert rows["baseline"][0]["loss_baseline"] == rows["otf"][0]["loss_baseline"]
    assert rows["baseline"][0]["loss_otf"] == rows["otf"][0]["loss_otf"]
    assert rows["otf"][0]["loss_baseline"] == rows["otf"][0]["loss_otf"]


def test_corrupted_lattice_fails_the_harness_gate(workdir, tmp_path):
    cfg, out = workdir
    tampered = tmp_path / "tampered"
    shutil.copytree(out, tampered, ignore=shutil.ignore_patterns("model*", "metrics*"))
    raw = tampered / "lattices" / "train0000.raw.lat"
    lines = raw.read_text().splitlines()
    for i, line in enumerate(lines):
        if line.startswith("arc "):
            fields = line.split()
            fields[5] = repr(float(fields[5]) - 0.25)  # perturb one graph weight
            lines[i] = " ".join(fields)
            break
    raw.write_text("\n".join(lines) + "\n")
    # the raw lattice no longer matches the full graph, so -log muhat and the
    # on-the-fly loss disagree beyond 1e-9 and the gate must trip
    assert main(["train", "--config", str(cfg), "--out-dir", str(tampered)]) == 1


def test_lattice_verbs_are_deterministic(workdir, capsys, tmp_path):
    cfg, out = workdir
    lat_file = out / "lattices" / "train0000.raw.lat"
    lat = latio.read_lattice(lat_file)
    rng = np.random.default_rng(0)
    scores_file = tmp_path / "s.scores"
    width = int(lat.compiled.arc_pdf.max()) + 1
    latio.write_scores(scores_file, rng.normal(size=(lat.num_frames, width)))

    outputs = []
    for _ in range(2):
        assert main(["lattice", "sample", "--in", str(lat_file), "--scores", str(scores_file),
                     "--seed", "7"]) == 0
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]
    assert outputs[0].startswith("path ")

    assert main(["lattice", "forward", "--in", str(lat_file), "--scores", str(scores_file)]) == 0
    forward_out = capsys.readouterr().out.strip()
    float(forward_out)  # parses as a number

    assert main(["lattice", "validate", "--in", str(lat_file)]) == 0
    assert "valid" in capsys.readouterr().out


def test_determinize_then_enumerate_one_line_per_word_sequence(workdir, capsys, tmp_path):
    cfg, out = workdir
    lat_file = out / "lattices" / "train0001.raw.lat"
    lat = latio.read_lattice(lat_file)
    width = int(lat.compiled.arc_pdf.max()) + 1
    scores_file = tmp_path / "s2.scores"
    latio.write_scores(scores_file, np.zeros((lat.num_frames, width)))

    assert main(["lattice", "determinize", "--in", str(lat_file),
                 "--scores", str(scores_file)]) == 0
    det_text = capsys.readouterr().out
    det_file = tmp_path / "det.lat"
    det_file.write_text(det_text)
    assert main(["lattice", "enumerate", "--in", str(det_file),
                 "--scores", str(scores_file)]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("path ")]
    words = [l.split("|")[1].strip() for l in lines]
    assert len(words) == len(set(words))
    from latmmi.algorithms import enumerate_paths
    raw_words = {p.word_sequence for p, _ in
                 enumerate_paths(lat, np.zeros((lat.num_frames, width)), 100_000)}
    assert len(words) == len(raw_words)


def test_k1_gives_single_path_det_lattices(tmp_path):
    cfg_text = SMALL_CONFIG.replace("k = 3", "k = 1")
    cfg = tmp_path / "exp.ini"
    cfg.write_text(cfg_text)
    out = tmp_path / "out"
    assert main(["gen-data", "--config", str(cfg), "--out-dir", str(out)]) == 0
    assert main(["train-ce", "--config", str(cfg), "--out-dir", str(out)]) == 0
    assert main(["make-lattices", "--config", str(cfg), "--out-dir", str(out)]) == 0
    from latmmi.algorithms import count_paths
    for det in sorted((out / "lattices").glob("*.det.lat")):
        assert count_paths(latio.read_lattice(det)) == 1


def test_unreadable_config_is_reported(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[synth]\nbogus = 1\n")
    assert main(["gen-data", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err


def test_gen_data_refuses_cap_exceeding_config_with_count(tmp_path, capsys):
    cfg_text = SMALL_CONFIG.replace("enum_cap = 100000", "enum_cap = 10")
    cfg = tmp_path / "exp.ini"
    cfg.write_text(cfg_text)
    assert main(["gen-data", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "paths" in err and "cap is 10" in err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.filterwarnings("ignore::UserWarning")
def test_nan_abort_keeps_partial_metrics(tmp_path, workdir):
    cfg, out = workdir
    diverging = SMALL_CONFIG.replace("learning_rate = 0.4\niterations = 8",
                                     "learning_rate = 1e160\niterations = 20")
    bad_cfg = tmp_path / "diverge.ini"
    bad_cfg.write_text(diverging)
    assert main(["train", "--config", str(bad_cfg), "--out-dir", str(out)]) == 1
    rows = latio.read_metrics(out / "metrics.jsonl")
    assert 0 < len(rows) < 20


def test_seed_flag_overrides_synth_seed(tmp_path, workdir):
    cfg, _ = workdir
    a, b, c = (tmp_path / x for x in ("a", "b", "c"))
    assert main(["gen-data", "--config", str(cfg), "--out-dir", str(a), "--seed", "5"]) == 0
    assert main(["gen-data", "--config", str(cfg), "--out-dir", str(b), "--seed", "5"]) == 0
    assert main(["gen-data", "--config", str(cfg), "--out-dir", str(c), "--seed", "6"]) == 0
    assert (a / "dataset_train.txt").read_bytes() == (b / "dataset_train.txt").read_bytes()
    assert (a / "dataset_train.txt").read_bytes() != (c / "dataset_train.txt").read_bytes()
