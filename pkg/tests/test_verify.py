import configparser

from latmmi.cli import main
from latmmi.config import ExperimentConfig, default_config_text
from latmmi.verify import run_gradient_suite, run_oracle_suite, run_theorem_suite


def _small_theorem_config(iterations=6):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string(default_config_text()
                       .replace("num_train = 24", "num_train = 6")
                       .replace("num_heldout = 24", "num_heldout = 4"))
    cfg = ExperimentConfig.from_parser(parser)
    return cfg.replace_train(iterations=iterations)


def test_oracle_suite_passes_reduced():
    report = run_oracle_suite(num_lattices=25)
    assert report.passed


def test_oracle_suite_corruption_fails_named_check():
    report = run_oracle_suite(num_lattices=3, inject_corruption=True)
    assert not report.passed
    failed = [name for name, ok, _ in report.checks if not ok]
    assert failed == ["forward_vs_enumeration"]


def test_gradient_suite_corruption_fails_named_check():
    report = run_gradient_suite(num_instances=2, inject_corruption=True)
    assert not report.passed
    assert [n for n, ok, _ in report.checks if not ok] == ["true_mmi"]


def test_theorem_suite_corruption_trips_the_gate():
    report = run_theorem_suite(config=_small_theorem_config(), min_iterations=6,
                               inject_corruption=True)
    assert not report.passed
    failed = {n for n, ok, _ in report.checks if not ok}
    assert "muhat_matches_otf_loss" in failed or "harness_gate" in failed


def test_theorem_suite_passes_reduced():
    report = run_theorem_suite(config=_small_theorem_config(iterations=8), min_iterations=8)
    assert report.passed
    assert report.counters["iterations"] == 8


def test_verify_cli_oracle_exit_codes(capsys):
    assert main(["verify", "--suite", "gradient"]) in (0,)
    out = capsys.readouterr().out
    assert "SUMMARY {" in out
    assert "[PASS] suite gradient" in out


def test_verify_cli_corruption_nonzero_exit(capsys):
    assert main(["verify", "--suite", "gradient", "--inject-corruption"]) == 1
    out = capsys.readouterr().out
    assert "[FAIL]" in out
