"""Command-line surface.

Verbs: gen-data, train-ce, make-lattices, train, lattice <sub>, verify.
All outputs are deterministic functions of (config, seeds); files are
written atomically.  `train` exits nonzero unless every measure-harness
check held at every iteration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path as FsPath

import numpy as np

from . import latio
from .algorithms import (
    backward_fill,
    count_paths,
    determinize_best_alignment,
    enumerate_paths,
    forward_logsum,
    viterbi_best_path,
)
from .algorithms import ancestral_sample
from .config import ConfigError, ExperimentConfig
from .lattice import LatticeError, path_score, validate
from .latio import FormatError
from .scorer import ScorerParams, ce_pretrain, frame_accuracy
from .synth import synth_dataset
from .training import TaskGraphs, generate_lattices, train
from .verify import SUITES

DATASET_TRAIN = "dataset_train.txt"
DATASET_HELDOUT = "dataset_heldout.txt"
CE_MODEL = "ce_model.npz"
LATTICE_DIR = "lattices"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LatticeError, FormatError, ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latmmi",
                                     description="Lattice-based MMI sequence training, desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize the train/heldout datasets")
    _common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-ce", help="frame-level cross-entropy pretraining (produces the CE model)")
    _common(p)
    p.set_defaults(func=cmd_train_ce)

    p = sub.add_parser("make-lattices", help="recognition pass: raw/determinized/numerator lattices")
    _common(p)
    p.add_argument("--ce-model", type=FsPath, default=None,
                   help="CE model file (default: <out-dir>/ce_model.npz)")
    p.set_defaults(func=cmd_make_lattices)

    p = sub.add_parser("train", help="MMI sequence training with the theorem harness as a gate")
    _common(p)
    p.add_argument("--ce-model", type=FsPath, default=None)
    p.add_argument("--mode", choices=("baseline", "otf"), default=None,
                   help="override [train] mode from the config")
    p.add_argument("--numerator", choices=("fixed", "viterbi", "ancestral"), default=None,
                   help="override [train] numerator from the config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("lattice", help="lattice algebra on files")
    p.add_argument("subcommand", choices=("forward", "viterbi", "determinize", "sample",
                                          "enumerate", "validate"))
    p.add_argument("--in", dest="infile", type=FsPath, required=True)
    p.add_argument("--scores", type=FsPath, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-paths", type=int, default=100_000)
    p.set_defaults(func=cmd_lattice)

    p = sub.add_parser("verify", help="run a self-checking acceptance suite")
    p.add_argument("--suite", choices=sorted(SUITES), required=True)
    p.add_argument("--inject-corruption", action="store_true",
                   help="seed a deliberate fault; the suite must then fail")
    p.set_defaults(func=cmd_verify)
    return parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=FsPath, required=True)
    p.add_argument("--out-dir", type=FsPath, required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the [synth] seed from the config")


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace
        cfg = ExperimentConfig(synth=replace(cfg.synth, seed=args.seed),
                               ce_iterations=cfg.ce_iterations,
                               ce_learning_rate=cfg.ce_learning_rate,
                               ce_seed=cfg.ce_seed, train=cfg.train)
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    graphs = TaskGraphs.from_config(cfg.synth)  # validates the enumeration cap
    train_set, heldout = synth_dataset(cfg.synth)
    latio.write_dataset(out / DATASET_TRAIN, train_set)
    latio.write_dataset(out / DATASET_HELDOUT, heldout)
    print(f"wrote {len(train_set)} train utterances to {out / DATASET_TRAIN}")
    print(f"wrote {len(heldout)} heldout utterances to {out / DATASET_HELDOUT}")
    print(f"hypotheses: {len(graphs.sentence_graphs)}  "
          f"full-graph paths: {count_paths(graphs.full_graph)}")
    return 0


def cmd_train_ce(args) -> int:
    cfg = _load(args)
    out = args.out_dir
    train_set = latio.read_dataset(out / DATASET_TRAIN)
    lex = cfg.synth.lexicon()
    params = ce_pretrain(train_set, cfg.synth.feature_dim, lex.score_width,
                         iterations=cfg.ce_iterations, learning_rate=cfg.ce_learning_rate,
                         init_seed=cfg.ce_seed)
    latio.write_model(out / CE_MODEL, params.weights, params.bias)
    print(f"wrote CE model to {out / CE_MODEL}")
    print(f"train frame accuracy: {frame_accuracy(params, train_set):.4f}")
    return 0


def _read_params(path: FsPath) -> ScorerParams:
    weights, bias = latio.read_model(path)
    return ScorerParams(weights=weights, bias=bias)


def cmd_make_lattices(args) -> int:
    cfg = _load(args)
    out = args.out_dir
    ce_path = args.ce_model or (out / CE_MODEL)
    if not ce_path.exists():
        raise FileNotFoundError(f"CE model not found: {ce_path} (run train-ce first)")
    ce = _read_params(ce_path)
    train_set = latio.read_dataset(out / DATASET_TRAIN)
    graphs = TaskGraphs.from_config(cfg.synth)
    lattices = generate_lattices(train_set, graphs, ce, k=cfg.train.k)

    lat_dir = out / LATTICE_DIR
    lat_dir.mkdir(parents=True, exist_ok=True)
    raw_arcs = det_arcs = 0
    raw_paths = det_paths = 0
    for lat in lattices:
        latio.write_lattice(lat_dir / f"{lat.utt_id}.raw.lat", lat.raw)
        latio.write_lattice(lat_dir / f"{lat.utt_id}.det.lat", lat.det)
        latio.write_lattice(lat_dir / f"{lat.utt_id}.num.lat", lat.numerator_lattice)
        latio.write_path(lat_dir / f"{lat.utt_id}.num.path", lat.fixed_path)
        raw_arcs += len(lat.raw.arcs)
        det_arcs += len(lat.det.arcs)
        raw_paths += count_paths(lat.raw)
        det_paths += count_paths(lat.det)
    print(f"wrote lattices for {len(lattices)} utterances to {lat_dir}")
    print(f"raw/det size ratio (arcs): {raw_arcs / det_arcs:.3f} "
          f"({raw_arcs} raw arcs vs {det_arcs} determinized)")
    print(f"raw/det path-count ratio: {raw_paths / det_paths:.3f} "
          f"({raw_paths} alignments vs {det_paths} retained)")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    overrides = {}
    if args.mode:
        overrides["mode"] = args.mode
    if args.numerator:
        overrides["numerator"] = args.numerator
    if overrides:
        cfg = cfg.replace_train(**overrides)
    out = args.out_dir
    ce_path = args.ce_model or (out / CE_MODEL)
    ce = _read_params(ce_path)
    train_set = latio.read_dataset(out / DATASET_TRAIN)
    heldout = latio.read_dataset(out / DATASET_HELDOUT)
    graphs = TaskGraphs.from_config(cfg.synth)
    lattices = load_lattices(out / LATTICE_DIR, train_set)

    result = train(train_set, lattices, graphs, ce, cfg.train, heldout=heldout, run_harness=True)
    metrics_path = out / "metrics.jsonl"
    with open(metrics_path, "w", encoding="utf-8") as fh:
        for record in result.metrics:
            latio.append_metrics_line(fh, record.to_json_dict())
    if result.aborted is not None:
        print(f"ABORTED: {result.aborted}; {len(result.metrics)} metric rows retained "
              f"in {metrics_path}", file=sys.stderr)
        return 1
    latio.write_model(out / "model.npz", result.params.weights, result.params.bias)
    latio.write_model(out / "model_final.npz", result.final_params.weights, result.final_params.bias)
    last = result.metrics[-1]
    print(f"trained {cfg.train.iterations} iterations (mode={cfg.train.mode}, "
          f"numerator={cfg.train.numerator}); metrics in {metrics_path}")
    print(f"final: true={last.loss_true:.6f} baseline={last.loss_baseline:.6f} "
          f"otf={last.loss_otf:.6f} heldout_err={last.heldout_sentence_error:.4f}")
    if not result.harness_ok:
        print(f"HARNESS VIOLATIONS ({len(result.harness_failures)}):", file=sys.stderr)
        for line in result.harness_failures[:10]:
            print("  " + line, file=sys.stderr)
        return 1
    print("theorem harness: all checks held at every iteration")
    return 0


def load_lattices(lat_dir: FsPath, dataset) -> list:
    """Re-assemble per-utterance lattice bundles written by make-lattices."""
    from .training import UtteranceLattices

    out = []
    for u in dataset:
        raw = latio.read_lattice(lat_dir / f"{u.utt_id}.raw.lat")
        det = latio.read_lattice(lat_dir / f"{u.utt_id}.det.lat")
        num_lat = latio.read_lattice(lat_dir / f"{u.utt_id}.num.lat")
        fixed = latio.read_path(lat_dir / f"{u.utt_id}.num.path")
        width = int(det.compiled.arc_pdf.max()) + 1
        kept = tuple(sorted({p.word_sequence for p, _ in
                             enumerate_paths(det, np.zeros((det.num_frames, width)), count_paths(det))}))
        out.append(UtteranceLattices(utt_id=u.utt_id, ref_words=u.ref_words, raw=raw, det=det,
                                     numerator_lattice=num_lat, fixed_path=fixed, kept_words=kept))
    return out


def cmd_lattice(args) -> int:
    lat = latio.read_lattice(args.infile)
    sub = args.subcommand
    if sub == "validate":
        violations = validate(lat)
        for v in violations:
            print(str(v))
        print(f"{'invalid' if violations else 'valid'}: {len(violations)} violation(s)")
        return 1 if violations else 0

    if sub in ("forward", "viterbi", "determinize", "sample", "enumerate"):
        if args.scores is None:
            raise LatticeError(f"lattice {sub} needs --scores")
        scores = latio.read_scores(args.scores)

    if sub == "forward":
        print(latio._fmt(forward_logsum(lat, scores)))
    elif sub == "viterbi":
        path, score = viterbi_best_path(lat, scores)
        print(latio.format_debug_path(score, path))
    elif sub == "determinize":
        det = determinize_best_alignment(lat, scores)
        sys.stdout.write(latio.format_lattice(det))
    elif sub == "enumerate":
        for p, s in enumerate_paths(lat, scores, args.max_paths):
            print(latio.format_debug_path(s, p))
    elif sub == "sample":
        if args.seed is None:
            raise LatticeError("lattice sample needs --seed")
        beta = backward_fill(lat, scores)
        path = ancestral_sample(lat, scores, beta, seed=args.seed)
        print(latio.format_debug_path(path_score(path, scores), path))
    return 0


def cmd_verify(args) -> int:
    report = SUITES[args.suite](inject_corruption=args.inject_corruption)
    for line in report.lines():
        print(line)
    print("SUMMARY " + json.dumps(report.to_json_dict(), sort_keys=True))
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
