"""Text file formats: lattices, paths, score tables, datasets, metrics.

All formats are line-oriented UTF-8 with '#' comments, deterministic to
write, and diff-able.  Floats print with 17 significant digits so parsing
reproduces them bit for bit.  Writers go through an atomic temp+rename.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Iterable

import numpy as np

from .lattice import Arc, Lattice, LatticeError, Path, ScoreTable, validate


class FormatError(ValueError):
    """Malformed input file; message carries the offending line number."""

    def __init__(self, filename: str, line: int, message: str):
        super().__init__(f"{filename}:{line}: {message}")
        self.filename = filename
        self.line = line


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_text_atomic(path: str | FsPath, text: str) -> None:
    path = FsPath(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _content_lines(text: str):
    """Yield (line_number, fields) for non-blank, non-comment lines."""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


# ---------------------------------------------------------------------------
# Lattices


def format_lattice(lat: Lattice) -> str:
    lines = ["LATTICE v1", f"frames {lat.num_frames}"]
    for s, f in sorted(lat.states, key=lambda sf: (sf[1], sf[0])):
        lines.append(f"state {s} {f}")
    lines.append(f"start {lat.start}")
    for s in sorted(lat.finals):
        lines.append(f"final {s}")
    comp = lat.compiled
    for a in comp.arcs_in_order(lat):
        lines.append(f"arc {a.src} {a.dst} {a.pdf_id} {a.word_id} {_fmt(a.graph_weight)}")
    return "\n".join(lines) + "\n"


def write_lattice(path: str | FsPath, lat: Lattice) -> None:
    write_text_atomic(path, format_lattice(lat))


def parse_lattice(text: str, filename: str = "<string>") -> Lattice:
    it = _content_lines(text)
    try:
        no, fields = next(it)
    except StopIteration:
        raise FormatError(filename, 1, "empty lattice file") from None
    if fields != ["LATTICE", "v1"]:
        raise FormatError(filename, no, f"expected 'LATTICE v1' header, got {' '.join(fields)!r}")
    try:
        no, fields = next(it)
    except StopIteration:
        raise FormatError(filename, no, "missing 'frames <T>' line") from None
    if len(fields) != 2 or fields[0] != "frames":
        raise FormatError(filename, no, "expected 'frames <T>'")
    num_frames = _parse_int(fields[1], filename, no)

    states: list[tuple[int, int]] = []
    start: int | None = None
    finals: list[int] = []
    arcs: list[Arc] = []
    state_line: dict[int, int] = {}
    arc_line: list[int] = []
    start_line = 0
    for no, fields in it:
        kind = fields[0]
        if kind == "state" and len(fields) == 3:
            sid = _parse_int(fields[1], filename, no)
            states.append((sid, _parse_int(fields[2], filename, no)))
            state_line.setdefault(sid, no)
        elif kind == "start" and len(fields) == 2:
            if start is not None:
                raise FormatError(filename, no, "duplicate 'start' line")
            start = _parse_int(fields[1], filename, no)
            start_line = no
        elif kind == "final" and len(fields) == 2:
            finals.append(_parse_int(fields[1], filename, no))
        elif kind == "arc" and len(fields) == 6:
            arcs.append(Arc(
                src=_parse_int(fields[1], filename, no),
                dst=_parse_int(fields[2], filename, no),
                pdf_id=_parse_int(fields[3], filename, no),
                word_id=_parse_int(fields[4], filename, no),
                graph_weight=_parse_float(fields[5], filename, no),
            ))
            arc_line.append(no)
        else:
            raise FormatError(filename, no, f"unrecognized record {' '.join(fields)!r}")
    if start is None:
        raise FormatError(filename, no, "missing 'start' line")

    lat = Lattice(num_frames=num_frames, states=tuple(states), start=start,
                  finals=frozenset(finals), arcs=tuple(arcs))
    violations = validate(lat)
    if violations:
        v = violations[0]
        line = start_line or 1
        if v.arc_index is not None:
            line = arc_line[v.arc_index]
        elif v.state is not None and v.state in state_line:
            line = state_line[v.state]
        raise FormatError(filename, line, f"invalid lattice ({len(violations)} violation(s)); first: {v}")
    return lat


def read_lattice(path: str | FsPath) -> Lattice:
    return parse_lattice(FsPath(path).read_text(encoding="utf-8"), filename=str(path))


# ---------------------------------------------------------------------------
# Paths


def format_path_file(path: Path) -> str:
    lines = ["PATH v1", f"frames {len(path.arcs)}"]
    for a in path.arcs:
        lines.append(f"arc {a.src} {a.dst} {a.pdf_id} {a.word_id} {_fmt(a.graph_weight)}")
    return "\n".join(lines) + "\n"


def write_path(fs_path: str | FsPath, path: Path) -> None:
    write_text_atomic(fs_path, format_path_file(path))


def parse_path_file(text: str, filename: str = "<string>") -> Path:
    it = _content_lines(text)
    try:
        no, fields = next(it)
    except StopIteration:
        raise FormatError(filename, 1, "empty path file") from None
    if fields != ["PATH", "v1"]:
        raise FormatError(filename, no, "expected 'PATH v1' header")
    no, fields = next(it, (no, []))
    if len(fields) != 2 or fields[0] != "frames":
        raise FormatError(filename, no, "expected 'frames <T>'")
    num_frames = _parse_int(fields[1], filename, no)
    arcs = []
    for no, fields in it:
        if fields[0] != "arc" or len(fields) != 6:
            raise FormatError(filename, no, f"unrecognized record {' '.join(fields)!r}")
        arcs.append(Arc(
            src=_parse_int(fields[1], filename, no),
            dst=_parse_int(fields[2], filename, no),
            pdf_id=_parse_int(fields[3], filename, no),
            word_id=_parse_int(fields[4], filename, no),
            graph_weight=_parse_float(fields[5], filename, no),
        ))
    if len(arcs) != num_frames:
        raise FormatError(filename, no, f"path declares {num_frames} frames but has {len(arcs)} arcs")
    try:
        return Path.from_arcs(arcs)
    except LatticeError as e:
        raise FormatError(filename, no, str(e)) from None


def read_path(path: str | FsPath) -> Path:
    return parse_path_file(FsPath(path).read_text(encoding="utf-8"), filename=str(path))


def format_debug_path(score: float, path: Path) -> str:
    """One-line form used by the lattice CLI: score, pdfs, then word ids."""
    pdfs = " ".join(str(p) for p in path.pdf_sequence)
    words = " ".join(str(w) for w in path.word_sequence)
    return f"path {_fmt(score)} {pdfs} | {words}".rstrip()


# ---------------------------------------------------------------------------
# Score tables


def format_scores(scores: ScoreTable) -> str:
    scores = np.asarray(scores, dtype=np.float64)
    lines = ["SCORES v1", f"dims {scores.shape[0]} {scores.shape[1]}"]
    for row in scores:
        lines.append(" ".join(_fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def write_scores(path: str | FsPath, scores: ScoreTable) -> None:
    write_text_atomic(path, format_scores(scores))


def parse_scores(text: str, filename: str = "<string>") -> ScoreTable:
    it = _content_lines(text)
    try:
        no, fields = next(it)
    except StopIteration:
        raise FormatError(filename, 1, "empty score file") from None
    if fields != ["SCORES", "v1"]:
        raise FormatError(filename, no, "expected 'SCORES v1' header")
    no, fields = next(it, (no, []))
    if len(fields) != 3 or fields[0] != "dims":
        raise FormatError(filename, no, "expected 'dims <T> <P>'")
    t, p = _parse_int(fields[1], filename, no), _parse_int(fields[2], filename, no)
    rows = []
    for no, fields in it:
        if len(fields) != p:
            raise FormatError(filename, no, f"expected {p} values, got {len(fields)}")
        rows.append([_parse_float(x, filename, no) for x in fields])
    if len(rows) != t:
        raise FormatError(filename, no, f"expected {t} rows, got {len(rows)}")
    return np.array(rows, dtype=np.float64)


def read_scores(path: str | FsPath) -> ScoreTable:
    return parse_scores(FsPath(path).read_text(encoding="utf-8"), filename=str(path))


# ---------------------------------------------------------------------------
# Datasets


@dataclass(eq=False)
class Utterance:
    utt_id: str
    features: np.ndarray  # (num_frames, feature_dim)
    ref_words: tuple[int, ...]
    true_alignment: Path


def format_dataset(utts: Iterable[Utterance]) -> str:
    lines = ["DATASET v1"]
    for u in utts:
        t, f = u.features.shape
        lines.append(f"utt {u.utt_id}")
        lines.append(f"dims {t} {f}")
        for row in u.features:
            lines.append("feat " + " ".join(_fmt(x) for x in row))
        lines.append("ref " + " ".join(str(w) for w in u.ref_words))
        for a in u.true_alignment.arcs:
            lines.append(f"alignarc {a.src} {a.dst} {a.pdf_id} {a.word_id} {_fmt(a.graph_weight)}")
    return "\n".join(lines) + "\n"


def write_dataset(path: str | FsPath, utts: Iterable[Utterance]) -> None:
    write_text_atomic(path, format_dataset(utts))


def parse_dataset(text: str, filename: str = "<string>") -> list[Utterance]:
    it = _content_lines(text)
    try:
        no, fields = next(it)
    except StopIteration:
        raise FormatError(filename, 1, "empty dataset file") from None
    if fields != ["DATASET", "v1"]:
        raise FormatError(filename, no, "expected 'DATASET v1' header")

    utts: list[Utterance] = []
    cur_id = None
    feats: list[list[float]] = []
    dims: tuple[int, int] | None = None
    ref: tuple[int, ...] | None = None
    align: list[Arc] = []

    def flush(line_no: int) -> None:
        nonlocal cur_id, feats, dims, ref, align
        if cur_id is None:
            return
        if dims is None or ref is None or not align:
            raise FormatError(filename, line_no, f"utterance {cur_id!r} is incomplete")
        arr = np.array(feats, dtype=np.float64)
        if arr.shape != dims:
            raise FormatError(filename, line_no, f"utterance {cur_id!r}: feature block is {arr.shape}, declared {dims}")
        utts.append(Utterance(utt_id=cur_id, features=arr, ref_words=ref,
                              true_alignment=Path.from_arcs(align)))
        cur_id, feats, dims, ref, align = None, [], None, None, []

    for no, fields in it:
        kind = fields[0]
        if kind == "utt" and len(fields) == 2:
            flush(no)
            cur_id = fields[1]
        elif kind == "dims" and len(fields) == 3:
            dims = (_parse_int(fields[1], filename, no), _parse_int(fields[2], filename, no))
        elif kind == "feat":
            feats.append([_parse_float(x, filename, no) for x in fields[1:]])
        elif kind == "ref":
            ref = tuple(_parse_int(x, filename, no) for x in fields[1:])
        elif kind == "alignarc" and len(fields) == 6:
            align.append(Arc(
                src=_parse_int(fields[1], filename, no),
                dst=_parse_int(fields[2], filename, no),
                pdf_id=_parse_int(fields[3], filename, no),
                word_id=_parse_int(fields[4], filename, no),
                graph_weight=_parse_float(fields[5], filename, no),
            ))
        else:
            raise FormatError(filename, no, f"unrecognized record {' '.join(fields)!r}")
    flush(no)
    return utts


def read_dataset(path: str | FsPath) -> list[Utterance]:
    return parse_dataset(FsPath(path).read_text(encoding="utf-8"), filename=str(path))


# ---------------------------------------------------------------------------
# Models and metrics


def write_model(path: str | FsPath, weights: np.ndarray, bias: np.ndarray) -> None:
    path = FsPath(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    os.close(fd)
    try:
        with open(tmp, "wb") as fh:
            np.savez(fh, weights=weights, bias=bias)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_model(path: str | FsPath) -> tuple[np.ndarray, np.ndarray]:
    with np.load(path) as data:
        return data["weights"], data["bias"]


def append_metrics_line(fh, record: dict) -> None:
    fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_metrics(path: str | FsPath) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def _parse_int(text: str, filename: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise FormatError(filename, line, f"expected an integer, got {text!r}") from None


def _parse_float(text: str, filename: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise FormatError(filename, line, f"expected a number, got {text!r}") from None
