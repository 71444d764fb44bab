"""Sequence datasets: JSONL loading, synthetic generators, binarization.

The on-disk format is one JSON object per line with a ``seq`` field
holding a list of equal-width 0/1 frames and an optional ``id``.  All
loaders validate eagerly and point at the offending line, because a
silent shape mismatch surfaces as a confusing matmul error much later.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .numerics import RngStream


@dataclass
class SequenceDataset:
    """Named collection of binary sequences with a train/test split."""

    name: str
    dim: int
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    provenance: str = ""

    @property
    def n_sequences(self) -> int:
        return len(self.train) + len(self.test)


def _parse_sequence(obj, where: str) -> np.ndarray:
    seq = obj.get("seq")
    if not isinstance(seq, list) or len(seq) == 0:
        raise DataFormatError(f"{where}: 'seq' must be a non-empty list of frames")
    width = None
    for frame in seq:
        if not isinstance(frame, list):
            raise DataFormatError(f"{where}: frames must be lists of 0/1")
        if width is None:
            width = len(frame)
            if width == 0:
                raise DataFormatError(f"{where}: frames must be non-empty")
        elif len(frame) != width:
            raise DataFormatError(
                f"{where}: frame width {len(frame)} does not match first "
                f"frame width {width}")
        for x in frame:
            if x not in (0, 1):
                raise DataFormatError(f"{where}: frame values must be 0 or 1")
    return np.asarray(seq, dtype=np.float64)


def load_jsonl(path, name: str | None = None) -> SequenceDataset:
    """Read a JSONL sequence file; every sequence lands in ``train``.

    Raises :class:`DataFormatError` with the file name and line number
    for unparsable lines, inconsistent widths, or an empty file.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc

    sequences = []
    dim = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{where}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise DataFormatError(f"{where}: expected an object with a 'seq' field")
        arr = _parse_sequence(obj, where)
        if dim is None:
            dim = arr.shape[1]
        elif arr.shape[1] != dim:
            raise DataFormatError(
                f"{where}: frame width {arr.shape[1]} does not match "
                f"dataset width {dim}")
        sequences.append(arr)

    if not sequences:
        raise DataFormatError(f"{path}: no sequences found")
    return SequenceDataset(name=name or path.stem, dim=dim, train=sequences,
                           provenance=f"loaded from {path}")


def write_jsonl(path, sequences, ids=None):
    """Write sequences in the loadable format; round-trips exactly."""
    path = Path(path)
    lines = []
    for i, seq in enumerate(sequences):
        arr = np.asarray(seq)
        obj = {}
        if ids is not None:
            obj["id"] = ids[i]
        obj["seq"] = [[int(round(x)) for x in frame] for frame in arr]
        lines.append(json.dumps(obj, separators=(",", ":")))
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def random_patterns(n_patterns: int, dim: int, rng: RngStream) -> list:
    """Distinct random binary patterns, drawn by rejection."""
    if n_patterns > 2 ** dim:
        raise ValueError(f"cannot draw {n_patterns} distinct patterns of {dim} bits")
    seen = set()
    patterns = []
    while len(patterns) < n_patterns:
        p = (rng.uniform(size=dim) < 0.5).astype(np.float64)
        key = tuple(int(x) for x in p)
        if key not in seen:
            seen.add(key)
            patterns.append(p)
    return patterns


def synth_cycle(n_patterns: int, dim: int, length: int, n_sequences: int,
                noise_flip_prob: float, rng: RngStream,
                patterns: list | None = None) -> SequenceDataset:
    """Sequences cycling through a fixed pattern list with bit-flip noise.

    Each sequence starts at a random phase of the cycle; each bit of each
    frame is flipped independently with the given probability.  An 80/20
    train/test split is made by sequence (at least one sequence stays in
    train).  Passing ``patterns`` pins the cycle for tests.
    """
    if n_patterns < 1 or length < 1 or n_sequences < 1:
        raise ValueError("counts must be >= 1")
    if not 0.0 <= noise_flip_prob < 0.5:
        raise ValueError("noise_flip_prob must lie in [0, 0.5)")
    if patterns is None:
        patterns = random_patterns(n_patterns, dim, rng)
    else:
        patterns = [np.asarray(p, dtype=np.float64) for p in patterns]
        if len(patterns) != n_patterns:
            raise ValueError("pattern list length does not match n_patterns")
        for p in patterns:
            if p.shape != (dim,):
                raise ValueError("patterns must match the requested dimension")

    sequences = []
    for _ in range(n_sequences):
        phase = rng.integers(n_patterns)
        frames = np.stack([patterns[(phase + t) % n_patterns]
                           for t in range(length)])
        if noise_flip_prob > 0.0:
            flips = rng.uniform(size=frames.shape) < noise_flip_prob
            frames = np.abs(frames - flips.astype(np.float64))
        sequences.append(frames)

    order = rng.permutation(n_sequences)
    n_train = max(1, int(round(0.8 * n_sequences)))
    train = [sequences[i] for i in order[:n_train]]
    test = [sequences[i] for i in order[n_train:]]
    return SequenceDataset(
        name=f"cycle{n_patterns}x{dim}", dim=dim, train=train, test=test,
        provenance=(f"synth_cycle(n_patterns={n_patterns}, dim={dim}, "
                    f"length={length}, n_sequences={n_sequences}, "
                    f"noise={noise_flip_prob})"))


def augment_parity(dataset: SequenceDataset) -> SequenceDataset:
    """Append one bit per frame holding the XOR of the frame's bits.

    The extra bit is a deterministic higher-order function of the frame,
    the kind of structure a single shallow layer has trouble modelling.
    """
    def with_parity(seqs):
        out = []
        for seq in seqs:
            parity = np.sum(seq, axis=1, keepdims=True) % 2
            out.append(np.hstack([seq, parity]))
        return out

    return SequenceDataset(
        name=dataset.name + "+parity", dim=dataset.dim + 1,
        train=with_parity(dataset.train), test=with_parity(dataset.test),
        provenance=dataset.provenance + " | parity bit appended")


def binarize_real_sequences(sequences, threshold="median") -> list:
    """Threshold real-valued sequences into 0/1 frames.

    ``threshold`` is a float applied everywhere or ``"median"`` for the
    per-dimension median over all frames of all sequences.  Values
    strictly greater than the threshold map to 1, so constant dimensions
    map to 0 under the median policy.
    """
    arrays = [np.asarray(s, dtype=np.float64) for s in sequences]
    if not arrays:
        raise ValueError("no sequences to binarize")
    if isinstance(threshold, str):
        if threshold != "median":
            raise ValueError(f"unknown threshold policy: {threshold!r}")
        stacked = np.vstack(arrays)
        thr = np.median(stacked, axis=0)
    else:
        thr = float(threshold)
    return [(a > thr).astype(np.float64) for a in arrays]
