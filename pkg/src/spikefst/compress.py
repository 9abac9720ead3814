"""Posterior-sequence compression for fast WFST decoding.

The decoder's cost is linear in the number of frames it consumes.  CTC
posteriors are dominated by blank frames that carry position, not
content, so the transforms here shrink the frame sequence before it
reaches the search:

* ``ioo``: replace every maximal blank run with a single deterministic
  one-hot blank row.
* ``ioo_koo``: additionally keep one representative frame per non-blank
  run (max- or min-probability).
* ``ioo_nb``: rewrite non-blank frames to one-hot rows, optionally gated
  by a peak-probability threshold.
* ``aed_ioo``: interleave a one-hot blank row around every row of a
  per-emission matrix that has no native blanks.
* ``discard`` / ``average`` / ``lsd`` / ``swd``: reference heuristics
  from prior systems, kept for benchmarking.

All transforms are pure and deterministic; every output row records its
source frame so time alignments survive compression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .posterior import BLANK_ID, PosteriorMatrix, argmax_labels

# source_map marker for inserted one-hot blank rows
CUSTOM_BLANK = -1

MODES = ("dense", "ioo", "ioo_koo", "ioo_nb", "discard", "average", "lsd", "swd", "aed_ioo")
_CTC_MODES = ("ioo", "ioo_koo", "ioo_nb")


@dataclass(frozen=True)
class FrameBlock:
    """Maximal run of consecutive frames sharing one argmax token."""

    token: int
    start: int
    end: int  # inclusive
    frames: np.ndarray  # rows of the source matrix for [start, end]

    def __len__(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class CompressedPosteriors:
    """Compressed frame sequence plus per-row provenance.

    ``source_map[i]`` is the input frame the i-th output row came from,
    or ``CUSTOM_BLANK`` for inserted blank rows.  ``nonblank_count`` is
    the number of non-inserted (content) rows in the output.
    """

    values: np.ndarray
    source_map: tuple[int, ...]
    nonblank_count: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValidationError(f"compressed matrix must be 2-D, got {v.shape}")
        if len(self.source_map) != v.shape[0]:
            raise ValidationError("source_map length must match row count")
        if v.shape[0] > 0:
            sums = v.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > 1e-4):
                raise ValidationError("compressed rows must remain stochastic")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "source_map", tuple(int(s) for s in self.source_map))

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CompressConfig:
    mode: str = "dense"
    koo_strategy: str = "max"
    blanks_per_region: int = 1
    nb_onehot: str = "off"  # off | all | max
    nb_threshold: float | None = None
    lsd_threshold: float = 0.99
    swd_window: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown compression mode {self.mode!r}")
        if self.koo_strategy not in ("max", "min"):
            raise ValidationError(f"koo_strategy must be 'max' or 'min', got {self.koo_strategy!r}")
        if self.blanks_per_region not in (1, 2):
            raise ValidationError("blanks_per_region must be 1 or 2")
        if self.nb_onehot not in ("off", "all", "max"):
            raise ValidationError(f"nb_onehot must be off|all|max, got {self.nb_onehot!r}")
        if self.nb_threshold is not None and not (0.0 <= self.nb_threshold <= 1.0):
            raise ValidationError("nb_threshold must lie in [0, 1]")
        if not (0.0 <= self.lsd_threshold <= 1.0):
            raise ValidationError("lsd_threshold must lie in [0, 1]")
        if self.swd_window < 0:
            raise ValidationError("swd_window must be >= 0")

    def label(self) -> str:
        """Short human-readable mode tag for reports."""
        if self.mode == "ioo_koo":
            return f"ioo_koo/{self.koo_strategy}"
        if self.mode == "ioo_nb":
            tag = f"ioo_nb/{self.nb_onehot}"
            return tag if self.nb_threshold is None else f"{tag}@{self.nb_threshold:g}"
        if self.mode == "lsd":
            return f"lsd@{self.lsd_threshold:g}"
        if self.mode == "swd":
            return f"swd/{self.swd_window}"
        return self.mode


def custom_blank(vocab_size: int) -> np.ndarray:
    """The deterministic inserted blank: probability 1 on the blank token."""
    if vocab_size < 2:
        raise ValidationError("vocab_size must be >= 2")
    row = np.zeros(vocab_size, dtype=np.float64)
    row[BLANK_ID] = 1.0
    return row


def segment_blocks(p: PosteriorMatrix) -> list[FrameBlock]:
    """Split the frame axis into maximal same-argmax runs, blanks included.

    Runs are built on the full sequence: dropping blank frames first could
    fuse two non-adjacent runs of the same token into one.
    """
    if p.frames == 0:
        return []
    labels = argmax_labels(p)
    bounds = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], bounds))
    ends = np.concatenate((bounds, [p.frames]))
    return [
        FrameBlock(int(labels[s]), int(s), int(e) - 1, p.values[s:e])
        for s, e in zip(starts, ends)
    ]


def koo_select(block: FrameBlock, strategy: str = "max") -> int:
    """Representative frame of a non-blank block: its max- (or min-)
    probability frame for the block's own token; ties go to the earliest."""
    if block.token == BLANK_ID:
        raise ValidationError("cannot select a representative from a blank block")
    probs = block.frames[:, block.token]
    if strategy == "max":
        off = int(np.argmax(probs))
    elif strategy == "min":
        off = int(np.argmin(probs))
    else:
        raise ValidationError(f"unknown strategy {strategy!r}")
    return block.start + off


def _onehot(vocab_size: int, token: int) -> np.ndarray:
    row = np.zeros(vocab_size, dtype=np.float64)
    row[token] = 1.0
    return row


def compress_ctc(p: PosteriorMatrix, cfg: CompressConfig) -> CompressedPosteriors:
    """Blank-run compression of a CTC posterior matrix.

    The output always opens with ``blanks_per_region`` custom blank rows;
    a leading blank run in the input is absorbed by them.  Every later
    maximal blank run becomes ``blanks_per_region`` custom blank rows.
    Non-blank runs emit, per ``cfg.mode``:

    * ``ioo``: every frame verbatim;
    * ``ioo_koo``: only the ``koo_select`` representative;
    * ``ioo_nb``: with ``nb_onehot='all'`` every frame, rewritten to a
      one-hot of its argmax when its peak probability passes
      ``nb_threshold`` (always, when the threshold is unset); with
      ``'max'``, only the max-probability representative, same rewrite rule.

    With ``blanks_per_region=1`` the output length M obeys M <= 2K+1,
    where K is the number of content rows emitted.
    """
    if cfg.mode not in _CTC_MODES:
        raise ValidationError(f"compress_ctc expects mode in {_CTC_MODES}, got {cfg.mode!r}")
    if cfg.mode == "ioo_nb" and cfg.nb_onehot == "off":
        raise ValidationError("mode ioo_nb requires nb_onehot 'all' or 'max'")
    V = p.vocab_size
    cb = custom_blank(V)
    rows: list[np.ndarray] = [cb] * cfg.blanks_per_region
    srcs: list[int] = [CUSTOM_BLANK] * cfg.blanks_per_region
    nonblank = 0

    for idx, block in enumerate(segment_blocks(p)):
        if block.token == BLANK_ID:
            if idx == 0:
                continue  # absorbed by the opening custom blanks
            rows.extend([cb] * cfg.blanks_per_region)
            srcs.extend([CUSTOM_BLANK] * cfg.blanks_per_region)
        elif cfg.mode == "ioo":
            for off in range(len(block)):
                rows.append(block.frames[off])
                srcs.append(block.start + off)
                nonblank += 1
        elif cfg.mode == "ioo_koo":
            f = koo_select(block, cfg.koo_strategy)
            rows.append(p.values[f])
            srcs.append(f)
            nonblank += 1
        else:  # ioo_nb
            if cfg.nb_onehot == "max":
                picks = [koo_select(block, "max")]
            else:
                picks = list(range(block.start, block.end + 1))
            for f in picks:
                peak = p.values[f, block.token]
                if cfg.nb_threshold is None or peak >= cfg.nb_threshold:
                    rows.append(_onehot(V, block.token))
                else:
                    rows.append(p.values[f])
                srcs.append(f)
                nonblank += 1

    return CompressedPosteriors(np.vstack(rows), tuple(srcs), nonblank)


def compress_aed(p: PosteriorMatrix) -> CompressedPosteriors:
    """Interleave custom blanks around every row of a per-emission matrix.

    Output is [blank, row 0, blank, row 1, ..., row T-1, blank]: exactly
    2T+1 rows.  Gives attention-decoder outputs, which have no native
    blank, the temporal separation the graph search relies on.
    """
    V = p.vocab_size
    cb = custom_blank(V)
    rows: list[np.ndarray] = [cb]
    srcs: list[int] = [CUSTOM_BLANK]
    for t in range(p.frames):
        rows.append(p.values[t])
        srcs.append(t)
        rows.append(cb)
        srcs.append(CUSTOM_BLANK)
    return CompressedPosteriors(np.vstack(rows), tuple(srcs), p.frames)


def baseline_discard(p: PosteriorMatrix) -> CompressedPosteriors:
    """Keep only frames whose argmax is non-blank."""
    keep = np.flatnonzero(argmax_labels(p) != BLANK_ID) if p.frames else np.empty(0, np.int64)
    values = p.values[keep] if keep.size else np.empty((0, p.vocab_size))
    return CompressedPosteriors(values, tuple(int(t) for t in keep), int(keep.size))


def baseline_average(p: PosteriorMatrix) -> CompressedPosteriors:
    """Replace each maximal blank run with the elementwise mean of its rows."""
    rows: list[np.ndarray] = []
    srcs: list[int] = []
    nonblank = 0
    for block in segment_blocks(p):
        if block.token == BLANK_ID:
            rows.append(block.frames.mean(axis=0))
            srcs.append(block.start)  # run is represented by its first frame
        else:
            for off in range(len(block)):
                rows.append(block.frames[off])
                srcs.append(block.start + off)
                nonblank += 1
    values = np.vstack(rows) if rows else np.empty((0, p.vocab_size))
    return CompressedPosteriors(values, tuple(srcs), nonblank)


def baseline_lsd(p: PosteriorMatrix, threshold: float) -> CompressedPosteriors:
    """Drop every frame whose blank posterior reaches *threshold*."""
    if not (0.0 <= threshold <= 1.0):
        raise ValidationError("lsd threshold must lie in [0, 1]")
    blank_probs = p.values[:, BLANK_ID] if p.frames else np.empty(0)
    keep = np.flatnonzero(blank_probs < threshold)
    values = p.values[keep] if keep.size else np.empty((0, p.vocab_size))
    labels = argmax_labels(p)
    nonblank = int(np.count_nonzero(labels[keep] != BLANK_ID)) if keep.size else 0
    return CompressedPosteriors(values, tuple(int(t) for t in keep), nonblank)


def baseline_swd(p: PosteriorMatrix, window: int) -> CompressedPosteriors:
    """Keep frames within *window* of any non-blank-argmax frame.

    The union of [t-window, t+window] intervals, clipped to the frame
    range and deduplicated; original temporal order is preserved.
    """
    if window < 0:
        raise ValidationError("swd window must be >= 0")
    labels = argmax_labels(p) if p.frames else np.empty(0, np.int64)
    spikes = np.flatnonzero(labels != BLANK_ID)
    keep_mask = np.zeros(p.frames, dtype=bool)
    for t in spikes:
        keep_mask[max(0, t - window):min(p.frames, t + window + 1)] = True
    keep = np.flatnonzero(keep_mask)
    values = p.values[keep] if keep.size else np.empty((0, p.vocab_size))
    nonblank = int(np.count_nonzero(labels[keep] != BLANK_ID)) if keep.size else 0
    return CompressedPosteriors(values, tuple(int(t) for t in keep), nonblank)


def compress(p: PosteriorMatrix, cfg: CompressConfig) -> CompressedPosteriors:
    """Apply the transform selected by ``cfg.mode``."""
    if cfg.mode == "dense":
        labels = argmax_labels(p) if p.frames else np.empty(0, np.int64)
        return CompressedPosteriors(
            p.values, tuple(range(p.frames)), int(np.count_nonzero(labels != BLANK_ID))
        )
    if cfg.mode in _CTC_MODES:
        return compress_ctc(p, cfg)
    if cfg.mode == "aed_ioo":
        return compress_aed(p)
    if cfg.mode == "discard":
        return baseline_discard(p)
    if cfg.mode == "average":
        return baseline_average(p)
    if cfg.mode == "lsd":
        return baseline_lsd(p, cfg.lsd_threshold)
    if cfg.mode == "swd":
        return baseline_swd(p, cfg.swd_window)
    raise ValidationError(f"unknown compression mode {cfg.mode!r}")


def save_source_map(c: CompressedPosteriors, path) -> None:
    """Sidecar text file: one line per output row, frame index or 'B'."""
    from pathlib import Path

    lines = ["B" if s == CUSTOM_BLANK else str(s) for s in c.source_map]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_source_map(path) -> tuple[int, ...]:
    from pathlib import Path

    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            out.append(CUSTOM_BLANK if line == "B" else int(line))
    return tuple(out)


def save_compressed(c: CompressedPosteriors, path) -> None:
    """Write the frame matrix in the standard binary posterior format plus
    a '<path>.map' provenance sidecar."""
    from pathlib import Path

    from .posterior import PosteriorMatrix, save_posteriors

    path = Path(path)
    save_posteriors(PosteriorMatrix(c.values), path, "binary")
    save_source_map(c, Path(str(path) + ".map"))


def load_compressed(path):
    """Load a compressed corpus file; without its sidecar the provenance is
    gone and a plain :class:`PosteriorMatrix` is returned instead.

    The content-row count is rebuilt as "kept row with a non-blank
    argmax", which reproduces the original for every CTC-side mode.
    """
    from pathlib import Path

    from .posterior import load_posteriors

    path = Path(path)
    mat = load_posteriors(path, "binary")
    sidecar = Path(str(path) + ".map")
    if not sidecar.exists():
        return mat
    smap = load_source_map(sidecar)
    labels = argmax_labels(mat)
    nonblank = sum(
        1 for s, tok in zip(smap, labels) if s != CUSTOM_BLANK and tok != BLANK_ID
    )
    return CompressedPosteriors(mat.values, smap, nonblank)
