"""Frame-synchronous Viterbi beam search over a static decoding graph.

Token passing: one live token per graph state, advanced one posterior
frame at a time.  Each frame expands emitting arcs (input label k
consumes posterior column k-1; blank is input 1, column 0), follows
non-emitting arcs to a cost fixpoint, then prunes by beam width and the
live-token cap.  Costs are negative natural logs plus graph weights, so
lower is better and the result is the min-cost path to a final state.

Decoding is deterministic: states are visited in sorted order, a token
is replaced only by a strictly cheaper one, and equal-cost ties keep the
path through the lower-numbered predecessor state.
"""

from __future__ import annotations

import heapq
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .compress import CUSTOM_BLANK, CompressedPosteriors
from .errors import DecodeError, FstError, ValidationError
from .posterior import PosteriorMatrix
from .scoring import score_corpus
from .wfst import EPSILON, ZERO, Fst


@dataclass(frozen=True)
class DecoderConfig:
    """Search knobs: cost width kept around the best token per frame,
    retention width for traceback alternatives, live-token cap, and the
    multiplier on acoustic costs."""

    beam: float = 16.0
    lattice_beam: float = 4.0
    max_active: int = 5000
    acoustic_scale: float = 1.0

    def __post_init__(self):
        if not (self.beam > 0 and self.lattice_beam > 0 and self.acoustic_scale > 0):
            raise ValidationError("beam, lattice_beam, and acoustic_scale must be positive")
        if self.max_active < 1:
            raise ValidationError("max_active must be >= 1")


@dataclass(frozen=True)
class DecodeResult:
    words: tuple[int, ...]
    tokens: tuple[tuple[int, int], ...]  # (source frame or -1, token id) per emission
    total_cost: float
    frames_processed: int
    wall_time_ms: float
    tokens_alive_histogram: tuple[int, ...]
    path_graph_costs: tuple[float, ...]  # graph-weight component per traceback step

    def same_search(self, other: "DecodeResult") -> bool:
        """Equality ignoring wall time (search output is deterministic)."""
        return (
            self.words == other.words
            and self.tokens == other.tokens
            and self.total_cost == other.total_cost
            and self.frames_processed == other.frames_processed
            and self.tokens_alive_histogram == other.tokens_alive_histogram
            and self.path_graph_costs == other.path_graph_costs
        )


class _Trace:
    __slots__ = ("prev", "ilabel", "olabel", "weight", "frame")

    def __init__(self, prev, ilabel, olabel, weight, frame):
        self.prev = prev
        self.ilabel = ilabel
        self.olabel = olabel
        self.weight = weight
        self.frame = frame


_MAX_ALTS = 8


def _arc_split_cache(graph: Fst) -> dict:
    """Per-graph lazy cache of each state's (non-emitting, emitting) arcs.
    Keyed off the arc count so a graph mutated after a decode rebuilds."""
    cached = getattr(graph, "_decode_split_cache", None)
    if cached is None or cached[0] != graph.num_arcs:
        cached = (graph.num_arcs, {})
        graph._decode_split_cache = cached
    return cached[1]


def _split_arcs(graph: Fst, cache: dict, state: int):
    entry = cache.get(state)
    if entry is None:
        eps, emit = [], []
        for a in graph.arcs(state):
            (eps if a.ilabel == EPSILON else emit).append(a)
        entry = (eps, emit)
        cache[state] = entry
    return entry


def _eps_fixpoint(graph: Fst, cache: dict, active: dict, lattice_beam: float) -> None:
    """Relax non-emitting arcs until no token improves.  A visit guard
    (pass cap) turns a negative-weight epsilon cycle into an error."""
    max_passes = graph.num_states + 8
    for _ in range(max_passes):
        changed = False
        for s in sorted(active):
            cost, trace, alts = active[s]
            for a in _split_arcs(graph, cache, s)[0]:
                nc = cost + a.weight
                entry = active.get(a.nextstate)
                if entry is None or nc < entry[0]:
                    new_alts = entry[2] if entry is not None else []
                    if entry is not None and len(new_alts) < _MAX_ALTS:
                        new_alts.append((entry[0], entry[1]))
                    active[a.nextstate] = (
                        nc, _Trace(trace, a.ilabel, a.olabel, a.weight, -1), new_alts
                    )
                    changed = True
                elif nc <= entry[0] + lattice_beam and len(entry[2]) < _MAX_ALTS:
                    entry[2].append(
                        (nc, _Trace(trace, a.ilabel, a.olabel, a.weight, -1))
                    )
        if not changed:
            return
    raise FstError("non-emitting arcs did not reach a fixpoint (negative cycle?)")


def decode(graph: Fst, frames, cfg: DecoderConfig) -> DecodeResult:
    """Best-path search of *frames* (a PosteriorMatrix or
    CompressedPosteriors) through *graph*.

    Raises :class:`DecodeError` naming the frame if every token is pruned
    away, or frame T if no final state is reachable at the end.  A zero
    probability under a required arc is an infinite cost, not an error.
    """
    t0 = time.perf_counter()
    values = frames.values
    n_frames, vocab = values.shape
    source_map = frames.source_map if isinstance(frames, CompressedPosteriors) else None
    max_ilabel = max((a.ilabel for _, a in graph.all_arcs()), default=0)
    if max_ilabel > vocab:
        raise ValidationError(
            f"graph consumes input label {max_ilabel} but posteriors have only "
            f"{vocab} columns (label k reads column k-1)"
        )
    if graph.start < 0:
        raise FstError("graph has no start state")

    with np.errstate(divide="ignore"):
        acoustic = np.where(values > 0.0, -np.log(values), math.inf)
    acoustic = cfg.acoustic_scale * acoustic

    cache = _arc_split_cache(graph)
    # state -> (cost, trace, alternatives within lattice_beam)
    active: dict[int, tuple] = {graph.start: (0.0, None, [])}
    _eps_fixpoint(graph, cache, active, cfg.lattice_beam)
    histogram: list[int] = []

    for t in range(n_frames):
        row = acoustic[t]
        nxt: dict[int, tuple] = {}
        for s in sorted(active):
            cost, trace, _ = active[s]
            for a in _split_arcs(graph, cache, s)[1]:
                ac = row[a.ilabel - 1]
                if ac == math.inf:
                    continue
                nc = cost + a.weight + ac
                entry = nxt.get(a.nextstate)
                if entry is None or nc < entry[0]:
                    new_alts = entry[2] if entry is not None else []
                    if entry is not None and len(new_alts) < _MAX_ALTS:
                        new_alts.append((entry[0], entry[1]))
                    nxt[a.nextstate] = (
                        nc, _Trace(trace, a.ilabel, a.olabel, a.weight, t), new_alts
                    )
                elif nc <= entry[0] + cfg.lattice_beam and len(entry[2]) < _MAX_ALTS:
                    entry[2].append(
                        (nc, _Trace(trace, a.ilabel, a.olabel, a.weight, t))
                    )
        if not nxt:
            raise DecodeError(t)
        _eps_fixpoint(graph, cache, nxt, cfg.lattice_beam)
        best = min(c for c, _, _ in nxt.values())
        cutoff = best + cfg.beam
        survivors = [(c, s) for s, (c, _, _) in nxt.items() if c <= cutoff]
        if len(survivors) > cfg.max_active:
            survivors = heapq.nsmallest(cfg.max_active, survivors)
        active = {s: nxt[s] for _, s in survivors}
        if not active:
            raise DecodeError(t)
        histogram.append(len(active))

    best_state = -1
    best_total = ZERO
    for s in sorted(active):
        wf = graph.final_weight(s)
        if wf == ZERO:
            continue
        total = active[s][0] + wf
        if total < best_total:
            best_total = total
            best_state = s
    if best_state < 0:
        raise DecodeError(n_frames, "no final state reachable at end of input")

    steps = []
    node = active[best_state][1]
    while node is not None:
        steps.append(node)
        node = node.prev
    steps.reverse()
    words = tuple(n.olabel for n in steps if n.olabel != EPSILON)
    tokens = []
    for n in steps:
        if n.ilabel == EPSILON:
            continue
        src = n.frame if source_map is None else source_map[n.frame]
        tokens.append((src if src != CUSTOM_BLANK else -1, n.ilabel))
    wall_ms = (time.perf_counter() - t0) * 1000.0
    return DecodeResult(
        words=words,
        tokens=tuple(tokens),
        total_cost=best_total,
        frames_processed=n_frames,
        wall_time_ms=wall_ms,
        tokens_alive_histogram=tuple(histogram),
        path_graph_costs=tuple(n.weight for n in steps),
    )


@dataclass
class BatchResult:
    """Per-utterance outcomes in input order; failures are collected, not
    fatal.  ``results`` holds None where decoding failed."""

    utt_ids: list[str]
    results: list[DecodeResult | None]
    failures: list[tuple[str, str]] = field(default_factory=list)
    wall_time_ms: float = 0.0

    def ok(self) -> list[tuple[str, DecodeResult]]:
        return [(u, r) for u, r in zip(self.utt_ids, self.results) if r is not None]


def decode_batch(graph: Fst, utts, cfg: DecoderConfig, jobs: int = 1) -> BatchResult:
    """Decode a corpus of (utt_id, frames) pairs sharing one graph.

    Utterances are independent; with jobs > 1 they run on a thread pool,
    results still ordered by input position.
    """
    utts = list(utts)
    t0 = time.perf_counter()

    def run(item):
        utt_id, frames = item
        try:
            return utt_id, decode(graph, frames, cfg), None
        except DecodeError as exc:
            return utt_id, None, str(exc)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, utts))
    else:
        outcomes = [run(item) for item in utts]
    wall_ms = (time.perf_counter() - t0) * 1000.0

    batch = BatchResult(utt_ids=[u for u, _, _ in outcomes],
                        results=[r for _, r, _ in outcomes],
                        wall_time_ms=wall_ms)
    batch.failures = [(u, err) for u, _, err in outcomes if err is not None]
    return batch


@dataclass(frozen=True)
class SweepPoint:
    beam: float
    lattice_beam: float
    max_active: int
    cer: float
    mean_wall_ms: float
    speedup_vs_first: float
    max_live_tokens: int
    failures: int


def sweep_params(graph: Fst, utts, refs: dict[str, str], grid,
                 unit: str = "word", jobs: int = 1) -> list[SweepPoint]:
    """Decode the corpus at every config in *grid* and report CER, timing,
    and the live-token peak per point.  *refs* maps utt id to reference
    text; the speedup column is relative to the first grid point."""
    grid = list(grid)
    if not grid:
        raise ValidationError("sweep grid is empty")
    utts = list(utts)
    points: list[SweepPoint] = []
    base_ms: float | None = None
    for cfg in grid:
        batch = decode_batch(graph, utts, cfg, jobs=jobs)
        hyps = {
            u: " ".join(_word_syms(graph, r.words))
            for u, r in batch.ok()
        }
        pairs_refs = {u: refs[u] for u in hyps}
        report = score_corpus(pairs_refs, hyps, unit=unit)
        mean_ms = batch.wall_time_ms / max(1, len(utts))
        if base_ms is None:
            base_ms = mean_ms
        max_live = max(
            (max(r.tokens_alive_histogram, default=0) for r in batch.results if r),
            default=0,
        )
        points.append(SweepPoint(
            beam=cfg.beam, lattice_beam=cfg.lattice_beam, max_active=cfg.max_active,
            cer=report.rate, mean_wall_ms=mean_ms,
            speedup_vs_first=base_ms / mean_ms if mean_ms > 0 else math.inf,
            max_live_tokens=max_live, failures=len(batch.failures),
        ))
    return points


def _word_syms(graph: Fst, word_ids) -> list[str]:
    if graph.osyms is not None:
        return [graph.osyms.find_symbol(w) for w in word_ids]
    return [str(w) for w in word_ids]
