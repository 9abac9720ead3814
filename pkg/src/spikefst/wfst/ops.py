"""Algorithms over tropical-weight transducers.

Everything here is value-oriented: inputs are never mutated and results
are freshly built machines.  Weight bookkeeping follows (min, +): any
transformation that claims equivalence preserves, for every accepted
(input, output) string pair, the minimum accepting-path weight.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

from ..errors import FstError
from .fst import EPSILON, ONE, ZERO, Arc, Fst, arcsort, trim, wplus, wtimes

# Residual-weight granularity used only when hashing subset/partition
# keys; stored weights stay exact.
_QUANT = 10


def _relax_epsilon(f: Fst, seed: dict[int, float]) -> dict[int, float]:
    """Shortest distances from *seed* states through eps:eps arcs only."""
    dist = dict(seed)
    queue = deque(sorted(seed))
    guard = 0
    limit = 4 * (f.num_states + 1) * max(1, f.num_arcs)
    while queue:
        s = queue.popleft()
        base = dist[s]
        for a in f.arcs(s):
            if a.ilabel == EPSILON and a.olabel == EPSILON:
                nd = wtimes(base, a.weight)
                if nd < dist.get(a.nextstate, ZERO) - 1e-15:
                    dist[a.nextstate] = nd
                    queue.append(a.nextstate)
                    guard += 1
                    if guard > limit:
                        raise FstError("epsilon-closure did not converge (negative cycle?)")
    return dist


def rm_epsilon(f: Fst) -> Fst:
    """Remove eps:eps arcs, folding their weights into the arcs and final
    weights reachable through them; string weights are preserved."""
    if f.start < 0:
        raise FstError("machine has no start state")
    out = Fst(f.isyms, f.osyms)
    out.add_states(f.num_states)
    out.set_start(f.start)
    for s in range(f.num_states):
        closure = _relax_epsilon(f, {s: ONE})
        best_arc: dict[tuple[int, int, int], float] = {}
        final = ZERO
        for q, w in closure.items():
            for a in f.arcs(q):
                if a.ilabel == EPSILON and a.olabel == EPSILON:
                    continue
                key = (a.ilabel, a.olabel, a.nextstate)
                cand = wtimes(w, a.weight)
                if cand < best_arc.get(key, ZERO):
                    best_arc[key] = cand
            final = wplus(final, wtimes(w, f.final_weight(q)))
        for (il, ol, dst), w in sorted(best_arc.items()):
            out.add_arc(s, il, ol, w, dst)
        if final != ZERO:
            out.set_final(s, final)
    return trim(out)


# ----------------------------------------------------------------------
# Composition
# ----------------------------------------------------------------------

def compose(a: Fst, b: Fst) -> Fst:
    """Relation composition a . b with the standard three-state epsilon
    filter, so interleavings of a-side and b-side epsilon moves are not
    duplicated.

    Filter states: 0 = last move matched (or start), 1 = a moved alone,
    2 = b moved alone.  A real match is allowed anywhere and resets to 0;
    a-alone is barred in 2, b-alone is barred in 1, and a simultaneous
    epsilon pairing is allowed only in 0.
    """
    if a.start < 0 or b.start < 0:
        raise FstError("compose requires start states on both machines")
    if a.osyms is not None and b.isyms is not None and a.osyms != b.isyms:
        raise FstError("compose: output symbols of a do not match input symbols of b")
    if not b.ilabel_sorted:
        b = arcsort(b, "ilabel")

    b_by_label: list[dict[int, list[Arc]] | None] = [None] * b.num_states

    def b_arcs(state: int) -> dict[int, list[Arc]]:
        grouped = b_by_label[state]
        if grouped is None:
            grouped = {}
            for arc in b.arcs(state):
                grouped.setdefault(arc.ilabel, []).append(arc)
            b_by_label[state] = grouped
        return grouped

    out = Fst(a.isyms, b.osyms)
    key0 = (a.start, b.start, 0)
    ids: dict[tuple[int, int, int], int] = {key0: out.add_state()}
    out.set_start(0)
    queue = deque([key0])

    def state_of(key: tuple[int, int, int]) -> int:
        sid = ids.get(key)
        if sid is None:
            sid = out.add_state()
            ids[key] = sid
            queue.append(key)
        return sid

    while queue:
        key = queue.popleft()
        sa, sb, filt = key
        src = ids[key]
        grouped = b_arcs(sb)
        for arc_a in a.arcs(sa):
            if arc_a.olabel != EPSILON:
                for arc_b in grouped.get(arc_a.olabel, ()):
                    out.add_arc(
                        src, arc_a.ilabel, arc_b.olabel,
                        wtimes(arc_a.weight, arc_b.weight),
                        state_of((arc_a.nextstate, arc_b.nextstate, 0)),
                    )
            else:
                if filt != 2:  # a moves alone
                    out.add_arc(
                        src, arc_a.ilabel, EPSILON, arc_a.weight,
                        state_of((arc_a.nextstate, sb, 1)),
                    )
                if filt == 0:  # simultaneous epsilon pairing
                    for arc_b in grouped.get(EPSILON, ()):
                        out.add_arc(
                            src, arc_a.ilabel, arc_b.olabel,
                            wtimes(arc_a.weight, arc_b.weight),
                            state_of((arc_a.nextstate, arc_b.nextstate, 0)),
                        )
        if filt != 1:  # b moves alone
            for arc_b in grouped.get(EPSILON, ()):
                out.add_arc(
                    src, EPSILON, arc_b.olabel, arc_b.weight,
                    state_of((sa, arc_b.nextstate, 2)),
                )
        wf = wtimes(a.final_weight(sa), b.final_weight(sb))
        if wf != ZERO:
            out.set_final(src, wf)
    return trim(out)


# ----------------------------------------------------------------------
# Determinization
# ----------------------------------------------------------------------

class _Elem(NamedTuple):
    state: int
    weight: float
    out: tuple[int, ...]  # delayed output symbols


def _close_elems(f: Fst, elems: list[_Elem], limit: int) -> list[_Elem]:
    """Input-epsilon closure of weighted subset elements, accumulating any
    epsilon-arc outputs into the delayed-output strings."""
    best: dict[tuple[int, tuple[int, ...]], float] = {}
    queue: deque[_Elem] = deque()
    for e in elems:
        key = (e.state, e.out)
        if e.weight < best.get(key, ZERO):
            best[key] = e.weight
            queue.append(e)
    steps = 0
    while queue:
        e = queue.popleft()
        if best.get((e.state, e.out), ZERO) < e.weight:
            continue
        for a in f.arcs(e.state):
            if a.ilabel != EPSILON:
                continue
            z = e.out + ((a.olabel,) if a.olabel != EPSILON else ())
            w = wtimes(e.weight, a.weight)
            key = (a.nextstate, z)
            if w < best.get(key, ZERO) - 1e-15:
                best[key] = w
                queue.append(_Elem(a.nextstate, w, z))
                steps += 1
                if steps > limit:
                    raise FstError(
                        "determinize: epsilon closure diverged (cyclic epsilon output?)"
                    )
    return [_Elem(s, w, z) for (s, z), w in best.items()]


def _subset_key(elems: list[_Elem]) -> tuple:
    return tuple(sorted((e.state, e.out, round(e.weight, _QUANT)) for e in elems))


def determinize(f: Fst, state_budget_factor: int = 10) -> Fst:
    """Weighted subset construction producing an input-deterministic
    machine with the same weighted transduction.

    Subset elements carry a residual weight and a delayed output string,
    so outputs that differ across merged paths (homophones) are emitted
    only once the input disambiguates them.  A hard state budget
    (``state_budget_factor`` x input states) turns divergence into a
    diagnostic instead of a hang.
    """
    if f.start < 0:
        raise FstError("machine has no start state")
    budget = max(64, state_budget_factor * max(1, f.num_states))
    close_limit = 64 * (f.num_states + 2) * (f.num_arcs + 2)

    out = Fst(f.isyms, f.osyms)
    start_elems = _close_elems(f, [_Elem(f.start, ONE, ())], close_limit)
    ids: dict[tuple, int] = {_subset_key(start_elems): out.add_state()}
    out.set_start(0)
    queue: deque[tuple[int, list[_Elem]]] = deque([(0, start_elems)])

    while queue:
        src, elems = queue.popleft()
        _set_subset_final(f, out, src, elems)
        by_label: dict[int, list[_Elem]] = {}
        for e in elems:
            for a in f.arcs(e.state):
                if a.ilabel == EPSILON:
                    continue
                z = e.out + ((a.olabel,) if a.olabel != EPSILON else ())
                by_label.setdefault(a.ilabel, []).append(
                    _Elem(a.nextstate, wtimes(e.weight, a.weight), z)
                )
        for label in sorted(by_label):
            cands = _close_elems(f, by_label[label], close_limit)
            w_min = min(e.weight for e in cands)
            lcp = _common_prefix([e.out for e in cands])
            emit = lcp[0] if lcp else EPSILON
            strip = 1 if lcp else 0
            nxt = [
                _Elem(e.state, e.weight - w_min, e.out[strip:]) for e in cands
            ]
            key = _subset_key(nxt)
            dst = ids.get(key)
            if dst is None:
                dst = out.add_state()
                if out.num_states > budget:
                    raise FstError(
                        f"determinize: state budget {budget} exceeded; "
                        "machine is likely not determinizable"
                    )
                ids[key] = dst
                queue.append((dst, nxt))
            out.add_arc(src, label, emit, w_min, dst)
    return out


def _common_prefix(strings: list[tuple[int, ...]]) -> tuple[int, ...]:
    if not strings:
        return ()
    first = min(strings, key=len)
    for i, sym in enumerate(first):
        if any(s[i] != sym for s in strings):
            return first[:i]
    return first


def _set_subset_final(f: Fst, out: Fst, state: int, elems: list[_Elem]) -> None:
    """Final weight for a subset; delayed outputs still pending at a final
    element are flushed through a chain of input-epsilon emission arcs."""
    plain = ZERO
    pending: dict[tuple[int, ...], float] = {}
    for e in elems:
        wf = wtimes(e.weight, f.final_weight(e.state))
        if wf == ZERO:
            continue
        if e.out:
            pending[e.out] = wplus(pending.get(e.out, ZERO), wf)
        else:
            plain = wplus(plain, wf)
    if plain != ZERO:
        out.set_final(state, plain)
    for z in sorted(pending):
        src = state
        for i, sym in enumerate(z):
            nxt = out.add_state()
            out.add_arc(src, EPSILON, sym, pending[z] if i == 0 else ONE, nxt)
            src = nxt
        out.set_final(src, ONE)


# ----------------------------------------------------------------------
# Minimization
# ----------------------------------------------------------------------

def minimize(f: Fst) -> Fst:
    """Merge states with identical weighted behavior (Moore partition
    refinement over label-and-weight-encoded signatures).

    Requires an input-deterministic machine.  Weights are not rearranged,
    so two states merge only when their outgoing pictures match exactly;
    run push_weights first to reach the canonical minimum.
    """
    if f.start < 0:
        raise FstError("machine has no start state")
    g = trim(f)
    for s in range(g.num_states):
        seen = set()
        for a in g.arcs(s):
            if a.ilabel in seen:
                raise FstError(
                    f"minimize: state {s} has duplicate input label {a.ilabel}; "
                    "input must be deterministic"
                )
            seen.add(a.ilabel)

    def intern_all(keys: list) -> list[int]:
        ids: dict = {}
        return [ids.setdefault(k, len(ids)) for k in keys]

    block = intern_all([
        (True, round(g.final_weight(s), _QUANT)) if g.is_final(s) else (False, 0.0)
        for s in range(g.num_states)
    ])
    while True:
        sigs = []
        for s in range(g.num_states):
            sig = (
                block[s],
                tuple(sorted(
                    (a.ilabel, a.olabel, round(a.weight, _QUANT), block[a.nextstate])
                    for a in g.arcs(s)
                )),
            )
            sigs.append(sig)
        new_block = intern_all(sigs)
        if new_block == block:
            break
        block = new_block

    # Rebuild one state per class, numbered in BFS order from the start.
    class_rep: dict[int, int] = {}
    order: list[int] = []
    queue = deque([g.start])
    seen_cls = {block[g.start]}
    while queue:
        s = queue.popleft()
        cls = block[s]
        if cls not in class_rep:
            class_rep[cls] = len(order)
            order.append(s)
        for a in g.arcs(s):
            if block[a.nextstate] not in seen_cls:
                seen_cls.add(block[a.nextstate])
                queue.append(a.nextstate)

    out = Fst(g.isyms, g.osyms)
    out.add_states(len(order))
    out.set_start(0)
    for new_id, rep in enumerate(order):
        emitted = set()
        for a in g.arcs(rep):
            key = (a.ilabel, a.olabel, a.weight, block[a.nextstate])
            if key in emitted:
                continue
            emitted.add(key)
            out.add_arc(new_id, a.ilabel, a.olabel, a.weight, class_rep[block[a.nextstate]])
        if g.is_final(rep):
            out.set_final(new_id, g.final_weight(rep))
    return out


# ----------------------------------------------------------------------
# Weight pushing
# ----------------------------------------------------------------------

def shortest_distance(f: Fst, reverse: bool = False) -> list[float]:
    """Per-state shortest distance from the start (forward) or to a final
    state including its final weight (reverse).  Label-correcting, so
    negative arc weights are fine as long as there is no negative cycle."""
    n = f.num_states
    dist = [ZERO] * n
    queue: deque[int] = deque()
    if reverse:
        incoming: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for s, a in f.all_arcs():
            incoming[a.nextstate].append((s, a.weight))
        for s, w in sorted(f.finals.items()):
            dist[s] = w
            queue.append(s)
        edges = incoming
    else:
        if f.start < 0:
            raise FstError("machine has no start state")
        dist[f.start] = ONE
        queue.append(f.start)
        edges = [[(a.nextstate, a.weight) for a in f.arcs(s)] for s in range(n)]
    guard = 0
    limit = 8 * (n + 1) * max(1, f.num_arcs)
    while queue:
        s = queue.popleft()
        for t, w in edges[s]:
            nd = wtimes(dist[s], w)
            if nd < dist[t] - 1e-15:
                dist[t] = nd
                queue.append(t)
                guard += 1
                if guard > limit:
                    raise FstError("shortest_distance did not converge (negative cycle?)")
    return dist


def push_weights(f: Fst) -> Fst:
    """Reweight so cost sits as early along each path as possible.

    Every arc weight becomes w + d(next) - d(src), where d is the
    shortest distance to a final state; the displaced total d(start) is
    re-applied at the start state, so each complete path keeps its exact
    original weight.  Requires every state to be co-accessible.
    """
    if f.start < 0:
        raise FstError("machine has no start state")
    dist = shortest_distance(f, reverse=True)
    dead = [s for s in range(f.num_states) if dist[s] == ZERO]
    if dead:
        raise FstError(
            f"push_weights: state {dead[0]} cannot reach a final state; trim first"
        )
    out = Fst(f.isyms, f.osyms)
    out.add_states(f.num_states)
    out.set_start(f.start)
    head = dist[f.start]
    for s in range(f.num_states):
        lead = head if s == f.start else ONE
        for a in f.arcs(s):
            w = wtimes(lead, a.weight + dist[a.nextstate] - dist[s])
            out.add_arc(s, a.ilabel, a.olabel, w, a.nextstate)
        if f.is_final(s):
            out.set_final(s, wtimes(lead, f.final_weight(s) - dist[s]))
    return out


# ----------------------------------------------------------------------
# Best path
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BestPath:
    ilabels: tuple[int, ...]
    olabels: tuple[int, ...]
    weight: float
    states: tuple[int, ...]


def shortest_path(f: Fst) -> BestPath:
    """Minimum-total-weight accepting path; epsilons are dropped from the
    returned label sequences.  Raises when nothing accepts."""
    if f.start < 0:
        raise FstError("machine has no start state")
    n = f.num_states
    dist = [ZERO] * n
    back: list[tuple[int, Arc] | None] = [None] * n
    dist[f.start] = ONE
    queue = deque([f.start])
    guard = 0
    limit = 8 * (n + 1) * max(1, f.num_arcs)
    while queue:
        s = queue.popleft()
        for a in f.arcs(s):
            nd = wtimes(dist[s], a.weight)
            if nd < dist[a.nextstate] - 1e-15:
                dist[a.nextstate] = nd
                back[a.nextstate] = (s, a)
                queue.append(a.nextstate)
                guard += 1
                if guard > limit:
                    raise FstError("shortest_path did not converge (negative cycle?)")
    best_state = -1
    best = ZERO
    for s in sorted(f.finals):
        total = wtimes(dist[s], f.final_weight(s))
        if total < best:
            best = total
            best_state = s
    if best_state < 0:
        raise FstError("shortest_path: no accepting path")
    rev: list[tuple[int, Arc]] = []
    s = best_state
    steps = 0
    while s != f.start:
        entry = back[s]
        if entry is None or steps > n:
            raise FstError("shortest_path: broken backpointer chain")
        rev.append(entry)
        s = entry[0]
        steps += 1
    rev.reverse()
    ilabels = tuple(a.ilabel for _, a in rev if a.ilabel != EPSILON)
    olabels = tuple(a.olabel for _, a in rev if a.olabel != EPSILON)
    states = (f.start,) + tuple(a.nextstate for _, a in rev)
    return BestPath(ilabels, olabels, best, states)
