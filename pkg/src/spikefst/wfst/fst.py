"""Weighted finite-state transducers over the tropical semiring.

Weights are plain floats with (min, +) algebra: ZERO is +inf (no path),
ONE is 0.0 (free move), path weight is the sum of arc weights plus the
final weight, and the best path is the minimum.  Label 0 is epsilon on
both tapes.  Machines are append-only while being built and treated as
immutable afterwards; every algorithm in :mod:`spikefst.wfst.ops`
returns a new machine.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, NamedTuple

from ..errors import DataFormatError, FstError

EPSILON = 0
EPSILON_SYM = "<eps>"

ZERO = math.inf  # absorbing weight: no path
ONE = 0.0        # identity weight: free move


def wplus(a: float, b: float) -> float:
    return a if a <= b else b


def wtimes(a: float, b: float) -> float:
    return a + b


class Arc(NamedTuple):
    ilabel: int
    olabel: int
    weight: float
    nextstate: int


class SymbolTable:
    """Bidirectional symbol <-> id map with epsilon pinned to id 0."""

    def __init__(self, epsilon: str = EPSILON_SYM):
        self._sym2id: dict[str, int] = {epsilon: 0}
        self._id2sym: dict[int, str] = {0: epsilon}

    def add_symbol(self, symbol: str, key: int | None = None) -> int:
        if symbol in self._sym2id:
            return self._sym2id[symbol]
        if key is None:
            key = max(self._id2sym) + 1
        if key in self._id2sym:
            raise FstError(f"symbol id {key} already bound to {self._id2sym[key]!r}")
        self._sym2id[symbol] = key
        self._id2sym[key] = symbol
        return key

    def find_id(self, symbol: str) -> int:
        return self._sym2id[symbol]

    def find_symbol(self, key: int) -> str:
        return self._id2sym[key]

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._sym2id

    def __len__(self) -> int:
        return len(self._sym2id)

    def __eq__(self, other) -> bool:
        return isinstance(other, SymbolTable) and self._sym2id == other._sym2id

    def items(self):
        return sorted(self._id2sym.items())

    def symbols(self) -> list[str]:
        return [s for _, s in self.items()]

    @classmethod
    def from_file(cls, path) -> "SymbolTable":
        table = cls.__new__(cls)
        table._sym2id = {}
        table._id2sym = {}
        for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataFormatError(f"{path}: line {ln}: expected 'symbol<TAB>id'")
            sym, key = parts[0], int(parts[1])
            table._sym2id[sym] = key
            table._id2sym[key] = sym
        if 0 not in table._id2sym:
            raise DataFormatError(f"{path}: no symbol bound to id 0 (epsilon)")
        return table

    def to_file(self, path) -> None:
        Path(path).write_text(
            "".join(f"{sym}\t{key}\n" for key, sym in self.items())
        )


class Fst:
    """Mutable-while-building WFST: per-state arc lists plus final weights."""

    def __init__(self, isyms: SymbolTable | None = None, osyms: SymbolTable | None = None):
        self._arcs: list[list[Arc]] = []
        self.start: int = -1
        self.finals: dict[int, float] = {}
        self.isyms = isyms
        self.osyms = osyms
        self._ilabel_sorted: bool | None = None

    # -- construction ---------------------------------------------------

    def add_state(self) -> int:
        self._arcs.append([])
        return len(self._arcs) - 1

    def add_states(self, n: int) -> None:
        for _ in range(n):
            self._arcs.append([])

    def set_start(self, state: int) -> None:
        self._check_state(state)
        self.start = state

    def set_final(self, state: int, weight: float = ONE) -> None:
        self._check_state(state)
        if weight == ZERO:
            self.finals.pop(state, None)
        else:
            self.finals[state] = weight

    def add_arc(self, src: int, ilabel: int, olabel: int, weight: float, dst: int) -> None:
        self._check_state(src)
        self._check_state(dst)
        self._arcs[src].append(Arc(ilabel, olabel, weight, dst))
        self._ilabel_sorted = None

    def _check_state(self, state: int) -> None:
        if not (0 <= state < len(self._arcs)):
            raise FstError(f"state {state} out of range [0, {len(self._arcs)})")

    # -- inspection -----------------------------------------------------

    @property
    def num_states(self) -> int:
        return len(self._arcs)

    @property
    def num_arcs(self) -> int:
        return sum(len(a) for a in self._arcs)

    def arcs(self, state: int) -> list[Arc]:
        return self._arcs[state]

    def all_arcs(self) -> Iterable[tuple[int, Arc]]:
        for s, arcs in enumerate(self._arcs):
            for a in arcs:
                yield s, a

    def final_weight(self, state: int) -> float:
        return self.finals.get(state, ZERO)

    def is_final(self, state: int) -> bool:
        return state in self.finals

    @property
    def ilabel_sorted(self) -> bool:
        if self._ilabel_sorted is None:
            self._ilabel_sorted = all(
                all(arcs[i].ilabel <= arcs[i + 1].ilabel for i in range(len(arcs) - 1))
                for arcs in self._arcs
            )
        return self._ilabel_sorted

    def __repr__(self) -> str:
        return (
            f"Fst(states={self.num_states}, arcs={self.num_arcs}, "
            f"finals={len(self.finals)}, start={self.start})"
        )

    def copy(self) -> "Fst":
        out = Fst(self.isyms, self.osyms)
        out._arcs = [list(arcs) for arcs in self._arcs]
        out.start = self.start
        out.finals = dict(self.finals)
        out._ilabel_sorted = self._ilabel_sorted
        return out


def arcsort(f: Fst, by: str = "ilabel") -> Fst:
    """Sort each state's arcs by label; ties keep a stable full-key order."""
    if by not in ("ilabel", "olabel"):
        raise FstError(f"arcsort key must be 'ilabel' or 'olabel', got {by!r}")
    out = f.copy()
    if by == "ilabel":
        key = lambda a: (a.ilabel, a.olabel, a.weight, a.nextstate)
    else:
        key = lambda a: (a.olabel, a.ilabel, a.weight, a.nextstate)
    out._arcs = [sorted(arcs, key=key) for arcs in out._arcs]
    out._ilabel_sorted = by == "ilabel"
    return out


def trim(f: Fst) -> Fst:
    """Keep only states on some start-to-final path (accessible and
    co-accessible); an empty-language machine keeps a lone start state."""
    if f.start < 0:
        raise FstError("machine has no start state")
    fwd = {f.start}
    stack = [f.start]
    while stack:
        s = stack.pop()
        for a in f.arcs(s):
            if a.nextstate not in fwd:
                fwd.add(a.nextstate)
                stack.append(a.nextstate)
    rev: dict[int, list[int]] = {s: [] for s in range(f.num_states)}
    for s, a in f.all_arcs():
        rev[a.nextstate].append(s)
    bwd = set(f.finals)
    stack = list(f.finals)
    while stack:
        s = stack.pop()
        for prev in rev[s]:
            if prev not in bwd:
                bwd.add(prev)
                stack.append(prev)
    live = fwd & bwd
    out = Fst(f.isyms, f.osyms)
    if f.start not in live:
        out.add_state()
        out.set_start(0)
        return out
    order = sorted(live)
    remap = {s: i for i, s in enumerate(order)}
    out.add_states(len(order))
    out.set_start(remap[f.start])
    for s in order:
        for a in f.arcs(s):
            if a.nextstate in live:
                out.add_arc(remap[s], a.ilabel, a.olabel, a.weight, remap[a.nextstate])
        if f.is_final(s):
            out.set_final(remap[s], f.final_weight(s))
    return out


# ----------------------------------------------------------------------
# AT&T text format
# ----------------------------------------------------------------------

def write_fst_text(f: Fst, path) -> None:
    """Arc lines "src dst ilabel olabel weight", then final lines
    "state weight"; the first line's src is the start state."""
    if f.start < 0:
        raise FstError("cannot serialize a machine with no start state")
    lines: list[str] = []
    finals = sorted(f.finals)
    if f.arcs(f.start):
        ordered = [f.start] + [s for s in range(f.num_states) if s != f.start]
        for s in ordered:
            for a in f.arcs(s):
                lines.append(f"{s} {a.nextstate} {a.ilabel} {a.olabel} {a.weight:.9g}")
    elif f.is_final(f.start):
        # The start state is identified by the first line, so its final
        # line must lead when it has no arcs.
        lines.append(f"{f.start} {f.final_weight(f.start):.9g}")
        finals = [s for s in finals if s != f.start]
        for s in range(f.num_states):
            for a in f.arcs(s):
                lines.append(f"{s} {a.nextstate} {a.ilabel} {a.olabel} {a.weight:.9g}")
    elif f.num_arcs or f.finals:
        raise FstError("start state has no arcs and is not final: trim before writing")
    for s in finals:
        lines.append(f"{s} {f.final_weight(s):.9g}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_fst_text(path, isyms: SymbolTable | None = None,
                  osyms: SymbolTable | None = None) -> Fst:
    out = Fst(isyms, osyms)

    def ensure(state: int) -> int:
        while out.num_states <= state:
            out.add_state()
        return state

    start_seen = False
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        try:
            if len(parts) in (4, 5):
                src, dst, il, ol = (int(x) for x in parts[:4])
                w = float(parts[4]) if len(parts) == 5 else 0.0
                ensure(max(src, dst))
                out.add_arc(src, il, ol, w, dst)
            elif len(parts) in (1, 2):
                state = int(parts[0])
                w = float(parts[1]) if len(parts) == 2 else 0.0
                ensure(state)
                out.set_final(state, w)
            else:
                raise ValueError("bad field count")
        except ValueError:
            raise DataFormatError(f"{path}: line {ln}: malformed FST line {line!r}") from None
        if not start_seen:
            out.set_start(int(parts[0]))
            start_seen = True
    if not start_seen:
        # An empty file denotes the empty-language machine.
        out.add_state()
        out.set_start(0)
    return out
