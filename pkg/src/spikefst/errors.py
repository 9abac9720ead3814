"""Exception types shared across the package."""


class SpikefstError(Exception):
    """Base class for all package errors."""


class ValidationError(SpikefstError):
    """Invalid in-memory value (shape, range, or invariant violation)."""


class DataFormatError(SpikefstError):
    """Malformed input file (posteriors, FST text, lexicon, symbol tables)."""


class ArpaError(DataFormatError):
    """Malformed ARPA language-model file; carries the offending line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"parse_arpa: line {line}: {message}")


class FstError(SpikefstError):
    """FST operation failure (budget exceeded, bad precondition, no path)."""


class GraphError(SpikefstError):
    """Decoding-graph construction failure; names the pipeline stage."""


class DecodeError(SpikefstError):
    """Beam search lost every live token; carries the frame where it died."""

    def __init__(self, frame: int, message: str = "no live tokens survive pruning"):
        self.frame = frame
        super().__init__(f"decode failed at frame {frame}: {message}")
