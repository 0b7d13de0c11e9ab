"""Two-way lookup between the CUDA-style and OpenCL-style execution terms."""

TERM_TABLE = (
    ("thread", "work-item"),
    ("thread block", "work-group"),
)


class UnknownTermError(ValueError):
    """The queried term is in neither vocabulary column."""


_FORWARD = {c: o for c, o in TERM_TABLE}
_REVERSE = {o: c for c, o in TERM_TABLE}


def _normalize(term):
    return " ".join(term.strip().lower().split())


def terminology_lookup(term):
    """Return the equivalent term from the opposite vocabulary column.

    Lookup is case- and whitespace-insensitive and works in both
    directions, so applying it twice returns the original term.
    """
    key = _normalize(term)
    if key in _FORWARD:
        return _FORWARD[key]
    if key in _REVERSE:
        return _REVERSE[key]
    known = sorted(_FORWARD) + sorted(_REVERSE)
    raise UnknownTermError(f"unknown term {term!r}; known terms: {', '.join(known)}")
