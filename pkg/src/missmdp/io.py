"""Text formats for models and (learned) missingness tables.

One declaration per line, ``#`` starts a comment::

    features 2 3
    actions 2
    gamma 0.95
    init 0 1.0
    T 0 1 4 0.9
    R 0 1 -1.0
    M 0 10 0.5
    terminal 5

States are written as integer ids (``s`` or comma-joined feature values are
both accepted on input).  Indicator bits list feature 1 first.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .learn import LearnedMissingness
from .model import (
    FeatureSpace,
    MissingnessTable,
    MissMdp,
    ModelError,
    indicator_bits,
    indicator_code,
    parse_indicator_bits,
)


class ParseError(ModelError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _state(tok: str, fs: FeatureSpace) -> int:
    if "," in tok:
        return fs.encode(tuple(int(v) for v in tok.split(",")))
    s = int(tok)
    if not 0 <= s < fs.num_states:
        raise ModelError(f"state id {s} out of range [0, {fs.num_states})")
    return s


def parse_model(text: str) -> tuple[MissMdp, MissingnessTable | None]:
    """Parse a model file; the ``M`` rows (if any) become the second result."""
    fs = None
    num_actions = gamma = None
    trans: dict = {}
    rewards: dict = {}
    init: dict = {}
    mrows: dict = {}
    terminal = set()
    for lineno, toks in _lines(text):
        key, args = toks[0], toks[1:]
        try:
            if key == "features":
                fs = FeatureSpace(tuple(int(a) for a in args))
                continue
            if key == "actions":
                num_actions = int(args[0])
                continue
            if key == "gamma":
                gamma = float(args[0])
                continue
            if fs is None:
                raise ParseError("'features' must come before state references", lineno)
            if key == "init":
                init[_state(args[0], fs)] = init.get(_state(args[0], fs), 0.0) + float(args[1])
            elif key == "T":
                s, a, s2, p = _state(args[0], fs), int(args[1]), _state(args[2], fs), float(args[3])
                row = trans.setdefault((s, a), {})
                row[s2] = row.get(s2, 0.0) + p
            elif key == "R":
                rewards[(_state(args[0], fs), int(args[1]))] = float(args[2])
            elif key == "M":
                s, r, p = _state(args[0], fs), parse_indicator_bits(args[1]), float(args[2])
                if len(r) != fs.n:
                    raise ParseError(f"indicator {args[1]} has {len(r)} bits, expected {fs.n}", lineno)
                row = mrows.setdefault(s, {})
                row[indicator_code(r)] = row.get(indicator_code(r), 0.0) + p
            elif key == "terminal":
                terminal.add(_state(args[0], fs))
            else:
                raise ParseError(f"unknown declaration {key!r}", lineno)
        except ParseError:
            raise
        except (IndexError, ValueError) as exc:
            raise ParseError(str(exc) or f"malformed {key!r} line", lineno) from None
    for what, val in (("features", fs), ("actions", num_actions), ("gamma", gamma)):
        if val is None:
            raise ParseError(f"missing '{what}' declaration")
    for (s, a) in list(trans) + list(rewards):
        if not 0 <= a < num_actions:
            raise ParseError(f"action {a} out of range [0, {num_actions})")
    model = MissMdp.from_rows(fs, num_actions, trans, rewards, init, gamma, terminal)
    M = MissingnessTable.from_rows(fs, mrows) if mrows else None
    return model, M


def _fmt(x: float) -> str:
    return repr(float(x))


def format_missingness_rows(M: MissingnessTable) -> list[str]:
    n = M.features.n
    return [
        f"M {s} {indicator_bits(int(c), n)} {_fmt(M.probs[s, c])}"
        for s, c in zip(*np.nonzero(M.probs))
    ]


def format_model(model: MissMdp, M: MissingnessTable | None = None) -> str:
    fs = model.features
    lines = [
        "features " + " ".join(str(d) for d in fs.domains),
        f"actions {model.num_actions}",
        f"gamma {_fmt(model.gamma)}",
    ]
    lines += [f"init {s} {_fmt(model.initial[s])}" for s in np.flatnonzero(model.initial)]
    for a, T in enumerate(model.transitions):
        coo = T.tocoo()
        for s, s2, p in sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())):
            lines.append(f"T {s} {a} {s2} {_fmt(p)}")
    for s, a in zip(*np.nonzero(model.rewards)):
        lines.append(f"R {s} {a} {_fmt(model.rewards[s, a])}")
    lines += [f"terminal {s}" for s in sorted(model.terminal)]
    if M is not None:
        lines += format_missingness_rows(M)
    return "\n".join(lines) + "\n"


def format_learned(L: LearnedMissingness) -> str:
    """Learned table with provenance headers."""
    fs = L.table.features
    lines = [
        f"# algo={L.algorithm}",
        f"# kappa={float(L.kappa)!r}",
        f"# dataset_size={L.dataset_size}",
        "features " + " ".join(str(d) for d in fs.domains),
    ]
    return "\n".join(lines + format_missingness_rows(L.table)) + "\n"


def parse_missingness(text: str, features: FeatureSpace | None = None) -> tuple[MissingnessTable, dict]:
    """Parse a (learned) missingness file; returns the table and its ``# key=value`` headers."""
    headers = {}
    for raw in text.splitlines():
        s = raw.strip()
        if s.startswith("#") and "=" in s:
            k, v = s[1:].strip().split("=", 1)
            headers[k.strip()] = v.strip()
    fs = features
    rows: dict = {}
    for lineno, toks in _lines(text):
        try:
            if toks[0] == "features":
                declared = FeatureSpace(tuple(int(a) for a in toks[1:]))
                if fs is not None and declared != fs:
                    raise ParseError(f"feature domains {declared.domains} differ from {fs.domains}", lineno)
                fs = declared
            elif toks[0] == "M":
                if fs is None:
                    raise ParseError("'features' must come before 'M' rows", lineno)
                s, r, p = _state(toks[1], fs), parse_indicator_bits(toks[2]), float(toks[3])
                if len(r) != fs.n:
                    raise ParseError(f"indicator {toks[2]} has {len(r)} bits, expected {fs.n}", lineno)
                row = rows.setdefault(s, {})
                row[indicator_code(r)] = row.get(indicator_code(r), 0.0) + p
            elif toks[0] in ("actions", "gamma", "init", "T", "R", "terminal"):
                continue  # a full model file is acceptable as a missingness source
            else:
                raise ParseError(f"unknown declaration {toks[0]!r}", lineno)
        except ParseError:
            raise
        except (IndexError, ValueError) as exc:
            raise ParseError(str(exc) or "malformed line", lineno) from None
    if fs is None:
        raise ParseError("missing 'features' declaration")
    return MissingnessTable.from_rows(fs, rows), headers


def read_text(path) -> str:
    return Path(path).read_text()


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


__all__ = [
    "ParseError",
    "format_learned",
    "format_missingness_rows",
    "format_model",
    "parse_missingness",
    "parse_model",
]
