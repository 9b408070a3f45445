"""Text format for phase matrices, with an embedded run manifest.

    ame-phase v1
    # manifest {"schema": ..., "command": ..., ...}
    N 3
    field prime 2
    0 1 0
    1 0 1
    0 1 0

Blank lines and lines starting with ``#`` are ignored by the parser except
for the single ``# manifest`` line, whose JSON payload is recovered by
:func:`read_manifest`.  F_{p^m} entries are written as base-p coefficient
integers (c0 least significant).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from . import __version__
from .errors import AmePhaseError, MatrixFormatError
from .field import COMPOSITE, FieldSpec
from .phasecore import PhaseMatrix

MAGIC = "ame-phase v1"
MANIFEST_PREFIX = "# manifest "
MANIFEST_SCHEMA = "amephase.manifest/1"


@dataclass
class RunManifest:
    command: str
    config: dict = dc_field(default_factory=dict)
    version: str = __version__
    field: str = ""
    seed: int | None = None
    seconds: float = 0.0
    digest: str = ""
    schema: str = MANIFEST_SCHEMA

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> RunManifest:
        return cls(**json.loads(text))


class Stopwatch:
    def __init__(self):
        self.start = time.perf_counter()

    @property
    def seconds(self) -> float:
        return round(time.perf_counter() - self.start, 6)


def format_body(P: PhaseMatrix) -> str:
    """Canonical file content without comments or manifest."""
    lines = [MAGIC, f"N {P.n}", P.field.header()]
    lines += [" ".join(str(int(v)) for v in row) for row in P.entries]
    return "\n".join(lines) + "\n"


def matrix_digest(P: PhaseMatrix) -> str:
    return hashlib.sha256(format_body(P).encode()).hexdigest()


def dumps(P: PhaseMatrix, manifest: RunManifest | None = None) -> str:
    body = format_body(P)
    if manifest is None:
        return body
    head, rest = body.split("\n", 1)
    return f"{head}\n{MANIFEST_PREFIX}{manifest.to_json()}\n{rest}"


def save(P: PhaseMatrix, path, manifest: RunManifest | None = None):
    with open(path, "w") as fh:
        fh.write(dumps(P, manifest))


def strip_comments(text: str) -> str:
    return "".join(line + "\n" for line in text.splitlines()
                   if line.strip() and not line.lstrip().startswith("#"))


def read_manifest(text: str) -> RunManifest | None:
    for line in text.splitlines():
        if line.startswith(MANIFEST_PREFIX):
            return RunManifest.from_json(line[len(MANIFEST_PREFIX):])
    return None


def _parse_field(tokens: list[str], lineno: int) -> FieldSpec:
    try:
        if len(tokens) < 2 or tokens[0] != "field":
            raise ValueError("expected 'field prime|primepower|composite ...'")
        kind, args = tokens[1], [int(t) for t in tokens[2:]]
        if kind == "prime" and len(args) == 1:
            return FieldSpec.prime(args[0])
        if kind == "primepower" and len(args) >= 2:
            return FieldSpec.prime_power(args[0], args[1], args[2:] or None)
        if kind == "composite" and args:
            return FieldSpec.composite(args)
        raise ValueError(f"malformed field line {' '.join(tokens)!r}")
    except (ValueError, AmePhaseError) as exc:
        raise MatrixFormatError(str(exc), lineno) from None


def loads(text: str, split: bool = False):
    """Parse the text format; with ``split`` a composite matrix comes back as
    its list of per-prime components."""
    lines = [(i + 1, line.split()) for i, line in enumerate(text.splitlines())
             if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise MatrixFormatError("empty file", 1)
    it = iter(lines)
    lineno, tok = next(it)
    if " ".join(tok) != MAGIC:
        raise MatrixFormatError(f"expected header {MAGIC!r}", lineno)
    lineno, tok = next(it, (lineno + 1, []))
    if len(tok) != 2 or tok[0] != "N" or not tok[1].isdigit():
        raise MatrixFormatError("expected 'N <int>'", lineno)
    n = int(tok[1])
    if n < 2:
        raise MatrixFormatError(f"N must be at least 2, got {n}", lineno)
    lineno, tok = next(it, (lineno + 1, []))
    spec = _parse_field(tok, lineno)
    q = spec.cardinality
    entries = np.zeros((n, n), dtype=np.int64)
    row_line = []
    for r in range(n):
        nxt = next(it, None)
        if nxt is None:
            raise MatrixFormatError(f"expected {n} matrix rows, found {r}", lineno + 1)
        lineno, tok = nxt
        if len(tok) != n:
            raise MatrixFormatError(f"row {r} has {len(tok)} entries, expected {n}", lineno)
        for c, t in enumerate(tok):
            try:
                v = int(t)
            except ValueError:
                raise MatrixFormatError(f"row {r}: {t!r} is not an integer", lineno) from None
            if not 0 <= v < q:
                raise MatrixFormatError(f"row {r}, column {c}: {v} outside [0, {q})", lineno)
            entries[r, c] = v
        if entries[r, r] != 0:
            raise MatrixFormatError(f"diagonal entry ({r},{r}) must be 0", lineno)
        for c in range(r):
            if entries[r, c] != entries[c, r]:
                raise MatrixFormatError(
                    f"not symmetric: ({r},{c}) = {entries[r, c]} but ({c},{r}) = {entries[c, r]} "
                    f"on line {row_line[c]}", lineno)
        row_line.append(lineno)
    extra = next(it, None)
    if extra is not None:
        raise MatrixFormatError("unexpected content after the matrix rows", extra[0])
    P = PhaseMatrix(entries, spec)
    if split and spec.kind == COMPOSITE:
        from .crt import split_matrix
        return split_matrix(P)
    return P


def load(path, split: bool = False):
    with open(path) as fh:
        return loads(fh.read(), split=split)
