"""Digital (0,m,s)-nets in prime-power bases and exhaustive net verification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb
from pathlib import Path
from typing import Iterator

import numpy as np

from .fields import FieldTable, build_field, field_rank


def default_depth(b: int, m: int) -> int:
    """Digit depth K = max(m, ceil(52 / log2 b))."""
    return max(m, math.ceil(52 / math.log2(b)))


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    field: FieldTable
    s: int
    m: int
    matrices: tuple[np.ndarray, ...]

    @property
    def b(self) -> int:
        return self.field.order


@dataclass(frozen=True, eq=False)
class DigitalNet:
    """``n = b**m`` points stored as an ``(n, s, K)`` array of base-b digits.

    ``digits[i, j, k]`` is the (k+1)-th most significant digit of coordinate
    j of point i.
    """

    b: int
    m: int
    t: int
    digits: np.ndarray
    comment: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        d = self.digits
        if d.ndim != 3:
            raise ValueError("digits must have shape (n, s, K)")
        if d.shape[0] != self.b**self.m:
            raise ValueError(f"expected {self.b ** self.m} points, got {d.shape[0]}")
        if d.shape[2] < self.m:
            raise ValueError("digit depth K must be at least m")
        if d.size and (d.min() < 0 or d.max() >= self.b):
            raise ValueError(f"digits must lie in 0..{self.b - 1}")

    @property
    def n(self) -> int:
        return self.digits.shape[0]

    @property
    def s(self) -> int:
        return self.digits.shape[1]

    @property
    def K(self) -> int:
        return self.digits.shape[2]

    def points(self) -> np.ndarray:
        """Points in [0,1)^s (floating point; for display and plotting)."""
        weights = float(self.b) ** -np.arange(1, self.K + 1)
        return self.digits.astype(np.float64) @ weights


def _pascal_matrix(fld: FieldTable, m: int, a: int) -> np.ndarray:
    # entry (r, c) = C(c, r) * a^(c - r), upper triangular; a = 0 gives I
    mat = np.zeros((m, m), dtype=np.int64)
    for c in range(m):
        for r in range(c + 1):
            mat[r, c] = fld.mul[fld.from_int(comb(c, r)), fld.power(a, c - r)]
    return mat


def faure_generators(fld: FieldTable, s: int, m: int) -> GeneratorSet:
    """Faure generator matrices over GF(b).

    Generator j is the Pascal matrix evaluated at the j-th field element
    (entries ``C(c, r) * a_j**(c - r)``).  With ``a_j = j - 1`` in a prime
    field this is the (j-1)-th power of the Pascal matrix.
    """
    b = fld.order
    if m < 1:
        raise ValueError("m must be >= 1")
    if s < 1 or s > b:
        raise ValueError(f"Faure construction needs 1 <= s <= b (got s={s}, b={b})")
    mats = tuple(_pascal_matrix(fld, m, a) for a in range(s))
    for mat in mats:
        mat.setflags(write=False)
    return GeneratorSet(fld, s, m, mats)


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All tuples of ``parts`` non-negative integers summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for bars in combinations_with_replacement(range(total + 1), parts - 1):
        edges = (0,) + bars + (total,)
        yield tuple(edges[i + 1] - edges[i] for i in range(parts))


def check_generators(gen: GeneratorSet) -> tuple[int, ...] | None:
    """Return the first shape whose stacked rows are singular, or None."""
    for shape in compositions(gen.m, gen.s):
        stacked = np.vstack([mat[:k] for mat, k in zip(gen.matrices, shape) if k])
        if field_rank(gen.field, stacked) < gen.m:
            return shape
    return None


def generate_net(gen: GeneratorSet, K: int | None = None) -> DigitalNet:
    """Apply the generators to the base-b digit vectors of 0..b^m - 1."""
    b, m, s = gen.b, gen.m, gen.s
    K = default_depth(b, m) if K is None else K
    if K < m:
        raise ValueError("K must be >= m")
    n = b**m
    idx = np.arange(n)
    # index digits, least significant first
    a = np.stack([(idx // b**c) % b for c in range(m)], axis=1)
    fld = gen.field
    digits = np.zeros((n, s, K), dtype=np.uint8)
    for j, mat in enumerate(gen.matrices):
        for r in range(m):
            acc = np.zeros(n, dtype=np.int64)
            for c in range(m):
                acc = fld.add[acc, fld.mul[mat[r, c], a[:, c]]]
            digits[:, j, r] = acc
    return DigitalNet(b, m, 0, digits)


def faure_net(b: int, s: int, m: int, K: int | None = None) -> DigitalNet:
    return generate_net(faure_generators(build_field(b), s, m), K)


@dataclass(frozen=True)
class NetReport:
    ok: bool
    t: int
    shapes_checked: int
    violation: dict | None = None

    def __bool__(self) -> bool:
        return self.ok


def prefix_codes(digits: np.ndarray, b: int, depth: int) -> np.ndarray:
    """Integer code of the first ``depth`` digits, for every (point, coordinate)."""
    codes = np.zeros(digits.shape[:2], dtype=np.int64)
    for k in range(depth):
        codes = codes * b + digits[:, :, k]
    return codes


def verify_net(net: DigitalNet, t: int = 0) -> NetReport:
    """Check that every b-adic box of volume b^(t-m) holds exactly b^t points.

    Boxes are identified by digit prefixes, so the census is exact.
    """
    b, m, s = net.b, net.m, net.s
    if not 0 <= t <= m:
        raise ValueError("need 0 <= t <= m")
    expected = b**t
    levels = m - t
    codes = [prefix_codes(net.digits, b, k) for k in range(levels + 1)]
    checked = 0
    for shape in compositions(levels, s):
        box = np.zeros(net.n, dtype=np.int64)
        for j, k in enumerate(shape):
            box = box * b**k + codes[k][:, j]
        counts = np.bincount(box, minlength=b**levels)
        checked += 1
        bad = np.flatnonzero(counts != expected)
        if bad.size:
            cell = int(bad[0])
            return NetReport(
                False,
                t,
                checked,
                {"shape": list(shape), "box": cell, "count": int(counts[cell]), "expected": expected},
            )
    return NetReport(True, t, checked)


def format_net(net: DigitalNet, comment: str | None = None) -> str:
    """Plain-text digit format: header ``b m t s K n`` then one line per point."""
    lines = []
    note = comment if comment is not None else net.comment
    if note:
        lines.extend(f"# {line}" for line in note.splitlines())
    lines.append(f"{net.b} {net.m} {net.t} {net.s} {net.K} {net.n}")
    flat = net.digits.reshape(net.n, -1)
    lines.extend(" ".join(map(str, row)) for row in flat.tolist())
    return "\n".join(lines) + "\n"


def write_net(net: DigitalNet, path: str | Path, comment: str | None = None) -> None:
    Path(path).write_text(format_net(net, comment))


def read_net(path: str | Path) -> DigitalNet:
    comments = []
    rows = []
    header = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            comments.append(line[1:].strip())
            continue
        fields_ = [int(tok) for tok in line.split()]
        if header is None:
            header = fields_
        else:
            rows.append(fields_)
    if header is None or len(header) != 6:
        raise ValueError(f"{path}: missing header 'b m t s K n'")
    b, m, t, s, K, n = header
    if len(rows) != n:
        raise ValueError(f"{path}: header says {n} points, found {len(rows)}")
    digits = np.asarray(rows, dtype=np.int64)
    if digits.shape[1] != s * K:
        raise ValueError(f"{path}: expected {s * K} digits per line")
    if digits.min() < 0 or digits.max() >= b:
        raise ValueError(f"{path}: digit out of range for base {b}")
    return DigitalNet(b, m, t, digits.astype(np.uint8).reshape(n, s, K), "\n".join(comments) or None)
