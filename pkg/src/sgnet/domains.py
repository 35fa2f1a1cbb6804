"""Recursive b-fold splits of intervals and triangles, and the digit -> point map.

Cells are addressed by digit paths ``(u_1, .., u_k)``; the index of a level-k
cell is the base-b integer ``t = u_1 u_2 .. u_k`` so that child c of cell
``(k, t)`` is cell ``(k + 1, b t + c)``.

Triangles split 4-fold at edge midpoints::

    child 0 = (A, (A+B)/2, (A+C)/2)
    child 1 = ((B+A)/2, B, (B+C)/2)
    child 2 = ((C+A)/2, (C+B)/2, C)
    child 3 = ((B+C)/2, (A+C)/2, (A+B)/2)    # inverted middle triangle

In barycentric coordinates ``g`` of a child, the parent barycentrics are
``(g + e_c) / 2`` for c < 3 and ``(1 - g) / 2`` for c = 3, which is what the
vectorised map uses.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .nets import DigitalNet

TRIANGLE_LABELING = "midpoint-4/corners-0-1-2/middle-3"



@numba.njit(cache=True, nogil=True)
def _interval_phi(digits, b, lo, width, out):
    for p in range(digits.shape[0]):
        v = 0.5
        for k in range(digits.shape[1] - 1, -1, -1):
            v = (digits[p, k] + v) / b
        out[p] = lo + width * v


# child c maps child barycentrics g to parent ones: (sign[c] * g + offset[c]) / 2
_TRI_SIGN = np.array([0.5, 0.5, 0.5, -0.5])
_TRI_OFFSET = np.array([[0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5], [0.5, 0.5, 0.5]])


@numba.njit(cache=True, nogil=True)
def _triangle_phi(digits, verts, sign, offset, out):
    third = 1.0 / 3.0
    for p in range(digits.shape[0]):
        g0 = third
        g1 = third
        g2 = third
        for k in range(digits.shape[1] - 1, -1, -1):
            u = digits[p, k]
            h = sign[u]
            g0 = h * g0 + offset[u, 0]
            g1 = h * g1 + offset[u, 1]
            g2 = h * g2 + offset[u, 2]
        out[p, 0] = g0 * verts[0, 0] + g1 * verts[1, 0] + g2 * verts[2, 0]
        out[p, 1] = g0 * verts[0, 1] + g1 * verts[1, 1] + g2 * verts[2, 1]


def _flat_digits(digits) -> tuple[np.ndarray, tuple[int, ...]]:
    digits = np.asarray(digits)
    if digits.dtype.kind not in "iu":
        digits = digits.astype(np.int64)
    lead = digits.shape[:-1]
    flat = digits.reshape(math.prod(lead), digits.shape[-1])
    if flat.dtype.kind not in "iu":
        flat = flat.astype(np.int64)
    return np.ascontiguousarray(flat), lead


class Region:
    """A bounded region with a recursive b-fold split."""

    d: int
    b: int

    @property
    def volume(self) -> float:
        raise NotImplementedError

    def cell_geometry(self, path: Sequence[int]):
        raise NotImplementedError

    def phi(self, digits: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def locate(self, x: np.ndarray, depth: int) -> np.ndarray:
        raise NotImplementedError

    def spec_line(self) -> str:
        raise NotImplementedError

    def centroids(self, level: int) -> np.ndarray:
        """Centroids of all level-``level`` cells, ordered by cell index."""
        n = self.b**level
        idx = np.arange(n)
        digits = np.zeros((n, level), dtype=np.int64)
        for k in range(level):
            digits[:, k] = (idx // self.b ** (level - 1 - k)) % self.b
        return self.phi(digits)


@dataclass(frozen=True)
class Interval(Region):
    lo: float = 0.0
    hi: float = 1.0
    b: int = 2

    d = 1

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.hi > self.lo):
            raise ValueError("interval needs finite lo < hi")
        if self.b < 2:
            raise ValueError("split base must be >= 2")

    @property
    def volume(self) -> float:
        return self.hi - self.lo

    def cell_geometry(self, path: Sequence[int]) -> tuple[float, float]:
        lo, width = self.lo, self.hi - self.lo
        for c in path:
            width /= self.b
            lo += c * width
        return lo, lo + width

    def phi(self, digits: np.ndarray) -> np.ndarray:
        flat, lead = _flat_digits(digits)
        out = np.empty(flat.shape[0])
        _interval_phi(flat, float(self.b), float(self.lo), float(self.hi - self.lo), out)
        return out.reshape(lead + (1,))

    def locate(self, x: np.ndarray, depth: int) -> np.ndarray:
        y = (np.asarray(x, dtype=float).reshape(-1) - self.lo) / (self.hi - self.lo)
        out = np.empty((y.size, depth), dtype=np.int64)
        for k in range(depth):
            y = y * self.b
            c = np.clip(np.floor(y), 0, self.b - 1)
            out[:, k] = c
            y = y - c
        return out

    def spec_line(self) -> str:
        return f"interval {self.b} {self.lo!r} {self.hi!r}"


@dataclass(frozen=True)
class Triangle(Region):
    A: tuple[float, float] = (0.0, 0.0)
    B: tuple[float, float] = (1.0, 0.0)
    C: tuple[float, float] = (0.0, 1.0)
    b: int = 4

    d = 2

    def __post_init__(self) -> None:
        if self.b != 4:
            raise ValueError("triangle splits are only defined for base 4")
        if not self.volume > 0:
            raise ValueError("triangle vertices are collinear")

    @property
    def vertices(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C], dtype=float)

    @property
    def volume(self) -> float:
        (ax, ay), (bx, by), (cx, cy) = self.A, self.B, self.C
        return abs((bx - ax) * (cy - ay) - (cx - ax) * (by - ay)) / 2

    def cell_geometry(self, path: Sequence[int]) -> np.ndarray:
        v = self.vertices
        for c in path:
            a, b_, c_ = v
            if c == 0:
                v = np.array([a, (a + b_) / 2, (a + c_) / 2])
            elif c == 1:
                v = np.array([(b_ + a) / 2, b_, (b_ + c_) / 2])
            elif c == 2:
                v = np.array([(c_ + a) / 2, (c_ + b_) / 2, c_])
            elif c == 3:
                v = np.array([(b_ + c_) / 2, (a + c_) / 2, (a + b_) / 2])
            else:
                raise ValueError("triangle digits must lie in 0..3")
        return v

    def phi(self, digits: np.ndarray) -> np.ndarray:
        flat, lead = _flat_digits(digits)
        out = np.empty((flat.shape[0], 2))
        _triangle_phi(flat, self.vertices, _TRI_SIGN, _TRI_OFFSET, out)
        return out.reshape(lead + (2,))

    def barycentric(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        a = np.asarray(self.A, dtype=float)
        m = np.column_stack([np.subtract(self.B, a), np.subtract(self.C, a)])
        lb_lc = np.linalg.solve(m, (x - a).T).T
        return np.column_stack([1.0 - lb_lc.sum(axis=1), lb_lc])

    def locate(self, x: np.ndarray, depth: int) -> np.ndarray:
        lam = self.barycentric(x)
        out = np.empty((lam.shape[0], depth), dtype=np.int64)
        for k in range(depth):
            # ties go to the lowest-numbered corner cell
            c = np.where(lam[:, 0] >= 0.5, 0, np.where(lam[:, 1] >= 0.5, 1, np.where(lam[:, 2] >= 0.5, 2, 3)))
            out[:, k] = c
            corner = c < 3
            lam = np.where(corner[:, None], 2.0 * lam, 1.0 - 2.0 * lam)
            rows = np.flatnonzero(corner)
            lam[rows, c[rows]] -= 1.0
        return out

    def spec_line(self) -> str:
        coords = " ".join(repr(float(v)) for p in (self.A, self.B, self.C) for v in p)
        return f"triangle {self.b} {coords}"


STANDARD_TRIANGLE = Triangle()


@dataclass(frozen=True)
class CellAddress:
    region: Region
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if any(not 0 <= c < self.region.b for c in self.path):
            raise ValueError(f"path digits must lie in 0..{self.region.b - 1}")

    @property
    def level(self) -> int:
        return len(self.path)

    @property
    def index(self) -> int:
        t = 0
        for c in self.path:
            t = t * self.region.b + c
        return t

    @property
    def volume(self) -> float:
        return self.region.volume * self.region.b ** (-self.level)

    @classmethod
    def from_index(cls, region: Region, k: int, t: int) -> "CellAddress":
        if not 0 <= t < region.b**k:
            raise ValueError(f"cell index {t} out of range at level {k}")
        return cls(region, tuple((t // region.b ** (k - 1 - i)) % region.b for i in range(k)))

    def geometry(self):
        return self.region.cell_geometry(self.path)

    def is_inverted(self) -> bool:
        """Triangle cells only: orientation flips at every middle child."""
        return self.path.count(3) % 2 == 1


def split_cell(cell: CellAddress) -> list[CellAddress]:
    return [CellAddress(cell.region, cell.path + (c,)) for c in range(cell.region.b)]


def cell_center(cell: CellAddress) -> np.ndarray:
    geom = cell.geometry()
    if isinstance(cell.region, Interval):
        return np.array([(geom[0] + geom[1]) / 2])
    return geom.mean(axis=0)


def cell_diameter(cell: CellAddress) -> float:
    geom = cell.geometry()
    if isinstance(cell.region, Interval):
        return geom[1] - geom[0]
    # a triangle's diameter is its longest edge
    return max(float(np.linalg.norm(geom[i] - geom[j])) for i, j in ((0, 1), (1, 2), (0, 2)))


def phi_map(digits: Sequence[int] | np.ndarray, region: Region) -> np.ndarray:
    """Centroid of the cell addressed by the digit string (last axis)."""
    digits = np.asarray(digits)
    if digits.size and (digits.min() < 0 or digits.max() >= region.b):
        raise ValueError(f"digits must lie in 0..{region.b - 1}")
    return region.phi(digits)


@dataclass(frozen=True)
class SplitMatrix:
    k: int
    t: int
    matrix: np.ndarray
    lambda1: float


def min_eigenvalue(a: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric 1x1 or 2x2 matrix in closed form."""
    if a.shape == (1, 1):
        return float(a[0, 0])
    if a.shape != (2, 2):
        raise ValueError("closed-form eigenvalues only for d <= 2")
    p, q, r = a[0, 0], a[0, 1], a[1, 1]
    return float((p + r) / 2 - math.hypot((p - r) / 2, q))


def compute_Aj(region: Region, k: int, t: int) -> SplitMatrix:
    """Sum over children of (n_c - w)(n_c - w)^T in volume-normalised coordinates."""
    cell = CellAddress.from_index(region, k, t)
    w = cell_center(cell)
    scale = region.volume ** (-1.0 / region.d)
    a = np.zeros((region.d, region.d))
    for child in split_cell(cell):
        delta = (cell_center(child) - w) * scale
        a += np.outer(delta, delta)
    return SplitMatrix(k, t, a, min_eigenvalue(a))


def level_matrices(region: Region, k: int) -> np.ndarray:
    """A_j for every level-k cell at once, shape ``(b**k, d, d)``, from centroid maps."""
    b, d = region.b, region.d
    scale = region.volume ** (-1.0 / d)
    parents = region.centroids(k)
    children = region.centroids(k + 1).reshape(b**k, b, d)
    delta = (children - parents[:, None, :]) * scale
    return np.einsum("tci,tcj->tij", delta, delta)


class ProductDomain:
    """Product of regions sharing a common split base."""

    def __init__(self, components: Sequence[Region]):
        components = tuple(components)
        if not components:
            raise ValueError("a product domain needs at least one component")
        bases = {r.b for r in components}
        if len(bases) != 1:
            raise ValueError(f"all components must share one split base, got {sorted(bases)}")
        self.components = components
        self.b = components[0].b
        offsets = np.cumsum([0] + [r.d for r in components])
        self.slices = tuple(slice(int(offsets[j]), int(offsets[j + 1])) for j in range(len(components)))

    def __repr__(self) -> str:
        return f"ProductDomain({list(self.components)!r})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ProductDomain) and self.components == other.components

    def __hash__(self) -> int:
        return hash(self.components)

    @property
    def s(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.slices[-1].stop

    @property
    def volume(self) -> float:
        return float(np.prod([r.volume for r in self.components]))

    def map_digits(self, digits: np.ndarray) -> np.ndarray:
        """Map a ``(..., n, s, K)`` digit array to ``(..., n, dim)`` points."""
        if digits.shape[-2] != self.s:
            raise ValueError(f"digit array has {digits.shape[-2]} coordinates, domain has {self.s}")
        out = np.empty(digits.shape[:-2] + (self.dim,))
        for j, region in enumerate(self.components):
            out[..., self.slices[j]] = region.phi(digits[..., j, :])
        return out

    def locate(self, x: np.ndarray, depth: int) -> np.ndarray:
        """Digit paths ``(n, s, depth)`` of the cells containing each point."""
        x = np.atleast_2d(x)
        return np.stack([r.locate(x[:, sl], depth) for r, sl in zip(self.components, self.slices)], axis=1)

    def to_text(self) -> str:
        lines = [f"# triangle labeling: {TRIANGLE_LABELING}"]
        lines.extend(r.spec_line() for r in self.components)
        return "\n".join(lines) + "\n"


def map_net(net: DigitalNet, dom: ProductDomain) -> np.ndarray:
    """Points ``x_i = phi(u_i)`` componentwise, shape ``(n, dim)``."""
    if net.b != dom.b:
        raise ValueError(f"net base {net.b} does not match domain base {dom.b}")
    if net.s != dom.s:
        raise ValueError(f"net has s={net.s} but domain has {dom.s} components")
    return dom.map_digits(net.digits)


_SHORTHAND = re.compile(r"^(T2|I)(?:\^(\d+))?$")


def parse_region(line: str) -> Region:
    parts = line.split()
    kind, vals = parts[0].lower(), parts[1:]
    if kind == "interval":
        if len(vals) != 3:
            raise ValueError(f"expected 'interval b lo hi', got {line!r}")
        return Interval(float(vals[1]), float(vals[2]), int(vals[0]))
    if kind == "triangle":
        if len(vals) != 7:
            raise ValueError(f"expected 'triangle b Ax Ay Bx By Cx Cy', got {line!r}")
        c = [float(v) for v in vals[1:]]
        return Triangle((c[0], c[1]), (c[2], c[3]), (c[4], c[5]), int(vals[0]))
    raise ValueError(f"unknown region kind {parts[0]!r}")


def parse_domain(text: str, b: int | None = None) -> ProductDomain:
    """Parse a shorthand (``T2^2``, ``I^3``) or domain-file contents."""
    stripped = text.strip()
    match = _SHORTHAND.match(stripped)
    if match:
        kind, power = match.group(1), int(match.group(2) or 1)
        if kind == "T2":
            if b not in (None, 4):
                raise ValueError("triangle domains use base 4")
            return ProductDomain([STANDARD_TRIANGLE] * power)
        return ProductDomain([Interval(0.0, 1.0, b or 2)] * power)
    regions = [
        parse_region(line)
        for line in stripped.splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]
    return ProductDomain(regions)


def load_domain(spec: str, b: int | None = None) -> ProductDomain:
    """``spec`` is either a shorthand or a path to a domain file."""
    if _SHORTHAND.match(spec.strip()):
        return parse_domain(spec, b)
    return parse_domain(Path(spec).read_text(), b)
