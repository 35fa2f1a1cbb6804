"""Finite field arithmetic tables for prime-power bases up to 64.

Elements of GF(p^r) are encoded as integers ``0 .. p^r - 1`` whose base-p
digits are the coefficients of a polynomial in ``x`` (least significant
first), reduced modulo a fixed monic irreducible polynomial.  The encoding
doubles as the element <-> digit bijection used by the net constructions, so
the prime subfield ``{0, .., p-1}`` maps onto the digits with the same value.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

MAX_BASE = 64


def _factor_prime_power(q: int) -> tuple[int, int] | None:
    if q < 2:
        return None
    p = 2
    while p * p <= q and q % p:
        p += 1
    if q % p:
        p = q
    r, rest = 0, q
    while rest % p == 0:
        rest //= p
        r += 1
    return (p, r) if rest == 1 else None


def admissible_bases(limit: int = MAX_BASE) -> list[int]:
    return [q for q in range(2, limit + 1) if _factor_prime_power(q)]


def _nearest_admissible(b: int) -> list[int]:
    bases = admissible_bases()
    lower = [q for q in bases if q < b]
    upper = [q for q in bases if q > b]
    return ([lower[-1]] if lower else []) + ([upper[0]] if upper else [])


def _poly_mulmod(a: list[int], c: list[int], modulus: list[int], p: int) -> list[int]:
    r = len(modulus) - 1
    prod = [0] * (len(a) + len(c) - 1)
    for i, ai in enumerate(a):
        for j, cj in enumerate(c):
            prod[i + j] = (prod[i + j] + ai * cj) % p
    # modulus is monic of degree r
    for deg in range(len(prod) - 1, r - 1, -1):
        coef = prod[deg]
        if coef:
            for i in range(r + 1):
                prod[deg - r + i] = (prod[deg - r + i] - coef * modulus[i]) % p
    return (prod + [0] * r)[:r]


def _is_irreducible(poly: list[int], p: int) -> bool:
    r = len(poly) - 1
    if r == 1:
        return True
    # a reducible polynomial of degree r has a monic factor of degree <= r // 2
    for deg in range(1, r // 2 + 1):
        for low in product(range(p), repeat=deg):
            divisor = list(low) + [1]
            rem = list(poly)
            for top in range(r, deg - 1, -1):
                coef = rem[top]
                if coef:
                    for i in range(deg + 1):
                        rem[top - deg + i] = (rem[top - deg + i] - coef * divisor[i]) % p
            if not any(rem[:deg]):
                return False
    return True


def _first_irreducible(p: int, r: int) -> list[int]:
    for low in product(range(p), repeat=r):
        poly = list(reversed(low)) + [1]
        if poly[0] == 0:
            continue
        if _is_irreducible(poly, p):
            return poly
    raise RuntimeError(f"no irreducible polynomial of degree {r} over GF({p})")


@dataclass(frozen=True, eq=False)
class FieldTable:
    """Addition/multiplication/inverse tables of GF(order)."""

    order: int
    characteristic: int
    degree: int
    modulus: tuple[int, ...]
    add: np.ndarray
    mul: np.ndarray
    neg: np.ndarray
    inv: np.ndarray

    @property
    def elements(self) -> range:
        return range(self.order)

    def from_int(self, value: int) -> int:
        """Image of an ordinary integer in the prime subfield."""
        return value % self.characteristic

    def sub(self, a: int, c: int) -> int:
        return int(self.add[a, self.neg[c]])

    def power(self, a: int, e: int) -> int:
        out = 1
        for _ in range(e):
            out = int(self.mul[out, a])
        return out


@lru_cache(maxsize=None)
def build_field(b: int) -> FieldTable:
    """Build GF(b) tables for a prime power ``b <= 64``.

    Raises ``ValueError`` naming the nearest admissible bases otherwise.
    """
    b = int(b)
    pr = _factor_prime_power(b)
    if pr is None or b > MAX_BASE:
        near = _nearest_admissible(min(b, MAX_BASE + 1)) if b >= 2 else [2]
        raise ValueError(
            f"base {b} is not a prime power in [2, {MAX_BASE}]; "
            f"nearest admissible bases: {', '.join(map(str, near))}"
        )
    p, r = pr
    modulus = _first_irreducible(p, r) if r > 1 else [0, 1]

    def coeffs(v: int) -> list[int]:
        return [(v // p**i) % p for i in range(r)]

    def encode(cs: list[int]) -> int:
        return sum(c * p**i for i, c in enumerate(cs))

    add = np.empty((b, b), dtype=np.int64)
    mul = np.empty((b, b), dtype=np.int64)
    for a in range(b):
        ca = coeffs(a)
        for c in range(b):
            cc = coeffs(c)
            add[a, c] = encode([(x + y) % p for x, y in zip(ca, cc)])
            if r == 1:
                mul[a, c] = (a * c) % p
            else:
                mul[a, c] = encode(_poly_mulmod(ca, cc, modulus, p))
    neg = np.array([int(np.flatnonzero(add[a] == 0)[0]) for a in range(b)], dtype=np.int64)
    inv = np.zeros(b, dtype=np.int64)
    for a in range(1, b):
        hits = np.flatnonzero(mul[a] == 1)
        if hits.size != 1:
            raise RuntimeError(f"GF({b}) table construction failed for element {a}")
        inv[a] = hits[0]
    for table in (add, mul, neg, inv):
        table.setflags(write=False)
    return FieldTable(b, p, r, tuple(modulus), add, mul, neg, inv)


def field_rank(field: FieldTable, matrix: np.ndarray) -> int:
    """Rank of a matrix over the field by Gaussian elimination."""
    a = np.array(matrix, dtype=np.int64, copy=True)
    rows, cols = a.shape
    rank = 0
    for col in range(cols):
        pivot = next((i for i in range(rank, rows) if a[i, col] != 0), None)
        if pivot is None:
            continue
        a[[rank, pivot]] = a[[pivot, rank]]
        scale = field.inv[a[rank, col]]
        a[rank] = field.mul[scale, a[rank]]
        for i in range(rows):
            if i != rank and a[i, col] != 0:
                factor = field.neg[a[i, col]]
                a[i] = field.add[a[i], field.mul[factor, a[rank]]]
        rank += 1
        if rank == rows:
            break
    return rank
