"""Nested uniform (Owen) scrambling with keyed, lazily derived permutations.

Every permutation pi_{j, prefix} of Z_b is a pure function of
``(seed, replication, j, prefix)``:

* the key root is ``derive(mix(seed), replication)``;
* coordinate j starts at node ``derive(root, j)``; the node of a prefix
  extended by digit ``a`` is ``mix(node ^ salt[a])``;
* the permutation at a node is a Fisher-Yates shuffle whose draws come from
  the counter-mode words ``mix(node + c * GOLDEN)``, c = 1, 2, ...; each word
  is consumed in mixed radix while the radix product stays below 2**32, which
  bounds the deviation from exact uniformity by 2**-32 per draw.

``mix`` is the splitmix64 finaliser.  The numba kernel below and the
pure-Python :class:`PermutationTree` implement the same derivation and are
cross-checked in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .nets import DigitalNet

SCHEME = "splitmix64-fy-v1"
IDENTITY = "identity"

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
C_REP = 0x632BE59BD9B4E019
C_COORD = 0x8CB92BA72F3D8DD7
C_DIGIT = 0xD6E8FEB86659FD93
C_POINT = 0xA0761D6478BD642F
RADIX_BUDGET = 1 << 32


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _derive(h: int, x: int, salt: int) -> int:
    return mix64(h ^ mix64(x + salt))


DIGIT_SALT = np.array([mix64(d + C_DIGIT) for d in range(256)], dtype=np.uint64)


@dataclass(frozen=True)
class ScrambleKey:
    """(seed, replication) pair selecting one permutation family."""

    seed: int
    replication: int = 1
    scheme: str = SCHEME

    def __post_init__(self) -> None:
        if self.scheme not in (SCHEME, IDENTITY):
            raise ValueError(f"unknown scramble scheme {self.scheme!r}")

    @property
    def root(self) -> int:
        return _derive(mix64(self.seed), self.replication, C_REP)

    def describe(self) -> str:
        return f"key seed={self.seed} replication={self.replication} scheme={self.scheme}"


def root_hashes(seed: int, replications: Sequence[int]) -> np.ndarray:
    base = mix64(seed)
    return np.array([_derive(base, int(r), C_REP) for r in replications], dtype=np.uint64)


def fisher_yates(node: int, b: int) -> tuple[int, ...]:
    return _shuffle(mix64(node + GOLDEN), b, node)


def _shuffle(word: int, b: int, node: int) -> tuple[int, ...]:
    perm = list(range(b))
    counter = 1
    budget = 1
    for i in range(b - 1, 0, -1):
        radix = i + 1
        if budget * radix > RADIX_BUDGET:
            counter += 1
            word = mix64(node + counter * GOLDEN)
            budget = 1
        r = word % radix
        word //= radix
        budget *= radix
        perm[i], perm[r] = perm[r], perm[i]
    return tuple(perm)


@dataclass
class PermutationTree:
    """Lazily materialised permutations pi_{j, prefix}; queries are memoised."""

    b: int
    key: ScrambleKey
    _cache: dict = field(default_factory=dict, repr=False)

    def node(self, j: int, prefix: Sequence[int]) -> int:
        h = _derive(self.key.root, j, C_COORD)
        for a in prefix:
            h = mix64(h ^ int(DIGIT_SALT[a]))
        return h

    def permutation(self, j: int, prefix: Sequence[int]) -> tuple[int, ...]:
        ident = (j, tuple(int(a) for a in prefix))
        hit = self._cache.get(ident)
        if hit is None:
            if any(not 0 <= a < self.b for a in ident[1]):
                raise ValueError("prefix digits must lie in Z_b")
            if self.key.scheme == IDENTITY:
                hit = tuple(range(self.b))
            else:
                hit = fisher_yates(self.node(*ident), self.b)
            self._cache[ident] = hit
        return hit

    @property
    def queried(self) -> set:
        return set(self._cache)


def permutation_for(tree: PermutationTree, j: int, prefix: Sequence[int]) -> tuple[int, ...]:
    return tree.permutation(j, prefix)


def scramble_net_reference(net: DigitalNet, key: ScrambleKey, tree: PermutationTree | None = None) -> DigitalNet:
    """Digit-by-digit scramble through :class:`PermutationTree` (slow, for checks)."""
    tree = tree or PermutationTree(net.b, key)
    out = np.empty_like(net.digits)
    for i in range(net.n):
        for j in range(net.s):
            a = net.digits[i, j].tolist()
            for k in range(net.K):
                out[i, j, k] = tree.permutation(j, a[:k])[a[k]]
    return DigitalNet(net.b, net.m, net.t, out, key.describe())


# --- numba kernel ---------------------------------------------------------

_U_GOLDEN = np.uint64(GOLDEN)
_U_COORD = np.uint64(C_COORD)
_U_POINT = np.uint64(C_POINT)
_U_BUDGET = np.uint64(RADIX_BUDGET)


@numba.njit(cache=True, nogil=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def _apply_permutation(node, b, a, perm):
    for i in range(b):
        perm[i] = i
    counter = np.uint64(1)
    word = _mix(node + counter * _U_GOLDEN)
    budget = np.uint64(1)
    for i in range(b - 1, 0, -1):
        radix = np.uint64(i + 1)
        if budget * radix > _U_BUDGET:
            counter += np.uint64(1)
            word = _mix(node + counter * _U_GOLDEN)
            budget = np.uint64(1)
        r = np.int64(word % radix)
        word = word // radix
        budget = budget * radix
        tmp = perm[i]
        perm[i] = perm[r]
        perm[r] = tmp
    return perm[a]


TABLE_MAX_BASE = 8


def permutation_table(b: int) -> np.ndarray:
    """All b! shuffles indexed by ``word mod b!`` (valid while b! <= 2**32).

    Mixed-radix decoding of the first counter word depends only on the word
    modulo b!, so the table reproduces :func:`fisher_yates` exactly.
    """
    size = 1
    for i in range(2, b + 1):
        size *= i
    return np.array([_shuffle(x, b, 0) for x in range(size)], dtype=np.uint8)


_TABLES = {b: None for b in range(2, TABLE_MAX_BASE + 1)}


def _table_for(b: int) -> np.ndarray:
    if b > TABLE_MAX_BASE:
        return np.zeros((1, 1), dtype=np.uint8)
    if _TABLES[b] is None:
        _TABLES[b] = permutation_table(b)
    return _TABLES[b]


@numba.njit(cache=True, nogil=True)
def _scramble_kernel(digits, roots, per_point, b, salt, table, out):
    n, s, K = digits.shape
    perm = np.empty(b, np.int64)
    use_table = table.shape[1] == b
    size = np.uint64(table.shape[0])
    for r in range(roots.shape[0]):
        for i in range(n):
            root = roots[r]
            if per_point:
                root = _mix(root ^ _mix(np.uint64(i) + _U_POINT))
            for j in range(s):
                h = _mix(root ^ _mix(np.uint64(j) + _U_COORD))
                for k in range(K):
                    a = digits[i, j, k]
                    if use_table:
                        out[r, i, j, k] = table[np.int64(_mix(h + _U_GOLDEN) % size), a]
                    else:
                        out[r, i, j, k] = _apply_permutation(h, b, a, perm)
                    h = _mix(h ^ salt[a])


def scramble_digits(digits: np.ndarray, b: int, roots: np.ndarray, per_point: bool = False) -> np.ndarray:
    """Scramble an ``(n, s, K)`` digit array once per root hash.

    Returns an ``(R, n, s, K)`` array.  With ``per_point`` every point gets its
    own permutation family (independent uniform draws rather than a net).
    """
    digits = np.ascontiguousarray(digits, dtype=np.uint8)
    roots = np.ascontiguousarray(roots, dtype=np.uint64)
    out = np.empty((roots.shape[0],) + digits.shape, dtype=np.uint8)
    _scramble_kernel(digits, roots, per_point, b, DIGIT_SALT, _table_for(b), out)
    return out


def point_root(key: ScrambleKey, i: int) -> int:
    """Root hash used for point ``i`` when points are scrambled independently."""
    return _derive(key.root, i, C_POINT)


def scramble_net(net: DigitalNet, key: ScrambleKey) -> DigitalNet:
    """Nested uniform scramble of all points with one permutation family.

    Prefixes index the original digits, ``u_{k+1} = pi_{j, a_1..a_k}(a_{k+1})``.
    """
    if key.scheme == IDENTITY:
        out = net.digits.copy()
    else:
        out = scramble_digits(net.digits, net.b, np.array([key.root], dtype=np.uint64))[0]
    return DigitalNet(net.b, net.m, net.t, out, key.describe())
