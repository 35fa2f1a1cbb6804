"""Gain coefficients, base-b Haar wavelets on split domains, and variance terms.

Inner products and variances are taken with respect to the volume-normalised
measure ``dx / vol`` on each component, so every region behaves as if it had
unit volume.  Cell integrals come from a composite centroid rule on the
recursive split itself (panels never straddle a cell boundary) with a
Richardson step between refinement depths q and q + 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Callable, Sequence

import numpy as np

from .domains import ProductDomain, Region, Triangle
from .nets import DigitalNet, compositions, prefix_codes

RTOL = 1e-6
ATOL = 1e-12

Func = Callable[[np.ndarray], np.ndarray]


class QuadratureError(RuntimeError):
    """Raised when refinement depths q and q + 1 disagree beyond tolerance."""


class QuadratureWarning(UserWarning):
    pass


# --- gain coefficients -----------------------------------------------------


def upsilon(net: DigitalNet, i: int, i2: int, j: int, k: int) -> Fraction:
    """(b [first k+1 digits agree] - [first k digits agree]) / (b - 1)."""
    if k + 1 > net.K:
        raise ValueError("k + 1 exceeds the digit depth")
    a, c = net.digits[i, j], net.digits[i2, j]
    agree_k = bool(np.array_equal(a[:k], c[:k]))
    agree_k1 = agree_k and a[k] == c[k]
    return Fraction(net.b * int(agree_k1) - int(agree_k), net.b - 1)


def _agreement(net: DigitalNet, j: int, k: int) -> np.ndarray:
    # integer matrix b [agree to k+1] - [agree to k] over all pairs
    lo = prefix_codes(net.digits[:, j : j + 1], net.b, k)[:, 0]
    hi = prefix_codes(net.digits[:, j : j + 1], net.b, k + 1)[:, 0]
    return net.b * (hi[:, None] == hi[None, :]).astype(np.int64) - (lo[:, None] == lo[None, :]).astype(np.int64)


def empirical_gain_exact(net: DigitalNet, u: Sequence[int], kappa: Sequence[int]) -> Fraction:
    """(1/n) sum over ordered pairs of prod_{j in u} Upsilon, as an exact rational."""
    u = tuple(u)
    kappa = tuple(kappa)
    if len(u) != len(kappa) or not u:
        raise ValueError("u and kappa must be non-empty and of equal length")
    if any(k + 1 > net.K for k in kappa):
        raise ValueError("kappa exceeds the digit depth")
    prod = np.ones((net.n, net.n), dtype=np.int64)
    for j, k in zip(u, kappa):
        prod *= _agreement(net, j, k)
    return Fraction(int(prod.sum()), net.n * (net.b - 1) ** len(u))


def empirical_gain(net: DigitalNet, u: Sequence[int], kappa: Sequence[int]) -> float:
    return float(empirical_gain_exact(net, u, kappa))


@lru_cache(maxsize=None)
def closed_form_gain_exact(b: int, m: int, u_size: int, k_total: int) -> Fraction:
    """Gain of a (0,m,s)-net as a function of |u| and |kappa| only."""
    if u_size < 1 or k_total < 0:
        raise ValueError("need u_size >= 1 and k_total >= 0")
    if k_total >= m:
        return Fraction(1)
    if u_size + k_total <= m:
        return Fraction(0)
    r = m - k_total
    bracket = (-b) ** r * comb(u_size - 1, r) - sum(comb(u_size, j) * (-b) ** j for j in range(r + 1))
    return 1 + Fraction(bracket, (1 - b) ** u_size)


def closed_form_gain(b: int, m: int, u_size: int, k_total: int) -> float:
    return float(closed_form_gain_exact(b, m, u_size, k_total))


def gain_lower_bound_exact(b: int, m: int, s: int) -> Fraction:
    if b < max(s, 2):
        raise ValueError(f"the gain bound needs b >= max(s, 2); got b={b}, s={s}")
    e = min(m, s - 2)
    return Fraction(b, b - 1) ** e * (1 - Fraction(e, b - 1))


def gain_lower_bound(b: int, m: int, s: int) -> float:
    return float(gain_lower_bound_exact(b, m, s))


@dataclass
class GainRow:
    b: int
    m: int
    u: int
    k: int
    gamma_closed: Fraction
    gamma_empirical: Fraction | None
    c_g: Fraction | None


@dataclass
class GainTable:
    """Gain coefficients keyed by (|u|, |kappa|)."""

    b: int
    m: int
    s: int
    source: str
    rows: list[GainRow] = field(default_factory=list)

    def value(self, u: int, k: int) -> Fraction:
        for row in self.rows:
            if row.u == u and row.k == k:
                return row.gamma_empirical if self.source == "empirical" else row.gamma_closed
        raise KeyError((u, k))

    def mismatches(self) -> list[GainRow]:
        return [r for r in self.rows if r.gamma_empirical is not None and r.gamma_empirical != r.gamma_closed]

    def to_csv(self) -> str:
        lines = ["b,m,u,k,gamma_closed,gamma_empirical,c_g"]
        for r in self.rows:
            emp = "" if r.gamma_empirical is None else repr(float(r.gamma_empirical))
            cg = "" if r.c_g is None else repr(float(r.c_g))
            lines.append(f"{r.b},{r.m},{r.u},{r.k},{float(r.gamma_closed)!r},{emp},{cg}")
        return "\n".join(lines) + "\n"


def gain_table(b: int, m: int, s: int, k_max: int | None = None, net: DigitalNet | None = None) -> GainTable:
    """Closed-form gains for |u| <= s, |kappa| <= k_max, with empirical values from ``net``.

    The empirical entry uses coordinates ``0 .. u-1`` and checks that every
    composition of ``k`` over them gives the same rational; a disagreement
    between compositions is stored as ``None``.
    """
    k_max = m + 2 if k_max is None else k_max
    cg = gain_lower_bound_exact(b, m, s) if b >= max(s, 2) else None
    table = GainTable(b, m, s, "empirical" if net is not None else "closed-form")
    for u in range(1, s + 1):
        for k in range(k_max + 1):
            emp = None
            if net is not None:
                vals = {empirical_gain_exact(net, range(u), kappa) for kappa in compositions(k, u)}
                emp = vals.pop() if len(vals) == 1 else None
            table.rows.append(GainRow(b, m, u, k, closed_form_gain_exact(b, m, u, k), emp, cg))
    return table


# --- quadrature on split cells --------------------------------------------


def subcell_centroids(region: Region, path: Sequence[int], depth: int) -> np.ndarray:
    """Centroids of the ``b**depth`` level-(len(path)+depth) subcells of a cell, in index order."""
    b = region.b
    idx = np.arange(b**depth)
    tail = np.stack([(idx // b ** (depth - 1 - k)) % b for k in range(depth)], axis=1).reshape(b**depth, depth)
    head = np.broadcast_to(np.asarray(path, dtype=np.int64), (b**depth, len(path)))
    return region.phi(np.concatenate([head, tail], axis=1))


def _tensor_eval(f: Func, dom: ProductDomain, grids: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate f on the tensor product of per-component point grids."""
    shape = tuple(g.shape[0] for g in grids)
    pts = np.empty(shape + (dom.dim,))
    for j, (g, sl) in enumerate(zip(grids, dom.slices)):
        view = [1] * len(shape) + [g.shape[1]]
        view[j] = g.shape[0]
        pts[..., sl] = g.reshape(view)
    vals = np.asarray(f(pts.reshape(-1, dom.dim)), dtype=float).reshape(shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand is not finite on the quadrature grid")
    return vals


def _richardson_factor(dom: ProductDomain) -> float:
    d = max(r.d for r in dom.components)
    return dom.b ** (2.0 / d)


@dataclass(frozen=True)
class QuadratureResult:
    value: np.ndarray
    error: float
    converged: bool


def _romberg(levels: Sequence[np.ndarray], rho: float) -> list[np.ndarray]:
    """Two Richardson sweeps over consecutive levels, removing rho^-L and rho^-2L error terms."""
    first = [b + (b - a) / (rho - 1) for a, b in zip(levels, levels[1:])]
    r2 = rho * rho
    return [b + (b - a) / (r2 - 1) for a, b in zip(first, first[1:])]


def _richardson(means_at: Callable[[int], np.ndarray], q: int, rho: float) -> QuadratureResult:
    """Romberg extrapolation ending at depth q+1; the error is its distance from the one ending at q.

    Depth q = 1 falls back to a single sweep over (0, 1, 2).
    """
    lo = max(q - 2, 0)
    ms = [means_at(r) for r in range(lo, q + 2)]
    if len(ms) == 4:
        prev, value = _romberg(ms, rho)
    else:
        prev = ms[1] + (ms[1] - ms[0]) / (rho - 1)
        value = ms[2] + (ms[2] - ms[1]) / (rho - 1)
    err = float(np.max(np.abs(value - prev))) if value.size else 0.0
    scale = float(np.max(np.abs(value))) if value.size else 0.0
    return QuadratureResult(value, err, err <= ATOL + RTOL * scale)


def _flag(result: QuadratureResult, what: str, strict: bool) -> None:
    if result.converged:
        return
    msg = f"{what}: refinement levels disagree by {result.error:.3g}"
    if strict:
        raise QuadratureError(msg)
    warnings.warn(msg, QuadratureWarning, stacklevel=3)


def _block_means(f: Func, dom: ProductDomain, levels: Sequence[int], q: int) -> np.ndarray:
    grids = [r.centroids(L + q) for r, L in zip(dom.components, levels)]
    vals = _tensor_eval(f, dom, grids)
    split = []
    for L in levels:
        split.extend([dom.b**L, dom.b**q])
    vals = vals.reshape(split)
    return vals.mean(axis=tuple(range(1, 2 * len(levels), 2)))


def cell_means(f: Func, dom: ProductDomain, levels: Sequence[int], q: int = 3, strict: bool = False) -> QuadratureResult:
    """Normalised means of f over every product cell at the given per-component levels.

    ``value`` has shape ``(b**levels[0], ..., b**levels[s-1])``; a level of
    0 integrates that component out.
    """
    if len(levels) != dom.s:
        raise ValueError("one level per component required")
    if q < 1:
        raise ValueError("need q >= 1")
    res = _richardson(lambda r: _block_means(f, dom, levels, r), q, _richardson_factor(dom))
    _flag(res, "cell means", strict)
    return res


def integrate(f: Func, dom: ProductDomain, q: int = 5, strict: bool = False) -> float:
    """Normalised mean (1/vol) int f over the whole domain."""
    return float(cell_means(f, dom, [0] * dom.s, q, strict).value.reshape(()))


# --- wavelets --------------------------------------------------------------


def _index_of(path: np.ndarray, b: int) -> np.ndarray:
    t = np.zeros(path.shape[0], dtype=np.int64)
    for k in range(path.shape[1]):
        t = t * b + path[:, k]
    return t


def psi_eval(region: Region, k: int, t: int, c: int, x: np.ndarray) -> np.ndarray:
    """``b^((k-1)/2) (b N_ktc(x) - W_kt(x))`` with membership from cell addressing."""
    b = region.b
    if not (0 <= t < b**k and 0 <= c < b):
        raise ValueError("wavelet index out of range")
    path = region.locate(np.asarray(x, dtype=float).reshape(-1, region.d), k + 1)
    wide = _index_of(path[:, :k], b) == t
    narrow = wide & (path[:, k] == c)
    return b ** ((k - 1) / 2) * (b * narrow.astype(float) - wide.astype(float))


def psi_norm_squared(region: Region, k: int, t: int, c: int, extra: int = 4) -> float:
    """Normalised int psi^2 by the centroid rule at level k + extra."""
    vals = psi_eval(region, k, t, c, region.centroids(k + extra))
    return float(np.mean(vals**2))


@dataclass(frozen=True)
class WaveletIndex:
    """Multi-index (u, kappa, tau, gamma); entries aligned with sorted u."""

    u: tuple[int, ...]
    kappa: tuple[int, ...]
    tau: tuple[int, ...]
    gamma: tuple[int, ...]

    def validate(self, b: int, s: int) -> None:
        if not (len(self.u) == len(self.kappa) == len(self.tau) == len(self.gamma)):
            raise ValueError("u, kappa, tau, gamma must have equal length")
        if list(self.u) != sorted(set(self.u)) or any(not 0 <= j < s for j in self.u):
            raise ValueError("u must be a sorted subset of the coordinates")
        for k, t, c in zip(self.kappa, self.tau, self.gamma):
            if k < 0 or not 0 <= t < b**k or not 0 <= c < b:
                raise ValueError("wavelet index out of range")


def _path(t: int, k: int, b: int) -> tuple[int, ...]:
    return tuple((t // b ** (k - 1 - i)) % b for i in range(k))


def _child_means(f: Func, dom: ProductDomain, idx: WaveletIndex, q: int) -> np.ndarray:
    grids = []
    split = []
    for j, region in enumerate(dom.components):
        if j in idx.u:
            pos = idx.u.index(j)
            path = _path(idx.tau[pos], idx.kappa[pos], dom.b)
            grids.append(subcell_centroids(region, path, 1 + q))
            split.extend([dom.b, dom.b**q])
        else:
            grids.append(region.centroids(q))
            split.extend([1, dom.b**q])
    vals = _tensor_eval(f, dom, grids).reshape(split)
    return vals.mean(axis=tuple(range(1, 2 * dom.s, 2)))


def inner_product(f: Func, dom: ProductDomain, idx: WaveletIndex, q: int = 3, strict: bool = False) -> float:
    """<f, psi_{u kappa tau gamma}> under the normalised product measure."""
    if q < 1:
        raise ValueError("need q >= 1")
    idx.validate(dom.b, dom.s)
    b = dom.b
    scale = 1.0
    for k in idx.kappa:
        scale *= b ** ((k - 1) / 2) * float(b) ** (-k)

    def coefficient(r: int) -> np.ndarray:
        # extrapolating the coefficient itself keeps the error estimate free
        # of parts of f that cancel in the child-minus-parent difference
        means = _child_means(f, dom, idx, r)
        for axis in range(dom.s):
            if axis in idx.u:
                c = idx.gamma[idx.u.index(axis)]
                means = np.expand_dims(np.take(means, c, axis=axis) - means.mean(axis=axis), axis)
        return np.asarray(scale * means.reshape(-1)[0])

    res = _richardson(coefficient, q, _richardson_factor(dom))
    _flag(res, f"inner product {idx}", strict)
    return float(res.value)


def _detail(means: np.ndarray, axis: int, b: int) -> np.ndarray:
    # (P_{k+1} - P_k) along one axis: child mean minus parent mean; equal
    # children give exactly zero
    shape = means.shape
    blocks = means.reshape(shape[:axis] + (shape[axis] // b, b) + shape[axis + 1 :])
    centred = blocks - np.take(blocks, [0], axis=axis + 1)
    centred = centred - centred.mean(axis=axis + 1, keepdims=True)
    return centred.reshape(shape)


def nu_cells(f: Func, dom: ProductDomain, u: Sequence[int], kappa: Sequence[int], q: int = 3, strict: bool = False) -> np.ndarray:
    """Values of nu_{u kappa} on its constancy cells.

    Shape ``(b**(k_j + 1) for j in u)``; components outside u are integrated out.
    """
    u, kappa = tuple(u), tuple(kappa)
    if len(u) != len(kappa):
        raise ValueError("u and kappa must have equal length")
    if not u:
        return np.asarray(integrate(f, dom, q, strict))
    if q < 1:
        raise ValueError("need q >= 1")
    levels = [0] * dom.s
    for j, k in zip(u, kappa):
        levels[j] = k + 1

    def details(r: int) -> np.ndarray:
        means = _block_means(f, dom, levels, r).reshape([dom.b ** levels[j] for j in u])
        for axis in range(len(u)):
            means = _detail(means, axis, dom.b)
        return means

    res = _richardson(details, q, _richardson_factor(dom))
    _flag(res, f"nu cells u={u} kappa={kappa}", strict)
    return res.value


def nu_eval(f: Func, dom: ProductDomain, u: Sequence[int], kappa: Sequence[int], x: np.ndarray, q: int = 3) -> np.ndarray:
    """nu_{u kappa}(x) for points x of shape ``(n, dim)``."""
    cells = nu_cells(f, dom, u, kappa, q)
    if not tuple(u):
        return np.full(np.atleast_2d(x).shape[0], float(cells))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    index = []
    for j, k in zip(u, kappa):
        region = dom.components[j]
        path = region.locate(x[:, dom.slices[j]], k + 1)
        index.append(_index_of(path, dom.b))
    return cells[tuple(index)]


def sigma_uk(f: Func, dom: ProductDomain, u: Sequence[int], kappa: Sequence[int], q: int = 3) -> float:
    """int nu_{u kappa}^2 (normalised): cells have equal volume, so a plain mean."""
    if not tuple(u):
        return 0.0
    return float(np.mean(nu_cells(f, dom, u, kappa, q) ** 2))


def sigma_total(f: Func, dom: ProductDomain, q: int = 5) -> float:
    """int (f - mu)^2 (normalised), by the same centroid rule."""
    mu = integrate(f, dom, q)
    return integrate(lambda x: (np.asarray(f(x)) - mu) ** 2, dom, q)


def triangle_sigma_k(f: Func, k: int, region: Region | None = None, q: int = 3) -> float:
    """Level-k variance of a single split region from cell integrals.

    sum_t sum_{l=1}^{b-1} b^(k+1) / (l (l+1)) [sum_{i=1}^{l} (I_{i-1} - I_l)]^2,
    where I_c is the (normalised) integral over child c of cell (k, t).
    """
    region = Triangle() if region is None else region
    dom = ProductDomain([region])
    b = region.b
    means = cell_means(f, dom, [k + 1], q).value
    ints = means.reshape(b**k, b) * float(b) ** (-(k + 1))
    total = 0.0
    for ell in range(1, b):
        inner = (ints[:, :ell] - ints[:, ell : ell + 1]).sum(axis=1)
        total += b ** (k + 1) / (ell * (ell + 1)) * float(np.sum(inner**2))
    return total


def wavelet_sigma_k(f: Func, k: int, region: Region | None = None, q: int = 3) -> float:
    """Same quantity as a direct sum of squared wavelet coefficients over (t, c)."""
    region = Triangle() if region is None else region
    dom = ProductDomain([region])
    total = 0.0
    for t in range(region.b**k):
        for c in range(region.b):
            total += inner_product(f, dom, WaveletIndex((0,), (k,), (t,), (c,)), q) ** 2
    return total


# --- variance identity -----------------------------------------------------


@dataclass
class VarianceIdentity:
    lhs: float
    lhs_se: float
    rhs: float
    tail_bound: float
    gap: float
    terms: list[dict]

    def holds(self, z: float = 3.0) -> bool:
        return self.gap <= z * self.lhs_se + self.tail_bound

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "lhs": self.lhs,
            "lhs_se": self.lhs_se,
            "rhs": self.rhs,
            "tail_bound": self.tail_bound,
            "gap": self.gap,
            "terms": self.terms,
        }


def variance_se(estimates: np.ndarray) -> float:
    """Standard error of the sample variance from the fourth central moment."""
    x = np.asarray(estimates, dtype=float)
    N = x.size
    d = x - x.mean()
    m2 = float(np.mean(d**2))
    m4 = float(np.mean(d**4))
    return math.sqrt(max(0.0, (m4 - m2 * m2 * (N - 3) / (N - 1)) / N))


def variance_identity_check(
    f: Func,
    net: DigitalNet,
    dom: ProductDomain,
    k_max: int = 4,
    N: int = 5000,
    seed: int = 1,
    q: int = 3,
) -> VarianceIdentity:
    """Compare the replication variance with (1/n) sum_k Gamma_k sigma_k^2 (s = 1).

    Terms beyond k_max are bounded with the decay sigma_k^2 <= C b^(-2k/d),
    C fitted as the largest observed sigma_k^2 b^(2k/d); gains are at most 1
    past level m for s = 1.
    """
    from .estimator import replicate

    if dom.s != 1 or net.s != 1:
        raise ValueError("the variance identity check is restricted to s = 1")
    if net.n > 256 or k_max > 4:
        raise ValueError("keep the instance small: n <= 256 and k_max <= 4")
    region = dom.components[0]
    b, m, n = net.b, net.m, net.n
    est = replicate(f, net, dom, N, seed)
    lhs = float(np.var(est, ddof=1))
    se = variance_se(est)
    terms = []
    rhs = 0.0
    decay = b ** (2.0 / region.d)
    scale = 0.0
    for k in range(k_max + 1):
        gamma = closed_form_gain_exact(b, m, 1, k)
        sig = sigma_uk(f, dom, (0,), (k,), q)
        scale = max(scale, sig * decay**k)
        contrib = 0.0 if gamma == 0 else float(gamma) * sig / n
        rhs += contrib
        terms.append({"u": 1, "k": k, "gamma": float(gamma), "sigma2": sig, "contribution": contrib})
    tail = scale * decay ** (-(k_max + 1)) / (1 - 1 / decay) / n
    return VarianceIdentity(lhs, se, rhs, tail, abs(lhs - rhs), terms)


# --- Example-2 reference value ---------------------------------------------


def example2_series(terms: int = 40) -> float:
    """int over T x T of p e^p, p = x11 x12 x21 x22, from the moment series.

    p e^p = sum_n p^(n+1)/n! and int_T (xy)^a = (a!)^2/(2a+2)!.
    """
    total = Fraction(0)
    for n in range(terms):
        a = n + 1
        mom = Fraction(math.factorial(a) ** 2, math.factorial(2 * a + 2))
        total += mom * mom / math.factorial(n)
    return float(total)


@dataclass(frozen=True)
class ReferenceValue:
    value: float
    richardson_error: float
    level: int
    series_value: float


def example2_reference(level: int = 10, terms: int = 40) -> ReferenceValue:
    """Product centroid rule up to the given split level, Romberg-extrapolated.

    The product rule of a function of x11 x12 x21 x22 expanded in powers
    factorises, so the level-L rule on T x T is evaluated through per-triangle
    centroid moments (b**L points each) instead of a b**(2L) grid.
    """
    tri = Triangle()

    def rule(L: int) -> float:
        c = tri.centroids(L)
        p = c[:, 0] * c[:, 1]
        total = 0.0
        power = p.copy()
        for n in range(terms):
            mom = float(np.mean(power)) * tri.volume
            total += mom * mom / math.factorial(n)
            power *= p
        return total

    prev, value = _romberg([rule(L) for L in range(level - 3, level + 1)], 4.0)
    return ReferenceValue(float(value), abs(float(value - prev)), level, example2_series(terms))
