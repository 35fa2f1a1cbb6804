"""Equal-weight estimates, replication variance, confidence intervals and W samples."""

from __future__ import annotations

import json
import math
import runpy
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .domains import ProductDomain, Triangle
from .nets import DigitalNet, default_depth
from .scramble import SCHEME, root_hashes, scramble_digits

SCHEMA_VERSION = 1
MU_EXAMPLE1 = Fraction(41, 5040)


class NonFiniteIntegrandError(ValueError):
    """Raised when an integrand returns NaN or an infinity."""


@dataclass(frozen=True)
class Integrand:
    """Vectorised integrand: ``fn`` maps an ``(n, dim)`` array to ``(n,)`` values."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    mu: float | None = None
    mu_source: str | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.fn(x), dtype=float)
        return np.broadcast_to(out, x.shape[:-1]) if out.ndim == 0 else out


def _require_triangle_pair(dom: ProductDomain, name: str) -> None:
    if dom.s != 2 or not all(isinstance(r, Triangle) for r in dom.components):
        raise ValueError(f"integrand {name!r} is defined on a product of two triangles")


def builtin_integrand(name: str, dom: ProductDomain) -> Integrand:
    """Built-in integrands.

    ``example1`` and ``example2`` live on a product of two triangles and are
    scaled by the domain volume, so the equal-weight mean estimates the plain
    Lebesgue integral (41/5040 for ``example1`` on the standard triangles).
    ``x1`` and ``x1x2`` read the first component's coordinates; their ``mu``
    is the volume-normalised mean.  ``constant`` or ``constant:<c>`` is flat.
    """
    if name == "constant" or name.startswith("constant:"):
        c = float(name.split(":", 1)[1]) if ":" in name else 1.0
        return Integrand(name, lambda x: np.full(x.shape[:-1], c), c, "exact")
    if name == "example1":
        _require_triangle_pair(dom, name)
        vol = dom.volume
        mu = float(MU_EXAMPLE1) if all(r == Triangle() for r in dom.components) else None

        def f1(x: np.ndarray) -> np.ndarray:
            return vol * (x[..., 0] * x[..., 1] ** 2 - x[..., 2] ** 3 * x[..., 3] ** 4)

        return Integrand(name, f1, mu, "exact" if mu is not None else None)
    if name == "example2":
        _require_triangle_pair(dom, name)
        vol = dom.volume

        def f2(x: np.ndarray) -> np.ndarray:
            p = x[..., 0] * x[..., 1] * x[..., 2] * x[..., 3]
            return vol * p * np.exp(p)

        mu = None
        if all(r == Triangle() for r in dom.components):
            from .analysis import example2_series

            mu = example2_series()
        return Integrand(name, f2, mu, "series" if mu is not None else None)
    if name == "x1":
        return Integrand(name, lambda x: x[..., 0].copy(), _normalised_moment(dom, (1, 0)), "exact")
    if name == "x1x2":
        if dom.components[0].d != 2:
            raise ValueError("x1x2 needs a two-dimensional first component")
        return Integrand(name, lambda x: x[..., 0] * x[..., 1], _normalised_moment(dom, (1, 1)), "exact")
    raise ValueError(f"unknown integrand {name!r}; built-ins: constant, example1, example2, x1, x1x2")


def _normalised_moment(dom: ProductDomain, powers: tuple[int, int]) -> float | None:
    region = dom.components[0]
    if region == Triangle():
        a, c = powers
        # int_T x^a y^c = a! c! / (a + c + 2)!, area 1/2
        return 2 * math.factorial(a) * math.factorial(c) / math.factorial(a + c + 2)
    if region.d == 1 and powers[1] == 0:
        return (region.lo + region.hi) / 2 if powers[0] == 1 else None
    return None


def load_integrand(spec: str, dom: ProductDomain) -> Integrand:
    """A built-in name, or a Python file defining ``f(x)`` (and optionally ``MU``)."""
    path = Path(spec)
    if path.suffix == ".py" and path.exists():
        ns = runpy.run_path(str(path))
        if "f" not in ns:
            raise ValueError(f"{spec}: integrand file must define f(x)")
        mu = ns.get("MU")
        return Integrand(path.stem, ns["f"], None if mu is None else float(mu), "user" if mu is not None else None)
    return builtin_integrand(spec, dom)


def estimate(f: Callable[[np.ndarray], np.ndarray], pts: np.ndarray) -> float:
    """Equal-weight mean of ``f`` over the points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("need at least one point")
    vals = np.asarray(f(pts), dtype=float)
    _check_finite(vals, pts)
    return float(vals.mean())


def _check_finite(vals: np.ndarray, pts: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(vals.reshape(-1)))
    if bad.size:
        i = int(bad[0])
        point = pts.reshape(-1, pts.shape[-1])[i]
        raise NonFiniteIntegrandError(f"integrand returned {vals.reshape(-1)[i]} at point {i}: {point.tolist()}")


def _run_chunks(work: Callable[[np.ndarray], np.ndarray], roots: np.ndarray, chunk: int, threads: int) -> np.ndarray:
    pieces = [roots[i : i + chunk] for i in range(0, len(roots), chunk)]
    if threads > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, pieces))
    else:
        parts = [work(p) for p in pieces]
    return np.concatenate(parts) if parts else np.empty(0)


def _chunk_size(n: int, s: int, K: int) -> int:
    # keep each batch of scrambled digits around 32 MB
    return max(1, min(256, (32 << 20) // max(1, n * s * K)))


def replicate(
    f: Callable[[np.ndarray], np.ndarray],
    net: DigitalNet,
    dom: ProductDomain,
    N: int,
    seed: int,
    *,
    first: int = 1,
    threads: int = 1,
) -> np.ndarray:
    """Estimates for replications ``first .. first + N - 1`` of the scrambled net.

    Replication l scrambles with key (seed, l); results do not depend on
    chunking or thread count.
    """
    if N < 1:
        raise ValueError("need N >= 1")
    if net.b != dom.b or net.s != dom.s:
        raise ValueError("net and domain disagree on base or dimension")
    roots = root_hashes(seed, range(first, first + N))

    def work(batch: np.ndarray) -> np.ndarray:
        pts = dom.map_digits(scramble_digits(net.digits, net.b, batch))
        vals = np.asarray(f(pts.reshape(-1, dom.dim)), dtype=float)
        _check_finite(vals, pts)
        return vals.reshape(len(batch), net.n).mean(axis=1)

    return _run_chunks(work, roots, _chunk_size(net.n, net.s, net.K), threads)


def uniform_points(dom: ProductDomain, n: int, root: int, K: int | None = None) -> np.ndarray:
    """``n`` iid uniform points: each point scrambles the all-zero digit string."""
    K = default_depth(dom.b, 1) if K is None else K
    zeros = np.zeros((n, dom.s, K), dtype=np.uint8)
    digits = scramble_digits(zeros, dom.b, np.array([root], dtype=np.uint64), per_point=True)[0]
    return dom.map_digits(digits)


def replicate_mc(
    f: Callable[[np.ndarray], np.ndarray],
    dom: ProductDomain,
    n: int,
    N: int,
    seed: int,
    *,
    first: int = 1,
    threads: int = 1,
) -> np.ndarray:
    """Plain Monte Carlo estimates with n iid points per replication."""
    if N < 1 or n < 1:
        raise ValueError("need n >= 1 and N >= 1")
    K = default_depth(dom.b, 1)
    zeros = np.zeros((n, dom.s, K), dtype=np.uint8)
    roots = root_hashes(seed, range(first, first + N))

    def work(batch: np.ndarray) -> np.ndarray:
        pts = dom.map_digits(scramble_digits(zeros, dom.b, batch, per_point=True))
        vals = np.asarray(f(pts.reshape(-1, dom.dim)), dtype=float)
        _check_finite(vals, pts)
        return vals.reshape(len(batch), n).mean(axis=1)

    return _run_chunks(work, roots, _chunk_size(n, dom.s, K), threads)


def variance_estimate(estimates: Sequence[float]) -> float:
    """Sample variance with divisor N - 1."""
    est = np.asarray(estimates, dtype=float)
    if est.size < 2:
        raise ValueError("variance needs at least two replications")
    return float(np.var(est, ddof=1))


# Acklam's rational approximation to the inverse normal CDF (relative error
# about 1.15e-9), followed by one Halley step against erfc.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError("quantile level must lie in (0, 1)")
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1
        )
    elif p <= 1 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1
        )
    else:
        q = math.sqrt(-2 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1
        )
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2))


def confidence_interval(mu_hat: float, sigma_hat: float, alpha: float) -> tuple[float, float]:
    """``mu_hat -/+ z_{alpha/2} sigma_hat`` with z the upper alpha/2 normal quantile."""
    if sigma_hat < 0:
        raise ValueError("sigma_hat must be non-negative")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if sigma_hat == 0:
        return (mu_hat, mu_hat)
    half = normal_quantile(1 - alpha / 2) * sigma_hat
    return (mu_hat - half, mu_hat + half)


def standardized_W(estimates: Sequence[float], mu: float) -> np.ndarray:
    """``W_l = (mu_hat_l - mu) / sigma_hat`` with the plug-in replication sigma."""
    est = np.asarray(estimates, dtype=float)
    sigma = math.sqrt(variance_estimate(est))
    if sigma == 0:
        raise ValueError("replication variance is zero; W is undefined")
    return (est - mu) / sigma


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution."""
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        # small-lambda (Jacobi theta) form converges faster here
        y = math.exp(-math.pi**2 / (8 * lam * lam))
        s = sum(y ** ((2 * k - 1) ** 2) for k in range(1, 8))
        return max(0.0, min(1.0, 1.0 - math.sqrt(2 * math.pi) / lam * s))
    return max(0.0, min(1.0, 2.0 * sum((-1) ** (k - 1) * math.exp(-2 * k * k * lam * lam) for k in range(1, 101))))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float
    n: int


def ks_test(samples: Sequence[float]) -> KSResult:
    """Two-sided one-sample KS test against N(0, 1), asymptotic p-value.

    Uses Stephens' finite-sample correction ``(sqrt(n) + 0.12 + 0.11/sqrt(n)) D``.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("KS test needs samples")
    cdf = np.array([normal_cdf(v) for v in x])
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    rn = math.sqrt(n)
    return KSResult(d, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d), n)


@dataclass
class EstimateReport:
    n: int
    N: int
    estimates: list[float]
    mean: float
    variance: float | None
    alpha: float
    ci: tuple[float, float] | None
    W: list[float] | None = None
    mu: float | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci"] = list(self.ci) if self.ci is not None else None
        out["schema_version"] = SCHEMA_VERSION
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def summarize(
    estimates: np.ndarray, n: int, alpha: float, mu: float | None, provenance: dict
) -> EstimateReport:
    """Pool replications; the interval is for the pooled mean (std error sigma_hat / sqrt(N))."""
    est = np.asarray(estimates, dtype=float)
    N = int(est.size)
    var = variance_estimate(est) if N >= 2 else None
    ci = confidence_interval(float(est.mean()), math.sqrt(var / N), alpha) if var is not None else None
    W = None
    if mu is not None and var:
        W = standardized_W(est, mu).tolist()
    return EstimateReport(n, N, est.tolist(), float(est.mean()), var, alpha, ci, W, mu, provenance)


def estimate_report(
    f: Integrand,
    net: DigitalNet,
    dom: ProductDomain,
    N: int,
    seed: int,
    alpha: float = 0.05,
    threads: int = 1,
) -> EstimateReport:
    est = replicate(f, net, dom, N, seed, threads=threads)
    prov = {
        "sampler": "scrambled-net",
        "integrand": f.name,
        "mu_source": f.mu_source,
        "net": {"b": net.b, "m": net.m, "t": net.t, "s": net.s, "K": net.K},
        "key": {"seed": seed, "replications": [1, N], "scheme": SCHEME},
        "domain": dom.to_text(),
    }
    return summarize(est, net.n, alpha, f.mu, prov)


def mc_baseline(
    f: Integrand,
    dom: ProductDomain,
    n: int,
    N: int,
    seed: int,
    alpha: float = 0.05,
    threads: int = 1,
) -> EstimateReport:
    """Plain Monte Carlo with uniform points drawn by per-point scrambling."""
    est = replicate_mc(f, dom, n, N, seed, threads=threads)
    prov = {
        "sampler": "monte-carlo",
        "integrand": f.name,
        "mu_source": f.mu_source,
        "key": {"seed": seed, "replications": [1, N], "scheme": SCHEME, "per_point": True},
        "domain": dom.to_text(),
    }
    return summarize(est, n, alpha, f.mu, prov)
