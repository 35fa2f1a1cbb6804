"""Experiment runners behind the command line: variance decay, normality, CI coverage, ..."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import example2_reference, gain_table, variance_identity_check
from .domains import ProductDomain
from .estimator import (
    Integrand,
    confidence_interval,
    ks_test,
    replicate,
    replicate_mc,
    standardized_W,
    variance_estimate,
)
from .fields import build_field
from .nets import check_generators, faure_generators, faure_net, verify_net

KINDS = ("variance-decay", "normality", "ci-coverage", "mc-compare", "gain-table", "net-verify", "variance-identity")


@dataclass
class ExperimentSpec:
    kind: str
    integrand: str = "example1"
    domain: str = "T2^2"
    m_values: tuple[int, ...] = (6,)
    N: int = 300
    seed: int = 1
    alpha: float = 0.05
    out: str | None = None
    fmt: str = "csv"
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not self.m_values:
            raise ValueError("m-range must be non-empty")
        if self.kind in ("variance-decay", "normality", "ci-coverage", "mc-compare", "variance-identity") and self.N < 2:
            raise ValueError("variance experiments need N >= 2")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass
class Table:
    columns: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def fit_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of y on x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def _net_for(dom: ProductDomain, m: int):
    return faure_net(dom.b, dom.s, m)


def run_variance_decay(f: Integrand, dom: ProductDomain, m_values, N: int, seed: int, threads: int = 1) -> Table:
    """Replication variance of the scrambled-net and Monte Carlo estimators per m."""
    rows = []
    for m in m_values:
        net = _net_for(dom, m)
        sgn = variance_estimate(replicate(f, net, dom, N, seed, threads=threads))
        mc = variance_estimate(replicate_mc(f, dom, net.n, N, seed, threads=threads))
        rows.append([m, net.n, sgn, mc])
    table = Table(["m", "n", "var_sgn", "var_mc"], rows)
    if len(rows) >= 2:
        logn = np.log([r[1] for r in rows])
        for col, name in ((2, "slope_sgn"), (3, "slope_mc")):
            vals = np.array([r[col] for r in rows])
            table.summary[name] = fit_slope(logn, np.log(vals)) if np.all(vals > 0) else None
    return table


def rate_constancy(table: Table, m_min: int = 4) -> float | None:
    """max/min of var_sgn * n^2 / log n over rows with m >= m_min."""
    vals = [v * n * n / math.log(n) for m, n, v, _ in table.rows if m >= m_min]
    if len(vals) < 2 or min(vals) <= 0:
        return None
    return max(vals) / min(vals)


def run_normality(f: Integrand, dom: ProductDomain, m: int, N: int, seed: int, threads: int = 1) -> Table:
    """W samples and their KS distance to N(0, 1)."""
    if f.mu is None:
        raise ValueError("normality needs an integrand with known mu")
    est = replicate(f, _net_for(dom, m), dom, N, seed, threads=threads)
    W = standardized_W(est, f.mu)
    ks = ks_test(W)
    table = Table(["replication", "W"], [[i + 1, float(w)] for i, w in enumerate(W)])
    table.summary = {"m": m, "N": N, "ks_statistic": ks.statistic, "ks_pvalue": ks.pvalue}
    return table


def _interval_batches(est: np.ndarray, R: int, N: int, alpha: float, inflate: float) -> list[tuple[float, float, float, float]]:
    # each interval: centre from one replication, sigma from N others
    out = []
    blocks = est.reshape(R, N + 1)
    for block in blocks:
        centre = float(block[0])
        sigma = math.sqrt(variance_estimate(block[1:])) * inflate
        lo, hi = confidence_interval(centre, sigma, alpha)
        out.append((centre, sigma, lo, hi))
    return out


def run_ci_coverage(
    f: Integrand,
    dom: ProductDomain,
    m: int,
    R: int,
    N: int,
    seed: int,
    alpha: float = 0.05,
    inflate: float = 1.0,
    threads: int = 1,
) -> Table:
    """R independent intervals ``mu_hat +/- z sigma_hat``.

    Every interval uses N + 1 fresh replications: one gives the centre
    ``mu_hat`` and the other N give ``sigma_hat``, so centre and width are
    independent.  ``inflate`` multiplies sigma_hat (fault injection).
    """
    if f.mu is None:
        raise ValueError("coverage needs an integrand with known mu")
    est = replicate(f, _net_for(dom, m), dom, R * (N + 1), seed, threads=threads)
    rows = []
    for r, (centre, sigma, lo, hi) in enumerate(_interval_batches(est, R, N, alpha, inflate)):
        rows.append([r + 1, centre, sigma, lo, hi, int(lo <= f.mu <= hi)])
    table = Table(["interval", "mu_hat", "sigma_hat", "lo", "hi", "covered"], rows)
    table.summary = {"m": m, "R": R, "N": N, "alpha": alpha, "mu": f.mu, "coverage": sum(r[5] for r in rows) / R}
    return table


def run_mc_compare(
    f: Integrand,
    dom: ProductDomain,
    m: int,
    R: int,
    N: int,
    seed: int,
    alpha: float = 0.05,
    threads: int = 1,
    mu: float | None = None,
) -> Table:
    """Paired scrambled-net and Monte Carlo intervals at n = b^m."""
    net = _net_for(dom, m)
    if mu is None:
        mu = f.mu
    sgn = _interval_batches(replicate(f, net, dom, R * (N + 1), seed, threads=threads), R, N, alpha, 1.0)
    mc = _interval_batches(replicate_mc(f, dom, net.n, R * (N + 1), seed, threads=threads), R, N, alpha, 1.0)
    rows = []
    for r, (a, c) in enumerate(zip(sgn, mc)):
        row = [r + 1, a[2], a[3], a[3] - a[2], c[2], c[3], c[3] - c[2]]
        if mu is not None:
            row += [int(a[2] <= mu <= a[3]), int(c[2] <= mu <= c[3])]
        rows.append(row)
    cols = ["pair", "sgn_lo", "sgn_hi", "sgn_width", "mc_lo", "mc_hi", "mc_width"]
    if mu is not None:
        cols += ["sgn_covers", "mc_covers"]
    table = Table(cols, rows)
    table.summary = {
        "m": m,
        "R": R,
        "N": N,
        "alpha": alpha,
        "mu": mu,
        "sgn_narrower": sum(1 for r in rows if r[3] < r[6]),
    }
    if mu is not None:
        table.summary["sgn_coverage"] = sum(r[7] for r in rows) / R
        table.summary["mc_coverage"] = sum(r[8] for r in rows) / R
    return table


def example2_mu() -> dict:
    ref = example2_reference()
    return {"value": ref.value, "richardson_error": ref.richardson_error, "level": ref.level, "series": ref.series_value}


def run_net_verify(b: int, s: int, m: int, t: int = 0) -> dict:
    gen = faure_generators(build_field(b), s, m)
    singular = check_generators(gen)
    report = verify_net(faure_net(b, s, m), t)
    return {
        "b": b,
        "s": s,
        "m": m,
        "t": t,
        "ok": bool(report.ok and singular is None),
        "shapes_checked": report.shapes_checked,
        "violation": report.violation,
        "singular_shape": list(singular) if singular else None,
    }


def run_gain_table(b: int, m: int, s: int, k_max: int | None = None):
    net = faure_net(b, s, m) if s <= b else None
    return gain_table(b, m, s, k_max, net)


def run_variance_identity(f: Integrand, dom: ProductDomain, m: int, k_max: int, N: int, seed: int):
    return variance_identity_check(f, _net_for(dom, m), dom, k_max, N, seed)
