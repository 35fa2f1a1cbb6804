import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as spi
from scipy import stats

from sgnet.domains import ProductDomain, Triangle, parse_domain
from sgnet.estimator import (
    MU_EXAMPLE1,
    Integrand,
    NonFiniteIntegrandError,
    builtin_integrand,
    confidence_interval,
    estimate,
    estimate_report,
    kolmogorov_sf,
    ks_test,
    load_integrand,
    mc_baseline,
    normal_quantile,
    replicate,
    replicate_mc,
    standardized_W,
    uniform_points,
    variance_estimate,
)
from sgnet.nets import faure_net
from sgnet.scramble import ScrambleKey, scramble_net

T2 = parse_domain("T2^2")


def _monomial(a, c):
    # int over the unit right triangle of x^a y^c
    return Fraction(math.factorial(a) * math.factorial(c), math.factorial(a + c + 2))


def test_example1_mu_from_monomials():
    area = _monomial(0, 0)
    mu = _monomial(1, 2) * area - area * _monomial(3, 4)
    assert mu == MU_EXAMPLE1 == Fraction(41, 5040)


def test_example1_mu_by_numerical_quadrature():
    a, _ = spi.dblquad(lambda y, x: x * y * y, 0, 1, 0, lambda x: 1 - x, epsabs=1e-14)
    c, _ = spi.dblquad(lambda y, x: x**3 * y**4, 0, 1, 0, lambda x: 1 - x, epsabs=1e-14)
    assert a * 0.5 - 0.5 * c == pytest.approx(41 / 5040, abs=1e-12)


def test_constant_integrand_is_exact():
    f = builtin_integrand("constant:2.5", T2)
    est = replicate(f, faure_net(4, 2, 2), T2, 5, seed=3)
    assert np.all(est == 2.5)
    assert variance_estimate(est) == 0.0


def test_single_point_estimate():
    f = builtin_integrand("x1x2", T2)
    assert estimate(f, np.array([[0.25, 0.5, 0.1, 0.1]])) == 0.125
    with pytest.raises(ValueError):
        estimate(f, np.empty((0, 4)))


def test_non_finite_reports_point():
    f = Integrand("bad", lambda x: np.where(x[:, 0] == 0.25, np.inf, x[:, 0]))
    with pytest.raises(NonFiniteIntegrandError, match="point 1"):
        estimate(f, np.array([[0.5, 0.1], [0.25, 0.3]]))
    g = Integrand("nan", lambda x: np.where(x[:, 0] > 0.3, np.nan, 0.0))
    with pytest.raises(NonFiniteIntegrandError):
        replicate(g, faure_net(4, 2, 2), T2, 2, seed=1)


def test_single_replication_is_the_scrambled_net_mean():
    f = builtin_integrand("example1", T2)
    net = faure_net(4, 2, 3)
    est = replicate(f, net, T2, 1, seed=9, first=4)
    pts = T2.map_digits(scramble_net(net, ScrambleKey(9, 4)).digits)
    assert est[0] == pytest.approx(estimate(f, pts), rel=1e-14)


def test_replications_are_deterministic_and_order_free():
    f = builtin_integrand("example1", T2)
    net = faure_net(4, 2, 3)
    full = replicate(f, net, T2, 12, seed=5)
    assert np.array_equal(full, replicate(f, net, T2, 12, seed=5))
    assert np.array_equal(full, replicate(f, net, T2, 12, seed=5, threads=3))
    assert np.array_equal(full[7:], replicate(f, net, T2, 5, seed=5, first=8))
    assert not np.array_equal(full, replicate(f, net, T2, 12, seed=6))


@pytest.mark.parametrize("name", ["example1", "example2", "x1", "x1x2"])
def test_unbiased_within_four_standard_errors(name):
    f = builtin_integrand(name, T2)
    est = replicate(f, faure_net(4, 2, 3), T2, 400, seed=11)
    se = math.sqrt(variance_estimate(est) / est.size)
    assert abs(est.mean() - f.mu) < 4 * se + 1e-15
    mc = replicate_mc(f, T2, 64, 400, seed=11)
    assert abs(mc.mean() - f.mu) < 4 * math.sqrt(variance_estimate(mc) / mc.size)


def test_builtin_means():
    assert builtin_integrand("x1", T2).mu == pytest.approx(1 / 3)
    assert builtin_integrand("x1x2", T2).mu == pytest.approx(1 / 12)
    assert builtin_integrand("x1", parse_domain("I^2", 3)).mu == 0.5
    assert builtin_integrand("example1", ProductDomain([Triangle((0, 0), (2, 0), (0, 2))] * 2)).mu is None
    with pytest.raises(ValueError):
        builtin_integrand("example1", parse_domain("I^2"))
    with pytest.raises(ValueError):
        builtin_integrand("sin", T2)


def test_integrand_file(tmp_path):
    p = tmp_path / "quad.py"
    p.write_text("MU = 0.5\n\ndef f(x):\n    return 2 * x[:, 0] * 0 + 0.5\n")
    f = load_integrand(str(p), T2)
    assert f.name == "quad" and f.mu == 0.5
    assert estimate(f, np.zeros((3, 4))) == 0.5
    q = tmp_path / "nof.py"
    q.write_text("g = 1\n")
    with pytest.raises(ValueError):
        load_integrand(str(q), T2)


def test_variance_examples():
    assert variance_estimate([0, 2]) == 2
    with pytest.raises(ValueError):
        variance_estimate([1.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40), st.floats(-1e3, 1e3))
def test_variance_shift_invariant(xs, c):
    v = variance_estimate(xs)
    assert variance_estimate([x + c for x in xs]) == pytest.approx(v, rel=1e-9, abs=1e-12 * (1 + max(abs(x) for x in xs) ** 2 + c * c))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30, unique=True), st.floats(-10, 10))
def test_W_sum_identity(xs, mu):
    x = np.array(xs)
    if np.std(x) < 1e-6:
        return
    W = standardized_W(x, mu)
    sigma = math.sqrt(variance_estimate(x))
    assert W.sum() * sigma == pytest.approx(x.sum() - x.size * mu, abs=1e-9)


def test_W_example():
    W = standardized_W([3.0, 5.0], 4.0)
    assert np.allclose(W, [-1 / math.sqrt(2), 1 / math.sqrt(2)])
    with pytest.raises(ValueError):
        standardized_W([1.0, 1.0], 0.0)


@pytest.mark.parametrize("p", [1e-10, 1e-4, 0.01, 0.02425, 0.2, 0.5, 0.8, 0.975, 0.999, 1 - 1e-9])
def test_normal_quantile_against_scipy(p):
    assert normal_quantile(p) == pytest.approx(stats.norm.ppf(p), abs=1e-8)


def test_confidence_interval_example():
    lo, hi = confidence_interval(0.0, 1.0, 0.05)
    assert lo == pytest.approx(-1.959964, abs=1e-6) and hi == pytest.approx(1.959964, abs=1e-6)
    assert confidence_interval(2.0, 0.0, 0.05) == (2.0, 2.0)
    with pytest.raises(ValueError):
        confidence_interval(0.0, 1.0, 1.5)


@pytest.mark.parametrize("lam", [0.2, 0.5, 0.8, 1.0, 1.17, 1.19, 1.5, 2.5])
def test_kolmogorov_sf_against_scipy(lam):
    assert kolmogorov_sf(lam) == pytest.approx(stats.kstwobign.sf(lam), abs=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ks_test_against_scipy(seed):
    x = np.random.default_rng(seed).standard_t(5, size=250)
    ours = ks_test(x)
    ref = stats.kstest(x, "norm")
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)
    rn = math.sqrt(250)
    assert ours.pvalue == pytest.approx(stats.kstwobign.sf((rn + 0.12 + 0.11 / rn) * ref.statistic), abs=1e-10)


def test_uniform_points_level1_marginal():
    dom = parse_domain("T2")
    pts = uniform_points(dom, 40_000, ScrambleKey(21).root)
    counts = np.bincount(dom.locate(pts, 1)[:, 0, 0], minlength=4)
    chi2 = float(((counts - 10_000) ** 2 / 10_000).sum())
    assert stats.chi2.sf(chi2, 3) > 1e-3


def test_mc_baseline_constant():
    rep = mc_baseline(builtin_integrand("constant", T2), T2, 16, 10, seed=2)
    assert rep.variance == 0 and rep.mean == 1.0 and rep.ci == (1.0, 1.0)
    assert rep.provenance["sampler"] == "monte-carlo"


def test_report_schema():
    f = builtin_integrand("example1", T2)
    rep = estimate_report(f, faure_net(4, 2, 2), T2, 8, seed=4)
    d = json.loads(rep.to_json())
    assert d["schema_version"] == 1
    assert set(d) >= {"n", "N", "estimates", "mean", "variance", "ci", "W", "mu", "provenance"}
    assert d["n"] == 16 and d["N"] == 8 and len(d["W"]) == 8
    assert d["provenance"]["net"] == {"b": 4, "m": 2, "t": 0, "s": 2, "K": 26}
    assert d["provenance"]["key"]["seed"] == 4
    lo, hi = d["ci"]
    assert lo < d["mean"] < hi
    assert hi - lo == pytest.approx(2 * 1.959963984540054 * math.sqrt(d["variance"] / 8))
    single = estimate_report(f, faure_net(4, 2, 2), T2, 1, seed=4)
    assert single.variance is None and single.ci is None
