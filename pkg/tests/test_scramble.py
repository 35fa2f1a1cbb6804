import itertools
import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from sgnet.domains import Triangle
from sgnet.nets import DigitalNet, faure_net, verify_net
from sgnet.scramble import (
    C_COORD,
    DIGIT_SALT,
    _derive,
    GOLDEN,
    IDENTITY,
    PermutationTree,
    ScrambleKey,
    _shuffle,
    fisher_yates,
    mix64,
    permutation_for,
    permutation_table,
    point_root,
    root_hashes,
    scramble_digits,
    scramble_net,
    scramble_net_reference,
)


def test_mix64_known_value():
    # splitmix64 finaliser of the first state of the reference generator (seed 0)
    assert mix64(GOLDEN) == 0xE220A8397B1DCDAF


def test_same_query_same_permutation():
    tree = PermutationTree(5, ScrambleKey(7))
    assert permutation_for(tree, 1, [2, 0, 4]) == permutation_for(tree, 1, [2, 0, 4])
    fresh = PermutationTree(5, ScrambleKey(7))
    assert permutation_for(fresh, 1, [2, 0, 4]) == permutation_for(tree, 1, [2, 0, 4])


def test_replications_differ():
    a = PermutationTree(8, ScrambleKey(3, 1))
    b = PermutationTree(8, ScrambleKey(3, 2))
    perms_a = [a.permutation(0, (c,)) for c in range(8)]
    perms_b = [b.permutation(0, (c,)) for c in range(8)]
    assert perms_a != perms_b


def test_prefix_out_of_range_rejected():
    with pytest.raises(ValueError):
        PermutationTree(3, ScrambleKey(1)).permutation(0, [3])


def test_b2_swap_frequency():
    tree = PermutationTree(2, ScrambleKey(11))
    swaps = 0
    prefixes = list(itertools.product(range(2), repeat=14))[:10_000]
    for p in prefixes:
        perm = tree.permutation(0, p)
        assert perm in ((0, 1), (1, 0))
        swaps += perm == (1, 0)
    assert abs(swaps / len(prefixes) - 0.5) <= 0.02


def test_b4_all_24_permutations_uniform():
    tree = PermutationTree(4, ScrambleKey(5))
    counts = Counter(tree.permutation(0, p) for p in itertools.islice(itertools.product(range(4), repeat=9), 100_000))
    assert len(counts) == 24
    n = sum(counts.values())
    sd = math.sqrt(n * (1 / 24) * (23 / 24))
    assert all(abs(c - n / 24) <= 3 * sd for c in counts.values())
    chi2 = sum((c - n / 24) ** 2 / (n / 24) for c in counts.values())
    assert stats.chi2.sf(chi2, 23) > 1e-3


@pytest.mark.parametrize("b", [2, 3, 5, 7, 8])
def test_permutation_table_matches_shuffle(b):
    table = permutation_table(b)
    assert len({tuple(r) for r in table.tolist()}) == math.factorial(b)
    for node in [0, 1, 12345, 2**63 + 17]:
        word = mix64(node + GOLDEN)
        assert tuple(table[word % math.factorial(b)]) == fisher_yates(node, b)


def test_large_base_uses_counter_words():
    # 64! exceeds the 2^32 radix budget many times over; the shuffle must still be a permutation
    perm = fisher_yates(99, 64)
    assert sorted(perm) == list(range(64))
    assert _shuffle(mix64(99 + GOLDEN), 64, 99) == perm


@pytest.mark.parametrize("b,s,m", [(2, 2, 4), (3, 3, 2), (4, 2, 3), (5, 2, 2), (8, 2, 2), (9, 3, 2), (16, 2, 1)])
def test_kernel_matches_reference(b, s, m):
    net = faure_net(b, s, m, K=8)
    key = ScrambleKey(2024, 3)
    assert np.array_equal(scramble_net(net, key).digits, scramble_net_reference(net, key).digits)


def test_identity_mode_returns_input():
    net = faure_net(4, 2, 2)
    out = scramble_net(net, ScrambleKey(1, 1, IDENTITY))
    assert np.array_equal(out.digits, net.digits)
    ref = scramble_net_reference(net, ScrambleKey(1, 1, IDENTITY))
    assert np.array_equal(ref.digits, net.digits)


def test_unknown_scheme_rejected():
    with pytest.raises(ValueError):
        ScrambleKey(1, 1, "xorshift")


@pytest.mark.parametrize("b,s,m", [(2, 2, 3), (3, 3, 2), (4, 2, 3), (5, 3, 2)])
def test_scramble_preserves_net(b, s, m):
    net = faure_net(b, s, m)
    for r in range(1, 21):
        assert verify_net(scramble_net(net, ScrambleKey(77, r))).ok


def test_depth_and_metadata_preserved():
    net = faure_net(4, 2, 2)
    out = scramble_net(net, ScrambleKey(9, 4))
    assert out.digits.shape == net.digits.shape
    assert (out.b, out.m, out.t) == (4, 2, 0)
    assert "seed=9" in out.comment and "replication=4" in out.comment


def test_prefix_consistency_by_instrumentation():
    net = faure_net(4, 2, 2, K=5)
    tree = PermutationTree(4, ScrambleKey(31))
    out = scramble_net_reference(net, ScrambleKey(31), tree)
    # every query key is an original-digit prefix, one per distinct prefix
    expected = {(j, tuple(net.digits[i, j, :k].tolist())) for i in range(net.n) for j in range(2) for k in range(5)}
    assert tree.queried == expected
    # points sharing an original prefix of length k use the same permutation at position k+1
    for j, k in itertools.product(range(2), range(5)):
        for i, i2 in itertools.combinations(range(net.n), 2):
            if np.array_equal(net.digits[i, j, :k], net.digits[i2, j, :k]):
                perm = tree.permutation(j, net.digits[i, j, :k].tolist())
                assert out.digits[i, j, k] == perm[net.digits[i, j, k]]
                assert out.digits[i2, j, k] == perm[net.digits[i2, j, k]]


def test_single_point_uniform_over_keys():
    point = DigitalNet(2, 0, 0, np.zeros((1, 1, 10), dtype=np.uint8))
    roots = root_hashes(123, range(1, 10_001))
    digits = scramble_digits(point.digits, 2, roots)[:, 0, 0, :]
    values = digits @ (2.0 ** -np.arange(1, 11))
    counts = np.bincount(np.floor(values * 16).astype(int), minlength=16)
    chi2 = float(((counts - 625.0) ** 2 / 625.0).sum())
    assert stats.chi2.sf(chi2, 15) > 1e-3


@pytest.mark.parametrize("b", [2, 4, 5])
def test_marginal_digit_uniformity(b):
    net = faure_net(b, 1, 2, K=4)
    roots = root_hashes(8, range(1, 4001))
    out = scramble_digits(net.digits, b, roots)
    for k in range(4):
        counts = np.bincount(out[:, 3, 0, k], minlength=b)
        chi2 = float(((counts - 4000 / b) ** 2 / (4000 / b)).sum())
        assert stats.chi2.sf(chi2, b - 1) > 1e-4


def test_per_point_roots_match_point_root():
    key = ScrambleKey(4, 2)
    zeros = np.zeros((3, 1, 6), dtype=np.uint8)
    out = scramble_digits(zeros, 4, np.array([key.root], dtype=np.uint64), per_point=True)[0]
    for i in range(3):
        # walk the node chain by hand from the point's own root
        h = _derive(point_root(key, i), 0, C_COORD)
        expected = []
        for _ in range(6):
            expected.append(fisher_yates(h, 4)[0])
            h = mix64(h ^ int(DIGIT_SALT[0]))
        assert out[i, 0].tolist() == expected


def test_scrambled_triangle_points_land_uniformly():
    from sgnet.domains import ProductDomain

    dom = ProductDomain([Triangle()])
    net = faure_net(4, 1, 2)
    pts = [dom.map_digits(scramble_net(net, ScrambleKey(5, r)).digits) for r in range(1, 6)]
    for p in pts:
        cells = dom.locate(p, 2)[:, 0, :]
        assert len({tuple(c) for c in cells.tolist()}) == 16
