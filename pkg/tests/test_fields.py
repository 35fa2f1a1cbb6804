import itertools

import numpy as np
import pytest

from sgnet.fields import admissible_bases, build_field, field_rank


@pytest.mark.parametrize("b", [2, 3, 4, 5, 7, 8, 9, 16])
def test_field_axioms_exhaustive(b):
    F = build_field(b)
    add, mul = F.add, F.mul
    for x, y, z in itertools.product(range(b), repeat=3):
        assert add[add[x, y], z] == add[x, add[y, z]]
        assert mul[mul[x, y], z] == mul[x, mul[y, z]]
        assert mul[x, add[y, z]] == add[mul[x, y], mul[x, z]]
    assert np.array_equal(add, add.T) and np.array_equal(mul, mul.T)
    assert all(add[x, 0] == x and mul[x, 1] == x for x in range(b))
    assert all(add[x, F.neg[x]] == 0 for x in range(b))
    assert all(mul[x, F.inv[x]] == 1 for x in range(1, b))


def test_gf2_is_xor_and():
    F = build_field(2)
    for x, y in itertools.product(range(2), repeat=2):
        assert F.add[x, y] == x ^ y
        assert F.mul[x, y] == x & y


def test_prime_field_is_modular():
    F = build_field(5)
    for x, y in itertools.product(range(5), repeat=2):
        assert F.add[x, y] == (x + y) % 5
        assert F.mul[x, y] == (x * y) % 5


def test_gf4_characteristic_two_and_cyclic_group():
    F = build_field(4)
    assert all(F.add[x, x] == 0 for x in range(4))
    orders = []
    for g in range(1, 4):
        k, v = 1, g
        while v != 1:
            v = F.mul[v, g]
            k += 1
        orders.append(k)
    # a generator of order 3 exists, so the multiplicative group is cyclic
    assert 3 in orders and all(3 % k == 0 for k in orders)


@pytest.mark.parametrize("b,near", [(6, "5, 7"), (10, "9, 11"), (1, "2"), (65, "64")])
def test_non_prime_power_rejected_with_neighbours(b, near):
    with pytest.raises(ValueError, match=near):
        build_field(b)


def test_admissible_bases_prefix():
    assert admissible_bases(16) == [2, 3, 4, 5, 7, 8, 9, 11, 13, 16]


def test_field_rank_gf3():
    F = build_field(3)
    assert field_rank(F, np.array([[1, 2], [2, 1]])) == 1  # second row = 2 * first mod 3
    assert field_rank(F, np.eye(3, dtype=int)) == 3
