import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgnet.fields import build_field, field_rank
from sgnet.nets import (
    DigitalNet,
    check_generators,
    compositions,
    default_depth,
    faure_generators,
    faure_net,
    generate_net,
    read_net,
    verify_net,
    write_net,
)


def test_default_depth():
    assert default_depth(4, 3) == 26
    assert default_depth(2, 3) == 52
    assert default_depth(64, 12) == 12


def test_van_der_corput_rows():
    net = faure_net(2, 1, 2, K=2)
    assert net.digits[:, 0, :].tolist() == [[0, 0], [1, 0], [0, 1], [1, 1]]
    assert np.allclose(net.points()[:, 0], [0, 0.5, 0.25, 0.75])


def test_single_generator_is_identity():
    gen = faure_generators(build_field(5), 1, 4)
    assert np.array_equal(gen.matrices[0], np.eye(4, dtype=int))


def test_prime_field_generators_are_pascal_powers():
    F = build_field(5)
    gen = faure_generators(F, 3, 4)
    pascal = gen.matrices[1]
    # brute-force matrix square over GF(5)
    sq = (pascal @ pascal) % 5
    assert np.array_equal(sq, gen.matrices[2])


def _brute_det_nonzero(F, mat):
    # determinant over the field by cofactor expansion on small matrices
    n = mat.shape[0]
    if n == 1:
        return int(mat[0, 0])
    total = 0
    for c in range(n):
        minor = np.delete(np.delete(mat, 0, 0), c, 1)
        term = F.mul[mat[0, c], _brute_det_nonzero(F, minor)]
        total = F.add[total, term if c % 2 == 0 else F.neg[term]]
    return int(total)


def test_gf4_s2_m2_stacked_determinants():
    F = build_field(4)
    gen = faure_generators(F, 2, 2)
    for k1 in range(3):
        stacked = np.vstack([gen.matrices[0][:k1], gen.matrices[1][: 2 - k1]])
        assert _brute_det_nonzero(F, stacked) != 0


def test_gf3_s3_m3_all_compositions_nonsingular():
    F = build_field(3)
    gen = faure_generators(F, 3, 3)
    shapes = list(compositions(3, 3))
    assert len(shapes) == 10
    for shape in shapes:
        stacked = np.vstack([m[:k] for m, k in zip(gen.matrices, shape) if k])
        assert field_rank(F, stacked) == 3
    assert check_generators(gen) is None


def test_generator_argument_errors():
    F = build_field(4)
    with pytest.raises(ValueError):
        faure_generators(F, 5, 2)
    with pytest.raises(ValueError):
        faure_generators(F, 2, 0)
    with pytest.raises(ValueError):
        generate_net(faure_generators(F, 2, 3), K=2)


def test_tail_digits_zero():
    net = faure_net(4, 2, 3)
    assert net.K == 26
    assert not net.digits[:, :, 3:].any()


def test_b4_m1_every_quarter_box_has_one_point():
    net = faure_net(4, 2, 1)
    assert net.n == 4
    assert sorted(net.digits[:, 0, 0]) == [0, 1, 2, 3]
    assert sorted(net.digits[:, 1, 0]) == [0, 1, 2, 3]
    assert verify_net(net).ok


def test_b4_m3_passes():
    rep = verify_net(faure_net(4, 2, 3))
    assert rep.ok and rep.shapes_checked == 4


def test_b4_m2_trivial_t():
    net = faure_net(4, 2, 2)
    assert verify_net(net, 0).ok
    assert verify_net(net, 2).ok


def test_duplicated_rows_fail():
    net = faure_net(3, 2, 2)
    digits = net.digits.copy()
    digits[1] = digits[0]
    bad = DigitalNet(3, 2, 0, digits)
    rep = verify_net(bad)
    assert not rep
    assert rep.violation["count"] == 2 and rep.violation["expected"] == 1
    assert sum(rep.violation["shape"]) == 2


def test_verify_deterministic():
    net = faure_net(5, 3, 2)
    assert verify_net(net) == verify_net(net)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([2, 3, 4, 5, 7, 8, 9]), st.integers(1, 3), st.data())
def test_generated_nets_are_equidistributed_at_every_coarser_level(b, m, data):
    s = data.draw(st.integers(1, min(b, 3)))
    net = faure_net(b, s, m)
    for t in range(m + 1):
        assert verify_net(net, t).ok
    # one-dimensional projections are (0, m, 1)-nets
    for j in range(s):
        assert len({tuple(row) for row in net.digits[:, j, :m].tolist()}) == b**m


def test_round_trip(tmp_path):
    net = faure_net(4, 2, 2)
    path = tmp_path / "net.txt"
    write_net(net, path, "faure b=4\nsecond line")
    back = read_net(path)
    assert np.array_equal(back.digits, net.digits)
    assert (back.b, back.m, back.t, back.s, back.K) == (4, 2, 0, 2, 26)
    assert back.comment == "faure b=4\nsecond line"
    write_net(back, tmp_path / "again.txt", back.comment)
    assert (tmp_path / "again.txt").read_bytes() == path.read_bytes()


def test_read_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("2 1 0 1\n0\n1\n")
    with pytest.raises(ValueError):
        read_net(p)
    p.write_text("2 1 0 1 1 2\n0\n")
    with pytest.raises(ValueError):
        read_net(p)


def test_compositions_count():
    assert len(list(compositions(4, 3))) == 15
    assert all(sum(c) == 4 for c in compositions(4, 3))
    assert len(set(compositions(4, 3))) == 15
    assert list(itertools.islice(compositions(0, 2), 5)) == [(0, 0)]
