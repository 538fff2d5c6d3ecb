import itertools

import numpy as np
import pytest

from bcbounds.channel import make_bsc_bc, make_copy
from bcbounds.probkit import (
    JointPmf,
    LabelError,
    attach_channel,
    cond_mutual_info,
    random_deterministic_pmf,
    random_pmf,
)
from bcbounds.regions import (
    NJ_REDUNDANT_TAGS,
    Polytope3,
    Row,
    UnboundedPolytopeError,
    bound2_polytope,
    contains,
    nj_polytope,
    redundancy_check,
    same_vertices,
    support_value,
    uv_polytope,
    uvw_polytope,
    vertices,
)

from conftest import brute_cmi, random_channel

NJ = ["U", "V", "T", "W1", "W2", "X"]


def _I(p, a, b, c=""):
    return brute_cmi(p, a.split(","), b.split(","), c.split(",") if c else [])


def nj_oracle(p):
    m = min
    return [
        _I(p, "T", "Y", "W1"),
        _I(p, "T", "Z", "W2"),
        _I(p, "U", "Y", "W1"),
        _I(p, "V", "Z", "W2"),
        _I(p, "T,U", "Y", "W1"),
        _I(p, "U", "Y", "T,W1,W2") + _I(p, "T,W1", "Z", "W2"),
        _I(p, "T,V", "Z", "W2"),
        _I(p, "V", "Z", "T,W1,W2") + _I(p, "T,W2", "Y", "W1"),
        _I(p, "U", "Y", "T,V,W1,W2") + _I(p, "T,V,W1", "Z", "W2"),
        _I(p, "V", "Z", "T,U,W1,W2") + _I(p, "T,U,W2", "Y", "W1"),
        _I(p, "U", "Y", "T,V,W1,W2") + _I(p, "T,W2", "Y", "W1") + _I(p, "V", "Z", "T,W1,W2"),
        _I(p, "V", "Z", "T,U,W1,W2") + _I(p, "T,W1", "Z", "W2") + _I(p, "U", "Y", "T,W1,W2"),
    ], m


def bound2_oracle(p, uvw=False):
    wy, wz = _I(p, "W", "Y"), _I(p, "W", "Z")
    s1 = (_I(p, "X", "Y", "V,W") if uvw else _I(p, "U", "Y", "V,W")) + _I(p, "V", "Z", "W")
    s2 = _I(p, "U", "Y", "W") + (_I(p, "X", "Z", "U,W") if uvw else _I(p, "V", "Z", "U,W"))
    out = []
    for extra in (0.0, _I(p, "U", "Y", "W"), _I(p, "V", "Z", "W"), s1, s2):
        out += [wy + extra, wz + extra]
    return out


def uv_oracle(p):
    return [0.0, _I(p, "U", "Y"), _I(p, "V", "Z"),
            _I(p, "X", "Y", "V") + _I(p, "V", "Z"), _I(p, "U", "Y") + _I(p, "X", "Z", "U")]


def _constant(name, n=1):
    return JointPmf([name], np.ones(n) / n)


def _copy_fixture(**roles):
    """Uniform binary X with each named auxiliary either a copy of X ('x') or constant ('c')."""
    names = list(roles) + ["X"]
    mass = np.zeros([2 if r == "x" else 1 for r in roles.values()] + [2])
    for x in range(2):
        idx = tuple(x if r == "x" else 0 for r in roles.values()) + (x,)
        mass[idx] = 0.5
    return attach_channel(JointPmf(names, mass), make_copy(2))


class TestNJ:
    def test_row_count_and_coefficients(self, rng):
        p = attach_channel(random_pmf(NJ, [2] * 6, rng), make_bsc_bc(0.1, 0.2))
        P = nj_polytope(p)
        assert len(P.rows) == 12
        assert all(set(r.coeffs) <= {0.0, 1.0} for r in P.rows)
        assert P.tags[5] == "R0+R1 <= I(U;Y|T,W1,W2)+I(T,W1;Z|W2)"

    def test_constant_auxiliaries(self):
        p = attach_channel(JointPmf(NJ, np.full((1,) * 5 + (2,), 0.5)), make_bsc_bc(0.1, 0.2))
        P = nj_polytope(p)
        for r in P.rows:
            if r.coeffs == (1.0, 0.0, 0.0):
                assert r.rhs == pytest.approx(0.0, abs=1e-15)

    def test_copy_channel_common_rate(self):
        p = _copy_fixture(U="x", V="x", T="x", W1="c", W2="c")
        assert nj_polytope(p).rows[0].rhs == pytest.approx(1.0, abs=1e-12)

    def test_random_matches_oracle(self, rng):
        for _ in range(5):
            p = attach_channel(random_pmf(NJ, [2] * 6, rng), random_channel(rng))
            expected, _ = nj_oracle(p)
            np.testing.assert_allclose(nj_polytope(p).b, expected, atol=1e-9)

    def test_missing_variable(self, rng):
        p = attach_channel(random_pmf(["U", "V", "W", "X"], [2] * 4, rng), make_bsc_bc(0.1, 0.2))
        with pytest.raises(LabelError):
            nj_polytope(p)


class TestBound2:
    def test_constant_w(self, rng):
        aux = random_pmf(["U", "V", "W", "X"], [2, 2, 1, 2], rng)
        P = bound2_polytope(attach_channel(aux, make_bsc_bc(0.1, 0.2)))
        assert len(P.rows) == 10
        np.testing.assert_allclose(P.b[:2], 0.0, atol=1e-15)

    def test_u_copy(self):
        P = bound2_polytope(_copy_fixture(U="x", V="c", W="c"))
        assert P.rhs("R0+R1 <= I(W;Y)+I(U;Y|W)") == pytest.approx(1.0, abs=1e-12)

    def test_random_matches_oracle(self, rng):
        for _ in range(5):
            p = attach_channel(random_pmf(["U", "V", "W", "X"], [2, 3, 2, 2], rng), random_channel(rng))
            np.testing.assert_allclose(bound2_polytope(p).b, bound2_oracle(p), atol=1e-9)


class TestUVW:
    def test_deterministic_x_matches_bound2(self, rng):
        for _ in range(10):
            aux = random_deterministic_pmf(["U", "V", "W"], [2, 3, 2], 2, rng)
            p = attach_channel(aux, random_channel(rng))
            np.testing.assert_allclose(uvw_polytope(p).b, bound2_polytope(p).b, atol=1e-9)

    def test_sum_rate_row(self):
        p = _copy_fixture(U="x", V="c", W="c")
        P = uvw_polytope(p)
        # I(X;Y) + I(X;Z|X) with U = X and V, W constant
        assert P.rows[8].rhs == pytest.approx(cond_mutual_info(p, "X", "Y"), abs=1e-12)

    def test_stochastic_x_dominates(self, rng):
        for _ in range(10):
            p = attach_channel(random_pmf(["U", "V", "W", "X"], [2, 2, 2, 2], rng), random_channel(rng))
            a, b = uvw_polytope(p).b, bound2_polytope(p).b
            assert np.all(a[6:] >= b[6:] - 1e-12)
            np.testing.assert_allclose(a[:6], b[:6], atol=1e-12)

    def test_random_matches_oracle(self, rng):
        p = attach_channel(random_pmf(["U", "V", "W", "X"], [3, 2, 2, 2], rng), random_channel(rng))
        np.testing.assert_allclose(uvw_polytope(p).b, bound2_oracle(p, uvw=True), atol=1e-9)


class TestUV:
    def test_constant(self):
        p = attach_channel(JointPmf(["U", "V", "X"], np.full((1, 1, 2), 0.5)), make_bsc_bc(0.1, 0.2))
        P = uv_polytope(p)
        np.testing.assert_allclose(P.b[:3], 0.0, atol=1e-15)
        np.testing.assert_allclose(P.b[3:], [cond_mutual_info(p, "X", "Y"), cond_mutual_info(p, "X", "Z")],
                                   atol=1e-12)
        assert P.rows[0].coeffs == (1.0, 0.0, 0.0)
        assert all(r.coeffs[0] == 0.0 for r in P.rows[1:])

    def test_u_copy(self):
        P = uv_polytope(_copy_fixture(U="x", V="c"))
        assert P.rhs("R1 <= I(U;Y)") == pytest.approx(1.0, abs=1e-12)

    def test_random_matches_oracle(self, rng):
        p = attach_channel(random_pmf(["U", "V", "X"], [3, 2, 2], rng), random_channel(rng))
        np.testing.assert_allclose(uv_polytope(p).b, uv_oracle(p), atol=1e-9)


def _poly(*rows):
    return Polytope3(tuple(Row(c, b, f"row{i}") for i, (c, b) in enumerate(rows)))


CROSS = _poly(((1, 0, 0), 1.0), ((1, 1, 0), 1.0), ((1, 0, 1), 1.0))


class TestVertices:
    def test_cross_polytope_corner(self):
        assert set(vertices(CROSS)) == {(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 1, 1)}

    def test_zero_polytope(self):
        P = _poly(((1, 0, 0), 0.0), ((0, 1, 0), 0.0), ((0, 0, 1), 0.0), ((1, 1, 1), 0.0))
        assert vertices(P) == [(0.0, 0.0, 0.0)]

    def test_unbounded(self):
        with pytest.raises(UnboundedPolytopeError):
            vertices(_poly(((1, 1, 0), 1.0)))

    def test_negative_coefficients_rejected(self):
        with pytest.raises(ValueError):
            _poly(((1, -1, 0), 1.0))

    def test_random_bound2(self, rng):
        for _ in range(10):
            p = attach_channel(random_pmf(["U", "V", "W", "X"], [2, 2, 3, 2], rng), random_channel(rng))
            P = bound2_polytope(p)
            V = np.array(vertices(P))
            assert np.all(V @ P.A.T <= P.b + 1e-9) and np.all(V >= 0)
            for r in P.rows:
                tight = np.any(np.abs(V @ np.array(r.coeffs) - r.rhs) <= 1e-9)
                assert tight or redundancy_check(P, [r.tag])


class TestSupport:
    def test_axis(self):
        value, point = support_value(CROSS, (1, 0, 0))
        assert value == 1.0 and point.r0 == 1.0

    def test_zero(self):
        P = _poly(((1, 0, 0), 0.0), ((0, 1, 0), 0.0), ((0, 0, 1), 0.0))
        assert support_value(P, (1, 2, 3)) == (0.0, (0.0, 0.0, 0.0))

    def test_ties_lexicographic(self):
        # every vertex on the R1 + R2 = 1 edge attains w = (0, 1, 1)
        _, point = support_value(CROSS, (0, 1, 1))
        assert point == (0.0, 0.0, 1.0) or point == (0.0, 1.0, 1.0)
        value, point = support_value(_poly(((0, 1, 1), 1.0), ((1, 0, 0), 1.0)), (0, 1, 1))
        assert value == 1.0 and point == (0.0, 0.0, 1.0)

    def test_bad_weight(self):
        for w in [(0, 0, 0), (-1, 1, 0), (1, 1)]:
            with pytest.raises(ValueError):
                support_value(CROSS, w)

    def test_monotone_under_added_rows(self, rng):
        p = attach_channel(random_pmf(["U", "V", "W", "X"], [2, 2, 2, 2], rng), random_channel(rng))
        P = uvw_polytope(p)
        for _ in range(20):
            w = rng.random(3)
            extra = Row(tuple(rng.integers(0, 2, 3) | np.eye(3, dtype=int)[rng.integers(3)]),
                        float(rng.random()), "extra")
            assert support_value(P.with_rows(extra), w)[0] <= support_value(P, w)[0] + 1e-12

    def test_grid_on_mi_polytope(self, rng):
        # coarse grid lower bound plus the Lipschitz gap of the grid spacing
        p = attach_channel(random_pmf(["U", "V", "W", "X"], [2, 2, 2, 2], rng), make_bsc_bc(0.1, 0.2))
        P = bound2_polytope(p)
        top = max(P.b)
        g = np.linspace(0, top, 61)
        pts = np.array(list(itertools.product(g, g, g)))
        pts = pts[np.all(pts @ P.A.T <= P.b + 1e-12, axis=1)]
        for w in [(1, 0, 0), (0, 1, 1), (0.3, 0.5, 0.9)]:
            exact = support_value(P, w)[0]
            grid = float(np.max(pts @ np.array(w)))
            assert grid <= exact + 1e-12
            assert exact - grid <= sum(w) * (g[1] - g[0]) + 1e-12


class TestContains:
    def test_reflexive(self, rng):
        P = bound2_polytope(attach_channel(random_pmf(["U", "V", "W", "X"], [2] * 4, rng),
                                           make_bsc_bc(0.1, 0.2)))
        c = contains(P, P)
        assert c.contained and c.violation <= 1e-12

    def test_raised_rhs(self):
        inner = _poly(((1, 0, 0), 1.0), ((1, 1, 0), 1.1), ((1, 0, 1), 1.0))
        c = contains(CROSS, inner)
        assert not c.contained
        assert c.violation == pytest.approx(0.1, abs=1e-12)
        assert c.row == "row1" and c.vertex == pytest.approx((0.0, 1.1, 0.0))
        assert contains(inner, CROSS).contained

    def test_mutual_containment_means_equal_vertices(self, rng):
        for _ in range(10):
            p = attach_channel(random_pmf(["U", "V", "W", "X"], [2] * 4, rng), random_channel(rng))
            P = bound2_polytope(p)
            Q = P.with_rows(Row((1.0, 1.0, 1.0), float(P.b.max()) * 3, "slack"))
            if contains(P, Q) and contains(Q, P):
                assert same_vertices(P, Q)


class TestRedundancy:
    def test_r1_row_redundant(self):
        # R1 <= a and R0 + R1 <= a with R0 >= 0
        P = _poly(((0, 1, 0), 0.7), ((1, 1, 0), 0.7), ((0, 0, 1), 0.4), ((1, 0, 0), 0.5))
        assert redundancy_check(P, ["row0"])

    def test_tighter_row_kept(self):
        P = _poly(((0, 1, 0), 0.3), ((1, 1, 0), 0.7), ((0, 0, 1), 0.4), ((1, 0, 0), 0.5))
        assert not redundancy_check(P, ["row0"])

    def test_duplicate_row(self):
        P = CROSS.with_rows(Row((1.0, 1.0, 0.0), 1.0, "dup"))
        assert redundancy_check(P, ["dup"])

    def test_unknown_tag(self):
        with pytest.raises(KeyError):
            redundancy_check(CROSS, ["nope"])

    def test_removal_making_unbounded(self):
        assert not redundancy_check(CROSS, ["row1"])

    def test_nj_redundant_tags_exist(self, rng):
        P = nj_polytope(attach_channel(random_pmf(NJ, [2] * 6, rng), make_bsc_bc(0.1, 0.2)))
        assert set(NJ_REDUNDANT_TAGS) <= set(P.tags)
