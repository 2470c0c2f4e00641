import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial import cKDTree

from frameflow.errors import (
    DepthError, DomainError, InsufficientGenerators, NotInLimitChart, PingPongError, PoleError,
)
from frameflow.schottky import (
    SchottkyGroup, boundary_map, branch_derivative, busemann, conformal_data,
    hyperbolic_distance, limit_set_sample, load_group, mobius, mobius_circle, ping_pong_check,
    roof, word_matrix,
)


def axis_generator(e, length):
    """Hyperbolic element with axis (-e, e) and translation length ``length``."""
    ch, sh = np.cosh(length / 2), np.sinh(length / 2)
    return np.array([[ch, e * sh], [sh / e, ch]])


def test_ping_pong_margin_from_axes():
    e1, l1, e2, l2 = 1.0, 3.2, 4.0, 3.4
    g = SchottkyGroup.from_isometric_circles(
        "fuchsian", [axis_generator(e1, l1), axis_generator(e2, l2)])
    # disks of the generator with axis (-e, e) sit at +-e coth(l/2) with radius e / sinh(l/2)
    gaps = [2 * e1 * np.tanh(l1 / 4), 2 * e2 * np.tanh(l2 / 4),
            e2 * np.tanh(l2 / 4) - e1 / np.tanh(l1 / 4)]
    rep = ping_pong_check(g)
    assert rep["pass"]
    assert rep["margin"] == pytest.approx(min(gaps), rel=1e-12)


def test_bundled_matches_axis_construction(fuchsian):
    g = SchottkyGroup.from_isometric_circles(
        "fuchsian", [axis_generator(1.0, 3.2), axis_generator(4.0, 3.4)])
    assert np.allclose(g.centers, fuchsian.centers) and np.allclose(g.radii, fuchsian.radii)


def test_tangent_disks_fail(fuchsian):
    radii = fuchsian.radii.copy()
    radii[0] = abs(fuchsian.centers[2] - fuchsian.centers[0]) - radii[2]
    g = SchottkyGroup("fuchsian", fuchsian.generators, fuchsian.centers, radii)
    assert abs(ping_pong_check(g, strict=False)["margin"]) < 1e-12
    radii[0] += 1e-9
    g = SchottkyGroup("fuchsian", fuchsian.generators, fuchsian.centers, radii)
    with pytest.raises(PingPongError):
        ping_pong_check(g)


def test_single_generator_rejected():
    with pytest.raises(InsufficientGenerators):
        SchottkyGroup.from_isometric_circles("fuchsian", [axis_generator(1.0, 3.0)])


def test_invalid_groups(fuchsian):
    bad = [np.array([[2.0, 0.0], [0.0, 1.0]]), fuchsian.generators[1]]
    with pytest.raises(ValueError):
        SchottkyGroup("fuchsian", bad, fuchsian.centers, fuchsian.radii)
    data = fuchsian.to_json()
    data["extra"] = 1
    with pytest.raises(ValueError):
        load_group(data)


def test_json_round_trip(kleinian):
    g = load_group(kleinian.to_json())
    assert np.allclose(g.centers, kleinian.centers)
    assert all(np.allclose(a, b) for a, b in zip(g.letters, kleinian.letters))


def test_both_bundled_groups_pass(fuchsian, kleinian):
    assert ping_pong_check(fuchsian)["pass"] and ping_pong_check(kleinian)["pass"]
    t = fuchsian.transition
    # irreducible and aperiodic: the square is strictly positive
    assert np.all(t @ t > 0) and np.all(np.diag(t) == 1)


def test_boundary_map_fixed_point(kleinian):
    for l in range(kleinian.n_letters):
        xi = kleinian.fixed_points[l]
        img, letter = boundary_map(kleinian, xi)
        assert letter == l and abs(img - xi) < 1e-9


def test_boundary_map_outside_disks(fuchsian):
    with pytest.raises(NotInLimitChart):
        boundary_map(fuchsian, 0.0)


def test_boundary_map_recovers_codes(kleinian):
    pts = limit_set_sample(kleinian, 10)[::997]
    for p in pts:
        cur = p
        for step in range(10):
            cur, letter = boundary_map(kleinian, cur)
            assert letter == p.prefix[step]


def test_identity_branch():
    assert branch_derivative(None, np.eye(2), 0.3 + 0.2j) == 1


def test_fuchsian_angle_trivial(fuchsian):
    _, ang = conformal_data(fuchsian, 0, np.array([1.1, 4.0]))
    assert np.all(ang == 0)


def test_kleinian_angle_from_multiplier(kleinian):
    for l in range(kleinian.n_letters):
        m = kleinian.letters[l]
        lam = max(np.linalg.eigvals(m), key=abs)
        der = branch_derivative(kleinian, l, kleinian.fixed_points[l])
        # derivative at the attracting fixed point is lam^-2
        assert abs(der - lam**-2) < 1e-9
        expected = (-2 * np.angle(lam)) % (2 * np.pi)
        got = np.angle(der) % (2 * np.pi)
        assert min(abs(got - expected), 2 * np.pi - abs(got - expected)) < 1e-9


def test_pole_error(fuchsian):
    m = fuchsian.letters[0]
    with pytest.raises(PoleError):
        branch_derivative(fuchsian, 0, -m[1, 1] / m[1, 0])


@given(st.lists(st.integers(0, 3), min_size=2, max_size=6), st.floats(-0.3, 0.3),
       st.floats(-0.3, 0.3))
def test_chain_rule_and_angle_cocycle(letters, x, y):
    from frameflow.schottky import bundled_group
    g = bundled_group("kleinian")
    word = [letters[0]]
    for l in letters[1:]:
        if l != word[-1] ^ 1:
            word.append(l)
    xi = complex(x, y)
    der, ang, pt = 1.0 + 0j, 0.0, xi
    for l in reversed(word):
        d = branch_derivative(g, l, pt)
        der *= d
        ang += np.angle(d)
        pt = mobius(g.letters[l], pt)
    direct = branch_derivative(g, word_matrix(g, word), xi)
    assert abs(direct - der) <= 1e-9 * abs(direct)
    diff = (np.angle(direct) - ang) % (2 * np.pi)
    assert min(diff, 2 * np.pi - diff) < 1e-9


def test_roof_positive(kleinian):
    for p in limit_set_sample(kleinian, 4)[::7]:
        for l in range(kleinian.n_letters):
            if l != p.prefix[0] ^ 1:
                assert roof(kleinian, l, p.point) > 0


def test_depth_one_samples(fuchsian):
    pts = limit_set_sample(fuchsian, 1)
    assert len(pts) == 4
    for p in pts:
        l = p.prefix[0]
        assert abs(p.point - fuchsian.centers[l]) <= fuchsian.radii[l]


def test_nested_containment(kleinian):
    for p in limit_set_sample(kleinian, 5)[::13]:
        w = p.prefix[:4]
        c, r, _ = mobius_circle(word_matrix(kleinian, w[:-1]), kleinian.centers[w[-1]],
                                kleinian.radii[w[-1]])
        assert abs(p.point - c) <= r * (1 + 1e-12)


def test_hausdorff_between_depths(fuchsian):
    p8 = np.array([p.point for p in limit_set_sample(fuchsian, 8)])
    p10 = np.array([p.point for p in limit_set_sample(fuchsian, 10)])
    words = {p.prefix for p in limit_set_sample(fuchsian, 8)}
    bound = max(mobius_circle(word_matrix(fuchsian, w[:-1]), fuchsian.centers[w[-1]],
                              fuchsian.radii[w[-1]])[1] for w in words) * 2
    def pts(a):
        return np.column_stack([a.real, a.imag])
    d1 = cKDTree(pts(p10)).query(pts(p8))[0].max()
    d2 = cKDTree(pts(p8)).query(pts(p10))[0].max()
    assert max(d1, d2) < bound


def test_depth_guard(fuchsian):
    with pytest.raises(DepthError):
        limit_set_sample(fuchsian, 15)


def test_busemann_examples():
    assert busemann(0.3, (0.1, 2.0), (0.1, 2.0)) == 0
    assert busemann(np.inf, (0.0, 3.0), (0.0, 1.0)) == pytest.approx(np.log(3.0))
    with pytest.raises(DomainError):
        busemann((0.0, 1.0), (0.0, 1.0), (0.0, 2.0))


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 3), st.floats(-2, 2),
       st.floats(0.1, 3), st.floats(-2, 2), st.floats(0.1, 3))
def test_busemann_cocycle(xi, a, ha, b, hb, c, hc):
    x, y, z = (a, ha), (b, hb), (c, hc)
    total = busemann(xi, x, y) + busemann(xi, y, z)
    assert busemann(xi, x, z) == pytest.approx(total, abs=1e-10)


def test_busemann_matches_distance_limit():
    xi, x, y = 0.4 + 0.1j, (0.2 - 0.3j, 0.7), (-0.5 + 0.2j, 1.3)
    far = (xi, 1e-7)
    approx = hyperbolic_distance(far, y) - hyperbolic_distance(far, x)
    assert busemann(xi, x, y) == pytest.approx(approx, abs=1e-6)
