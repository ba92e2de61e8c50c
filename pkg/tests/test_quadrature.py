import math

import numpy as np
import pytest

from hsliouville.quadrature import (
    Box,
    BoundaryPiece,
    EllipsoidBlocks,
    Estimate,
    Mixture,
    PaddedBlocks,
    QuadratureSpec,
    ShearedRegion,
    TestFunction,
    boundary_integrate,
    bump_test_function,
    mc_integrate,
    monte_carlo,
    stream,
    tensor_grid_integrate,
)


def test_estimate_arithmetic():
    a = Estimate(1.0, 0.3, 10)
    b = Estimate(2.0, 0.4, 10)
    c = a + b
    assert c.value == 3.0 and c.standard_error == pytest.approx(0.5)
    assert (a - b).value == -1.0
    assert a.scale(-2).standard_error == pytest.approx(0.6)


def test_stream_independent_of_call_order():
    a = stream(1, "x", 3).random(4)
    stream(1, "y", 0).random(10)
    np.testing.assert_array_equal(a, stream(1, "x", 3).random(4))
    assert not np.array_equal(a, stream(1, "x", 4).random(4))


def test_monte_carlo_chunked_determinism():
    draw = lambda rng, m: rng.random(m)
    e1 = monte_carlo(draw, 100_000, 5, "u", chunk_size=1 << 12)
    e2 = monte_carlo(draw, 100_000, 5, "u", chunk_size=1 << 12, workers=4)
    assert e1 == e2
    assert abs(e1.value - 0.5) < 4 * e1.standard_error
    assert e1.standard_error == pytest.approx(math.sqrt(1 / 12 / 100_000), rel=0.02)


def test_mc_and_tensor_grid_on_polynomial():
    box = Box([0, 0], [1, 2])
    f = lambda P: P[:, 0] ** 2 * P[:, 1]
    exact = (1 / 3) * 2.0
    est = mc_integrate(f, box, QuadratureSpec(200_000, 1))
    assert abs(est.value - exact) < 4 * est.standard_error
    assert tensor_grid_integrate(f, box, 400).value == pytest.approx(exact, rel=1e-10)


def test_ellipsoid_blocks_volume_by_rejection():
    e = EllipsoidBlocks(4, (([0, 1], (0, 0), (1.0, 2.0)), ([2, 3], (1, 1), (0.5, 0.5))))
    assert e.volume == pytest.approx(math.pi * 2 * math.pi * 0.25)
    box = e.bounding_box()
    P = box.draw(np.random.default_rng(0), 400_000)
    frac = e.contains(P).mean()
    assert frac * box.volume == pytest.approx(e.volume, rel=0.01)


def test_padded_blocks_volume_by_rejection():
    pb = PaddedBlocks(4, (([0, 1], [2, 3], (0.0, 0.0), (0.0, 0.0), 0.7, 1.0, 0.3),))
    bb = Box([-1.1, -1.1, -1.1, -1.1], [1.1, 1.1, 1.1, 1.1])
    P = bb.draw(np.random.default_rng(1), 600_000)
    frac = pb.contains(P).mean()
    assert frac * bb.volume == pytest.approx(pb.volume, rel=0.01)


def test_mixture_density_integrates_to_one():
    regions = [Box([0, 0], [1, 1]), Box([0.5, 0.5], [2, 1.5])]
    mix = Mixture(regions, weights=[0.3, 0.7])
    bb = Box([0, 0], [2, 1.5])
    P = bb.draw(np.random.default_rng(2), 400_000)
    assert mix.density(P).mean() * bb.volume == pytest.approx(1.0, rel=0.01)
    Q, w = mix.sample(np.random.default_rng(3), 1000)
    np.testing.assert_allclose(w, 1 / mix.density(Q))


def test_sheared_region_moves_positions():
    base = Box([0, 0], [1, 1])  # (x, v)
    sh = ShearedRegion(base, 2.0)
    P = sh.draw(np.random.default_rng(4), 1000)
    assert base.contains(np.stack([P[:, 0] - 2 * P[:, 1], P[:, 1]], axis=1)).all()
    assert sh.volume == base.volume


@pytest.mark.parametrize("eps", [0.5, 1.0, 2.0])
def test_boundary_surface_constant(eps):
    # area of {[y, y + eps n] : |y_i| <= 1/2} is sqrt2 eps^2 * 4 pi; V and t are dummy unit boxes
    box = Box([-0.5] * 3 + [0] * 7, [0.5] * 3 + [1] * 7)
    est = boundary_integrate(lambda y, n, V, t: np.ones(len(y)), eps, QuadratureSpec(10_000, 0), [box])
    assert est.value == pytest.approx(math.sqrt(2) * eps**2 * 4 * math.pi, rel=1e-12)


def test_boundary_piece_cap_volume():
    box = Box([0] * 10, [1] * 10)
    piece = BoundaryPiece(box, (0, 0, 1), 0.5)
    assert piece.volume == pytest.approx(math.pi)
    P = piece.draw(np.random.default_rng(0), 1000)
    assert (P[:, 5] >= 0.5 - 1e-12).all()
    np.testing.assert_allclose(np.linalg.norm(P[:, 3:6], axis=1), 1.0)


def test_test_function_derivatives_match_finite_differences(rng):
    Phi = bump_test_function(np.zeros(12), np.full(12, 1.0), (0.0, 1.0))
    Z = rng.uniform(-0.4, 0.4, (20, 12))
    t = rng.uniform(-0.5, 0.5, 20)
    h = 1e-6
    g = Phi.grad(Z, t)
    for k in (0, 4, 9):
        e = np.zeros(12)
        e[k] = h
        fd = (Phi.value(Z + e, t) - Phi.value(Z - e, t)) / (2 * h)
        np.testing.assert_allclose(g[:, k], fd, rtol=1e-5, atol=1e-12)
    fd_t = (Phi.value(Z, t + h) - Phi.value(Z, t - h)) / (2 * h)
    np.testing.assert_allclose(Phi.dt(Z, t), fd_t, rtol=1e-5, atol=1e-12)
    val, tr = Phi.transport(Z, t)
    np.testing.assert_allclose(tr, Phi.dt(Z, t) + np.einsum("ij,ij->i", Z[:, 6:], g[:, :6]))


def test_test_function_vanishes_outside_support():
    Phi = TestFunction(np.zeros(6), np.ones(6), 0.0, 1.0)
    assert Phi.value(np.full((1, 6), 1.5), 0.0)[0] == 0.0
    assert Phi.value(np.zeros((1, 6)), 1.0)[0] == 0.0
    with pytest.raises(ValueError):
        TestFunction(np.zeros(6), np.zeros(6), 0.0, 1.0)
