import warnings

import numpy as np
import pytest

from hsliouville.distribution import (
    BumpDatum,
    chaotic_free,
    make_bump,
    make_chaotic_datum,
    marginal_one,
    mild_solution,
    mild_values,
    reachable_regions,
    sample_support,
    symmetry_defect,
    twist_datum,
)
from hsliouville.errors import SupportWarning
from hsliouville.flow import flow_batch
from hsliouville.geometry import PhasePoint
from hsliouville.quadrature import QuadratureSpec, mc_integrate, stream


def test_mild_solution_follows_the_backward_flow(F0):
    # after the bounce the state that started at the bump centres is back there with reversed velocities
    Z = PhasePoint.from_Z([-2, 0, 0, 2, 0, 0, -1, 0, 0, 1, 0, 0])
    assert mild_solution(F0, Z, 3.0) == pytest.approx(F0([-2, 0, 0, 2, 0, 0], [1, 0, 0, -1, 0, 0]))
    # before any collision the solution is the free product
    Zf = PhasePoint.from_Z([-1.7, 0, 0, 1.7, 0, 0, 1, 0, 0, -1, 0, 0])
    assert mild_solution(F0, Zf, 0.3) == pytest.approx(F0.eval(np.array([[-2, 0, 0, 2, 0, 0.]]),
                                                               np.array([[1, 0, 0, -1, 0, 0.]]))[0])


def test_mild_values_zero_outside_phase_space(F0):
    X = np.array([[0, 0, 0, 0.5, 0, 0.]])
    V = np.zeros((1, 6))
    assert mild_values(F0, X, V, np.array([1.0]))[0] == 0.0


def test_mild_values_transport_support(F0):
    P = sample_support(F0, np.random.default_rng(0), 2000)
    X, V = np.ascontiguousarray(P[:, :6]), np.ascontiguousarray(P[:, 6:])
    t = np.full(len(P), 2.5)
    Xt, Vt = flow_batch(X, V, t, 1.0)
    ref = F0.eval(X, V)
    np.testing.assert_allclose(mild_values(F0, Xt, Vt, t), ref, rtol=1e-9, atol=1e-12 * ref.max())


def test_chaotic_datum_agrees_with_free_product_initially(F0, phi0):
    P = sample_support(F0, np.random.default_rng(1), 500)
    np.testing.assert_allclose(chaotic_free(phi0, P[:, :6], P[:, 6:], 0.0), F0.eval(P[:, :6], P[:, 6:]))


@pytest.mark.parametrize("t", [-2.0, 0.5, 2.0])
def test_reachable_regions_cover_the_transported_support(F0, t):
    mix = reachable_regions(F0, t, samples=20_000, seed=3)
    P = sample_support(F0, stream(9, "cover"), 5000)
    X, V = np.ascontiguousarray(P[:, :6]), np.ascontiguousarray(P[:, 6:])
    Xt, Vt = flow_batch(X, V, np.full(len(P), t), 1.0)
    assert (mix.density(np.concatenate([Xt, Vt], axis=1)) > 0).all()


def test_marginal_one_matches_free_marginal_before_contact(F0, phi0):
    # both bumps have radius < eps/2 and are 4 eps apart, so before contact the
    # marginal at x is phi0(x - tv, v) times the mass of the far bump
    x, v, t = np.array([-2.0, 0, 0]), np.array([1.0, 0, 0]), 0.2
    est = marginal_one(F0, x, v, t, spec=QuadratureSpec(50_000, 0))
    far = phi0.components[1].box()
    mass = mc_integrate(lambda P: phi0.eval(P[:, :3], P[:, 3:]), far, QuadratureSpec(200_000, 1))
    expected = phi0.eval(x - t * v, v)[0] * mass.value
    err = est.standard_error + phi0.eval(x - t * v, v)[0] * mass.standard_error
    assert abs(est.value - expected) < 5 * err


def test_symmetry_defect(F0):
    assert symmetry_defect(F0) == 0.0
    lopsided = BumpDatum([-2, 0, 0, 2, 0, 0, 1, 0, 0, 0, 0, 0], 0.45, 0.45)
    assert symmetry_defect(lopsided) > 1e-3


def test_twist_is_an_involution(F0):
    G0 = twist_datum(F0)
    assert twist_datum(G0) is F0
    P = sample_support(F0, np.random.default_rng(2), 200)
    from hsliouville.geometry import sigma_star_batch
    Xs, Vs = sigma_star_batch(P[:, :6], P[:, 6:], 1.0)
    ref = F0.eval(P[:, :6], P[:, 6:])
    np.testing.assert_allclose(G0.eval(Xs, Vs), ref, rtol=1e-9, atol=1e-12 * ref.max())


def test_overlapping_support_warns():
    phi = make_bump([0, 0, 0, 0, 0, 0], (0.6, 0.5))
    with pytest.warns(SupportWarning):
        make_chaotic_datum(phi)
    far = make_bump([0, 0, 0, 0, 0, 0], (0.2, 0.5))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        make_chaotic_datum(far)  # pairs never separate by eps: no support at all


def test_make_bump_validation():
    with pytest.raises(ValueError):
        make_bump(np.zeros(5), 0.5)
    with pytest.raises(ValueError):
        make_bump(np.zeros(6), -1.0)
    assert isinstance(make_bump(np.zeros(12), 0.3), BumpDatum)
