import numpy as np
import pytest

from hsliouville.errors import InvalidState
from hsliouville.flow import (
    SheetPoint,
    doubled_flow,
    doubled_flow_batch,
    doubled_trajectory,
    flow_batch,
    fold,
    fold_batch,
    hard_sphere_flow,
    trajectory,
)
from hsliouville.geometry import PhasePoint, conserved_quantities, sigma_star_batch
from hsliouville.verify import random_states

Z_HEAD_ON = PhasePoint.from_Z([-1.5, 0, 0, 1.5, 0, 0, 1, 0, 0, -1, 0, 0])


def test_head_on_bounce():
    before = hard_sphere_flow(Z_HEAD_ON, 0.5)
    np.testing.assert_allclose(before.X, [-1, 0, 0, 1, 0, 0])
    at = hard_sphere_flow(Z_HEAD_ON, 1.0)
    np.testing.assert_allclose(at.X, [-0.5, 0, 0, 0.5, 0, 0])
    np.testing.assert_allclose(at.V, Z_HEAD_ON.V)  # not yet reflected at the contact time
    after = hard_sphere_flow(Z_HEAD_ON, 2.0)
    np.testing.assert_allclose(after.X, [-1.5, 0, 0, 1.5, 0, 0], atol=1e-14)
    np.testing.assert_allclose(after.V, -Z_HEAD_ON.V)


def test_backward_flow_is_free_for_pre_collisional_state():
    back = hard_sphere_flow(Z_HEAD_ON, -1.0)
    np.testing.assert_allclose(back.X, [-2.5, 0, 0, 2.5, 0, 0])


def test_flow_of_collided_state_runs_back_through_the_collision():
    after = hard_sphere_flow(Z_HEAD_ON, 2.0)
    back = hard_sphere_flow(after, -2.0)
    np.testing.assert_allclose(back.Z, Z_HEAD_ON.Z, atol=1e-14)


def test_boundary_state_conventions():
    pre = PhasePoint.from_Z([-0.5, 0, 0, 0.5, 0, 0, 1, 0, 0, -1, 0, 0])
    np.testing.assert_array_equal(hard_sphere_flow(pre, 0.0).Z, pre.Z)
    np.testing.assert_allclose(hard_sphere_flow(pre, 0.5).V, -pre.V)
    np.testing.assert_allclose(hard_sphere_flow(pre, -0.5).V, pre.V)
    post = PhasePoint.from_Z([-0.5, 0, 0, 0.5, 0, 0, -1, 0, 0, 1, 0, 0])
    np.testing.assert_array_equal(hard_sphere_flow(post, 0.0).Z, post.Z)
    np.testing.assert_allclose(hard_sphere_flow(post, 0.5).V, post.V)
    np.testing.assert_allclose(hard_sphere_flow(post, -0.5).V, -post.V)


def test_invalid_state_raises_or_nans():
    X = np.array([[0, 0, 0, 0.2, 0, 0.0]])
    V = np.ones((1, 6))
    with pytest.raises(InvalidState):
        flow_batch(X, V, 1.0)
    Xo, _ = flow_batch(X, V, 1.0, check=False)
    assert np.isnan(Xo).all()


def test_batch_matches_single(rng):
    X, V = random_states(rng, 50, 1.0, "any")
    t = rng.uniform(-3, 3, 50)
    Xo, Vo = flow_batch(X, V, t)
    for i in range(50):
        p = hard_sphere_flow(PhasePoint.from_XV(X[i], V[i]), t[i])
        np.testing.assert_array_equal(p.X, Xo[i])
        np.testing.assert_array_equal(p.V, Vo[i])


@pytest.mark.parametrize("eps", [0.5, 1.0, 2.0])
def test_fold_of_doubled_flow_is_hard_sphere_flow(rng, eps):
    X, V = random_states(rng, 3000, eps, "any")
    t = rng.uniform(-4, 4, len(X))
    Xt, Vt = flow_batch(X, V, t, eps)
    Xd, s = doubled_flow_batch(X, V, 1, t, eps)
    Xf, Vf = fold_batch(Xd, V, s, eps)
    np.testing.assert_allclose(Xf, Xt, atol=1e-9)
    np.testing.assert_allclose(Vf, Vt, atol=1e-9)


def test_sheet_two_mirrors_sheet_one(rng):
    X, V = random_states(rng, 1000, 1.0, "any")
    t = rng.uniform(-4, 4, len(X))
    X1, s1 = doubled_flow_batch(X, V, 1, t)
    X2, s2 = doubled_flow_batch(X, V, 2, t)
    np.testing.assert_array_equal(X1, X2)
    np.testing.assert_array_equal(s1 + s2, 3)


def test_doubled_flow_switches_sheet_at_contact():
    zeta = SheetPoint(Z_HEAD_ON, 1)
    before = doubled_flow(zeta, 0.9)
    after = doubled_flow(zeta, 1.5)
    assert before.sheet == 1 and after.sheet == 2
    np.testing.assert_array_equal(after.base.V, Z_HEAD_ON.V)
    # the centres are exchanged at contact and keep moving with the same velocity
    np.testing.assert_allclose(after.base.X, [0.5 + 0.5, 0, 0, -0.5 - 0.5, 0, 0])
    np.testing.assert_allclose(fold(after).Z, hard_sphere_flow(Z_HEAD_ON, 1.5).Z, atol=1e-14)


def test_group_property(rng):
    X, V = random_states(rng, 2000, 1.0, "any")
    s, t = rng.uniform(-4, 4, (2, len(X)))
    Xa, Va = flow_batch(*flow_batch(X, V, t), s)
    Xb, Vb = flow_batch(X, V, s + t)
    np.testing.assert_allclose(Xa, Xb, atol=1e-9)
    np.testing.assert_allclose(Va, Vb, atol=1e-9)


def test_conservation_along_flow(rng):
    X, V = random_states(rng, 1000, 1.0, "pre")
    Xt, Vt = flow_batch(X, V, 5.0)
    p0, L0, E0 = conserved_quantities(np.concatenate([X, V], axis=1))
    p1, L1, E1 = conserved_quantities(np.concatenate([Xt, Vt], axis=1))
    np.testing.assert_allclose(p1, p0, atol=1e-12)
    np.testing.assert_allclose(L1, L0, atol=1e-11)
    np.testing.assert_allclose(E1, E0, atol=1e-12)


def test_trajectory_includes_event_time():
    tr = trajectory(Z_HEAD_ON, np.linspace(0, 2, 4))
    assert 1.0 in tr.times
    assert tr.event.time == pytest.approx(1.0)
    np.testing.assert_allclose(tr.event.post_velocity, -Z_HEAD_ON.V)
    dtr = doubled_trajectory(SheetPoint(Z_HEAD_ON, 1), np.linspace(0, 2, 4))
    assert list(dtr.sheets) == [1, 1, 1, 2, 2]


def test_sigma_star_displacement_identity(rng):
    # a collided state T_t Z0 is sent to the free image of Z0 displaced by eps [m, -m]
    X, V = random_states(rng, 500, 1.0, "pre")
    from hsliouville.geometry import collision_time, contact_direction

    tau, m = collision_time(X, V), contact_direction(X, V)
    t = tau + 1.0
    Xt, Vt = flow_batch(X, V, t)
    Xs, Vs = sigma_star_batch(Xt, Vt)
    np.testing.assert_allclose(Xs, X + t[:, None] * V + np.concatenate([m, -m], axis=1), atol=1e-10)
    np.testing.assert_allclose(Vs, V, atol=1e-12)
