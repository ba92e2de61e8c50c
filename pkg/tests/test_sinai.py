import numpy as np
import pytest

from hsliouville.errors import CornerHit
from hsliouville.sinai import SinaiState, fold_chain, sinai_flow, sinai_trajectory, sinai_unfold
from hsliouville.verify import sinai_checks


def test_axial_orbit_bounces_between_scatterer_and_wall():
    # from (0.75, 0) the particle hits x = 1 at t = 0.25 and the disk at t = 0.75
    st = sinai_flow([0.75, 0.0], [1.0, 0.0], 1.0)
    np.testing.assert_allclose(st.position, [0.75, 0.0], atol=1e-15)
    np.testing.assert_allclose(st.velocity, [1.0, 0.0])
    assert st.events == 2
    st = sinai_flow([0.75, 0.0], [1.0, 0.0], 1.5)
    np.testing.assert_allclose(st.velocity, [-1.0, 0.0])
    np.testing.assert_allclose(st.position, [0.75, 0.0], atol=1e-15)


def test_event_time_reports_incoming_velocity():
    st = sinai_flow([0.75, 0.0], [1.0, 0.0], 0.25)
    np.testing.assert_allclose(st.position, [1.0, 0.0])
    np.testing.assert_allclose(st.velocity, [1.0, 0.0])
    assert st.events == 0


def test_wall_bounce_unfold():
    u, chain = sinai_unfold([0.75, 0.5], [0.0, 1.0], 1.0)
    np.testing.assert_allclose(u, [0.75, 1.5])
    assert len(chain) == 1 and chain.reflections[0].kind == "wall"
    x, v = fold_chain(chain, u, [0.0, 1.0])
    np.testing.assert_allclose(x, [0.75, 0.5])
    np.testing.assert_allclose(v, [0.0, -1.0])


def test_fold_matches_flow_on_random_orbit():
    rng = np.random.default_rng(0)
    x0 = np.array([0.8, -0.6])
    a = rng.uniform(0, 2 * np.pi)
    v0 = np.array([np.cos(a), np.sin(a)])
    st = sinai_flow(x0, v0, 3.0)
    u, chain = sinai_unfold(x0, v0, 3.0)
    x, v = fold_chain(chain, u, v0)
    np.testing.assert_allclose(x, st.position, atol=1e-10)
    np.testing.assert_allclose(v, st.velocity, atol=1e-10)
    assert len(chain) == st.events


def test_reversibility():
    x0, v0 = np.array([-0.7, 0.3]), np.array([0.6, 0.8])
    st = sinai_flow(x0, v0, 2.0)
    back = sinai_flow(st.position, -st.velocity, 2.0)
    np.testing.assert_allclose(back.position, x0, atol=1e-10)
    np.testing.assert_allclose(-back.velocity, v0, atol=1e-10)


def test_corner_and_grazing_raise():
    with pytest.raises(CornerHit) as info:
        sinai_flow([0.5, 0.5], [1.0, 1.0], 1.0)
    assert info.value.time == pytest.approx(0.5)
    with pytest.raises(CornerHit):
        sinai_flow([-0.9, 0.5], [1.0, 0.0], 2.0)
    with pytest.raises(CornerHit):
        sinai_unfold([0.5, 0.5], [1.0, 1.0], 1.0)


@pytest.mark.parametrize("x0, v0, r, t", [
    ([0.1, 0.0], [1.0, 0.0], 0.5, 1.0),
    ([2.0, 0.0], [1.0, 0.0], 0.5, 1.0),
    ([0.75, 0.0], [0.0, 0.0], 0.5, 1.0),
    ([0.75, 0.0], [1.0, 0.0], 1.5, 1.0),
    ([0.75, 0.0], [1.0, 0.0], 0.5, -1.0),
])
def test_invalid_input(x0, v0, r, t):
    with pytest.raises(ValueError):
        sinai_flow(x0, v0, t, r)


def test_state_helpers():
    st = SinaiState([0.75, 0.0], [1.0, 0.0], 0.5)
    assert st.in_table()
    np.testing.assert_array_equal(st.reversed.velocity, [-1.0, 0.0])


def test_trajectory_includes_event_times():
    rows = sinai_trajectory([0.75, 0.0], [1.0, 0.0], np.linspace(0, 1, 5))
    assert 0.25 in rows[:, 0] and 0.75 in rows[:, 0]
    assert rows.shape[1] == 5


def test_sinai_checks_pass():
    reps = sinai_checks(seed=5, n=100)
    assert all(r.passed for r in reps), [r.line() for r in reps]
