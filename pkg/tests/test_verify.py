import numpy as np
import pytest

from hsliouville.distribution import BumpDatum, make_chaotic_datum
from hsliouville.errors import AsymmetricDatum, UnsupportedRegion
from hsliouville.quadrature import QuadratureSpec
from hsliouville.verify import (
    CheckReport,
    bbgky_residual,
    bbgky_test_function,
    chaos_witness,
    check_seed,
    divergence_check,
    identity_suite,
    region_identity_check,
    sheet_swap_check,
    weak_battery,
    weak_liouville_residual,
)

SMALL = QuadratureSpec(100_000, 7)


def test_check_seed_depends_on_name_only():
    assert check_seed(1, "a") == check_seed(1, "a")
    assert check_seed(1, "a") != check_seed(1, "b")
    assert check_seed(1, "a") != check_seed(2, "a")


def test_report_line_and_dict():
    rep = CheckReport("x", 1.0, 0.1, 1.0, 0.1, 0.0, 0.5, True, {})
    assert rep.line().startswith("[PASS] x")
    assert rep.to_dict()["passed"] is True


@pytest.mark.parametrize("case", ["no_collision", "straddling"])
def test_weak_liouville_small(F0, case):
    Phi = weak_battery(1.0)[case]
    rep = weak_liouville_residual(F0, Phi, 1.0, SMALL)
    assert rep.passed, rep.line()


def test_weak_liouville_detects_flipped_normal(F0):
    Phi = weak_battery(1.0)["straddling"]
    rep = weak_liouville_residual(F0, Phi, 1.0, SMALL, flip_orientation=True)
    assert not rep.passed


@pytest.mark.parametrize("region", ["--", "-+", "+-", "++"])
@pytest.mark.parametrize("side", ["time", "space"])
def test_region_identities_with_boundary_mass(contact_datum, region, side):
    Phi = weak_battery(1.0)["boundary"]
    rep = region_identity_check(contact_datum, Phi, region, side, 1.0, QuadratureSpec(200_000, 3))
    assert rep.passed, rep.line()
    assert rep.notes["boundary_term"] != 0.0


def test_region_identity_rejects_unknown_labels(F0):
    Phi = weak_battery(1.0)["boundary"]
    with pytest.raises(UnsupportedRegion):
        region_identity_check(F0, Phi, "+0", "time")
    with pytest.raises(UnsupportedRegion):
        region_identity_check(F0, Phi, "++", "velocity")


def test_bbgky_rejects_asymmetric_datum():
    lopsided = BumpDatum([-2, 0, 0, 2, 0, 0, 1, 0, 0, 0, 0, 0], 0.45, 0.45)
    with pytest.raises(AsymmetricDatum):
        bbgky_residual(lopsided, bbgky_test_function(1.0), 1.0, SMALL)


def test_chaos_witness(phi0):
    rep = chaos_witness(phi0, 1.0, seed=3, samples=5000)
    assert rep.passed, rep.line()
    w = rep.notes["witness"]
    assert w["t"] > rep.notes["first_collision"]
    assert abs(w["F"] - w["free_product"]) > 0


def test_sheet_swap(phi0):
    rep = sheet_swap_check(phi0, weak_battery(1.0)["straddling"], 1.0, SMALL)
    assert rep.passed, rep.line()


@pytest.mark.parametrize("eps", [0.5, 1.0, 2.0])
def test_identity_suite_eps_sweep(eps):
    reps = identity_suite(eps, seed=11, n=2000, n_fd=200, spec=QuadratureSpec(50_000, 11))
    failed = [r.line() for r in reps if not r.passed]
    assert not failed, failed


def test_divergence_check_orientation():
    assert divergence_check(1.0, QuadratureSpec(50_000, 5))[0].passed
    assert not all(r.passed for r in divergence_check(1.0, QuadratureSpec(50_000, 5), flip_orientation=True))
