"""Acceptance criteria, one test and one printed PASS/FAIL line per criterion.

Run directly (``python3 tests/test_acceptance.py``) or through pytest; under
pytest the lines are repeated in the terminal summary.
"""

import os
import time

import numpy as np
import pytest

from hsliouville.distribution import make_chaotic_datum
from hsliouville.quadrature import QuadratureSpec
from hsliouville.scenario import CHECKS, Scenario, run
from hsliouville.verify import (
    bbgky_residual,
    bbgky_test_function,
    chaos_duality_check,
    chaos_witness,
    conservation_check,
    head_on_datum,
    identity_suite,
    sinai_checks,
    weak_battery,
    weak_liouville_residual,
)

EPS = 1.0
SEED = 42
MC_SAMPLES = 1_000_000
LINES = []


def record(number, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    LINES.append(line)
    print(line)
    assert passed, line


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def worst(reports, names):
    picked = [r for r in reports if r.name in names]
    assert len(picked) == len(names)
    return all(r.passed for r in picked), ", ".join(f"{r.name} {r.residual:.2e}/{r.tolerance:.0e}" for r in picked)


@pytest.fixture(scope="module")
def suite():
    return timed(identity_suite, EPS, SEED, n=10_000, n_fd=1_000)


@pytest.fixture(scope="module")
def phi0():
    return head_on_datum(EPS)


@pytest.fixture(scope="module")
def F0(phi0):
    return make_chaotic_datum(phi0, EPS)


def test_criterion_01_collision_time(suite):
    reports, elapsed = suite
    ok, detail = worst(reports, ["collision_time_vs_bisection"])
    record(1, ok and elapsed < 5.0, f"{detail}; suite {elapsed:.1f}s < 5s")


def test_criterion_02_transport_identities(suite):
    reports, elapsed = suite
    ok, detail = worst(reports, ["transport_identity_I", "transport_identity_II"])
    record(2, ok and elapsed < 5.0, f"{detail}; suite {elapsed:.1f}s < 5s")


def test_criterion_03_scattering_conservation(suite):
    ok, detail = worst(suite[0], ["COLM", "COAM", "COKE", "sigma_involution", "sigma_symmetric"])
    record(3, ok, detail)


def test_criterion_04_involution(suite):
    ok, detail = worst(suite[0], ["sigma_star_involution", "sigma_star_unit_jacobian", "collision_time_symmetry"])
    record(4, ok, detail)


def test_criterion_05_fold_unfold(suite):
    reports, elapsed = suite
    ok, detail = worst(reports, ["fold_equivalence", "flow_group_property"])
    record(5, ok and elapsed < 10.0, f"{detail}; suite {elapsed:.1f}s < 10s")


def test_criterion_06_conservation(F0):
    reports, elapsed = timed(conservation_check, F0, (-2.0, -0.5, 0.5, 2.0), EPS, QuadratureSpec(MC_SAMPLES, SEED))
    bad = [r.name for r in reports if not r.passed]
    record(6, not bad and elapsed < 60.0,
           f"{len(reports) - len(bad)}/{len(reports)} within 3 sigma; {elapsed:.1f}s < 60s" + (f"; failed {bad}" if bad else ""))


def test_criterion_07_weak_liouville(F0):
    spec = QuadratureSpec(MC_SAMPLES, SEED)
    t0 = time.perf_counter()
    reports = [weak_liouville_residual(F0, Phi, EPS, spec, spec, name=f"weak_liouville/{k}")
               for k, Phi in weak_battery(EPS).items()]
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"{r.name.split('/')[1]} {abs(r.residual) / max(r.tolerance / 3, 1e-300):.2f} sigma" for r in reports)
    record(7, all(r.passed for r in reports) and elapsed < 180.0, f"{detail}; {elapsed:.1f}s < 180s")


def test_criterion_08_chaos(phi0):
    spec = QuadratureSpec(MC_SAMPLES, SEED)
    reports = [chaos_duality_check(phi0, Phi, EPS, spec, name=f"chaos_duality/{k}")
               for k, Phi in weak_battery(EPS).items()]
    w = chaos_witness(phi0, EPS, SEED)
    gap = abs(w.notes["witness"]["F"] - w.notes["witness"]["free_product"])
    ok = all(r.passed for r in reports) and w.passed
    record(8, ok, f"duality {sum(r.passed for r in reports)}/{len(reports)} within 3 sigma; "
                  f"before t*={w.notes['first_collision']:.3f} max |F - f(x)f| {w.residual:.1e}, "
                  f"witness gap {gap:.2e} at t={w.notes['witness']['t']:.3f}")


def test_criterion_09_bbgky(F0):
    rep, elapsed = timed(bbgky_residual, F0, bbgky_test_function(EPS), EPS, QuadratureSpec(MC_SAMPLES, SEED))
    sig = abs(rep.residual) / max(rep.tolerance / 3, 1e-300)
    record(9, rep.passed and elapsed < 120.0, f"|LHS - RHS| = {abs(rep.residual):.2e} ({sig:.2f} sigma); {elapsed:.1f}s < 120s")


def test_criterion_10_sinai():
    reports = sinai_checks(SEED, n=1000)
    ok, detail = worst(reports, ["sinai/fold_unfold", "sinai/axial_orbit"])
    record(10, ok, detail + " (1000 orbits, at most 5 events)")


def test_criterion_11_determinism(tmp_path):
    sc = Scenario().override("run", checks=CHECKS, samples=100_000, boundary_samples=100_000,
                             region_samples=100_000, output_dir="out")
    sc = sc.override("sinai", samples=200)
    blobs = []
    cwd = os.getcwd()
    try:
        for k in range(2):
            d = tmp_path / f"run{k}"
            d.mkdir()
            os.chdir(d)
            run(sc, "verify")
            blobs.append((d / "out" / "report.json").read_bytes())
    finally:
        os.chdir(cwd)
    same = blobs[0] == blobs[1]
    record(11, same, f"two full-suite runs ({len(CHECKS)} checks) give {'identical' if same else 'different'} report.json "
                     f"({len(blobs[0])} bytes)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
