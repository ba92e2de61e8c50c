"""Scenario files and the check runner behind the command line.

A scenario is an INI-style file of ``key = value`` lines under
``[section]`` headers.  Every key is optional; unknown sections and keys
are rejected.  Lists are comma separated, bump components are separated
by semicolons.  Example::

    [run]
    checks = identity_suite, weak_liouville
    epsilon = 1
    samples = 1000000
    seed = 42

    [datum]
    components = -2 0 0 1 0 0 0.45 0.45 1; 2 0 0 -1 0 0 0.45 0.45 1

Outputs go to ``[run] output_dir``: ``report.json`` for checks,
``trajectory.csv`` and ``sinai.csv`` for trajectories, ``marginal.json``
for marginal values.
"""

from concurrent.futures import ThreadPoolExecutor
import configparser
import csv
from dataclasses import asdict, dataclass, field, fields, replace
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ParseError, ValidationError

CHECKS = (
    "identity_suite",
    "divergence_theorem",
    "weak_liouville",
    "region_identities",
    "chaos_duality",
    "chaos_witness",
    "sheet_swap",
    "bbgky",
    "conservation",
    "sinai",
)
BATTERY = ("no_collision", "pre_collision", "straddling", "post_collision", "boundary")
HEAD_ON = ((-2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.45, 0.45, 1.0), (2.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.45, 0.45, 1.0))
TRAJECTORY_COLUMNS = ("t", "x1", "x2", "x3", "xb1", "xb2", "xb3", "v1", "v2", "v3", "vb1", "vb2", "vb3", "sheet")
SINAI_COLUMNS = ("t", "x1", "x2", "v1", "v2")


@dataclass(frozen=True)
class RunSection:
    checks: tuple = field(default=("identity_suite",), metadata={"kind": "names"})
    epsilon: float = field(default=1.0, metadata={"kind": "float", "positive": True})
    seed: int = field(default=42, metadata={"kind": "int", "min": 0})
    samples: int = field(default=1_000_000, metadata={"kind": "int", "min": 1})
    boundary_samples: int = field(default=0, metadata={"kind": "int", "min": 0})
    region_samples: int = field(default=200_000, metadata={"kind": "int", "min": 1})
    workers: int = field(default=1, metadata={"kind": "int", "min": 1})
    flip_orientation: bool = field(default=False, metadata={"kind": "bool"})
    output_dir: str = field(default="hsliouville-out", metadata={"kind": "str"})


@dataclass(frozen=True)
class DatumSection:
    components: tuple = field(default=HEAD_ON, metadata={"kind": "components"})


@dataclass(frozen=True)
class TestFunctionSection:
    __test__ = False

    battery: tuple = field(default=BATTERY, metadata={"kind": "names"})
    center: tuple = field(default=(), metadata={"kind": "floats", "length": (0, 12)})
    half_widths: tuple = field(default=(), metadata={"kind": "floats", "length": (0, 12), "positive": True})
    time_center: float = field(default=1.2, metadata={"kind": "float"})
    time_half_width: float = field(default=0.9, metadata={"kind": "float", "positive": True})
    psi_center: tuple = field(default=(), metadata={"kind": "floats", "length": (0, 6)})
    psi_half_widths: tuple = field(default=(), metadata={"kind": "floats", "length": (0, 6), "positive": True})
    psi_time_center: float = field(default=1.5, metadata={"kind": "float"})
    psi_time_half_width: float = field(default=1.0, metadata={"kind": "float", "positive": True})


@dataclass(frozen=True)
class TrajectorySection:
    state: tuple = field(default=(-1.5, 0.0, 0.0, 1.5, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0),
                         metadata={"kind": "floats", "length": (12,)})
    t_start: float = field(default=0.0, metadata={"kind": "float"})
    t_stop: float = field(default=2.0, metadata={"kind": "float"})
    points: int = field(default=21, metadata={"kind": "int", "min": 1})
    sheet: int = field(default=1, metadata={"kind": "int", "min": 1, "max": 2})
    doubled: bool = field(default=False, metadata={"kind": "bool"})


@dataclass(frozen=True)
class SinaiSection:
    x0: tuple = field(default=(0.75, 0.0), metadata={"kind": "floats", "length": (2,)})
    v0: tuple = field(default=(1.0, 0.0), metadata={"kind": "floats", "length": (2,)})
    t: float = field(default=2.0, metadata={"kind": "float", "min": 0.0})
    radius: float = field(default=0.5, metadata={"kind": "float", "positive": True, "below": 1.0})
    points: int = field(default=41, metadata={"kind": "int", "min": 1})
    samples: int = field(default=1000, metadata={"kind": "int", "min": 1})


@dataclass(frozen=True)
class MarginalSection:
    x: tuple = field(default=(-1.0, 0.0, 0.0), metadata={"kind": "floats", "length": (3,)})
    v: tuple = field(default=(1.0, 0.0, 0.0), metadata={"kind": "floats", "length": (3,)})
    t: float = field(default=1.0, metadata={"kind": "float"})
    samples: int = field(default=200_000, metadata={"kind": "int", "min": 1})


SECTIONS = {
    "run": RunSection,
    "datum": DatumSection,
    "test_function": TestFunctionSection,
    "trajectory": TrajectorySection,
    "sinai": SinaiSection,
    "marginal": MarginalSection,
}


@dataclass(frozen=True)
class Scenario:
    run: RunSection = RunSection()
    datum: DatumSection = DatumSection()
    test_function: TestFunctionSection = TestFunctionSection()
    trajectory: TrajectorySection = TrajectorySection()
    sinai: SinaiSection = SinaiSection()
    marginal: MarginalSection = MarginalSection()

    def to_dict(self):
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def override(self, section, **values):
        """Copy with keys of one section replaced; values are validated."""
        sec = getattr(self, section)
        out = {}
        for f in fields(sec):
            if f.name in values and values[f.name] is not None:
                out[f.name] = _validate(f, values[f.name])
        unknown = set(values) - {f.name for f in fields(sec)}
        if unknown:
            raise ValidationError(sorted(unknown)[0], "unknown key")
        return replace(self, **{section: replace(sec, **out)})


# ---------------------------------------------------------------- parsing

def _floats(text):
    parts = text.replace(",", " ").split()
    return tuple(float(p) for p in parts)


def _convert(f, raw):
    kind = f.metadata["kind"]
    raw = raw.strip()
    if kind == "float":
        return float(raw)
    if kind == "int":
        v = float(raw)
        if v != int(v):
            raise ValueError("expected an integer")
        return int(v)
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected true or false")
    if kind == "str":
        return raw
    if kind == "floats":
        return _floats(raw)
    if kind == "names":
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    if kind == "components":
        return tuple(_floats(p) for p in raw.split(";") if p.strip())
    raise AssertionError(kind)


def _validate(f, value):
    """Normalize a converted value and check the field's constraints."""
    meta = f.metadata
    kind = meta["kind"]
    key = f.name
    try:
        if kind == "float":
            value = float(value)
            if not math.isfinite(value):
                raise ValueError("must be finite")
        elif kind == "int":
            if float(value) != int(value):
                raise ValueError("expected an integer")
            value = int(value)
        elif kind == "floats":
            value = tuple(float(x) for x in value)
            if not all(math.isfinite(x) for x in value):
                raise ValueError("must be finite")
        elif kind in ("names",):
            value = tuple(str(x) for x in value)
        elif kind == "components":
            value = tuple(tuple(float(x) for x in c) for c in value)
        elif kind == "bool":
            value = bool(value)
        elif kind == "str":
            value = str(value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(key, str(exc)) from None
    vals = value if kind == "floats" else (value,) if kind in ("float", "int") else ()
    if meta.get("positive") and any(x <= 0 for x in vals):
        raise ValidationError(key, "must be positive")
    if "min" in meta and any(x < meta["min"] for x in vals):
        raise ValidationError(key, f"must be >= {meta['min']}")
    if "max" in meta and any(x > meta["max"] for x in vals):
        raise ValidationError(key, f"must be <= {meta['max']}")
    if "below" in meta and any(x >= meta["below"] for x in vals):
        raise ValidationError(key, f"must be below {meta['below']}")
    if "length" in meta and len(value) not in meta["length"]:
        raise ValidationError(key, f"expected {' or '.join(map(str, meta['length']))} values")
    if kind == "names":
        allowed = CHECKS if key == "checks" else BATTERY
        bad = [x for x in value if x not in allowed]
        if bad:
            raise ValidationError(key, f"unknown name {bad[0]!r}")
        if not value and key == "checks":
            raise ValidationError(key, "no checks selected")
    if kind == "components":
        if not value:
            raise ValidationError(key, "at least one component required")
        for c in value:
            if len(c) != 9:
                raise ValidationError(key, "each component needs 9 numbers: x(3) v(3) rx rv amplitude")
            if c[6] <= 0 or c[7] <= 0 or not all(math.isfinite(x) for x in c):
                raise ValidationError(key, "radii must be positive")
    return value


def _check_pairs(sc):
    tf = sc.test_function
    if len(tf.center) != len(tf.half_widths):
        raise ValidationError("half_widths", "must match center")
    if len(tf.psi_center) != len(tf.psi_half_widths):
        raise ValidationError("psi_half_widths", "must match psi_center")
    if sc.trajectory.t_stop < sc.trajectory.t_start:
        raise ValidationError("t_stop", "must not precede t_start")
    if not any(sc.sinai.v0):
        raise ValidationError("v0", "must be nonzero")
    return sc


def parse_scenario(text):
    """Parse and validate scenario text; missing keys take their defaults."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                   empty_lines_in_values=False, strict=True)
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside any [section]", exc.lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ParseError(exc.message.split(":")[-1].strip() or "duplicate entry", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ParseError("expected 'key = value'", line) from None
    sections = {}
    for name in cp.sections():
        if name not in SECTIONS:
            raise ValidationError(name, "unknown section")
        cls = SECTIONS[name]
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in cp.items(name):
            if key not in known:
                raise ValidationError(key, f"unknown key in [{name}]")
            try:
                conv = _convert(known[key], raw)
            except ValueError as exc:
                raise ValidationError(key, str(exc)) from None
            values[key] = _validate(known[key], conv)
        sections[name] = cls(**values)
    return _check_pairs(Scenario(**sections))


def load_scenario(path):
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def _fmt(f, value):
    kind = f.metadata["kind"]
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("float",):
        return repr(float(value))
    if kind == "floats":
        return ", ".join(repr(float(x)) for x in value)
    if kind == "names":
        return ", ".join(value)
    if kind == "components":
        return "; ".join(" ".join(repr(float(x)) for x in c) for c in value)
    return str(value)


def serialize_scenario(sc):
    """Canonical text listing every key; parsing it gives back an equal Scenario."""
    lines = []
    for name in SECTIONS:
        sec = getattr(sc, name)
        lines.append(f"[{name}]")
        for f in fields(sec):
            v = _fmt(f, getattr(sec, f.name))
            lines.append(f"{f.name} = {v}" if v != "" else f"{f.name} =")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------- building objects

def build_phi0(sc):
    from .distribution import BumpComponent, OneParticleDatum

    return OneParticleDatum([BumpComponent(tuple(c[:3]), tuple(c[3:6]), c[6], c[7], c[8])
                             for c in sc.datum.components])


def build_battery(sc):
    from .quadrature import TestFunction
    from .verify import weak_battery

    tf = sc.test_function
    full = weak_battery(sc.run.epsilon)
    out = {k: full[k] for k in tf.battery}
    if tf.center:
        out["custom"] = TestFunction(np.array(tf.center), np.array(tf.half_widths), tf.time_center,
                                     tf.time_half_width)
    return out


def build_psi(sc):
    from .quadrature import TestFunction
    from .verify import bbgky_test_function

    tf = sc.test_function
    if tf.psi_center:
        return TestFunction(np.array(tf.psi_center), np.array(tf.psi_half_widths), tf.psi_time_center,
                            tf.psi_time_half_width)
    return bbgky_test_function(sc.run.epsilon)


def _pick(battery, preferred="straddling"):
    return battery.get(preferred) or next(iter(battery.values()))


def check_tasks(sc):
    """(name, thunk) pairs, one per selected check; each thunk returns a list of CheckReports."""
    from . import verify as vf
    from .distribution import make_chaotic_datum
    from .quadrature import QuadratureSpec

    r = sc.run
    eps, seed = r.epsilon, r.seed
    spec = QuadratureSpec(r.samples, seed)
    bspec = QuadratureSpec(r.boundary_samples or r.samples, seed)
    rspec = QuadratureSpec(r.region_samples, seed)
    phi0 = build_phi0(sc)

    def F0():
        return make_chaotic_datum(phi0, eps)

    tasks = {
        "identity_suite": lambda: vf.identity_suite(eps, seed, spec=QuadratureSpec(min(r.samples, 200_000), seed),
                                                    flip_orientation=r.flip_orientation),
        "divergence_theorem": lambda: vf.divergence_check(eps, spec, r.flip_orientation),
        "weak_liouville": lambda: [vf.weak_liouville_residual(F0(), Phi, eps, spec, bspec, r.flip_orientation,
                                                              name=f"weak_liouville/{k}")
                                   for k, Phi in build_battery(sc).items()],
        "region_identities": lambda: [vf.region_identity_check(F0(), _pick(build_battery(sc)), reg, side, eps, rspec)
                                      for reg in ("--", "-+", "+-", "++") for side in ("time", "space")],
        "chaos_duality": lambda: [vf.chaos_duality_check(phi0, Phi, eps, spec, name=f"chaos_duality/{k}")
                                  for k, Phi in build_battery(sc).items()],
        "chaos_witness": lambda: [vf.chaos_witness(phi0, eps, seed)],
        "sheet_swap": lambda: [vf.sheet_swap_check(phi0, _pick(build_battery(sc)), eps, spec)],
        "bbgky": lambda: [vf.bbgky_residual(F0(), build_psi(sc), eps, spec)],
        "conservation": lambda: vf.conservation_check(F0(), eps=eps, spec=spec),
        "sinai": lambda: vf.sinai_checks(seed, sc.sinai.samples, sc.sinai.radius),
    }
    return [(name, tasks[name]) for name in r.checks]


def _error_report(name, exc):
    from .verify import CheckReport

    return CheckReport(name, math.nan, math.nan, math.nan, math.nan, math.nan, 0.0, False,
                       {"error": f"{type(exc).__name__}: {exc}"})


def run_checks(sc):
    """Run the selected checks, concurrently when ``workers`` > 1; order follows the scenario."""

    def guarded(item):
        name, thunk = item
        try:
            return list(thunk())
        except Exception as exc:  # reported, not raised: remaining checks still run
            return [_error_report(name, exc)]

    tasks = check_tasks(sc)
    if sc.run.workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(sc.run.workers) as ex:
            groups = list(ex.map(guarded, tasks))
    else:
        groups = [guarded(t) for t in tasks]
    return [rep for g in groups for rep in g]


# ---------------------------------------------------------------- output

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def report_document(sc, reports):
    return {
        "version": __version__,
        "scenario": sc.to_dict(),
        "checks": [r.to_dict() for r in reports],
        "all_passed": bool(reports) and all(r.passed for r in reports),
    }


def write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        sheet = header[-1] == "sheet"
        for row in rows:
            vals = [format(float(x), ".17g") for x in (row[:-1] if sheet else row)]
            w.writerow(vals + [int(row[-1])] if sheet else vals)
    return path


def trajectory_rows(sc):
    from .flow import SheetPoint, doubled_trajectory, trajectory
    from .geometry import PhasePoint

    tr = sc.trajectory
    eps = sc.run.epsilon
    times = np.linspace(tr.t_start, tr.t_stop, tr.points)
    Z0 = PhasePoint.from_Z(np.array(tr.state))
    if tr.doubled:
        traj = doubled_trajectory(SheetPoint(Z0, tr.sheet), times, eps)
    else:
        traj = trajectory(Z0, times, eps)
    return [[t, *z, s] for t, z, s in traj.rows()], traj


# ---------------------------------------------------------------- commands

def run(sc, command="verify"):
    """Execute a command for a validated scenario; returns the exit status."""
    out = Path(sc.run.output_dir)
    if command == "verify":
        reports = run_checks(sc)
        doc = report_document(sc, reports)
        write_json(out / "report.json", doc)
        return 0 if doc["all_passed"] else 1
    if command == "chaos":
        return run(sc.override("run", checks=("chaos_duality", "chaos_witness", "sheet_swap")), "verify")
    if command == "simulate":
        rows, _ = trajectory_rows(sc)
        write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, rows)
        return 0
    if command == "sinai":
        from .sinai import sinai_trajectory

        s = sc.sinai
        rows = sinai_trajectory(s.x0, s.v0, np.linspace(0.0, s.t, s.points), s.radius)
        write_csv(out / "sinai.csv", SINAI_COLUMNS, rows)
        return run(sc.override("run", checks=("sinai",)), "verify")
    if command == "marginal":
        from .distribution import make_chaotic_datum, marginal_one
        from .quadrature import QuadratureSpec

        m = sc.marginal
        eps = sc.run.epsilon
        est = marginal_one(make_chaotic_datum(build_phi0(sc), eps), m.x, m.v, m.t, eps,
                           QuadratureSpec(m.samples, sc.run.seed))
        write_json(out / "marginal.json", {"version": __version__, "scenario": sc.to_dict(),
                                           "marginal": est.to_dict()})
        return 0
    raise ValueError(f"unknown command {command!r}")
