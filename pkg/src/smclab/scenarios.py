"""Declarative run definitions, validation, and the built-in suite.

A scenario JSON document (schema 1) looks like::

    {
      "schema": 1,
      "name": "fig1_pendulum_observer_free",
      "plant": {"name": "pendulum", "a": 1.0, "c": 0.1, "b": 1.0},
      "controller": {"name": "observer-free", "k1": 1.0, "lambda": 5.0},
      "x0": [0.5, 0.0],
      "sim": {"dt": 0.001, "t_final": 10.0, "seed": 42, "record_stride": 1},
      "noise": {"std_x": 0.0, "std_v": 0.0},
      "disturbance": {"kind": "none", "amplitude": 0.0, "angular_frequency": 0.0},
      "delay": {"tau": 0.0},
      "estimate_velocity": false,
      "velocity_filter_cutoff_hz": 20.0,
      "views": ["state"],
      "matrix_group": "pendulum"
    }

``controller`` is either one object applied to every node or a list with
one object per node.  ``validate`` reports the complete list of violations
in one pass, never just the first.
"""
from __future__ import annotations

import dataclasses
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import controllers, metrics, plants, sim
from .errors import ConfigError, ScenarioValidationError

SCHEMA_VERSION = 1
DELAY_PROBE_TAU = 0.01
_NAME_RE = re.compile(r"^[A-Za-z0-9._-]+$")
_VIEWS = ("state", "control")

# dataclass fields that stay integers when parsed from JSON
_INT_FIELDS = {"n", "seed", "record_stride", "tanh_table_size"}
# JSON key aliases for reserved or awkward Python names
_ALIASES = {"lambda": "lam"}
_ALIASES_BACK = {"lam": "lambda"}
# per-run mutable state, never serialized
_RUN_STATE_FIELDS = {"vi", "k"}


@dataclass
class Scenario:
    """One validated, fully resolved run definition."""

    name: str
    plant: str
    plant_params: object
    controller: tuple[str, ...]
    controller_params: tuple[object, ...]
    x0: tuple[float, ...]
    sim: sim.SimConfig
    noise: sim.NoiseConfig = field(default_factory=sim.NoiseConfig)
    disturbance: sim.DisturbanceSpec = field(default_factory=sim.DisturbanceSpec)
    delay: sim.DelaySpec = field(default_factory=sim.DelaySpec)
    estimate_velocity: bool = False
    velocity_filter_cutoff_hz: float = 20.0
    views: tuple[str, ...] = ("state",)
    matrix_group: str = ""

    @property
    def n_nodes(self) -> int:
        return self.plant_params.n if self.plant == "network5" else 1

    def make_plant(self) -> plants.PlantModel:
        return plants.make_plant(self.plant, self.plant_params)

    def make_controllers(self) -> list[controllers.Controller]:
        return [
            controllers.make_controller(name, params)
            for name, params in zip(self.controller, self.controller_params)
        ]

    def to_dict(self) -> dict:
        ctrl_entries = [
            _params_to_dict(name, params)
            for name, params in zip(self.controller, self.controller_params)
        ]
        homogeneous = all(entry == ctrl_entries[0] for entry in ctrl_entries)
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "plant": {"name": self.plant, **_plant_params_to_dict(self.plant_params)},
            "controller": ctrl_entries[0] if homogeneous else ctrl_entries,
            "x0": list(self.x0),
            "sim": dataclasses.asdict(self.sim),
            "noise": dataclasses.asdict(self.noise),
            "disturbance": dataclasses.asdict(self.disturbance),
            "delay": dataclasses.asdict(self.delay),
            "estimate_velocity": self.estimate_velocity,
            "velocity_filter_cutoff_hz": self.velocity_filter_cutoff_hz,
            "views": list(self.views),
            "matrix_group": self.matrix_group,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _plant_params_to_dict(params) -> dict:
    table = dataclasses.asdict(params)
    return table


def _params_to_dict(name: str, params) -> dict:
    entry = {"name": name}
    if params is None:
        return entry
    for f in dataclasses.fields(params):
        if f.name in _RUN_STATE_FIELDS:
            continue
        entry[_ALIASES_BACK.get(f.name, f.name)] = getattr(params, f.name)
    return entry


def serialize(scenario: Scenario) -> dict:
    return scenario.to_dict()


def parse(raw: dict) -> Scenario:
    return validate(raw)


def load_scenario(path) -> Scenario:
    with open(path, "r") as f:
        raw = json.load(f)
    return validate(raw)


def _build(cls, table, path: str, errors: list, aliases=None) -> object | None:
    """Construct a config dataclass from a JSON table, collecting messages."""
    if not isinstance(table, dict):
        errors.append(f"{path}: expected an object")
        return None
    valid = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    ok = True
    for key, val in table.items():
        name = (aliases or {}).get(key, key)
        if name not in valid:
            errors.append(f"{path}.{key}: unknown parameter")
            ok = False
            continue
        if isinstance(val, bool):
            errors.append(f"{path}.{key}: expected a number")
            ok = False
        elif name in _INT_FIELDS:
            if not isinstance(val, int):
                errors.append(f"{path}.{key}: expected an integer")
                ok = False
            else:
                kwargs[name] = val
        elif isinstance(val, (int, float)):
            kwargs[name] = float(val)
        elif isinstance(val, str):
            kwargs[name] = val
        elif isinstance(val, dict) and name == "node":
            node = _build(plants.PendulumParams, val, f"{path}.node", errors)
            if node is None:
                ok = False
            else:
                kwargs[name] = node
        else:
            errors.append(f"{path}.{key}: unsupported value type")
            ok = False
    if not ok:
        return None
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        errors.append(f"{path}: {exc}")
    except (TypeError, ValueError) as exc:
        errors.append(f"{path}: {exc}")
    return None


def _parse_controller_entry(entry, n_path: str, errors: list):
    if not isinstance(entry, dict):
        errors.append(f"{n_path}: expected an object")
        return None
    name = entry.get("name")
    if name not in controllers.CONTROLLER_NAMES:
        errors.append(
            f"{n_path}.name: unknown controller {name!r}, expected one of "
            f"{controllers.CONTROLLER_NAMES}"
        )
        return None
    table = {k: v for k, v in entry.items() if k != "name"}
    if name == "none":
        if table:
            errors.append(f"{n_path}: controller 'none' takes no parameters")
            return None
        return (name, None)
    params = _build(controllers.param_type(name), table, n_path, errors, _ALIASES)
    if params is None:
        return None
    return (name, params)


def validate(raw) -> Scenario:
    """Normalize a raw scenario table, or raise with every violation found."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ScenarioValidationError(["scenario: expected a JSON object"])

    known = {
        "schema", "name", "plant", "controller", "x0", "sim", "noise",
        "disturbance", "delay", "estimate_velocity",
        "velocity_filter_cutoff_hz", "views", "matrix_group",
    }
    for key in raw:
        if key not in known:
            errors.append(f"{key}: unknown field")

    schema = raw.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        errors.append(f"schema: unsupported version {schema!r}, expected {SCHEMA_VERSION}")

    name = raw.get("name")
    if not isinstance(name, str) or not _NAME_RE.match(name or ""):
        errors.append("name: required, letters/digits/._- only")
        name = "invalid"

    plant_name = None
    plant_params = None
    plant_raw = raw.get("plant")
    if not isinstance(plant_raw, dict) or "name" not in plant_raw:
        errors.append("plant: required object with a 'name' entry")
    else:
        plant_name = plant_raw["name"]
        if plant_name not in plants.PLANT_NAMES:
            errors.append(
                f"plant.name: unknown plant {plant_name!r}, expected one of "
                f"{plants.PLANT_NAMES}"
            )
            plant_name = None
        else:
            table = {k: v for k, v in plant_raw.items() if k != "name"}
            plant_params = _build(
                plants.param_type(plant_name), table, "plant", errors
            )

    n_nodes = None
    if plant_name == "network5" and plant_params is not None:
        n_nodes = plant_params.n
    elif plant_name is not None and plant_params is not None:
        n_nodes = 1

    ctrl_names: list[str] = []
    ctrl_params: list[object] = []
    ctrl_raw = raw.get("controller")
    if ctrl_raw is None:
        errors.append("controller: required")
    elif isinstance(ctrl_raw, list):
        parsed = [
            _parse_controller_entry(entry, f"controller[{i}]", errors)
            for i, entry in enumerate(ctrl_raw)
        ]
        if n_nodes is not None and len(parsed) != n_nodes:
            errors.append(
                f"controller: expected {n_nodes} entries for plant "
                f"'{plant_name}', got {len(parsed)}"
            )
        if all(p is not None for p in parsed):
            ctrl_names = [p[0] for p in parsed]
            ctrl_params = [p[1] for p in parsed]
    else:
        parsed = _parse_controller_entry(ctrl_raw, "controller", errors)
        if parsed is not None and n_nodes is not None:
            ctrl_names = [parsed[0]] * n_nodes
            # one independent params instance per node, laws may be stateful
            ctrl_params = [
                parsed[1] if parsed[1] is None or i == 0
                else dataclasses.replace(parsed[1])
                for i in range(n_nodes)
            ]

    x0_raw = raw.get("x0")
    x0: tuple[float, ...] = ()
    if not isinstance(x0_raw, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in x0_raw
    ):
        errors.append("x0: required list of numbers")
    else:
        x0 = tuple(float(v) for v in x0_raw)
        if any(not math.isfinite(v) for v in x0):
            errors.append("x0: entries must be finite")
        if n_nodes is not None and len(x0) != 2 * n_nodes:
            errors.append(
                f"x0: expected length {2 * n_nodes} for plant '{plant_name}', "
                f"got {len(x0)}"
            )

    sim_cfg = _build(sim.SimConfig, raw.get("sim", {}), "sim", errors)
    noise_cfg = _build(sim.NoiseConfig, raw.get("noise", {}), "noise", errors)
    dist = _build(sim.DisturbanceSpec, raw.get("disturbance", {}), "disturbance", errors)
    delay = _build(sim.DelaySpec, raw.get("delay", {}), "delay", errors)

    est = raw.get("estimate_velocity", False)
    if not isinstance(est, bool):
        errors.append("estimate_velocity: expected true or false")
        est = False

    cutoff = raw.get("velocity_filter_cutoff_hz", 20.0)
    if isinstance(cutoff, bool) or not isinstance(cutoff, (int, float)) \
            or not math.isfinite(float(cutoff)) or float(cutoff) <= 0:
        errors.append("velocity_filter_cutoff_hz: expected a number > 0")
        cutoff = 20.0

    views_raw = raw.get("views", ["state"])
    if not isinstance(views_raw, list) or not views_raw \
            or any(v not in _VIEWS for v in views_raw):
        errors.append(f"views: expected a non-empty list drawn from {_VIEWS}")
        views_raw = ["state"]

    group = raw.get("matrix_group", "")
    if not isinstance(group, str):
        errors.append("matrix_group: expected a string")
        group = ""

    if errors:
        raise ScenarioValidationError(errors)

    return Scenario(
        name=name,
        plant=plant_name,
        plant_params=plant_params,
        controller=tuple(ctrl_names),
        controller_params=tuple(ctrl_params),
        x0=x0,
        sim=sim_cfg,
        noise=noise_cfg,
        disturbance=dist,
        delay=delay,
        estimate_velocity=est,
        velocity_filter_cutoff_hz=float(cutoff),
        views=tuple(views_raw),
        matrix_group=group,
    )


def _network_x0(n: int = 5, seed: int = 42) -> tuple[float, ...]:
    """Initial node angles drawn once, uniform on [-0.3, 0.3], zero rates."""
    rng = np.random.default_rng(seed)
    angles = rng.uniform(-0.3, 0.3, n)
    x0 = np.zeros(2 * n)
    x0[0::2] = angles
    return tuple(float(v) for v in x0)


def _default_controller(name: str, lam: float):
    if name == "observer-free":
        return controllers.ObserverFreeParams(k1=1.0, lam=lam)
    if name == "classical":
        return controllers.ClassicalParams()
    if name == "super-twisting":
        return controllers.SuperTwistingParams()
    if name == "adaptive":
        return controllers.AdaptiveParams()
    return None


_BASELINE_ORDER = ("classical", "super-twisting", "adaptive", "observer-free")


def builtin_suite() -> list[Scenario]:
    """The shipped benchmark: four plants under four controllers, a
    robustness trio on the Van der Pol plant, and one input-delay probe."""
    suite: list[Scenario] = []
    comparisons = (
        ("fig1", "pendulum", plants.PendulumParams(), (0.5, 0.0), 5.0),
        ("fig2", "vdp", plants.VanDerPolParams(), (2.0, 0.0), 3.0),
        ("fig3", "duffing", plants.DuffingParams(), (1.5, 0.0), 3.0),
        ("fig4", "network5", plants.NetworkParams(), _network_x0(), 5.0),
    )
    for fig, plant_name, plant_params, x0, lam in comparisons:
        n = plant_params.n if plant_name == "network5" else 1
        for ctrl in _BASELINE_ORDER:
            params = [_default_controller(ctrl, lam) for _ in range(n)]
            suite.append(
                Scenario(
                    name=f"{fig}_{plant_name}_{ctrl.replace('-', '_')}",
                    plant=plant_name,
                    plant_params=plant_params,
                    controller=(ctrl,) * n,
                    controller_params=tuple(params),
                    x0=x0,
                    sim=sim.SimConfig(),
                    matrix_group=plant_name,
                )
            )

    robustness = (
        ("fig5_vdp_nominal", sim.NoiseConfig(), sim.DisturbanceSpec()),
        ("fig6_vdp_noise", sim.NoiseConfig(std_x=0.01, std_v=0.01), sim.DisturbanceSpec()),
        (
            "fig7_vdp_disturbance",
            sim.NoiseConfig(),
            sim.DisturbanceSpec(kind="sinusoid", amplitude=0.2, angular_frequency=5.0),
        ),
    )
    for name, noise, dist in robustness:
        suite.append(
            Scenario(
                name=name,
                plant="vdp",
                plant_params=plants.VanDerPolParams(),
                controller=("observer-free",),
                controller_params=(controllers.ObserverFreeParams(k1=1.0, lam=3.0),),
                x0=(2.0, 0.0),
                sim=sim.SimConfig(),
                noise=noise,
                disturbance=dist,
                views=("state", "control"),
            )
        )

    suite.append(
        Scenario(
            name="delay_probe_pendulum_observer_free",
            plant="pendulum",
            plant_params=plants.PendulumParams(),
            controller=("observer-free",),
            controller_params=(controllers.ObserverFreeParams(k1=1.0, lam=5.0),),
            x0=(0.5, 0.0),
            sim=sim.SimConfig(),
            delay=sim.DelaySpec(tau=DELAY_PROBE_TAU),
        )
    )
    return suite


def run_key(sc: Scenario) -> str:
    """Identity of the physical experiment, independent of the controller."""
    return repr((
        sc.plant, sc.plant_params, sc.x0, sc.sim, sc.noise, sc.disturbance,
        sc.delay, sc.estimate_velocity, sc.velocity_filter_cutoff_hz,
    ))


def _delayed_variant(sc: Scenario) -> Scenario:
    return dataclasses.replace(
        sc,
        name=sc.name + "+delay10ms",
        delay=sim.DelaySpec(tau=DELAY_PROBE_TAU),
        controller_params=tuple(
            p if p is None else dataclasses.replace(p) for p in sc.controller_params
        ),
        matrix_group="",
    )


@dataclass
class SuiteResult:
    runs: dict                 # name -> (TimeSeries, MetricsReport)
    matrices: dict             # matrix_group -> ComparisonMatrix
    failures: dict             # name -> message
    out_dir: Path


def run_suite(suite, out_dir, parallelism: int = 1) -> SuiteResult:
    """Execute scenarios, write CSV artifacts, build comparison matrices.

    Output bytes are independent of ``parallelism``: results are collected
    behind a join barrier and written single-threaded in name order.  Each
    scenario in a ``matrix_group`` is rerun with a 10 ms input delay to
    fill the DelayTolerant row; those reruns are not written to disk.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suite = list(suite)
    names = [sc.name for sc in suite]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate scenario names in suite")
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")

    jobs = []
    for sc in suite:
        jobs.append((sc.name, False, sc))
        if sc.matrix_group:
            jobs.append((sc.name, True, _delayed_variant(sc)))

    def execute(job):
        name, is_delayed, scenario = job
        try:
            ts = sim.simulate_run(scenario)
            report = None
            if ts.n_samples >= 2:
                report = metrics.compute_report(ts, run_key=run_key(scenario))
            return name, is_delayed, ts, report, None
        except Exception as exc:  # keep other runs alive, caller sees exit 4
            return name, is_delayed, None, None, f"{type(exc).__name__}: {exc}"

    if parallelism == 1:
        outcomes = [execute(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(execute, jobs))

    runs = {}
    delayed_reports = {}
    failures = {}
    for name, is_delayed, ts, report, error in outcomes:
        if error is not None:
            failures[(name + "+delay10ms") if is_delayed else name] = error
            continue
        if is_delayed:
            delayed_reports[name] = report
            continue
        runs[name] = (ts, report)
        if ts.diverged:
            failures[name] = f"diverged at t={ts.diverged_at:.6g} s"

    by_name = {sc.name: sc for sc in suite}
    for name in sorted(runs):
        runs[name][0].write_csv(out_dir / f"{name}.csv")

    with open(out_dir / "summary.csv", "w", newline="") as f:
        f.write("name," + metrics.MetricsReport.csv_header() + "\n")
        for name in sorted(runs):
            report = runs[name][1]
            if report is not None:
                f.write(f"{name},{report.csv_row()}\n")

    matrices = {}
    groups: dict[str, list[Scenario]] = {}
    for sc in suite:
        if sc.matrix_group and sc.name in runs:
            groups.setdefault(sc.matrix_group, []).append(sc)
    for group, members in sorted(groups.items()):
        if len(members) < 2:
            continue
        reports = {}
        delayed = {}
        bounds = {}
        for sc in members:
            ctrl = sc.controller[0]
            if ctrl in reports:
                raise ConfigError(
                    f"matrix group '{group}' has duplicate controller '{ctrl}'"
                )
            report = runs[sc.name][1]
            if report is None:
                continue
            reports[ctrl] = report
            if sc.name in delayed_reports and delayed_reports[sc.name] is not None:
                delayed[ctrl] = delayed_reports[sc.name]
            bounds[ctrl] = controllers.declared_input_bound(
                ctrl, sc.controller_params[0]
            )
        if len(reports) < 2:
            continue
        matrix = metrics.comparison_matrix(
            reports, metrics.DEFAULT_THRESHOLDS, delayed=delayed, input_bounds=bounds
        )
        matrices[group] = matrix
        with open(out_dir / f"matrix_{group}.csv", "w", newline="") as f:
            f.write("\n".join(matrix.csv_rows()) + "\n")

    return SuiteResult(runs=runs, matrices=matrices, failures=failures, out_dir=out_dir)
