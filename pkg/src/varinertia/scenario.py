"""Scenario files, batch runs and CSV output.

A scenario is a JSON document (``"schema_version": "1"``) describing the
network, the supply at every bus, one inertia policy, the simulation grid,
load steps, the random seed and the initial condition.  Units are seconds,
Hz deviation and per unit on ``base_mva``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .analysis import Equilibrium, LyapunovReport, classify_run, find_equilibrium, gamma_point
from .grid import BusParams, GraphError, NetworkGraph
from .inertia import (
    BangBangInertia,
    ConstantInertia,
    DestabilizerInertia,
    InertiaPolicy,
    PiecewiseLinearInertia,
    RandomizedInertia,
    RateLimitedInertia,
)
from .network import PowerNetwork
from .passivity import strictness_constant
from .simulator import Disturbance, SimConfig, SystemState, Trajectory, initial_state, integrate_many
from .supply import FirstOrderSupply, LtiSupply, SecondOrderSupply, TurbineGovernor

__all__ = [
    "ScenarioError",
    "Scenario",
    "BatchSpec",
    "BatchReport",
    "load_scenario",
    "parse_scenario",
    "save_scenario",
    "dump_scenario",
    "scenario_schema",
    "run_batch",
    "emit_plot_data",
    "write_policy_trace",
    "write_csv",
]

logger = logging.getLogger(__name__)

DEFAULT_SIM = {"h": 0.01, "T": 10.0, "model": "nonlinear"}
DEFAULT_CHUNK = 25


class ScenarioError(ValueError):
    """Invalid scenario; ``pointer`` is the JSON pointer of the offending item."""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}" if pointer else message)


def scenario_schema() -> dict:
    text = resources.files("varinertia").joinpath("data/scenario.schema.json").read_text()
    return json.loads(text)


_VALIDATOR = None


def _validator():
    global _VALIDATOR
    if _VALIDATOR is None:
        _VALIDATOR = jsonschema.Draft202012Validator(scenario_schema())
    return _VALIDATOR


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path) or "/"


def _build_supply(spec: dict) -> LtiSupply:
    kind = spec["kind"]
    lam = spec.get("lambda", 0.0)
    if kind == "first_order":
        return FirstOrderSupply(spec["tau"], spec["K"], lam).to_lti()
    if kind == "second_order":
        return SecondOrderSupply(spec["K"], spec["wn"], spec["zeta"], lam).to_lti()
    if kind == "governor":
        return TurbineGovernor(spec["K"], spec["Ts"], spec["T3"], spec["Tc"], spec["T4"], spec["T5"], lam).to_lti()
    if kind == "static":
        return LtiSupply(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), lam)
    A = np.asarray(spec["A"], dtype=float).reshape(len(spec["A"]), -1) if spec["A"] else np.zeros((0, 0))
    B = np.asarray(spec["B"], dtype=float).reshape(A.shape[0], -1) if spec["B"] else np.zeros((0, 1))
    C = np.asarray(spec["C"], dtype=float).reshape(1, -1) if spec["C"] else np.zeros((1, 0))
    return LtiSupply(A, B, C, spec["D"])


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated scenario document.

    ``data`` is the document as loaded; the network and policies are built
    from it on demand so that a scenario can be shipped to worker processes
    as plain JSON.
    """

    data: dict
    source: Optional[str] = None

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    @property
    def base_mva(self) -> float:
        return float(self.data.get("base_mva", 100.0))

    @cached_property
    def network(self) -> PowerNetwork:
        buses = self.data["buses"]
        graph = NetworkGraph([b["id"] for b in buses], [(l["from"], l["to"], l["B"]) for l in self.data["lines"]])
        params = tuple(BusParams(b["M0"], b.get("Dv", 0.0), b.get("pL", 0.0)) for b in buses)
        supplies = tuple(_build_supply(b["supply"]) for b in buses)
        return PowerNetwork(graph, params, supplies)

    @property
    def model(self) -> str:
        return self.data.get("sim", {}).get("model", DEFAULT_SIM["model"])

    def sim_config(self, model: Optional[str] = None) -> SimConfig:
        sim = {**DEFAULT_SIM, **self.data.get("sim", {})}
        dist = tuple(Disturbance(d["bus"], d["delta_pL"], d["time"]) for d in self.data.get("disturbances", []))
        return SimConfig(sim["h"], sim["T"], model or sim["model"], dist)

    def final_loads(self) -> np.ndarray:
        net = self.network
        pL = net.pL.copy()
        for d in self.data.get("disturbances", []):
            pL[net.bus_index(d["bus"])] += d["delta_pL"]
        return pL

    def equilibrium(self, model: Optional[str] = None, final: bool = True) -> Equilibrium:
        """Equilibrium with every load step applied (``final``) or none."""
        pL = self.final_loads() if final else None
        return find_equilibrium(self.network, pL, mode=model or self.model)

    @cached_property
    def certificates(self) -> tuple:
        return tuple(strictness_constant(s) for s in self.network.bus_supplies)

    def _rho(self, spec) -> np.ndarray:
        net = self.network
        rho = np.array([c.rho for c in self.certificates])
        for k, v in spec.get("rho", {}).items():
            rho[net.bus_index(k)] = v
        return rho

    def make_policy(self, seed: Optional[int] = None, model: Optional[str] = None) -> InertiaPolicy:
        """A fresh policy instance; randomized policies use ``seed``."""
        spec = self.data.get("policy", {"kind": "constant"})
        kind = spec["kind"]
        seed = self.seed if seed is None else int(seed)
        if kind == "constant":
            return ConstantInertia(dict(spec.get("Mv", {})))
        if kind == "bang_bang":
            return BangBangInertia(spec["Ma"], spec.get("buses"), spec.get("threshold", 0.02))
        if kind in ("rate_limited", "randomized"):
            common = dict(
                Ma=spec["Ma"], rho=self._rho(spec), buses=spec.get("buses"),
                tau_vi=spec.get("tau_vi", 100.0), epsilon=spec.get("epsilon", 1e-4),
            )
            if kind == "rate_limited":
                return RateLimitedInertia(threshold=spec.get("threshold", 0.02), **common)
            return RandomizedInertia(update_period=spec.get("update_period", 0.5), step=spec.get("step", 0.5),
                                     seed=seed, **common)
        if kind == "open_loop":
            return PiecewiseLinearInertia(spec["times"], spec["values"])
        eq = self.equilibrium(model)
        return DestabilizerInertia(
            spec["target"], eq.omega_sync, M_hold=spec.get("M_hold"), settle_tol=spec.get("settle_tol", 1e-4),
            dwell=spec.get("dwell", 1.0), growth=spec.get("growth", 1.05), ramp=spec.get("ramp"),
            escape_radius=spec.get("escape_radius", 0.5),
        )

    def initial_state(self, model: Optional[str] = None) -> SystemState:
        spec = self.data.get("initial", {"kind": "zero"})
        net = self.network
        if spec["kind"] == "zero":
            return initial_state(net)
        if spec["kind"] == "equilibrium":
            return find_equilibrium(net, mode=model or self.model).as_state()
        eq = find_equilibrium(net, mode=model or self.model)
        return gamma_point(net, eq.omega_sync + spec["offset"], spec["bus"]).as_state()

    def run(self, seed: Optional[int] = None, model: Optional[str] = None) -> Trajectory:
        return self.run_many([self.seed if seed is None else seed], model)[0]

    def run_many(self, seeds, model: Optional[str] = None) -> list:
        cfg = self.sim_config(model)
        policies = [self.make_policy(s, cfg.model) for s in seeds]
        return integrate_many(self.network, cfg, policies, self.initial_state(cfg.model))

    def with_seed(self, seed: int) -> "Scenario":
        return Scenario({**self.data, "seed": int(seed)}, self.source)


def _check_references(data: dict) -> None:
    ids = [b["id"] for b in data["buses"]]
    seen = set()
    for i, b in enumerate(ids):
        if b in seen:
            raise ScenarioError(f"duplicate bus id {b!r}", f"/buses/{i}/id")
        seen.add(b)

    def need(bus, pointer):
        if bus not in seen:
            raise ScenarioError(f"unknown bus {bus!r}", pointer)

    for i, l in enumerate(data["lines"]):
        need(l["from"], f"/lines/{i}/from")
        need(l["to"], f"/lines/{i}/to")
    for i, d in enumerate(data.get("disturbances", [])):
        need(d["bus"], f"/disturbances/{i}/bus")
    pol = data.get("policy")
    if pol:
        for i, b in enumerate(pol.get("buses", [])):
            need(b, f"/policy/buses/{i}")
        for key in ("Mv", "rho", "values"):
            for b in pol.get(key, {}):
                need(b, f"/policy/{key}/{b}")
        if "target" in pol:
            need(pol["target"], "/policy/target")
        if pol["kind"] == "open_loop":
            n = len(pol["times"])
            for b, v in pol["values"].items():
                if len(v) != n:
                    raise ScenarioError(f"{len(v)} values for {n} breakpoint times", f"/policy/values/{b}")
    init = data.get("initial")
    if init and "bus" in init:
        need(init["bus"], "/initial/bus")


def _check_buildable(sc: Scenario) -> None:
    """Build everything once so downstream errors surface at load time."""
    for i, b in enumerate(sc.data["buses"]):
        try:
            _build_supply(b["supply"])
        except ValueError as exc:
            raise ScenarioError(str(exc), f"/buses/{i}/supply") from None
    try:
        net = sc.network
    except (GraphError, ValueError) as exc:
        raise ScenarioError(str(exc), "/lines") from None
    try:
        cfg = sc.sim_config()
    except ValueError as exc:
        raise ScenarioError(str(exc), "/sim") from None
    try:
        sc.make_policy().bind(net, cfg.h)
    except (ValueError, KeyError) as exc:
        raise ScenarioError(str(exc), "/policy") from None
    try:
        sc.initial_state()
    except ValueError as exc:
        raise ScenarioError(str(exc), "/initial") from None


def parse_scenario(text: str, source: Optional[str] = None) -> Scenario:
    """Parse and validate scenario JSON text."""
    where = source or "<scenario>"
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{where}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    errors = sorted(_validator().iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ScenarioError(err.message, _pointer(err.absolute_path))
    _check_references(data)
    sc = Scenario(data, source)
    _check_buildable(sc)
    return sc


def load_scenario(path) -> Scenario:
    """Read, parse and validate a scenario file."""
    path = Path(path)
    return parse_scenario(path.read_text(), str(path))


def dump_scenario(sc) -> str:
    """Canonical text: sorted keys, two-space indent, trailing newline."""
    data = sc.data if isinstance(sc, Scenario) else sc
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save_scenario(sc, path) -> None:
    Path(path).write_text(dump_scenario(sc))


@dataclass(frozen=True)
class BatchSpec:
    """``runs`` copies of a scenario with seeds ``base_seed + i``.

    Runs are grouped into fixed chunks of ``chunk`` runs that are integrated
    side by side; the chunking does not depend on the worker count.
    """

    scenario: Scenario
    runs: int
    base_seed: Optional[int] = None
    chunk: int = DEFAULT_CHUNK
    model: Optional[str] = None

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("a batch needs at least one run")
        if self.chunk < 1:
            raise ValueError("chunk size must be positive")

    @property
    def seeds(self) -> list:
        base = self.scenario.seed if self.base_seed is None else int(self.base_seed)
        return [base + i for i in range(self.runs)]


@dataclass
class BatchReport:
    t: np.ndarray
    omega_max: np.ndarray
    omega_min: np.ndarray
    seeds: list
    labels: list
    max_deviation: np.ndarray
    final_deviation: np.ndarray
    omega_sync: float
    tallies: dict = field(default_factory=dict)

    @property
    def envelope_deviation(self) -> float:
        """Largest distance of the envelope from the synchronous frequency."""
        return float(np.nanmax(np.maximum(self.omega_max - self.omega_sync, self.omega_sync - self.omega_min)))

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.t, self.omega_max, self.omega_min, self.max_deviation, self.final_deviation):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        h.update(json.dumps([self.seeds, self.labels]).encode())
        return h.hexdigest()

    def rows(self):
        for s, lab, mx, fin in zip(self.seeds, self.labels, self.max_deviation, self.final_deviation):
            yield s, lab, mx, fin


def _run_chunk(job):
    data, seeds, model = job
    sc = Scenario(data)
    eq = sc.equilibrium(model)
    trajs = sc.run_many(seeds, model)
    n = sc.sim_config(model).n_steps + 1
    hi = np.full(n, -np.inf)
    lo = np.full(n, np.inf)
    out = []
    for tr in trajs:
        k = len(tr)
        hi[:k] = np.maximum(hi[:k], tr.omega.max(axis=1))
        lo[:k] = np.minimum(lo[:k], tr.omega.min(axis=1))
        c = classify_run(tr, eq)
        out.append((c.label, c.max_deviation, c.final_deviation))
    return hi, lo, out, eq.omega_sync


def run_batch(spec: BatchSpec, workers: int = 1) -> BatchReport:
    """Run a seeded batch and aggregate the frequency envelope.

    A run that blows up is classified divergent and the batch carries on.
    The report is identical for any worker count.
    """
    seeds = spec.seeds
    jobs = [(spec.scenario.data, seeds[i:i + spec.chunk], spec.model) for i in range(0, len(seeds), spec.chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_chunk, jobs))
    else:
        results = [_run_chunk(j) for j in jobs]
    cfg = spec.scenario.sim_config(spec.model)
    hi = np.max([r[0] for r in results], axis=0)
    lo = np.min([r[1] for r in results], axis=0)
    per_run = [x for r in results for x in r[2]]
    labels = [x[0] for x in per_run]
    tallies = {lab: labels.count(lab) for lab in ("convergent", "oscillatory", "divergent")}
    hi[~np.isfinite(hi)] = np.nan
    lo[~np.isfinite(lo)] = np.nan
    return BatchReport(
        t=np.arange(cfg.n_steps + 1) * cfg.h,
        omega_max=hi,
        omega_min=lo,
        seeds=seeds,
        labels=labels,
        max_deviation=np.array([x[1] for x in per_run]),
        final_deviation=np.array([x[2] for x in per_run]),
        omega_sync=float(results[0][3]),
        tallies=tallies,
    )


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating, int, np.integer)) and not isinstance(v, bool)
                        else v for v in row])
    return path


def write_policy_trace(traj: Trajectory, path) -> Path:
    """Long-format inertia trace with columns ``t, bus, Mv, u, phase``."""
    return write_csv(Path(path), ["t", "bus", "Mv", "u", "phase"], traj.policy_trace_rows())


def emit_plot_data(obj, out_dir, prefix: str = "") -> list:
    """Write the CSV files behind the standard plots and return their paths.

    A trajectory gives a frequency and an inertia trace, a Lyapunov report
    gives the energy trace with its bound column, and a batch report gives
    the frequency envelope.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if isinstance(obj, Trajectory):
        written.append(write_csv(out / f"{prefix}frequency.csv", ["t"] + [f"omega_{b}" for b in obj.buses],
                                  ([t, *w] for t, w in zip(obj.t, obj.omega))))
        written.append(write_csv(out / f"{prefix}inertia.csv", ["t"] + [f"M_{b}" for b in obj.buses],
                                  ([t, *m] for t, m in zip(obj.t, obj.M))))
    elif isinstance(obj, LyapunovReport):
        written.append(write_csv(out / f"{prefix}lyapunov.csv", ["t", "V", "V_F", "V_P", "sumVj", "bound"],
                                  obj.rows()))
    elif isinstance(obj, BatchReport):
        written.append(write_csv(out / f"{prefix}envelope.csv", ["t", "omega_max", "omega_min"],
                                  zip(obj.t, obj.omega_max, obj.omega_min)))
    else:
        raise TypeError(f"no plot data for {type(obj).__name__}")
    return written
