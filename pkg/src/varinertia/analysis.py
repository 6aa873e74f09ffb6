"""Equilibria, gamma-points, Lyapunov energy evaluation and run classification."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, signal

from .network import PowerNetwork
from .simulator import SimConfig, SystemState, Trajectory, integrate
from .supply import static_characteristic

__all__ = [
    "Equilibrium",
    "GammaPoint",
    "LyapunovReport",
    "RunClassification",
    "EquilibriumError",
    "find_equilibrium",
    "equilibrium_residual",
    "gamma_point",
    "lyapunov_value",
    "lyapunov_series",
    "check_dissipation",
    "classify_run",
    "peak_sequence",
    "overshoot_ratio",
]

logger = logging.getLogger(__name__)

OMEGA_BRACKET = (-10.0, 10.0)
OMEGA_TOL = 1e-12


class EquilibriumError(ValueError):
    """No admissible equilibrium (e.g. a line would need |sin eta| > 1)."""


@dataclass(frozen=True, eq=False)
class Equilibrium:
    omega_sync: float
    eta: np.ndarray
    xs: np.ndarray
    s: np.ndarray
    p: np.ndarray
    mode: str
    assumption1_ok: bool
    cycle_rank: int = 0

    @property
    def omega(self) -> np.ndarray:
        return np.full(self.s.shape, self.omega_sync)

    def as_state(self) -> SystemState:
        n = self.s.size
        return SystemState(self.eta.copy(), self.omega.copy(), self.xs.copy(), np.zeros(n), 0.0)


@dataclass(frozen=True, eq=False)
class GammaPoint:
    omega_bar: float
    slack_bus: str
    omega: np.ndarray
    eta: np.ndarray
    xs: np.ndarray
    s: np.ndarray
    p: np.ndarray
    slack_injection: float

    def as_state(self) -> SystemState:
        n = self.s.size
        return SystemState(self.eta.copy(), self.omega.copy(), self.xs.copy(), np.zeros(n), 0.0)


def _static(network: PowerNetwork, omega_bar: float):
    xs, s = [], []
    for sup in network.bus_supplies:
        x, y = static_characteristic(sup, omega_bar)
        xs.append(x)
        s.append(y)
    return (np.concatenate(xs) if xs else np.zeros(0)), np.array(s)


def _sync_frequency(network: PowerNetwork, pL) -> float:
    gains = network.dc_gains
    total = gains.sum()
    if total <= 0:
        raise EquilibriumError("aggregate static supply gain must be positive")

    def imbalance(w):
        return float(np.sum(-pL - gains * w))

    # Affine for linear supplies; bisection keeps the general route honest.
    guess = -np.sum(pL) / total
    lo, hi = OMEGA_BRACKET
    if not lo < guess < hi:
        raise EquilibriumError(f"synchronous frequency {guess:.6g} outside bracket {OMEGA_BRACKET}")
    root = optimize.bisect(imbalance, lo, hi, xtol=OMEGA_TOL, rtol=4 * np.finfo(float).eps, maxiter=200)
    return guess if abs(root - guess) <= 10 * OMEGA_TOL else root


def find_equilibrium(network: PowerNetwork, pL=None, mode: str = "nonlinear") -> Equilibrium:
    """Synchronous equilibrium for constant loads.

    Line flows are the minimum-norm solution of the bus balance; on meshed
    graphs other flow patterns differing by loop flows are equally valid.
    """
    if mode not in ("nonlinear", "linear"):
        raise ValueError(f"unknown mode {mode!r}")
    pL = network.pL if pL is None else np.asarray(pL, dtype=float)
    graph = network.graph
    w = _sync_frequency(network, pL)
    xs, s = _static(network, w)
    H = graph.incidence
    p, *_ = np.linalg.lstsq(H, -pL + s, rcond=None)
    B = graph.susceptance
    if mode == "linear":
        eta = p / B
    else:
        ratio = p / B
        if np.any(np.abs(ratio) > 1.0):
            over = [graph.line_names[q] for q in np.flatnonzero(np.abs(ratio) > 1.0)]
            raise EquilibriumError(f"no equilibrium with |eta| < pi/2: lines {over} overloaded")
        eta = np.arcsin(ratio)
    eq = Equilibrium(w, eta, xs, s, p, mode, bool(np.all(np.abs(eta) < math.pi / 2)), graph.cycle_rank)
    res = equilibrium_residual(network, eq, pL)
    if res > 1e-8 * max(1.0, np.max(np.abs(pL)), np.max(np.abs(s))):
        raise EquilibriumError(f"equilibrium residual {res:.3g} too large")
    return eq


def equilibrium_residual(network: PowerNetwork, eq: Equilibrium, pL=None) -> float:
    """Sup-norm residual of the synchrony, balance, supply and flow conditions."""
    pL = network.pL if pL is None else np.asarray(pL, dtype=float)
    H = network.graph.incidence
    B = network.graph.susceptance
    omega = eq.omega
    p = B * eq.eta if eq.mode == "linear" else B * np.sin(eq.eta)
    parts = [H.T @ omega, -pL + eq.s - H @ p, p - eq.p]
    A, Bs, Cs, Ds = network.stacked
    if eq.xs.size:
        parts.append(A @ eq.xs - Bs @ omega)
    parts.append(eq.s - (Cs @ eq.xs - Ds * omega))
    return float(max(np.max(np.abs(x)) if x.size else 0.0 for x in parts))


def gamma_point(network: PowerNetwork, omega_bar: float, k, pL=None) -> GammaPoint:
    """Quasi-equilibrium with bus ``k`` pinned at ``omega_bar`` (linear flows).

    Every frequency equals ``omega_bar``, supplies sit on their static
    characteristic, and angles balance every bus except ``k``.  The
    leftover at bus ``k`` is ``slack_injection`` (zero exactly when
    ``omega_bar`` is the synchronous frequency).
    """
    pL = network.pL if pL is None else np.asarray(pL, dtype=float)
    graph = network.graph
    idx = network.bus_index(k)
    xs, s = _static(network, omega_bar)
    H = graph.incidence
    B = graph.susceptance
    keep = np.arange(graph.n_buses) != idx
    rhs_ = (-pL + s)[keep]
    p, *_ = np.linalg.lstsq(H[keep], rhs_, rcond=None)
    eta = p / B
    slack = float((-pL + s - H @ p)[idx])
    return GammaPoint(float(omega_bar), graph.buses[idx], np.full(graph.n_buses, float(omega_bar)),
                      eta, xs, s, p, slack)


def _vp(eta, eta_star, B, mode):
    if mode == "linear":
        return 0.5 * np.sum(B * (eta - eta_star) ** 2, axis=-1)
    return np.sum(B * ((np.cos(eta_star) - np.cos(eta)) - np.sin(eta_star) * (eta - eta_star)), axis=-1)


def lyapunov_value(network: PowerNetwork, state: SystemState, eq: Equilibrium, storage=None, mode=None):
    """Energy function ``V = V_F + V_P + sum V_j`` at a single state.

    ``storage`` is a per-bus sequence of storage matrices (``None`` entries
    drop that bus's supply term with a warning).  Returns
    ``(V, V_F, V_P, sum_Vj)``.
    """
    mode = mode or eq.mode
    M = network.M0 + np.asarray(state.Mv, dtype=float)
    dw = np.asarray(state.omega) - eq.omega_sync
    vf = 0.5 * float(np.sum(M * dw * dw))
    vp = float(_vp(np.asarray(state.eta), eq.eta, network.graph.susceptance, mode))
    vj = _storage_terms(network, np.asarray(state.xs)[None, :], eq, storage)[0]
    return vf + vp + vj, vf, vp, vj


def _storage_terms(network, xs, eq, storage):
    out = np.zeros(xs.shape[0])
    if storage is None:
        if network.n_supply_states:
            warnings.warn("no storage matrices given; supply energy omitted", RuntimeWarning, stacklevel=3)
        return out
    dx = xs - eq.xs[None, :]
    parts = network.split_supply_state(dx)
    missing = []
    for j, (P, x) in enumerate(zip(storage, parts)):
        if x.shape[-1] == 0:
            continue
        if P is None:
            missing.append(network.graph.buses[j])
            continue
        out += 0.5 * np.einsum("ti,ij,tj->t", x, P, x)
    if missing:
        warnings.warn(f"storage matrix missing for buses {missing}; their supply energy is omitted",
                      RuntimeWarning, stacklevel=3)
    return out


def lyapunov_series(network: PowerNetwork, traj: Trajectory, eq: Equilibrium, storage=None, mode=None):
    """Vectorized ``(V, V_F, V_P, sum_Vj)`` along a trajectory."""
    mode = mode or eq.mode
    dw = traj.omega - eq.omega_sync
    vf = 0.5 * np.sum(traj.M * dw * dw, axis=1)
    vp = _vp(traj.eta, eq.eta[None, :], network.graph.susceptance[None, :], mode)
    vj = _storage_terms(network, traj.xs, eq, storage)
    return vf + vp + vj, vf, vp, vj


@dataclass
class LyapunovReport:
    """Energy function along a sampled trajectory.

    Monotonicity is judged against a tolerance ``c h^2`` with ``c`` ten
    times the largest guaranteed dissipation rate
    ``max_t sum_j rho_j (omega_j - omega*)^2`` seen on the run.  Sampled
    feedback policies and the integrator make exact monotonicity too strict
    a test; inertia jumps still show up far above this level.  The regions
    of attraction and passivity neighbourhoods behind the energy argument
    are not computed; the check is pointwise along the trajectory.
    """

    t: np.ndarray
    V: np.ndarray
    V_F: np.ndarray
    V_P: np.ndarray
    sum_Vj: np.ndarray
    bound: np.ndarray
    tolerance: float
    max_positive_jump: float
    positive_jumps: int
    bound_violations: int
    monotone_ok: bool
    jump_times: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "monotone_ok": self.monotone_ok,
            "tolerance": self.tolerance,
            "max_positive_jump": self.max_positive_jump,
            "positive_jumps": self.positive_jumps,
            "bound_violations": self.bound_violations,
            "V_initial": float(self.V[0]),
            "V_final": float(self.V[-1]),
        }

    def rows(self):
        for i in range(self.t.size):
            yield self.t[i], self.V[i], self.V_F[i], self.V_P[i], self.sum_Vj[i], self.bound[i]


def check_dissipation(network: PowerNetwork, traj: Trajectory, eq: Equilibrium, rho, storage=None,
                      c: Optional[float] = None, mode=None) -> LyapunovReport:
    """Check that the energy function does not increase along a run.

    ``rho`` are the per-bus strictness constants matching ``storage``
    (use the margined values the storage matrices were built for).  Samples
    before the last load change are excluded since the energy function is
    tied to the final equilibrium.
    """
    h = traj.h
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (network.n_buses,))
    V, vf, vp, vj = lyapunov_series(network, traj, eq, storage, mode)
    dw2 = (traj.omega - eq.omega_sync) ** 2
    dM = np.diff(traj.M, axis=0)
    bound = np.zeros_like(V)
    bound[:-1] = np.sum((dM / (2 * h) - rho[None, :]) * dw2[:-1], axis=1)

    start = 0
    changes = np.flatnonzero(np.any(np.diff(traj.pL, axis=0) != 0, axis=1))
    if changes.size:
        start = int(changes[-1] + 1)
    dV = np.diff(V)[start:]
    if c is None:
        c = 10.0 * float(np.max(np.sum(rho[None, :] * dw2[start:], axis=1), initial=0.0))
    tol = c * h * h
    pos = np.flatnonzero(dV > tol)
    viol = np.flatnonzero(dV / h > bound[start:-1] + c * h)
    return LyapunovReport(
        t=traj.t, V=V, V_F=vf, V_P=vp, sum_Vj=vj, bound=bound, tolerance=tol,
        max_positive_jump=float(np.max(dV, initial=0.0)),
        positive_jumps=int(pos.size),
        bound_violations=int(viol.size),
        monotone_ok=bool(pos.size == 0),
        jump_times=[float(traj.t[start + i + 1]) for i in pos],
    )


@dataclass
class RunClassification:
    label: str
    max_deviation: float
    final_deviation: float
    settling_time: float
    peaks: dict

    def __str__(self):
        return (f"{self.label}: max deviation {self.max_deviation:.4g} Hz, final {self.final_deviation:.3g} Hz, "
                f"settling time {self.settling_time:.3g} s")


def peak_sequence(dev: np.ndarray, floor: float = 1e-9) -> np.ndarray:
    """Indices of local maxima of a non-negative deviation signal."""
    idx, _ = signal.find_peaks(dev, prominence=floor)
    return idx


def _still_growing(peaks, ratio=1.05, count=5) -> bool:
    """True when each of the last ``count`` peaks beats its predecessor by ``ratio``."""
    if len(peaks) < count + 1:
        return False
    tail = np.asarray(peaks[-(count + 1):])
    return bool(np.all(tail[1:] >= ratio * tail[:-1]))


def classify_run(traj: Trajectory, eq_or_omega, tol: float = 1e-4, escape_radius: Optional[float] = None,
                 growth: float = 1.05, cycles: int = 5) -> RunClassification:
    """Label a run as convergent, oscillatory or divergent.

    Convergent: every frequency within ``tol`` of the synchronous value
    over the last tenth of the horizon.  Divergent: the run left the
    escape radius or blew up, or the last ``cycles`` peak deviations at some
    bus each grew by ``growth``.  Only peaks of at least ``tol`` after the
    last load change count, so the build-up right after a disturbance and
    sub-tolerance ripple are ignored.  Anything else is oscillatory.
    """
    w_star = eq_or_omega.omega_sync if isinstance(eq_or_omega, Equilibrium) else float(eq_or_omega)
    if len(traj) < 20:
        raise ValueError("trajectory too short to classify")
    dev = np.abs(traj.omega - w_star)
    worst = dev.max(axis=1)
    tail = worst[int(math.floor(0.9 * len(traj))):]
    changes = np.flatnonzero(np.any(np.diff(traj.pL, axis=0) != 0, axis=1))
    start = changes[-1] + 1 if changes.size else 0
    peaks = {}
    for j, b in enumerate(traj.buses):
        idx = peak_sequence(dev[:, j])
        vals = dev[idx, j]
        peaks[b] = vals[(idx >= start) & (vals >= tol)]
    above = np.flatnonzero(worst >= tol)
    if above.size == 0:
        settling = 0.0
    elif above[-1] + 1 < len(traj):
        settling = float(traj.t[above[-1] + 1])
    else:
        settling = math.inf

    escaped = traj.status in ("escaped", "nonfinite")
    if escape_radius is not None and np.any(worst > escape_radius):
        escaped = True
    if escaped or any(_still_growing(p, growth, cycles) for p in peaks.values()):
        label = "divergent"
    elif np.max(tail) < tol:
        label = "convergent"
    else:
        label = "oscillatory"
    return RunClassification(label, float(worst.max()), float(worst[-1]), settling, peaks)


def overshoot_ratio(network: PowerNetwork, k, delta: float, config: SimConfig) -> float:
    """Largest later deviation at bus ``k`` relative to a start ``delta`` away.

    The run starts at the gamma-point for ``omega* + delta`` (all
    frequencies at that value, supplies settled) with constant inertia and
    linear flows.  A ratio above one means the bus overshoots past its
    starting deviation, which is what the single-bus inertia attack needs.
    """
    eq = find_equilibrium(network, mode="linear")
    gp = gamma_point(network, eq.omega_sync + delta, k)
    cfg = SimConfig(config.h, config.T, "linear", ())
    traj = integrate(network, cfg, None, gp.as_state())
    idx = network.bus_index(k)
    dev = np.abs(traj.omega[:, idx] - eq.omega_sync)
    # Skip the initial decay: look after the first zero crossing.
    signed = traj.omega[:, idx] - eq.omega_sync
    cross = np.flatnonzero(np.sign(signed[1:]) != np.sign(signed[0]))
    if cross.size == 0:
        return 0.0
    return float(dev[cross[0] + 1:].max() / abs(delta))
