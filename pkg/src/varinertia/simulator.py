"""Fixed-step integration of the swing/supply/inertia dynamics.

State layout of the integrated vector: line angle differences, bus
frequencies, stacked supply states, then any ODE states owned by the
inertia policy.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .inertia import ConstantInertia, InertiaPolicy, RateLimitedInertia
from .network import PowerNetwork

__all__ = [
    "SystemState",
    "Disturbance",
    "SimConfig",
    "Trajectory",
    "SimulationAbort",
    "rhs",
    "integrate",
    "integrate_fixed_bus",
    "integrate_many",
    "initial_state",
]

logger = logging.getLogger(__name__)

MODELS = ("nonlinear", "linear")


class SimulationAbort(RuntimeError):
    """Raised when total inertia becomes non-positive."""


@dataclass
class SystemState:
    eta: np.ndarray
    omega: np.ndarray
    xs: np.ndarray
    Mv: np.ndarray
    t: float = 0.0

    def copy(self) -> "SystemState":
        return SystemState(self.eta.copy(), self.omega.copy(), self.xs.copy(), self.Mv.copy(), self.t)


@dataclass(frozen=True)
class Disturbance:
    bus: str
    delta_pL: float
    time: float


@dataclass(frozen=True)
class SimConfig:
    h: float = 0.01
    T: float = 10.0
    model: str = "nonlinear"
    disturbances: tuple = ()

    def __post_init__(self):
        if not (self.h > 0 and self.T > 0):
            raise ValueError("step and horizon must be positive")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        object.__setattr__(self, "disturbances", tuple(self.disturbances))

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h))


@dataclass
class Trajectory:
    """Samples at every step boundary.

    ``Mv`` at sample ``n`` is the virtual inertia in force from ``t[n]``
    onwards; ``pL`` likewise.
    """

    buses: tuple
    lines: tuple
    M0: np.ndarray
    t: np.ndarray
    eta: np.ndarray
    omega: np.ndarray
    xs: np.ndarray
    Mv: np.ndarray
    pL: np.ndarray
    u: np.ndarray
    phase: list
    h: float
    status: str = "completed"
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def M(self) -> np.ndarray:
        return self.M0[None, :] + self.Mv

    @property
    def aborted(self) -> bool:
        return self.status == "nonfinite"

    def __len__(self):
        return self.t.size

    def state(self, i: int) -> SystemState:
        return SystemState(self.eta[i], self.omega[i], self.xs[i], self.Mv[i], float(self.t[i]))

    def final_state(self) -> SystemState:
        return self.state(-1)

    def to_csv(self, path, V=None) -> None:
        header = ["t"] + [f"omega_{b}" for b in self.buses] + [f"eta_{q}" for q in self.lines]
        header += [f"Mv_{b}" for b in self.buses]
        if V is not None:
            header.append("V")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.t.size):
                row = [self.t[i], *self.omega[i], *self.eta[i], *self.Mv[i]]
                if V is not None:
                    row.append(V[i])
                w.writerow([repr(float(x)) for x in row])

    def policy_trace_rows(self):
        """Long-format rows ``(t, bus, Mv, u, phase)``."""
        for i in range(self.t.size):
            for j, b in enumerate(self.buses):
                yield self.t[i], b, self.Mv[i, j], self.u[i, j], self.phase[i]


class _Dynamics:
    """Right-hand side closure over a network and a policy."""

    def __init__(self, network: PowerNetwork, policy: InertiaPolicy, model: str, fixed_bus: Optional[int] = None):
        self.net = network
        self.policy = policy
        self.linear = model == "linear"
        self.H = network.graph.incidence
        self.Bl = network.graph.susceptance
        self.A, self.Bs, self.Cs, self.Ds = network.stacked
        self.M0 = network.M0
        self.E = E = network.n_lines
        self.N = N = network.n_buses
        self.nx = nx = network.n_supply_states
        self.fixed_bus = fixed_bus
        self.pL = network.pL.copy()
        # Every linear term of the core dynamics in one matrix; the
        # frequency rows are still to be divided by the inertia.
        m = E + N + nx
        J = np.zeros((m, m))
        Hb = self.H * self.Bl[None, :]
        J[:E, E:E + N] = self.H.T
        J[E:E + N, E:E + N] = -np.diag(self.Ds)
        J[E:E + N, E + N:] = self.Cs
        J[E + N:, E:E + N] = -self.Bs
        J[E + N:, E + N:] = self.A
        if self.linear:
            J[E:E + N, :E] = -Hb
        self.J = J
        self.Hb = Hb
        self.m = m
        self.policy_has_states = policy.n_states > 0
        self.keep = np.ones(N)
        if fixed_bus is not None:
            self.keep[fixed_bus] = 0.0

    def split(self, z):
        E, N, nx = self.E, self.N, self.nx
        return z[:E], z[E:E + N], z[E + N:E + N + nx], z[E + N + nx:]

    def flows(self, eta):
        return self.Bl * eta if self.linear else self.Bl * np.sin(eta)

    def __call__(self, t, z):
        E, N, m = self.E, self.N, self.m
        zp = z[m:]
        M = self.M0 + self.policy.mv(t, zp)
        if M.min() <= 0:
            raise SimulationAbort(f"non-positive inertia at t={t:.6g}")
        d = self.J @ z[:m]
        f = d[E:E + N]
        if not self.linear:
            f -= self.Hb @ np.sin(z[:E])
        f -= self.pL
        f /= M
        if self.fixed_bus is not None:
            f *= self.keep
        if self.policy_has_states:
            return np.concatenate([d, self.policy.state_rhs(t, zp)])
        return d


def rhs(network: PowerNetwork, state: SystemState, pL=None, model: str = "nonlinear", fixed_bus=None) -> SystemState:
    """Time derivative of a network state for given inertia ``state.Mv``.

    Returns the derivative packed as a :class:`SystemState` (``Mv`` is
    returned as zeros: inertia is exogenous here).
    """
    policy = ConstantInertia(np.asarray(state.Mv, dtype=float))
    policy.bind(network, 1.0)
    k = None if fixed_bus is None else network.bus_index(fixed_bus)
    dyn = _Dynamics(network, policy, model, k)
    if pL is not None:
        dyn.pL = np.asarray(pL, dtype=float)
    z = np.concatenate([state.eta, state.omega, state.xs])
    d = dyn(state.t, z)
    deta, domega, dxs, _ = dyn.split(d)
    return SystemState(deta, domega, dxs, np.zeros(network.n_buses), state.t)


def initial_state(network: PowerNetwork, eta=None, omega=None, xs=None) -> SystemState:
    """State with zeros wherever a component is not given."""
    z = lambda v, n: np.zeros(n) if v is None else np.asarray(v, dtype=float).copy()
    return SystemState(z(eta, network.n_lines), z(omega, network.n_buses), z(xs, network.n_supply_states),
                       np.zeros(network.n_buses), 0.0)


def _rk4(f, t, z, h):
    k1 = f(t, z)
    k2 = f(t + h / 2, z + h / 2 * k1)
    k3 = f(t + h / 2, z + h / 2 * k2)
    k4 = f(t + h, z + h * k3)
    return z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(network: PowerNetwork, config: SimConfig, policy: Optional[InertiaPolicy] = None,
              initial: Optional[SystemState] = None, _fixed_bus=None) -> Trajectory:
    """Classical RK4 on a fixed grid.

    Feedback policies decide at step boundaries and hold their decision;
    open-loop profiles are evaluated at every stage time.  A load step
    takes effect at the first step boundary at or after its time.  A
    non-finite state ends the run early with ``status == "nonfinite"``.
    """
    policy = policy if policy is not None else ConstantInertia(0.0)
    initial = initial if initial is not None else initial_state(network)
    h = config.h
    policy.bind(network, h)
    dyn = _Dynamics(network, policy, config.model, _fixed_bus)

    z = np.concatenate([initial.eta, initial.omega, initial.xs, policy.initial_states()]).astype(float)
    expected = network.n_lines + network.n_buses + network.n_supply_states + policy.n_states
    if z.size != expected:
        raise ValueError(f"initial state has {z.size} entries, expected {expected}")

    pending = sorted(config.disturbances, key=lambda d: d.time)
    n_steps = config.n_steps
    N = network.n_buses
    rec = {k: [] for k in ("t", "eta", "omega", "xs", "Mv", "pL", "u")}
    phases = []
    status, message = "completed", ""

    for n in range(n_steps + 1):
        t = n * h
        while pending and pending[0].time <= t + 1e-9 * h:
            d = pending.pop(0)
            dyn.pL[network.bus_index(d.bus)] += d.delta_pL
        eta, omega, xs, zp = dyn.split(z)
        state = SystemState(eta, omega, xs, policy.mv(t, zp), t)
        policy.begin_step(t, state)
        mv = policy.mv(t, zp)
        u = policy.setpoint()
        rec["t"].append(t)
        rec["eta"].append(eta.copy())
        rec["omega"].append(omega.copy())
        rec["xs"].append(xs.copy())
        rec["Mv"].append(np.array(mv, dtype=float))
        rec["pL"].append(dyn.pL.copy())
        rec["u"].append(np.full(N, np.nan) if u is None else np.array(u, dtype=float))
        phases.append(policy.phase)
        if policy.finished:
            status = "escaped" if getattr(policy, "escaped", False) else "stopped"
            message = f"policy finished at t={t:.6g}"
            break
        if n == n_steps:
            break
        z_new = _rk4(dyn, t, z, h)
        if not np.all(np.isfinite(z_new)):
            status, message = "nonfinite", f"non-finite state after step at t={t:.6g}"
            logger.warning(message)
            break
        if policy.n_states:
            E_N_x = z_new.size - policy.n_states
            z_new[E_N_x:] = policy.project(z_new[E_N_x:])
        z = z_new

    arr = lambda k, width: np.array(rec[k]).reshape(len(rec["t"]), width)
    return Trajectory(
        buses=network.graph.buses,
        lines=network.graph.line_names,
        M0=network.M0.copy(),
        t=np.array(rec["t"]),
        eta=arr("eta", network.n_lines),
        omega=arr("omega", N),
        xs=arr("xs", network.n_supply_states),
        Mv=arr("Mv", N),
        pL=arr("pL", N),
        u=arr("u", N),
        phase=phases,
        h=h,
        status=status,
        message=message,
        extra={"policy": policy},
    )


def integrate_fixed_bus(network: PowerNetwork, config: SimConfig, k, omega_bar: float,
                        policy: Optional[InertiaPolicy] = None, initial: Optional[SystemState] = None) -> Trajectory:
    """Integrate with bus ``k`` pinned at frequency ``omega_bar``.

    Bus ``k``'s swing equation is dropped; its frequency stays at
    ``omega_bar`` and it absorbs whatever power imbalance arises.
    """
    idx = network.bus_index(k)
    initial = (initial if initial is not None else initial_state(network)).copy()
    initial.omega[idx] = omega_bar
    return integrate(network, config, policy, initial, _fixed_bus=idx)


def _stackable(policies) -> bool:
    if all(type(p) is ConstantInertia for p in policies):
        return True
    if all(isinstance(p, RateLimitedInertia) for p in policies):
        return len({p.tau_vi for p in policies}) == 1
    return False


def integrate_many(network: PowerNetwork, config: SimConfig, policies, initial: Optional[SystemState] = None) -> list:
    """Integrate one run per policy, stepping the runs side by side.

    Runs driven by constant or rate-limited-family policies are stacked
    and advanced with one vectorized RK4 step per grid point.  Each policy
    still makes its own decisions at step boundaries, so the result agrees
    with calling :func:`integrate` per policy up to floating-point
    summation order.  Any other mix of policies falls back to sequential
    runs.
    """
    policies = list(policies)
    if not policies:
        return []
    if not _stackable(policies):
        return [integrate(network, config, p, initial) for p in policies]
    initial = initial if initial is not None else initial_state(network)
    h = config.h
    R = len(policies)
    for p in policies:
        p.bind(network, h)
    E, N = network.n_lines, network.n_buses
    dyn = _Dynamics(network, policies[0], config.model)
    m = dyn.m
    JT, HbT, M0 = dyn.J.T.copy(), dyn.Hb.T.copy(), network.M0
    with_states = policies[0].n_states > 0
    if with_states:
        cap = np.stack([p._cap for p in policies])
        maskf = np.stack([p._maskf for p in policies])
        tau_vi = policies[0].tau_vi
        z0p = np.stack([p.initial_states() for p in policies])
    else:
        mv_const = np.stack([p._mv for p in policies])
        z0p = np.zeros((R, 0))
    core = np.concatenate([initial.eta, initial.omega, initial.xs]).astype(float)
    Z = np.hstack([np.tile(core, (R, 1)), z0p])
    pL = dyn.pL
    U = np.zeros((R, N))

    def F(t, Z):
        D = Z[:, :m] @ JT
        f = D[:, E:E + N]
        if not dyn.linear:
            f -= np.sin(Z[:, :E]) @ HbT
        f -= pL
        if with_states:
            Zp = Z[:, m:]
            f /= M0 + np.maximum(Zp, 0.0)
            dz = np.minimum(tau_vi * (U - Zp), cap)
            dz[(Zp <= 0.0) & (dz < 0.0)] = 0.0
            return np.hstack([D, dz * maskf])
        f /= M0 + mv_const
        return D

    pending = sorted(config.disturbances, key=lambda d: d.time)
    n_steps = config.n_steps
    total = n_steps + 1
    rec_z = np.empty((total, R, Z.shape[1]))
    rec_pL = np.empty((total, N))
    rec_u = np.full((total, R, N), np.nan)
    phases = [[None] * total for _ in range(R)]
    length = np.full(R, total)
    alive = np.ones(R, dtype=bool)
    messages = [""] * R

    for n in range(total):
        t = n * h
        while pending and pending[0].time <= t + 1e-9 * h:
            d = pending.pop(0)
            pL[network.bus_index(d.bus)] += d.delta_pL
        rec_z[n] = Z
        rec_pL[n] = pL
        for r, p in enumerate(policies):
            if not alive[r]:
                continue
            omega = Z[r, E:E + N]
            mv = np.maximum(Z[r, m:], 0.0) if with_states else mv_const[r]
            p.begin_step(t, SystemState(Z[r, :E], omega, Z[r, E + N:m], mv, t))
            if with_states:
                U[r] = p._u
                rec_u[n, r] = p._u
            phases[r][n] = p.phase
        if n == n_steps:
            break
        Z_new = _rk4(F, t, Z, h)
        bad = alive & ~np.all(np.isfinite(Z_new), axis=1)
        for r in np.flatnonzero(bad):
            alive[r] = False
            length[r] = n + 1
            messages[r] = f"non-finite state after step at t={t:.6g}"
            logger.warning(messages[r])
        Z_new[~alive] = Z[~alive]
        if with_states:
            np.maximum(Z_new[:, m:], 0.0, out=Z_new[:, m:])
        Z = Z_new

    t_grid = np.arange(total) * h
    out = []
    for r, p in enumerate(policies):
        k = length[r]
        zr = rec_z[:k, r]
        Mv = np.maximum(zr[:, m:], 0.0) if with_states else np.tile(mv_const[r], (k, 1))
        u = rec_u[:k, r] if with_states else np.full((k, N), np.nan)
        out.append(Trajectory(
            buses=network.graph.buses,
            lines=network.graph.line_names,
            M0=M0.copy(),
            t=t_grid[:k].copy(),
            eta=zr[:, :E].copy(),
            omega=zr[:, E:E + N].copy(),
            xs=zr[:, E + N:m].copy(),
            Mv=Mv,
            pL=rec_pL[:k].copy(),
            u=u,
            phase=phases[r][:k],
            h=h,
            status="completed" if alive[r] else "nonfinite",
            message=messages[r],
            extra={"policy": p},
        ))
    return out
