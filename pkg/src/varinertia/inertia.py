"""Time-varying virtual inertia trajectories.

A policy produces the virtual inertia ``Mv_j(t) >= 0`` at every bus; the
total inertia is ``M0_j + Mv_j``.  The simulator drives a policy through
three hooks:

``bind(network, h)``
    called once before integration; resets per-run memory.
``begin_step(t, state)``
    decision point at every step boundary.  Feedback policies sample the
    state here and hold their decision for the step.
``mv(t, z)``
    virtual inertia at any stage time inside the step, where ``z`` holds
    the policy's own ODE states (only the rate-limited schemes have any).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InertiaPolicy",
    "ConstantInertia",
    "PiecewiseLinearInertia",
    "BangBangInertia",
    "RateLimitedInertia",
    "RandomizedInertia",
    "DestabilizerInertia",
    "Assumption4Report",
    "bang_bang",
    "rate_limited_rhs",
    "randomized_setpoint_update",
    "check_assumption4",
]


def bang_bang(omega, Ma: float, threshold: float = 0.02) -> float:
    """Virtual inertia of the threshold scheme: ``Ma`` when ``max|omega| > threshold``."""
    return Ma if np.max(np.abs(omega)) > threshold else 0.0


def rate_limited_rhs(Mv, u, rho, tau_vi: float = 100.0, epsilon: float = 1e-4):
    """Rate of change of virtual inertia under a growth cap of ``2 rho - epsilon``.

    Removal is only limited by the filter constant.  At ``Mv = 0`` the
    derivative is projected to be non-negative so inertia stays physical.
    """
    Mv = np.asarray(Mv, dtype=float)
    d = np.minimum(tau_vi * (np.asarray(u, dtype=float) - Mv), 2.0 * np.asarray(rho, dtype=float) - epsilon)
    return np.where((Mv <= 0.0) & (d < 0.0), 0.0, d)


def randomized_setpoint_update(u, rng, Ma: float, step: float = 0.5):
    """Raise or lower each set point by ``step * Ma`` with equal probability.

    Lowered set points are clipped at zero.
    """
    u = np.asarray(u, dtype=float)
    r = rng.random(u.shape)
    return np.where(r >= 0.5, u + step * Ma, np.maximum(u - step * Ma, 0.0))


class InertiaPolicy:
    """Base policy: no virtual inertia anywhere."""

    kind = "constant"
    n_states = 0
    finished = False
    phase = ""

    def bind(self, network, h: float) -> None:
        self.n = network.n_buses
        self.M0 = network.M0
        self._network = network
        self.finished = False

    def initial_states(self) -> np.ndarray:
        return np.zeros(self.n_states)

    def begin_step(self, t: float, state) -> None:
        pass

    def mv(self, t: float, z) -> np.ndarray:
        return np.zeros(self.n)

    def state_rhs(self, t: float, z) -> np.ndarray:
        return np.zeros(self.n_states)

    def project(self, z) -> np.ndarray:
        return z

    def setpoint(self):
        return None

    def declared_rate_bound(self):
        """Per-bus bound on the growth rate of Mv, or None when unbounded."""
        return np.zeros(self.n)

    def _bus_mask(self, buses):
        mask = np.zeros(self.n, dtype=bool)
        if buses is None:
            mask[:] = True
        else:
            for b in buses:
                mask[self._network.bus_index(b)] = True
        return mask


class ConstantInertia(InertiaPolicy):
    """Fixed virtual inertia, given per bus (dict or sequence) or as a scalar."""

    kind = "constant"

    def __init__(self, Mv=0.0):
        self.value = Mv

    def bind(self, network, h):
        super().bind(network, h)
        self._mv = _per_bus(self.value, network)
        if np.any(self._mv < 0):
            raise ValueError("virtual inertia must be non-negative")

    def mv(self, t, z):
        return self._mv


class PiecewiseLinearInertia(InertiaPolicy):
    """Open-loop profile interpolated linearly between breakpoints.

    ``values`` maps bus id to a list of inertia values at ``times``; buses
    not listed carry no virtual inertia.  The profile is held constant
    outside the breakpoint range.
    """

    kind = "open-loop-piecewise"

    def __init__(self, times, values: dict):
        self.times = np.asarray(times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("breakpoint times must be strictly increasing")
        self.values = {str(k): np.asarray(v, dtype=float) for k, v in values.items()}
        for k, v in self.values.items():
            if v.shape != self.times.shape:
                raise ValueError(f"profile for bus {k} has {v.size} values, expected {self.times.size}")
            if np.any(v < 0):
                raise ValueError(f"profile for bus {k} has negative virtual inertia")

    def bind(self, network, h):
        super().bind(network, h)
        self._table = np.zeros((self.times.size, self.n))
        for k, v in self.values.items():
            self._table[:, network.bus_index(k)] = v

    def mv(self, t, z):
        if self.times.size == 1:
            return self._table[0]
        return np.array([np.interp(t, self.times, self._table[:, j]) for j in range(self.n)])

    def declared_rate_bound(self):
        if self.times.size < 2:
            return np.zeros(self.n)
        slopes = np.diff(self._table, axis=0) / np.diff(self.times)[:, None]
        return np.max(np.maximum(slopes, 0.0), axis=0)


class BangBangInertia(InertiaPolicy):
    """Threshold switching of virtual inertia, sampled at step boundaries.

    Discontinuous in time by construction: this is the scheme that provokes
    sustained oscillations.
    """

    kind = "bang-bang"

    def __init__(self, Ma: float, buses=None, threshold: float = 0.02):
        if Ma < 0:
            raise ValueError("Ma must be non-negative")
        self.Ma = float(Ma)
        self.buses = buses
        self.threshold = float(threshold)

    def bind(self, network, h):
        super().bind(network, h)
        self._mask = self._bus_mask(self.buses)
        self._held = np.zeros(self.n)

    def begin_step(self, t, state):
        on = bang_bang(state.omega, self.Ma, self.threshold)
        self._held = np.where(self._mask, on, 0.0)
        self.phase = "on" if on else "off"

    def mv(self, t, z):
        return self._held

    def setpoint(self):
        return self._held

    def declared_rate_bound(self):
        return None


class RateLimitedInertia(InertiaPolicy):
    """Filtered set-point tracking with inertia growth capped below ``2 rho``.

    The virtual inertia of every scheme bus is an integrated state.  The
    set point is ``Ma`` while ``max|omega|`` exceeds the threshold and zero
    otherwise; it is sampled at step boundaries.
    """

    kind = "rate-limited"

    def __init__(self, Ma: float, rho, buses=None, tau_vi: float = 100.0, epsilon: float = 1e-4, threshold: float = 0.02):
        self.Ma = float(Ma)
        self.rho = rho
        self.buses = buses
        self.tau_vi = float(tau_vi)
        self.epsilon = float(epsilon)
        self.threshold = float(threshold)
        if self.Ma < 0 or self.tau_vi <= 0 or self.epsilon <= 0:
            raise ValueError("need Ma >= 0, tau_vi > 0 and epsilon > 0")

    @property
    def n_states(self):
        return self.n

    def bind(self, network, h):
        super().bind(network, h)
        self._mask = self._bus_mask(self.buses)
        rho = _per_bus(self.rho, network)
        bad = self._mask & (rho <= self.epsilon / 2)
        if np.any(bad):
            ids = [network.graph.buses[j] for j in np.flatnonzero(bad)]
            raise ValueError(f"rate bound 2*rho - epsilon is not positive at buses {ids}")
        self._rho = rho
        self._cap = np.where(self._mask, 2.0 * rho - self.epsilon, 0.0)
        self._maskf = self._mask.astype(float)
        self._u = np.zeros(self.n)

    def _update_setpoint(self, t, state):
        on = np.max(np.abs(state.omega)) > self.threshold
        self._u = np.where(self._mask, self.Ma if on else 0.0, 0.0)

    def begin_step(self, t, state):
        self._update_setpoint(t, state)
        self.phase = "on" if np.any(self._u > 0) else "off"

    def mv(self, t, z):
        return np.maximum(z, 0.0)

    def state_rhs(self, t, z):
        # Inlined rate_limited_rhs; this runs at every stage.
        d = np.minimum(self.tau_vi * (self._u - z), self._cap)
        d[(z <= 0.0) & (d < 0.0)] = 0.0
        return d * self._maskf

    def project(self, z):
        return np.maximum(z, 0.0)

    def setpoint(self):
        return self._u

    def declared_rate_bound(self):
        return np.where(self._mask, 2.0 * self._rho - self.epsilon, 0.0)


class RandomizedInertia(RateLimitedInertia):
    """Rate-limited inertia whose set points perform a seeded random walk.

    Every ``update_period`` seconds (including t = 0) each scheme bus
    raises or lowers its set point by ``step * Ma`` with equal probability.
    """

    kind = "randomized"

    def __init__(self, Ma, rho, buses=None, tau_vi=100.0, epsilon=1e-4, update_period=0.5, step=0.5, seed=0):
        super().__init__(Ma, rho, buses, tau_vi, epsilon)
        self.update_period = float(update_period)
        self.step = float(step)
        self.seed = int(seed)

    def bind(self, network, h):
        super().bind(network, h)
        self._rng = np.random.default_rng(self.seed)
        self._h = h
        self._next_update = 0.0

    def _update_setpoint(self, t, state):
        if t >= self._next_update - 1e-9 * self._h:
            u = randomized_setpoint_update(self._u, self._rng, self.Ma, self.step)
            self._u = np.where(self._mask, u, 0.0)
            k = math.floor(t / self.update_period + 1e-9) + 1
            self._next_update = k * self.update_period


class DestabilizerInertia(InertiaPolicy):
    """Single-bus inertia attack alternating HOLD and RELEASE phases.

    HOLD keeps a large virtual inertia at the target bus so its frequency
    barely moves while the rest of the network settles around it.  Once
    every frequency has stayed within ``settle_tol`` of the target's for
    ``dwell`` seconds, the inertia is ramped to zero (RELEASE).  When the
    target's deviation from ``omega_star`` exceeds ``growth`` times the
    deviation recorded at the previous HOLD entry, the inertia is ramped
    back up and a new HOLD starts.  The run ends once the deviation exceeds
    ``escape_radius``.

    All ramps are linear over ``ramp`` seconds, so the trajectory is
    Lipschitz with constant ``M_hold / ramp``.
    """

    kind = "destabilizer"

    def __init__(self, target, omega_star: float = 0.0, M_hold=None, settle_tol: float = 1e-4,
                 dwell: float = 1.0, growth: float = 1.05, ramp=None, escape_radius: float = 0.5):
        self.target = str(target)
        self.omega_star = float(omega_star)
        self.M_hold = M_hold
        self.settle_tol = float(settle_tol)
        self.dwell = float(dwell)
        self.growth = float(growth)
        self.ramp = ramp
        self.escape_radius = float(escape_radius)
        if self.growth <= 1.0:
            raise ValueError("growth threshold must exceed 1")

    def bind(self, network, h):
        super().bind(network, h)
        self._k = network.bus_index(self.target)
        self._hold = float(self.M_hold) if self.M_hold is not None else 100.0 * self.M0[self._k]
        self._ramp = float(self.ramp) if self.ramp is not None else 2.0 * h
        if self._hold <= 0 or self._ramp <= 0:
            raise ValueError("M_hold and ramp duration must be positive")
        self.phase = "HOLD"
        self.segment = (0.0, self._hold, 0.0, self._hold)
        self.settled_since = None
        self.peaks = []
        self.hold_times = []
        self.escaped = False

    def _mv_k(self, t):
        t0, v0, t1, v1 = self.segment
        if t >= t1:
            return v1
        if t <= t0:
            return v0
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)

    def begin_step(self, t, state):
        self.destabilizer_step(t, np.asarray(state.omega, dtype=float))

    def destabilizer_step(self, t, omega):
        """Advance the HOLD/RELEASE state machine at a decision time."""
        k = self._k
        dev = abs(omega[k] - self.omega_star)
        if not self.peaks:
            self.peaks.append(dev)
            self.hold_times.append(t)
        if dev > self.escape_radius:
            self.escaped = True
            self.finished = True
            return
        current = self._mv_k(t)
        if self.phase == "HOLD":
            if t < self.segment[2]:
                return
            spread = np.max(np.abs(omega - omega[k]))
            if spread < self.settle_tol:
                if self.settled_since is None:
                    self.settled_since = t
                if t - self.settled_since >= self.dwell - 1e-12:
                    self.phase = "RELEASE"
                    self.segment = (t, current, t + self._ramp, 0.0)
                    self.settled_since = None
            else:
                self.settled_since = None
        else:
            if t < self.segment[2]:
                return
            if dev > self.growth * self.peaks[-1]:
                self.peaks.append(dev)
                self.hold_times.append(t)
                self.phase = "HOLD"
                self.segment = (t, current, t + self._ramp, self._hold)

    def mv(self, t, z):
        out = np.zeros(self.n)
        out[self._k] = self._mv_k(t)
        return out

    def declared_rate_bound(self):
        out = np.zeros(self.n)
        out[self._k] = self._hold / self._ramp
        return out


def _per_bus(value, network) -> np.ndarray:
    n = network.n_buses
    if isinstance(value, dict):
        out = np.zeros(n)
        for k, v in value.items():
            out[network.bus_index(k)] = float(v)
        return out
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"expected {n} per-bus values, got shape {arr.shape}")
    return arr.copy()


@dataclass
class Assumption4Report:
    compliant: bool
    lipschitz: float
    violations: list = field(default_factory=list)

    def __str__(self):
        head = "compliant" if self.compliant else f"{len(self.violations)} violations"
        return f"{head}; empirical Lipschitz constant {self.lipschitz:.6g}"


def check_assumption4(M, rho, h: float, t=None, buses=None) -> Assumption4Report:
    """Compare finite-difference inertia growth rates against ``2 rho``.

    ``M`` is a uniformly sampled trace with one column per bus.  Every
    sample whose forward-difference rate reaches ``2 rho_j`` is reported as
    ``(bus, time, rate)``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] < 2:
        return Assumption4Report(True, 0.0)
    rate = np.diff(M, axis=0) / h
    bound = 2.0 * np.broadcast_to(np.asarray(rho, dtype=float), (M.shape[1],))
    if t is None:
        t = np.arange(M.shape[0]) * h
    if buses is None:
        buses = list(range(M.shape[1]))
    idx = np.argwhere(rate >= bound[None, :])
    violations = [(buses[j], float(t[i]), float(rate[i, j])) for i, j in idx]
    return Assumption4Report(not violations, float(np.max(np.abs(rate))), violations)
