"""A power network: topology, bus parameters and per-bus supply models."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import block_diag

from .grid import BusParams, NetworkGraph
from .supply import LtiSupply

__all__ = ["PowerNetwork"]


@dataclass(frozen=True, eq=False)
class PowerNetwork:
    """Immutable network description shared by simulation and analysis.

    The supply seen by the swing equation at bus ``j`` is the declared
    supply with the virtual-inertia damping ``Dv_j`` folded into its
    feedthrough, see :attr:`bus_supplies`.
    """

    graph: NetworkGraph
    buses: tuple
    supplies: tuple

    def __post_init__(self):
        buses = tuple(self.buses)
        supplies = tuple(self.supplies)
        n = self.graph.n_buses
        if len(buses) != n or len(supplies) != n:
            raise ValueError(f"need {n} bus parameter sets and supplies, got {len(buses)} and {len(supplies)}")
        for b in buses:
            if not isinstance(b, BusParams):
                raise TypeError("buses must be BusParams instances")
        for s in supplies:
            if not isinstance(s, LtiSupply):
                raise TypeError("supplies must be LtiSupply instances")
        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "supplies", supplies)
        self.graph.incidence  # connectivity check

    @property
    def n_buses(self) -> int:
        return self.graph.n_buses

    @property
    def n_lines(self) -> int:
        return self.graph.n_lines

    @cached_property
    def bus_supplies(self) -> tuple:
        return tuple(
            s if b.Dv == 0 else s.with_feedthrough(s.D + b.Dv) for s, b in zip(self.supplies, self.buses)
        )

    @cached_property
    def M0(self) -> np.ndarray:
        return np.array([b.M0 for b in self.buses])

    @cached_property
    def pL(self) -> np.ndarray:
        return np.array([b.pL for b in self.buses])

    @cached_property
    def state_sizes(self) -> np.ndarray:
        return np.array([s.n_states for s in self.bus_supplies], dtype=int)

    @cached_property
    def state_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.state_sizes)])

    @property
    def n_supply_states(self) -> int:
        return int(self.state_offsets[-1])

    @cached_property
    def stacked(self):
        """Block-diagonal ``(A, B, C, D)`` covering all buses.

        ``B`` maps the per-bus input vector ``-omega`` to state derivatives
        and ``C`` maps the stacked state to per-bus outputs.
        """
        sup = self.bus_supplies
        nx = self.n_supply_states
        n = self.n_buses
        A = block_diag(*[s.A for s in sup]) if nx else np.zeros((0, 0))
        B = np.zeros((nx, n))
        C = np.zeros((n, nx))
        for j, s in enumerate(sup):
            lo, hi = self.state_offsets[j], self.state_offsets[j + 1]
            B[lo:hi, j] = s.B[:, 0]
            C[j, lo:hi] = s.C[0]
        D = np.array([s.D for s in sup])
        return A.reshape(nx, nx), B, C, D

    @cached_property
    def dc_gains(self) -> np.ndarray:
        return np.array([s.dc_gain for s in self.bus_supplies])

    def bus_index(self, bus) -> int:
        try:
            return self.graph.index[str(bus)]
        except KeyError:
            raise KeyError(f"unknown bus {bus!r}") from None

    def split_supply_state(self, xs) -> list:
        xs = np.asarray(xs, dtype=float)
        o = self.state_offsets
        return [xs[..., o[j]:o[j + 1]] for j in range(self.n_buses)]

    def with_loads(self, pL) -> "PowerNetwork":
        pL = np.asarray(pL, dtype=float)
        buses = tuple(BusParams(b.M0, b.Dv, float(p)) for b, p in zip(self.buses, pL))
        return PowerNetwork(self.graph, buses, self.supplies)

    def with_graph(self, graph: NetworkGraph) -> "PowerNetwork":
        return PowerNetwork(graph, self.buses, self.supplies)
