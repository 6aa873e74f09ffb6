"""Network topology and algebraic power-flow maps.

Buses are indexed in insertion order.  Line ``q`` from bus ``k`` to bus ``l``
carries the angle difference ``eta_q = theta_k - theta_l`` and the flow
``p_q`` (positive when power moves from ``k`` to ``l``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "BusParams",
    "Line",
    "NetworkGraph",
    "GraphError",
    "build_incidence",
    "power_flow_nonlinear",
    "power_flow_linear",
]


class GraphError(ValueError):
    """Raised for malformed network topologies."""


@dataclass(frozen=True)
class BusParams:
    """Physical parameters of a single bus.

    Attributes
    ----------
    M0 : float
        Physical inertia (s p.u.), strictly positive.
    Dv : float
        Damping of the virtual inertia device (p.u./Hz), non-negative.
    pL : float
        Frequency independent load (p.u.).
    """

    M0: float
    Dv: float = 0.0
    pL: float = 0.0

    def __post_init__(self):
        if not self.M0 > 0:
            raise ValueError(f"physical inertia must be positive, got {self.M0}")
        if self.Dv < 0:
            raise ValueError(f"virtual damping must be non-negative, got {self.Dv}")


@dataclass(frozen=True)
class Line:
    source: str
    target: str
    B: float


@dataclass(frozen=True)
class NetworkGraph:
    """Connected directed graph of buses and lines.

    Parameters
    ----------
    buses : sequence of str
        Bus identifiers; their order fixes the row order of the incidence
        matrix.
    lines : sequence of (from, to, susceptance)
        One entry per line.  The orientation is arbitrary but fixed.
    """

    buses: tuple
    lines: tuple = field(default=())

    def __post_init__(self):
        buses = tuple(str(b) for b in self.buses)
        lines = tuple(
            ln if isinstance(ln, Line) else Line(str(ln[0]), str(ln[1]), float(ln[2]))
            for ln in self.lines
        )
        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "lines", lines)

        if not buses:
            raise GraphError("graph has no buses")
        if len(set(buses)) != len(buses):
            raise GraphError("duplicate bus identifiers")
        known = set(buses)
        seen = set()
        for ln in lines:
            for end in (ln.source, ln.target):
                if end not in known:
                    raise GraphError(f"line ({ln.source}, {ln.target}) references unknown bus {end!r}")
            if ln.source == ln.target:
                raise GraphError(f"self loop at bus {ln.source!r}")
            if (ln.source, ln.target) in seen or (ln.target, ln.source) in seen:
                raise GraphError(f"duplicate line between {ln.source!r} and {ln.target!r}")
            if not ln.B > 0:
                raise GraphError(f"line ({ln.source}, {ln.target}) needs positive susceptance, got {ln.B}")
            seen.add((ln.source, ln.target))

    @classmethod
    def from_edges(cls, edges, buses=None):
        """Build a graph from ``(from, to, B)`` triples.

        Buses are taken in first-appearance order unless given explicitly.
        """
        edges = [(str(a), str(b), float(B)) for a, b, B in edges]
        if buses is None:
            buses = []
            for a, b, _ in edges:
                for x in (a, b):
                    if x not in buses:
                        buses.append(x)
        return cls(tuple(buses), tuple(edges))

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @cached_property
    def index(self) -> dict:
        return {b: i for i, b in enumerate(self.buses)}

    @cached_property
    def susceptance(self) -> np.ndarray:
        """Diagonal of the line susceptance operator, one entry per line."""
        return np.array([ln.B for ln in self.lines], dtype=float)

    @cached_property
    def incidence(self) -> np.ndarray:
        return build_incidence(self)

    @cached_property
    def line_names(self) -> tuple:
        return tuple(f"{ln.source}-{ln.target}" for ln in self.lines)

    def components(self) -> list:
        """Connected components as lists of bus ids."""
        parent = list(range(self.n_buses))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for ln in self.lines:
            a, b = find(self.index[ln.source]), find(self.index[ln.target])
            if a != b:
                parent[a] = b
        groups = {}
        for i, b in enumerate(self.buses):
            groups.setdefault(find(i), []).append(b)
        return list(groups.values())

    @property
    def cycle_rank(self) -> int:
        """Dimension of the cycle space, ``|E| - |N| + 1`` for connected graphs."""
        return self.n_lines - self.n_buses + len(self.components())

    def reversed_line(self, q: int) -> "NetworkGraph":
        """Copy of the graph with the orientation of line ``q`` flipped."""
        lines = list(self.lines)
        ln = lines[q]
        lines[q] = Line(ln.target, ln.source, ln.B)
        return NetworkGraph(self.buses, tuple(lines))


def build_incidence(graph: NetworkGraph) -> np.ndarray:
    """Node-edge incidence matrix of a connected graph.

    Entry ``(k, q)`` is +1 if bus ``k`` is the sending end of line ``q``,
    -1 if it is the receiving end and 0 otherwise.
    """
    comps = graph.components()
    if len(comps) > 1:
        detail = "; ".join("{" + ", ".join(c) + "}" for c in comps)
        raise GraphError(f"graph is disconnected, components: {detail}")
    H = np.zeros((graph.n_buses, graph.n_lines))
    for q, ln in enumerate(graph.lines):
        H[graph.index[ln.source], q] = 1.0
        H[graph.index[ln.target], q] = -1.0
    return H


def _check_eta(eta, graph):
    eta = np.asarray(eta, dtype=float)
    if eta.shape[-1:] != (graph.n_lines,):
        raise ValueError(f"expected {graph.n_lines} angle differences, got shape {eta.shape}")
    return eta


def power_flow_nonlinear(eta, graph: NetworkGraph) -> np.ndarray:
    """Line flows ``B_q sin(eta_q)``."""
    eta = _check_eta(eta, graph)
    return graph.susceptance * np.sin(eta)


def power_flow_linear(eta, graph: NetworkGraph) -> np.ndarray:
    """Small-angle line flows ``B_q eta_q``."""
    eta = _check_eta(eta, graph)
    return graph.susceptance * eta
