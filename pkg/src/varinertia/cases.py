"""Small reference networks used by the tests, examples and CLI demos."""

from __future__ import annotations

from .grid import BusParams, NetworkGraph
from .network import PowerNetwork
from .supply import FirstOrderSupply, SecondOrderSupply, TurbineGovernor

__all__ = [
    "BUS36_GOVERNOR",
    "two_bus",
    "path3",
    "triangle",
    "ring4",
    "underdamped_two_bus",
    "governor_pair",
    "corpus",
]

# Turbine-governor of generator bus 36 of the NPCC test system.
BUS36_GOVERNOR = TurbineGovernor(K=110.1, Ts=0.45, T3=0.0, Tc=0.1, T4=13.25, T5=54.0, lam=30.3)

# Four-bus ring with heterogeneous first-order supplies.  Chosen so that the
# rate-limited scheme settles while bang-bang switching keeps oscillating.
RING4_TAU = (2.0, 2.5, 2.5, 3.5)
RING4_DROOP = (55.0, 50.0, 50.0, 40.0)
RING4_DAMPING = (0.5, 1.0, 1.5, 2.0)
RING4_INERTIA = (1.0, 3.0, 4.5, 7.5)


def _first_order_network(edges, tau, K, lam, M0, pL=None) -> PowerNetwork:
    graph = NetworkGraph.from_edges(edges)
    pL = pL if pL is not None else [0.0] * len(M0)
    buses = tuple(BusParams(m, 0.0, p) for m, p in zip(M0, pL))
    supplies = tuple(FirstOrderSupply(a, b, c).to_lti() for a, b, c in zip(tau, K, lam))
    return PowerNetwork(graph, buses, supplies)


def two_bus(pL=(0.1, 0.0)) -> PowerNetwork:
    """Two buses, one line, identical first-order supplies."""
    return _first_order_network([("1", "2", 2.0)], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0], pL)


def path3(pL=(0.2, -0.1, 0.05)) -> PowerNetwork:
    return _first_order_network(
        [("1", "2", 1.5), ("2", "3", 2.5)], [0.5, 1.0, 2.0], [2.0, 1.0, 3.0], [0.8, 1.2, 0.5], [1.0, 2.0, 1.5], pL
    )


def triangle(pL=(0.3, -0.2, 0.1)) -> PowerNetwork:
    """Three buses on a cycle, so angle differences are not unique."""
    return _first_order_network(
        [("1", "2", 3.0), ("2", "3", 2.0), ("3", "1", 4.0)], [1.0, 2.0, 0.5], [1.5, 2.5, 1.0],
        [1.0, 0.5, 2.0], [2.0, 1.0, 3.0], pL,
    )


def ring4(pL=(0.0, 0.0, 0.0, 0.0)) -> PowerNetwork:
    """Four-bus ring 1-2-3-4-1 used for the inertia-scheme comparisons."""
    edges = [("1", "2", 5.0), ("2", "3", 5.0), ("3", "4", 5.0), ("4", "1", 5.0)]
    return _first_order_network(edges, RING4_TAU, RING4_DROOP, RING4_DAMPING, RING4_INERTIA, pL)


def underdamped_two_bus() -> PowerNetwork:
    """Two buses with lightly damped second-order supplies.

    The feedthrough is just large enough for the supply to stay strictly
    passive (strictness constant about 0.29), while a release from a
    gamma-point overshoots well past its starting deviation.
    """
    graph = NetworkGraph.from_edges([("1", "2", 5.0)])
    sup = SecondOrderSupply(K=5.0, wn=5.0, zeta=0.2, lam=5.5).to_lti()
    return PowerNetwork(graph, (BusParams(0.2), BusParams(1.0)), (sup, sup))


def governor_pair(pL=(0.5, -0.2)) -> PowerNetwork:
    """Bus-36 governor against a first-order bus."""
    graph = NetworkGraph.from_edges([("36", "2", 10.0)])
    supplies = (BUS36_GOVERNOR.to_lti(), FirstOrderSupply(2.0, 20.0, 1.0).to_lti())
    buses = (BusParams(8.0, 0.0, pL[0]), BusParams(3.0, 0.5, pL[1]))
    return PowerNetwork(graph, buses, supplies)


def corpus() -> dict:
    """Every reference network, keyed by name, with non-trivial loads."""
    return {
        "two_bus": two_bus(),
        "path3": path3(),
        "triangle": triangle(),
        "ring4": ring4((0.1, -0.3, 2.0, 0.4)),
        "underdamped_two_bus": underdamped_two_bus().with_loads([0.05, 0.05]),
        "governor_pair": governor_pair(),
    }
