"""Decentralized power supply dynamics.

Every bus aggregates generation, controllable demand, frequency dependent
load and damping into a single-input single-output system driven by the
negated frequency deviation ``-omega``.  Callers always pass ``omega``; the
sign flip happens here.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

__all__ = [
    "LtiSupply",
    "FirstOrderSupply",
    "TurbineGovernor",
    "SecondOrderSupply",
    "tf_to_state_space",
    "supply_rhs",
    "supply_output",
    "static_characteristic",
]

CANCEL_TOL = 1e-9
RANK_TOL = 1e-8


def _as_matrix(x, shape_hint):
    a = np.asarray(x, dtype=float)
    if a.size == 0:
        return np.zeros(shape_hint)
    return a.reshape(shape_hint)


@dataclass(frozen=True, eq=False)
class LtiSupply:
    """State-space supply model ``x' = A x + B (-w)``, ``s = C x + D (-w)``.

    ``A`` must be Hurwitz.  Minimality is checked on demand with
    :meth:`is_minimal` rather than at construction, so that non-minimal
    realizations can still be inspected.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.size == 0:
            A = np.zeros((0, 0))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = _as_matrix(self.B, (n, 1))
        C = _as_matrix(self.C, (1, n))
        D = float(np.asarray(self.D, dtype=float).reshape(()))
        for name, val in (("A", A), ("B", B), ("C", C)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "D", D)
        if n and np.max(np.linalg.eigvals(A).real) >= 0:
            raise ValueError("supply dynamics must be asymptotically stable (A not Hurwitz)")

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @cached_property
    def dc_gain(self) -> float:
        """G(0) = D - C A^{-1} B."""
        if self.n_states == 0:
            return self.D
        return float(self.D - (self.C @ np.linalg.solve(self.A, self.B))[0, 0])

    def frequency_response(self, w) -> np.ndarray:
        """Evaluate G(jw) on an array of angular frequencies (rad/s)."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if self.n_states == 0:
            return np.full(w.shape, self.D, dtype=complex)
        n = self.n_states
        lhs = 1j * w[:, None, None] * np.eye(n)[None] - self.A[None]
        rhs = np.broadcast_to(self.B.astype(complex), (w.size, n, 1))
        x = np.linalg.solve(lhs, rhs)
        return (self.C @ x)[:, 0, 0] + self.D

    def with_feedthrough(self, D: float) -> "LtiSupply":
        return LtiSupply(self.A, self.B, self.C, D)

    def scaled(self, alpha: float) -> "LtiSupply":
        """Output scaled by ``alpha`` (C and D multiplied)."""
        return LtiSupply(self.A, self.B, alpha * self.C, alpha * self.D)

    def is_minimal(self, tol: float = RANK_TOL) -> bool:
        """Controllability and observability by relative rank.

        The realization is balanced and time is rescaled so that A has unit
        norm first; neither changes the ranks, but both keep companion
        forms with widely spread poles from looking rank deficient.
        """
        n = self.n_states
        if n == 0:
            return True
        A, T = linalg.matrix_balance(self.A, permute=False)
        B = np.linalg.solve(T, self.B)
        C = self.C @ T
        A = A / max(np.linalg.norm(A, 2), np.finfo(float).tiny)
        ctrb = np.hstack([np.linalg.matrix_power(A, i) @ B for i in range(n)])
        obsv = np.vstack([C @ np.linalg.matrix_power(A, i) for i in range(n)])
        return _full_rank(ctrb, tol) and _full_rank(obsv, tol)


def _full_rank(M, tol):
    sv = np.linalg.svd(M, compute_uv=False)
    return bool(sv[-1] > tol * sv[0]) if sv[0] > 0 else False


@dataclass(frozen=True)
class FirstOrderSupply:
    """Lagged droop plus damping: ``tau x' = -x - K w``, ``s = x - lam w``."""

    tau: float
    K: float
    lam: float

    def __post_init__(self):
        if not (self.tau > 0 and self.K > 0 and self.lam > 0):
            raise ValueError("tau, K and lambda must all be positive")

    def to_lti(self) -> LtiSupply:
        return LtiSupply([[-1.0 / self.tau]], [[self.K / self.tau]], [[1.0]], self.lam)


@dataclass(frozen=True)
class SecondOrderSupply:
    """Oscillatory droop response plus damping.

    ``G(s) = K wn^2 / (s^2 + 2 zeta wn s + wn^2) + lam``.  Used to build
    underdamped test networks; not one of the governor models.
    """

    K: float
    wn: float
    zeta: float
    lam: float = 0.0

    def __post_init__(self):
        if not (self.K > 0 and self.wn > 0 and self.zeta > 0 and self.lam >= 0):
            raise ValueError("K, wn and zeta must be positive and lambda non-negative")

    def to_lti(self) -> LtiSupply:
        wn, z = self.wn, self.zeta
        A = [[-2 * z * wn, -wn * wn], [1.0, 0.0]]
        return LtiSupply(A, [[1.0], [0.0]], [[0.0, self.K * wn * wn]], self.lam)


@dataclass(frozen=True)
class TurbineGovernor:
    """Reheat turbine governor with droop and damping.

    ``G(s) = K (1 + s T3)(1 + s T4) / ((1 + s Ts)(1 + s Tc)(1 + s T5)) + lam``
    """

    K: float
    Ts: float
    T3: float
    Tc: float
    T4: float
    T5: float
    lam: float = 0.0

    def __post_init__(self):
        for name in ("Ts", "T3", "Tc", "T4", "T5"):
            if getattr(self, name) < 0:
                raise ValueError(f"time constant {name} must be non-negative")

    def to_lti(self) -> LtiSupply:
        return tf_to_state_space(self)


def _cancel(num_T, den_T, tol=CANCEL_TOL):
    num = [T for T in num_T if T != 0.0]
    den = [T for T in den_T if T != 0.0]
    for T in list(num):
        for Td in den:
            if abs(T - Td) <= tol * max(abs(T), abs(Td)):
                num.remove(T)
                den.remove(Td)
                break
    return num, den


def tf_to_state_space(gov: TurbineGovernor) -> LtiSupply:
    """Minimal realization of the turbine governor transfer function.

    Zero time constants drop their factor exactly; coinciding lead/lag
    pairs are cancelled when they agree to a relative tolerance of 1e-9.
    The strictly proper remainder is put in controllable canonical form and
    the high-frequency gain becomes the feedthrough.
    """
    num_T, den_T = _cancel([gov.T3, gov.T4], [gov.Ts, gov.Tc, gov.T5])
    if len(num_T) > len(den_T):
        raise ValueError("governor transfer function is improper")

    num = np.array([gov.K])
    for T in num_T:
        num = np.polymul(num, [T, 1.0])
    den = np.array([1.0])
    for T in den_T:
        den = np.polymul(den, [T, 1.0])
    if len(den) > 1 and np.any(np.roots(den).real >= 0):
        raise ValueError("governor denominator is not Hurwitz")

    lead = den[0]
    den = den / lead
    num = num / lead
    n = len(den) - 1
    num = np.concatenate([np.zeros(n + 1 - len(num)), num])
    d_inf = num[0] if n >= 0 else 0.0
    strict = num - d_inf * den  # leading coefficient now zero
    if n == 0:
        return LtiSupply(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), d_inf + gov.lam)
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = strict[1:].reshape(1, n)
    return LtiSupply(A, B, C, d_inf + gov.lam)


def _check_state(sys, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (sys.n_states,):
        raise ValueError(f"state has length {x.size}, model has {sys.n_states} states")
    return x


def supply_rhs(sys: LtiSupply, x, omega: float) -> np.ndarray:
    """State derivative for frequency deviation ``omega``."""
    x = _check_state(sys, x)
    return sys.A @ x + sys.B[:, 0] * (-float(omega))


def supply_output(sys: LtiSupply, x, omega: float) -> float:
    x = _check_state(sys, x)
    return float(sys.C[0] @ x + sys.D * (-float(omega)))


def static_characteristic(sys: LtiSupply, omega_bar: float):
    """Steady supply state and output for a constant frequency deviation.

    Returns ``(x_bar, s_bar)`` with ``A x_bar + B (-omega_bar) = 0`` and
    ``s_bar = -G(0) omega_bar``.
    """
    u = -float(omega_bar)
    if sys.n_states == 0:
        return np.zeros(0), sys.D * u
    try:
        x_bar = -np.linalg.solve(sys.A, sys.B[:, 0] * u)
    except np.linalg.LinAlgError as exc:
        raise ValueError("supply state matrix is singular") from exc
    s_bar = float(sys.C[0] @ x_bar + sys.D * u)
    return x_bar, s_bar
