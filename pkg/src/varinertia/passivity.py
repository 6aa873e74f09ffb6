"""Input-strict-passivity certificates for LTI supply models.

The strictness constant of a stable SISO system is the infimum of
``Re G(jw)`` over ``w in [0, inf]``.  It is located by a logarithmic sweep
with golden-section refinement and then checked against the Hamiltonian
positive-real test, which detects any frequency where ``Re G`` dips below a
candidate level.  A storage matrix is recovered from the stabilizing
solution of the positive-real Riccati equation at a slightly reduced level.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from .supply import LtiSupply

__all__ = [
    "PassivityCertificate",
    "PassivityError",
    "strictness_constant",
    "verify_rho",
    "storage_matrix",
    "kyp_block",
    "max_inertia_rate",
    "bisect_rho",
]

logger = logging.getLogger(__name__)

SWEEP_POINTS = 2000
SWEEP_RANGE = (1e-4, 1e6)
REFINE_XTOL = 1e-10
IMAG_TOL = 1e-7
SAMPLED_TOL = 1e-9
LMI_TOL = 1e-8
STORAGE_MARGIN = 1e-3


class PassivityError(RuntimeError):
    """Raised when no storage matrix can be produced."""


@dataclass(frozen=True, eq=False)
class PassivityCertificate:
    rho: float
    P: Optional[np.ndarray]
    argmin_frequency: float
    method: str
    rho_margined: Optional[float] = None

    @property
    def is_strict(self) -> bool:
        """True when the supply is input strictly passive (rho > 0)."""
        return self.rho > 0 and self.P is not None


def _re_g(sys, w):
    return sys.frequency_response(w).real


def _hamiltonian(sys: LtiSupply, level: float) -> np.ndarray:
    R = 2.0 * (sys.D - level)
    A, B, C = sys.A, sys.B, sys.C
    At = A - B @ C / R
    return np.block([[At, -B @ B.T / R], [C.T @ C / R, -At.T]])


def _crossings(sys: LtiSupply, level: float) -> np.ndarray:
    """Frequencies where ``Re G(jw) = level`` (requires ``D > level``)."""
    if sys.n_states == 0:
        return np.zeros(0)
    ev = np.linalg.eigvals(_hamiltonian(sys, level))
    on_axis = np.abs(ev.real) <= IMAG_TOL * max(1.0, np.max(np.abs(ev)))
    return np.unique(np.abs(ev[on_axis].imag))


def _sampled_ok(sys, level):
    w = np.logspace(math.log10(SWEEP_RANGE[0]), math.log10(SWEEP_RANGE[1]), SWEEP_POINTS)
    vals = np.concatenate([_re_g(sys, w), [sys.dc_gain, sys.D]])
    return bool(np.all(vals >= level - SAMPLED_TOL))


def verify_rho(sys: LtiSupply, rho_candidate: float) -> bool:
    """Check that ``G(s) - rho_candidate`` is positive real.

    Uses the Hamiltonian test when ``D > rho_candidate``; when they are
    equal the infimum sits at infinite frequency and the check falls back
    to sampling ``Re G`` on the sweep grid.
    """
    rho_candidate = float(rho_candidate)
    if rho_candidate > sys.D:
        return False
    if sys.n_states == 0:
        return True
    if sys.D - rho_candidate <= SAMPLED_TOL * max(1.0, abs(sys.D)):
        return _sampled_ok(sys, rho_candidate)
    if sys.dc_gain < rho_candidate:
        return False
    return _crossings(sys, rho_candidate).size == 0


def _golden_min(sys, lo, mid, hi):
    f = lambda lw: float(_re_g(sys, [10.0**lw])[0])
    a, b, c = math.log10(lo), math.log10(mid), math.log10(hi)
    try:
        res = optimize.minimize_scalar(f, bracket=(a, b, c), method="golden", options={"xtol": REFINE_XTOL})
        lw, val = float(res.x), float(res.fun)
    except ValueError:
        lw, val = b, f(b)
    fm = f(b)
    if fm < val:
        lw, val = b, fm
    return 10.0**lw, val


def _local_minima(sys, w):
    vals = _re_g(sys, w)
    found = []
    for i in range(1, len(w) - 1):
        if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]:
            found.append(_golden_min(sys, w[i - 1], w[i], w[i + 1]))
    i = int(np.argmin(vals))
    found.append((float(w[i]), float(vals[i])))
    return found


def _sweep(sys: LtiSupply):
    w = np.logspace(math.log10(SWEEP_RANGE[0]), math.log10(SWEEP_RANGE[1]), SWEEP_POINTS)
    cands = _local_minima(sys, w)
    cands.append((0.0, sys.dc_gain))
    cands.append((math.inf, sys.D))
    # Dips narrower than the grid spacing are caught by the Hamiltonian
    # test at the current best level and refined from its crossings.
    for _ in range(8):
        wbest, vbest = min(cands, key=lambda c: (c[1], -c[0]))
        level = vbest - 1e-9 * max(1.0, abs(vbest))
        if sys.D - level <= 0:
            break
        xs = _crossings(sys, level)
        xs = xs[xs > 0]
        if xs.size == 0:
            break
        pts = np.unique(np.concatenate([xs, np.sqrt(xs[:-1] * xs[1:]), xs * 0.999, xs * 1.001]))
        pts = np.sort(pts)
        before = len(cands)
        cands.extend(_local_minima(sys, pts) if pts.size >= 3 else [(float(x), float(_re_g(sys, [x])[0])) for x in pts])
        if len(cands) == before:
            break
    return min(cands, key=lambda c: (c[1], -c[0]))


def kyp_block(sys: LtiSupply, P: np.ndarray, level: float) -> np.ndarray:
    """The KYP block matrix for ``D_hat = D - level``."""
    A, B, C = sys.A, sys.B, sys.C
    Dh = sys.D - level
    top = np.hstack([A.T @ P + P @ A, P @ B - C.T])
    bot = np.hstack([B.T @ P - C, [[-2.0 * Dh]]])
    return np.vstack([top, bot])


def storage_matrix(sys: LtiSupply, rho: float, margin: float = STORAGE_MARGIN):
    """Storage matrix certifying strictness ``rho * (1 - margin)``.

    Returns ``(P, rho_margined)``.  The margin grows by a factor of ten (up
    to 0.1) when the Riccati solve fails or the resulting block is not
    negative semidefinite.
    """
    n = sys.n_states
    while margin <= 0.1 + 1e-15:
        level = rho * (1.0 - margin) if rho > 0 else rho - margin
        if n == 0:
            if sys.D - level >= 0:
                return np.zeros((0, 0)), level
        else:
            P = _riccati_storage(sys, level)
            if P is not None:
                blk = kyp_block(sys, P, level)
                top = np.max(np.linalg.eigvalsh((blk + blk.T) / 2))
                pmin = np.min(np.linalg.eigvalsh(P))
                if top <= LMI_TOL and pmin >= -LMI_TOL:
                    return P, level
                logger.debug("storage check failed at margin %g: block %g, P %g", margin, top, pmin)
        margin *= 10.0
    raise PassivityError(f"no storage matrix found for rho={rho} with margins up to 0.1")


def _riccati_storage(sys, level):
    # A'P + PA + (PB - C')R^{-1}(B'P - C) = 0 with R = 2(D - level);
    # solved as a standard CARE in X = -P.
    R = np.array([[2.0 * (sys.D - level)]])
    if R[0, 0] <= 0:
        return None
    A, B, C = sys.A, sys.B, sys.C
    At = A - B @ C / R[0, 0]
    Q = -(C.T @ C) / R[0, 0]
    try:
        X = linalg.solve_continuous_are(At, B, Q, R)
    except (linalg.LinAlgError, ValueError, np.linalg.LinAlgError):
        return None
    P = -X
    P = (P + P.T) / 2
    # Tiny negative eigenvalues from round-off are removed.
    lam, V = np.linalg.eigh(P)
    if lam.min() < -LMI_TOL:
        return None
    return (V * np.clip(lam, 0, None)) @ V.T if lam.min() < 0 else P


def strictness_constant(sys: LtiSupply) -> PassivityCertificate:
    """Strictness constant of an LTI supply with a storage matrix.

    A non-positive result is returned as a certificate without storage
    (``is_strict`` is False) rather than raised.
    """
    if sys.n_states and np.max(np.linalg.eigvals(sys.A).real) >= 0:
        raise ValueError("no certificate for a non-Hurwitz supply")
    if sys.n_states == 0:
        wbest, rho = math.inf, sys.D
    else:
        wbest, rho = _sweep(sys)
    at_infinity = sys.D - rho <= 1e-12 * max(1.0, abs(sys.D))
    if at_infinity:
        rho = min(rho, sys.D)
        wbest = math.inf
        method = "frequency-sweep"
    else:
        method = "riccati-verified"
        if not verify_rho(sys, rho - 1e-8 * max(1.0, abs(rho))):
            logger.warning("Hamiltonian check rejected sweep optimum %.12g", rho)
    if rho <= 0:
        return PassivityCertificate(float(rho), None, float(wbest), method)
    P, level = storage_matrix(sys, rho)
    return PassivityCertificate(float(rho), P, float(wbest), method, float(level))


def bisect_rho(sys: LtiSupply, tol: float = 1e-10) -> float:
    """Largest level passing :func:`verify_rho`, found by bisection.

    Independent of the sweep; used as a cross-check.
    """
    hi = sys.D
    if verify_rho(sys, hi):
        return hi
    width = max(1.0, abs(sys.D))
    lo = hi - width
    while not verify_rho(sys, lo):
        width *= 2.0
        lo = hi - width
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if verify_rho(sys, mid):
            lo = mid
        else:
            hi = mid
    return lo


def max_inertia_rate(cert: PassivityCertificate) -> float:
    """Upper bound on inertia growth rate, twice the strictness constant."""
    return 2.0 * cert.rho
