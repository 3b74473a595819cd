"""Closed-form impossibility bounds for non-commuting measurement channels.

Notation follows the usual shorthand ``Tr^(1/2)(X)^2 = sqrt(Tr(X X))``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .states import HermitianOperator, MeasurementChannel, TargetState, as_matrix, dagger, dissipator, innovation_superop

IDENTITY_TOL = 1e-12
RADICAND_TOL = 1e-12


class NegativeRadicand(ArithmeticError):
    pass


def _sqrt_tr(x: np.ndarray) -> float:
    t = np.trace(x).real
    if t < -RADICAND_TOL:
        raise NegativeRadicand(f"trace {t:.3g} under a square root is negative")
    return float(np.sqrt(max(t, 0.0)))


def _sqrt_tr_sq(x: np.ndarray) -> float:
    """``sqrt(Tr(X^2))`` for a Hermitian ``X``, computed as ``Tr(X X*)``."""
    return _sqrt_tr(x @ dagger(x))


def _psd(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + dagger(x))


def off_diagonal_weight(l, index: int) -> float:
    """``sum_{i != d} |L_id|^2`` for 1-based column ``index``."""
    L = as_matrix(l)
    col = L[:, index - 1].copy()
    col[index - 1] = 0
    return float(np.sum(np.abs(col) ** 2))


def dissipation_at_target(l, target: TargetState) -> float:
    """``Tr(rho_d D[L] rho_d)``, checked against the column-sum form."""
    rd = target.projector.data
    via_super = float(np.trace(rd @ dissipator(as_matrix(l), rd)).real)
    via_column = -off_diagonal_weight(l, target.index)
    if abs(via_super - via_column) > IDENTITY_TOL * max(1.0, abs(via_column)):
        raise ArithmeticError(f"dissipation routes disagree: {via_super} vs {via_column}")
    return via_super


def _phi1_terms(L: np.ndarray, rd: np.ndarray) -> list[float]:
    Ld = dagger(L)
    LdL = Ld @ L
    return [
        2 * _sqrt_tr_sq(LdL),
        _sqrt_tr_sq(Ld @ rd @ L),
        _sqrt_tr(_psd(LdL @ LdL @ rd)),
    ]


def _phi2_terms(L: np.ndarray, rd: np.ndarray) -> list[float]:
    Ld = dagger(L)
    LdL = Ld @ L
    S = L + Ld
    s_norm = _sqrt_tr_sq(S)
    return [
        2 * _sqrt_tr_sq(LdL),
        2 * _sqrt_tr(_psd(LdL @ LdL @ rd)),
        2 * float(np.trace(LdL).real),
        2 * _sqrt_tr(_psd(L @ Ld @ rd @ LdL @ rd)),
        3 * s_norm * float(np.trace(S @ rd).real),
        3 * s_norm * s_norm,
        2 * s_norm * _sqrt_tr(_psd(S @ S @ rd)),
    ]


def phi1(l, target: TargetState) -> float:
    return float(sum(_phi1_terms(as_matrix(l), target.projector.data)))


def phi2(l, target: TargetState) -> float:
    return float(sum(_phi2_terms(as_matrix(l), target.projector.data)))


def delta_d(l, target: TargetState) -> float:
    """Open-loop lower bound on the limsup distance to ``rho_d``."""
    L = as_matrix(l)
    if not np.any(L):
        raise ValueError("delta_d is undefined for L = 0")
    num = dissipation_at_target(L, target) ** 2
    return num / (2 * phi1(L, target) ** 2)


def innovation_square_at_target(l, target: TargetState) -> float:
    """``Tr((H[L] rho_d)^2)``."""
    rd = target.projector.data
    h = innovation_superop(as_matrix(l), rd)
    return float(np.trace(h @ h).real)


def capital_delta_d(l, target: TargetState, eta: float, as_printed: bool = False) -> float:
    """Feedback lower bound on the limsup distance for detection efficiency ``eta``.

    The numerator ``2 Tr(rho_d D[L] rho_d) + eta Tr((H[L] rho_d)^2)`` equals
    ``-2 (1 - eta) sum_{i != d} |L_id|^2`` and enters squared. With
    ``as_printed=True`` the unsquared (negative) numerator is returned instead.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    L = as_matrix(l)
    den = 2 * (2 * phi1(L, target) + eta * phi2(L, target)) ** 2
    if den == 0:
        raise ZeroDivisionError("capital_delta_d denominator vanishes (L = 0?)")
    num = 2 * dissipation_at_target(L, target) + eta * innovation_square_at_target(L, target)
    return (num if as_printed else num**2) / den


def target_drift_identity(l, target: TargetState, eta: float, kappa: float) -> float:
    """Residual of ``2k Tr(rho_d D rho_d) + eta k Tr((H rho_d)^2) = -2k(1-eta) sum |L_id|^2``."""
    L = as_matrix(l)
    rd = target.projector.data
    lhs = 2 * kappa * np.trace(rd @ dissipator(L, rd)).real + eta * kappa * innovation_square_at_target(L, target)
    rhs = -2 * kappa * (1 - eta) * off_diagonal_weight(L, target.index)
    return float(abs(lhs - rhs))


@dataclass
class BoundReport:
    d: int
    dissipation_at_target: float
    delta_d: float
    phi1: float
    phi2: float
    capital_delta_d: float
    eta: float
    drift_identity_residual: float
    capital_delta_d_as_printed: float | None = None
    commuting: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def bound_report(l, target: TargetState, eta: float, kappa: float = 1.0, as_printed: bool = False) -> BoundReport:
    L = as_matrix(l)
    zero = not np.any(L)
    return BoundReport(
        d=target.index,
        dissipation_at_target=dissipation_at_target(L, target),
        delta_d=0.0 if zero else delta_d(L, target),
        phi1=phi1(L, target),
        phi2=phi2(L, target),
        capital_delta_d=0.0 if zero else capital_delta_d(L, target, eta),
        eta=float(eta),
        drift_identity_residual=target_drift_identity(L, target, eta, kappa),
        capital_delta_d_as_printed=(0.0 if zero else capital_delta_d(L, target, eta, True)) if as_printed else None,
    )


def worst_eigenstate(l, h0, eta: float, kappa: float = 1.0, as_printed: bool = False) -> tuple[int, BoundReport]:
    """Eigenstate with the largest off-diagonal column weight in ``L`` (smallest index on ties).

    When ``[H0, L] = 0`` the returned report has ``commuting=True`` and zero bounds.
    """
    L = as_matrix(l)
    H = as_matrix(h0.data if isinstance(h0, HermitianOperator) else h0)
    n = L.shape[0]
    weights = [off_diagonal_weight(L, d) for d in range(1, n + 1)]
    d = int(np.argmax(weights)) + 1
    rep = bound_report(L, TargetState(d, n, L[d - 1, d - 1]), eta, kappa, as_printed)
    rep.commuting = bool(np.linalg.norm(H @ L - L @ H) <= 1e-10)
    if rep.commuting:
        rep.delta_d = 0.0
        rep.capital_delta_d = 0.0
    return d, rep


__all__ = [
    "MeasurementChannel",
    "BoundReport",
    "bound_report",
    "capital_delta_d",
    "delta_d",
    "dissipation_at_target",
    "phi1",
    "phi2",
    "target_drift_identity",
    "worst_eigenstate",
]
