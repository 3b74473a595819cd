"""Feedback laws for eigenstate preparation.

The scalar API (:func:`local_control`, :func:`switching_control`) follows
the three-case switching law directly. The ``*Law`` classes are the same
laws vectorized over a stack of trajectories; they are what the simulators
call once per time step (zero-order hold).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .states import HermitianOperator, TargetState, as_matrix

STABILIZE = "stabilize"
EXCITE = "excite"

IMAG_RESIDUE_TOL = 1e-12


def local_control(hb, rho, target: TargetState) -> float:
    """Lyapunov control ``u = -Tr(i [Hb, rho] rho_d)``."""
    h, r = as_matrix(hb), as_matrix(rho)
    i = target.i
    t = 1j * ((h @ r)[i, i] - (r @ h)[i, i])
    if abs(t.imag) > IMAG_RESIDUE_TOL:
        raise ValueError(f"control trace has imaginary part {t.imag:.3g}; inputs not Hermitian?")
    return float(-t.real)


def _local_control_batch(hb: np.ndarray, rho: np.ndarray, i: int) -> np.ndarray:
    # -Tr(i[Hb, rho] rho_d) = 2 Im (Hb rho)_dd for Hermitian Hb, rho
    return 2.0 * np.einsum("k,bk->b", hb[i], rho[:, :, i]).imag


@dataclass(frozen=True, eq=False)
class SwitchingController:
    """State of the switching law for one trajectory.

    ``mode`` remembers which boundary of the buffer region
    ``gamma/2 < Tr(rho rho_d) < gamma`` was crossed last. ``None`` means the
    controller has not seen a state yet.
    """

    target: TargetState
    Hb: HermitianOperator
    gamma: float = 0.5
    mode: str | None = None
    excite_value: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.mode not in (None, STABILIZE, EXCITE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not isinstance(self.Hb, HermitianOperator):
            object.__setattr__(self, "Hb", HermitianOperator(self.Hb))


def initial_mode(gamma: float, fidelity: float) -> str:
    # states starting inside the buffer region take the excite branch
    return STABILIZE if fidelity >= gamma else EXCITE


def switching_control(ctrl: SwitchingController, rho) -> tuple[float, SwitchingController]:
    r = as_matrix(rho)
    p = r[ctrl.target.i, ctrl.target.i].real
    mode = ctrl.mode or initial_mode(ctrl.gamma, p)
    if p >= ctrl.gamma:
        mode = STABILIZE
    elif p <= ctrl.gamma / 2:
        mode = EXCITE
    if mode == STABILIZE:
        u = local_control(ctrl.Hb, r, ctrl.target)
    else:
        u = ctrl.excite_value
    return u, replace(ctrl, mode=mode)


# vectorized laws used by the integrators


class ControlLaw:
    name = "abstract"

    def __init__(self, target: TargetState):
        self.target = target

    def init(self, rho: np.ndarray):
        return None

    def step(self, t: float, rho: np.ndarray, mem):
        raise NotImplementedError

    def select(self, mask: np.ndarray, new, old):
        return new

    def describe(self) -> dict:
        return {"law": self.name, "target": self.target.index}


class SwitchingLaw(ControlLaw):
    name = "switching"

    def __init__(self, target: TargetState, hb, gamma: float = 0.5, excite_value: float = 1.0):
        super().__init__(target)
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        self.hb = as_matrix(hb)
        self.gamma = float(gamma)
        self.excite_value = float(excite_value)

    def init(self, rho):
        return rho[:, self.target.i, self.target.i].real >= self.gamma

    def step(self, t, rho, mem):
        p = rho[:, self.target.i, self.target.i].real
        stab = np.where(p >= self.gamma, True, np.where(p <= self.gamma / 2, False, mem))
        u = np.where(stab, _local_control_batch(self.hb, rho, self.target.i), self.excite_value)
        return u, stab

    def select(self, mask, new, old):
        return np.where(mask, new, old)

    def describe(self):
        return {**super().describe(), "gamma": self.gamma}


class LocalLaw(ControlLaw):
    name = "local"

    def __init__(self, target: TargetState, hb):
        super().__init__(target)
        self.hb = as_matrix(hb)

    def step(self, t, rho, mem):
        return _local_control_batch(self.hb, rho, self.target.i), mem


class ConstantLaw(ControlLaw):
    name = "constant"

    def __init__(self, target: TargetState, value: float = 1.0):
        super().__init__(target)
        self.value = float(value)

    def step(self, t, rho, mem):
        return np.full(len(rho), self.value), mem

    def describe(self):
        return {**super().describe(), "value": self.value}


class ZeroLaw(ConstantLaw):
    name = "zero"

    def __init__(self, target: TargetState):
        super().__init__(target, 0.0)


class ScheduleLaw(ControlLaw):
    """Open-loop control ``u(t)`` given as a callable or piecewise-constant table."""

    name = "schedule"

    def __init__(self, target: TargetState, schedule):
        super().__init__(target)
        if callable(schedule):
            self.fn = schedule
        else:
            pts = np.asarray(schedule, dtype=float).reshape(-1, 2)
            times, values = pts[:, 0], pts[:, 1]

            def fn(t):
                j = np.searchsorted(times, t, side="right") - 1
                return values[max(j, 0)]

            self.fn = fn

    def step(self, t, rho, mem):
        return np.full(len(rho), float(self.fn(t))), mem


LAWS = ("switching", "local", "constant", "zero")


def make_law(law: str, target: TargetState, hb=None, gamma: float = 0.5, value: float = 1.0) -> ControlLaw:
    if law == "switching":
        return SwitchingLaw(target, hb, gamma)
    if law == "local":
        return LocalLaw(target, hb)
    if law == "constant":
        return ConstantLaw(target, value)
    if law == "zero":
        return ZeroLaw(target)
    raise ValueError(f"unknown control law {law!r}; expected one of {', '.join(LAWS)}")
