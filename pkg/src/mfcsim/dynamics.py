"""Time evolution of the monitored system.

Steppers for the nonlinear stochastic master equation (Euler-Maruyama with
projection), its linear unnormalized form, the pure-state stochastic
Schrodinger equation, the deterministic master equation (RK4), and the
unitary open-loop model (exact exponential). Trajectories are integrated in
batches: every stepper has a stacked ``(k, N, N)`` core used by the ensemble
runner, and the single-state functions are thin wrappers around it.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .states import (
    DensityMatrix,
    HermitianOperator,
    StateBlowUp,
    SystemModel,
    TargetState,
    as_matrix,
    commutator,
    dagger,
    dissipator,
    innovation_superop,
    project_batch,
    project_to_state_space,
)

DEFAULT_DT = 1e-3


@dataclass(frozen=True)
class NoiseStream:
    """Reproducible Wiener increments for one trajectory.

    Increments are keyed by ``(seed, trajectory_index, step_index)``: step
    ``j`` always consumes the ``j``-th 64-bit word of a Philox stream seeded
    from ``(seed, trajectory_index)``, so any block can be drawn directly.
    """

    seed: int
    trajectory_index: int
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    def _generator(self, start: int) -> np.random.Generator:
        bits = np.random.Philox(np.random.SeedSequence([self.seed, self.trajectory_index]))
        bits.advance(start // 4)
        gen = np.random.Generator(bits)
        if start % 4:
            gen.random(start % 4)
        return gen

    def increments(self, start: int, count: int) -> np.ndarray:
        """``dW`` for steps ``start .. start + count - 1``."""
        u = self._generator(start).random(count)
        u[u == 0.0] = 2.0**-54
        return ndtri(u) * np.sqrt(self.dt)


class _Ops:
    """Model operators cached as plain arrays for the batched kernels."""

    def __init__(self, model: SystemModel):
        self.H0 = model.H0.data
        self.Hb = model.Hb.data
        self.L = model.L.data
        self.Ld = dagger(self.L)
        self.LdL = self.Ld @ self.L
        self.LpLd = self.L + self.Ld
        self.kappa = model.kappa
        self.gain = np.sqrt(model.eta * model.kappa)


def _sme_terms(ops: _Ops, rho: np.ndarray, u: np.ndarray):
    """Drift and diffusion matrices of the SME for a Hermitian stack ``rho``."""
    hu = ops.H0 + u[:, None, None] * ops.Hb
    a = hu @ rho
    lr = ops.L @ rho
    b = ops.LdL @ rho
    drift = -1j * (a - dagger(a)) + ops.kappa * (lr @ ops.Ld - 0.5 * (b + dagger(b)))
    m = lr + dagger(lr)
    tr = np.trace(m, axis1=-2, axis2=-1).real
    diffusion = ops.gain * (m - tr[:, None, None] * rho)
    return drift, diffusion, tr


def sme_step_batch(ops: _Ops, rho: np.ndarray, u: np.ndarray, dt: float, dw: np.ndarray):
    """One Euler-Maruyama step on a stack; returns ``(states, ok_mask, record_increment)``."""
    drift, diffusion, tr = _sme_terms(ops, rho, u)
    dy = ops.gain * tr * dt + dw
    new = rho + drift * dt + diffusion * dw[:, None, None]
    new, ok = project_batch(new)
    return new, ok, dy


def sme_step(model: SystemModel, rho, u: float, dt: float, dW: float) -> DensityMatrix:
    """Euler-Maruyama step of the stochastic master equation, projected back to a state."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    r = as_matrix(rho)
    drift, diffusion, _ = _sme_terms(_Ops(model), r[None], np.array([float(u)]))
    return project_to_state_space(r + drift[0] * dt + diffusion[0] * dW)


def linear_sme_step(model: SystemModel, rho_tilde, u: float, dt: float, dY: float) -> np.ndarray:
    """Euler-Maruyama step of the linear (unnormalized) SME driven by the record ``dY``."""
    r = as_matrix(rho_tilde)
    if not np.trace(r).real > 0:
        raise ValueError("unnormalized state must have positive trace")
    return _linear_step(_Ops(model), r, u, dt, dY)


def _linear_step(ops: _Ops, r: np.ndarray, u: float, dt: float, dY: float) -> np.ndarray:
    hu = ops.H0 + u * ops.Hb
    lr = ops.L @ r
    drift = -1j * (hu @ r - r @ hu) + ops.kappa * (
        lr @ ops.Ld - 0.5 * (ops.LdL @ r + r @ ops.LdL)
    )
    return r + drift * dt + ops.gain * (lr + r @ ops.Ld) * dY


def sse_step(model: SystemModel, psi, u: float, dt: float, dWbar: float) -> np.ndarray:
    """Euler-Maruyama step of the linear stochastic Schrodinger equation.

    Only perfect detection (``eta == 1``) is supported: for ``eta < 1`` the
    driving noise mixes the record with an unobserved Wiener process.
    """
    if model.eta != 1.0:
        raise NotImplementedError("sse_step is only defined for eta = 1")
    v = np.asarray(psi, dtype=complex).ravel()
    if not np.any(v):
        raise ValueError("zero state vector")
    ops = _Ops(model)
    hu = ops.H0 + u * ops.Hb
    return v + (-1j * (hu @ v) - 0.5 * ops.kappa * (ops.LdL @ v)) * dt + np.sqrt(
        ops.kappa
    ) * (ops.L @ v) * dWbar


def _lindblad_rhs(ops: _Ops, rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    hu = ops.H0 + u[:, None, None] * ops.Hb
    a = hu @ rho
    b = ops.LdL @ rho
    return -1j * (a - rho @ hu) + ops.kappa * (ops.L @ rho @ ops.Ld - 0.5 * (b + rho @ ops.LdL))


def master_equation_step_batch(ops: _Ops, rho: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    k1 = _lindblad_rhs(ops, rho, u)
    k2 = _lindblad_rhs(ops, rho + 0.5 * dt * k1, u)
    k3 = _lindblad_rhs(ops, rho + 0.5 * dt * k2, u)
    k4 = _lindblad_rhs(ops, rho + dt * k3, u)
    new = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return 0.5 * (new + dagger(new))


def master_equation_step(model: SystemModel, rho, u: float, dt: float) -> DensityMatrix:
    """Classical RK4 step of the ensemble-averaged master equation."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    r = as_matrix(rho)[None]
    return DensityMatrix(master_equation_step_batch(_Ops(model), r, np.array([float(u)]), dt)[0])


@dataclass(frozen=True, eq=False)
class OpenLoopModel:
    """Measurement-free model: unitary evolution under ``H0' + u Hb``."""

    H0_prime: HermitianOperator
    Hb: HermitianOperator

    def __post_init__(self):
        for name in ("H0_prime", "Hb"):
            val = getattr(self, name)
            if not isinstance(val, HermitianOperator):
                object.__setattr__(self, name, HermitianOperator(val))
        if self.H0_prime.dim != self.Hb.dim:
            raise ValueError("H0_prime and Hb dimensions differ")

    @property
    def dim(self) -> int:
        return self.Hb.dim

    def propagator(self, u: float, dt: float) -> np.ndarray:
        w, v = np.linalg.eigh(self.H0_prime.data + u * self.Hb.data)
        return (v * np.exp(-1j * w * dt)) @ dagger(v)


def unitary_step(olc: OpenLoopModel, rho, u: float, dt: float) -> DensityMatrix:
    """Exact step ``U rho U*`` with ``U = exp(-i (H0' + u Hb) dt)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    U = olc.propagator(u, dt)
    new = U @ as_matrix(rho) @ dagger(U)
    return DensityMatrix(0.5 * (new + dagger(new)))


def synthesize_measurement_record(model: SystemModel, rho, dW: float, dt: float) -> float:
    """Record increment ``dY = sqrt(eta kappa) Tr((L + L*) rho) dt + dW``."""
    r = as_matrix(rho)
    L = model.L.data
    signal = np.trace((L + dagger(L)) @ r).real
    return float(np.sqrt(model.eta * model.kappa) * signal * dt + dW)


# Ito drift of scalar functionals of the state


class Functional:
    DISTANCE = "distance"
    LYAPUNOV = "lyapunov"
    PURITY = "purity"


@dataclass(frozen=True, eq=False)
class LinearObservable:
    X: np.ndarray


def drift_of_functional(model: SystemModel, rho, u: float, f, target: TargetState | None = None) -> float:
    """Generator of the SME applied to ``f``, evaluated at ``rho``.

    ``f`` is one of ``Functional.DISTANCE`` (``1 - Tr(rho rho_d)``),
    ``Functional.LYAPUNOV`` (``1 - Tr(rho rho_d)^2``), ``Functional.PURITY``,
    or a :class:`LinearObservable`. The value is the first-order term against
    the drift matrix plus half the second-order term against the diffusion
    matrix.
    """
    r = as_matrix(rho)
    ops = _Ops(model)
    drift, diffusion, _ = _sme_terms(ops, r[None], np.array([float(u)]))
    a, b = drift[0], diffusion[0]
    if isinstance(f, LinearObservable):
        return float(np.trace(as_matrix(f.X) @ a).real)
    if f == Functional.PURITY:
        return float((2 * np.trace(r @ a) + np.trace(b @ b)).real)
    if f in (Functional.DISTANCE, Functional.LYAPUNOV):
        if target is None:
            raise ValueError(f"functional {f!r} needs a target state")
        i = target.i
        if f == Functional.DISTANCE:
            return float(-a[i, i].real)
        p = r[i, i].real
        return float(-2 * p * a[i, i].real - b[i, i].real ** 2)
    raise ValueError(f"unknown functional {f!r}")


def functional_value(f, rho, target: TargetState | None = None) -> float:
    r = as_matrix(rho)
    if isinstance(f, LinearObservable):
        return float(np.trace(as_matrix(f.X) @ r).real)
    if f == Functional.PURITY:
        return float(np.einsum("ij,ji->", r, r).real)
    p = r[target.i, target.i].real
    if f == Functional.DISTANCE:
        return float(1 - p)
    if f == Functional.LYAPUNOV:
        return float(1 - p * p)
    raise ValueError(f"unknown functional {f!r}")


# Trajectories


@dataclass(eq=False)
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    distances: np.ndarray
    record: np.ndarray
    converged: bool = False
    final_distance: float = float("nan")
    failed: bool = False
    message: str = ""
    trajectory_index: int = 0

    def __post_init__(self):
        n = len(self.times)
        for name in ("states", "controls", "distances", "record"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")

    def to_csv(self, path=None) -> str:
        """Write ``t, u, D, Y`` and the row-major state entries (re/im interleaved)."""
        n = self.states.shape[-1]
        header = ["t", "u", "D", "Y"]
        for i in range(n):
            for j in range(n):
                header += [f"rho_{i + 1}{j + 1}_re", f"rho_{i + 1}{j + 1}_im"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        flat = self.states.reshape(len(self.times), -1)
        for k in range(len(self.times)):
            row = [self.times[k], self.controls[k], self.distances[k], self.record[k]]
            for z in flat[k]:
                row += [z.real, z.imag]
            w.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "TrajectoryRecord":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(x) for x in r] for r in rows[1:]])
        n = int(round(np.sqrt((len(rows[0]) - 4) / 2)))
        z = data[:, 4::2] + 1j * data[:, 5::2]
        return cls(
            times=data[:, 0],
            controls=data[:, 1],
            distances=data[:, 2],
            record=data[:, 3],
            states=z.reshape(-1, n, n),
            final_distance=float(data[-1, 2]),
        )


def step_count(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"horizon T={T} is not a whole number of steps of dt={dt}")
    return n


def sample_steps(n_steps: int, sample_every: int) -> np.ndarray:
    if sample_every < 1:
        raise ValueError("sample_every must be at least 1")
    idx = np.arange(0, n_steps + 1, sample_every)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


@dataclass(eq=False)
class BatchResult:
    """Sampled output of a batch of trajectories sharing one model and control law."""

    times: np.ndarray
    states: np.ndarray  # (k, S, N, N)
    controls: np.ndarray  # (k, S)
    distances: np.ndarray  # (k, S)
    record: np.ndarray  # (k, S)
    failed: np.ndarray  # (k,)
    trajectory_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    def trajectory(self, j: int, epsilon: float = 0.01) -> TrajectoryRecord:
        fd = float(self.distances[j, -1])
        return TrajectoryRecord(
            times=self.times,
            states=self.states[j],
            controls=self.controls[j],
            distances=self.distances[j],
            record=self.record[j],
            converged=bool(not self.failed[j] and fd < epsilon),
            final_distance=fd,
            failed=bool(self.failed[j]),
            message="state blow-up; reduce dt" if self.failed[j] else "",
            trajectory_index=int(self.trajectory_indices[j]) if len(self.trajectory_indices) else j,
        )


def _distances(rho: np.ndarray, target_i: int) -> np.ndarray:
    return np.clip(1.0 - rho[:, target_i, target_i].real, 0.0, 1.0)


NOISE_BLOCK = 4096


def simulate_batch(
    model: SystemModel,
    controller,
    rho0,
    T: float,
    dt: float,
    seed: int,
    trajectory_indices,
    sample_every: int = 1,
    target: TargetState | None = None,
) -> BatchResult:
    """Integrate the SME for several trajectories at once.

    Each trajectory draws its own noise from ``NoiseStream(seed, index, dt)``
    and carries its own controller memory. A trajectory whose state leaves
    the trace guard is frozen and flagged as failed.
    """
    target = target or controller.target
    idx = np.asarray(list(trajectory_indices), dtype=np.int64)
    k = len(idx)
    n_steps = step_count(T, dt)
    samples = sample_steps(n_steps, sample_every)
    ops = _Ops(model)
    r0 = as_matrix(rho0)
    rho = np.repeat(r0[None], k, axis=0)
    mem = controller.init(rho)
    streams = [NoiseStream(seed, int(j), dt) for j in idx]

    n_s = len(samples)
    out_states = np.empty((k, n_s) + r0.shape, dtype=complex)
    out_u = np.empty((k, n_s))
    out_y = np.empty((k, n_s))
    failed = np.zeros(k, dtype=bool)
    y = np.zeros(k)
    s_ptr = 0
    noise = None
    for step in range(n_steps + 1):
        u, new_mem = controller.step(step * dt, rho, mem)
        u = np.where(failed, 0.0, u)
        if step == samples[s_ptr]:
            out_states[:, s_ptr] = rho
            out_u[:, s_ptr] = u
            out_y[:, s_ptr] = y
            s_ptr += 1
        if step == n_steps:
            break
        off = step % NOISE_BLOCK
        if off == 0:
            noise = np.stack([s.increments(step, NOISE_BLOCK) for s in streams])
        new, ok, dy = sme_step_batch(ops, rho, u, dt, noise[:, off])
        live = ok & ~failed
        rho = np.where(live[:, None, None], new, rho)
        y = np.where(live, y + dy, y)
        mem = controller.select(live, new_mem, mem)
        failed |= ~ok
    return BatchResult(
        times=samples * dt,
        states=out_states,
        controls=out_u,
        distances=np.clip(1.0 - out_states[:, :, target.i, target.i].real, 0.0, 1.0),
        record=out_y,
        failed=failed,
        trajectory_indices=idx,
    )


def simulate_trajectory(
    model: SystemModel,
    controller,
    rho0,
    T: float,
    dt: float,
    noise: NoiseStream,
    sample_every: int = 1,
    target: TargetState | None = None,
    epsilon: float = 0.01,
) -> TrajectoryRecord:
    """Integrate one SME trajectory under ``controller``.

    Raises :class:`StateBlowUp` if the state leaves the trace guard.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if abs(noise.dt - dt) > 1e-15:
        raise ValueError("noise stream dt does not match integrator dt")
    res = simulate_batch(
        model, controller, rho0, T, dt, noise.seed, [noise.trajectory_index], sample_every, target
    )
    if res.failed[0]:
        raise StateBlowUp(f"trajectory {noise.trajectory_index} blew up; reduce dt below {dt}")
    return res.trajectory(0, epsilon)


def integrate_deterministic(
    stepper,
    controller,
    rho0,
    T: float,
    dt: float,
    sample_every: int = 1,
    target: TargetState | None = None,
    watch=None,
) -> TrajectoryRecord:
    """Run a deterministic open-loop model and sample it like an SME trajectory.

    ``stepper(rho_stack, u_array, dt)`` advances a ``(1, N, N)`` stack. A
    controller evaluated on a deterministic state is an open-loop schedule.
    ``watch(prev, new)``, when given, is called after every step.
    """
    target = target or controller.target
    n_steps = step_count(T, dt)
    samples = sample_steps(n_steps, sample_every)
    rho = as_matrix(rho0)[None].copy()
    mem = controller.init(rho)
    states, us = [], []
    s_ptr = 0
    for step in range(n_steps + 1):
        u, mem = controller.step(step * dt, rho, mem)
        if step == samples[s_ptr]:
            states.append(rho[0].copy())
            us.append(float(u[0]))
            s_ptr += 1
        if step == n_steps:
            break
        new = stepper(rho, u, dt)
        if watch is not None:
            watch(rho[0], new[0])
        rho = new
    states = np.array(states)
    d = _distances(states, target.i)
    return TrajectoryRecord(
        times=samples * dt,
        states=states,
        controls=np.array(us),
        distances=d,
        record=np.zeros(len(samples)),
        final_distance=float(d[-1]),
    )


def master_equation_stepper(model: SystemModel):
    ops = _Ops(model)
    return lambda rho, u, dt: master_equation_step_batch(ops, rho, u, dt)


def unitary_stepper(olc: OpenLoopModel):
    cache = {}

    def step(rho, u, dt):
        key = (float(u[0]), dt)
        U = cache.get(key)
        if U is None:
            if len(cache) > 64:
                cache.clear()
            U = cache[key] = olc.propagator(key[0], dt)
        new = U @ rho @ dagger(U)
        return 0.5 * (new + dagger(new))

    return step


__all__ = [
    "NoiseStream",
    "TrajectoryRecord",
    "OpenLoopModel",
    "Functional",
    "LinearObservable",
    "sme_step",
    "linear_sme_step",
    "sse_step",
    "master_equation_step",
    "unitary_step",
    "synthesize_measurement_record",
    "drift_of_functional",
    "functional_value",
    "simulate_trajectory",
    "simulate_batch",
    "integrate_deterministic",
    "commutator",
    "dissipator",
    "innovation_superop",
]
