"""Finite-dimensional state and operator algebra.

Everything here works in the eigenbasis of the free Hamiltonian ``H0``, so the
eigenstate targets are standard basis vectors. Operations accept either the
wrapper types defined below or plain ``numpy`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-8
BLOWUP_TRACE_GUARD = 0.5
DEGENERACY_GAP = 1e-9


class DimensionMismatch(ValueError):
    pass


class InvalidState(ValueError):
    pass


class StateBlowUp(RuntimeError):
    """Raised when an integrator step leaves the state space by a wide margin.

    Usually means the time step is too large for the model.
    """


def as_matrix(x) -> np.ndarray:
    """Return the underlying complex array of a wrapper type or array-like."""
    data = getattr(x, "data", x)
    return np.asarray(data, dtype=complex)


def _check_square(m: np.ndarray, name: str = "matrix") -> int:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {m.shape}")
    return m.shape[0]


def _check_same_dim(*mats: np.ndarray) -> int:
    dims = {m.shape for m in mats}
    if len(dims) != 1:
        raise DimensionMismatch(f"operand shapes differ: {sorted(dims)}")
    return _check_square(mats[0])


def dagger(m: np.ndarray) -> np.ndarray:
    return np.swapaxes(np.conj(m), -1, -2)


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    m = as_matrix(m)
    return bool(np.linalg.norm(m - dagger(m)) <= tol)


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    data: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.data)
        _check_square(m, "HermitianOperator")
        if not np.all(np.isfinite(m)):
            raise ValueError("operator has non-finite entries")
        if not is_hermitian(m):
            raise ValueError("operator is not Hermitian")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "data", m)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def is_nondegenerate(self, gap: float = DEGENERACY_GAP) -> bool:
        ev = np.linalg.eigvalsh(self.data)
        return bool(np.all(np.diff(ev) > gap))

    def is_diagonal(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.data - np.diag(np.diag(self.data))) <= tol))


@dataclass(frozen=True, eq=False)
class MeasurementChannel:
    """The measurement channel ``L``; not required to be Hermitian."""

    data: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.data)
        _check_square(m, "MeasurementChannel")
        if not np.all(np.isfinite(m)):
            raise ValueError("measurement channel has non-finite entries")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "data", m)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def is_diagonal(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.data - np.diag(np.diag(self.data))) <= tol))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    data: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.data)
        _check_square(m, "DensityMatrix")
        if np.linalg.norm(m - dagger(m)) > HERMITIAN_TOL:
            raise InvalidState("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise InvalidState(f"density matrix trace is {np.trace(m).real:.3g}, not 1")
        if np.linalg.eigvalsh(m).min() < -PSD_TOL:
            raise InvalidState("density matrix has a negative eigenvalue")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "data", m)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_vector(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise InvalidState("zero state vector")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def eigenstate(cls, index: int, dim: int) -> "DensityMatrix":
        """Projector onto basis vector ``index`` (1-based)."""
        return cls.from_vector(basis_vector(index, dim))


def basis_vector(index: int, dim: int) -> np.ndarray:
    if not 1 <= index <= dim:
        raise ValueError(f"eigenstate index {index} outside 1..{dim}")
    v = np.zeros(dim, dtype=complex)
    v[index - 1] = 1.0
    return v


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Plant of the stochastic master equation: ``(H0, Hb, L, kappa, eta)``."""

    H0: HermitianOperator
    Hb: HermitianOperator
    L: MeasurementChannel
    kappa: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        for name in ("H0", "Hb"):
            val = getattr(self, name)
            if not isinstance(val, HermitianOperator):
                object.__setattr__(self, name, HermitianOperator(val))
        if not isinstance(self.L, MeasurementChannel):
            object.__setattr__(self, "L", MeasurementChannel(self.L))
        if not (self.H0.dim == self.Hb.dim == self.L.dim):
            raise DimensionMismatch(
                f"operator dims differ: H0={self.H0.dim}, Hb={self.Hb.dim}, L={self.L.dim}"
            )
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def dim(self) -> int:
        return self.H0.dim

    def commutes(self, tol: float = 1e-10) -> bool:
        """Whether ``[H0, L] = 0``."""
        return bool(np.linalg.norm(commutator(self.H0.data, self.L.data)) <= tol)


@dataclass(frozen=True, eq=False)
class TargetState:
    """Eigenstate target ``rho_d`` with 1-based index ``d``."""

    index: int
    dim: int
    lambda_d: complex = 0.0
    vector: np.ndarray = field(init=False, repr=False)
    projector: DensityMatrix = field(init=False, repr=False)

    def __post_init__(self):
        v = basis_vector(self.index, self.dim)
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "projector", DensityMatrix.from_vector(v))
        object.__setattr__(self, "lambda_d", complex(self.lambda_d))

    @classmethod
    def for_model(cls, model: SystemModel, index: int) -> "TargetState":
        return cls(index, model.dim, model.L.data[index - 1, index - 1])

    @property
    def i(self) -> int:
        """0-based index."""
        return self.index - 1


def commutator(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[-2:] != b.shape[-2:]:
        raise DimensionMismatch(f"operand shapes differ: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def distance(rho, target: TargetState) -> float:
    """``1 - Tr(rho rho_d)``, clamped to [0, 1]."""
    r = as_matrix(rho)
    if r.shape != (target.dim, target.dim):
        raise DimensionMismatch(f"state shape {r.shape} does not match target dim {target.dim}")
    d = 1.0 - r[target.i, target.i].real
    return float(min(1.0, max(0.0, d)))


def fidelity_to_target(rho, target: TargetState) -> float:
    """``Tr(rho rho_d)``."""
    return float(as_matrix(rho)[target.i, target.i].real)


def purity(rho) -> float:
    r = as_matrix(rho)
    return float(np.einsum("ij,ji->", r, r).real)


def von_neumann_entropy(rho) -> float:
    """Entropy in nats; eigenvalues at or below zero contribute nothing."""
    ev = np.linalg.eigvalsh(as_matrix(rho))
    ev = ev[ev > 0]
    return float(-np.sum(ev * np.log(ev)))


def dissipator(lam, rho) -> np.ndarray:
    """Lindblad dissipator ``L rho L* - (L*L rho + rho L*L)/2``.

    Broadcasts over leading axes of ``rho``.
    """
    lam, rho = as_matrix(lam), as_matrix(rho)
    if lam.shape[-2:] != rho.shape[-2:]:
        raise DimensionMismatch(f"channel {lam.shape} vs state {rho.shape}")
    ld = dagger(lam)
    ldl = ld @ lam
    return lam @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl)


def innovation_superop(lam, rho) -> np.ndarray:
    """Measurement back-action term ``L rho + rho L* - Tr(L rho + rho L*) rho``.

    Broadcasts over leading axes of ``rho``.
    """
    lam, rho = as_matrix(lam), as_matrix(rho)
    if lam.shape[-2:] != rho.shape[-2:]:
        raise DimensionMismatch(f"channel {lam.shape} vs state {rho.shape}")
    m = lam @ rho + rho @ dagger(lam)
    tr = np.trace(m, axis1=-2, axis2=-1)
    return m - tr[..., None, None] * rho


def project_to_state_space(m, guard: float = BLOWUP_TRACE_GUARD) -> DensityMatrix:
    """Nearest-by-clipping physical state: Hermitize, clip negative eigenvalues, renormalize."""
    m = as_matrix(m)
    _check_square(m)
    out, ok = project_batch(m[None], guard)
    if not ok[0]:
        raise StateBlowUp(
            f"trace {np.trace(m).real:.4g} or negative eigenvalue mass drifted more than {guard}; reduce dt"
        )
    return DensityMatrix(out[0])


def project_batch(m: np.ndarray, guard: float = BLOWUP_TRACE_GUARD) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection over a stack ``(k, N, N)``.

    Returns the projected stack and a boolean mask of rows that passed the
    guard. Failed rows are returned unchanged. The SME increments are
    traceless, so the guard also applies to the trace after clipping: a
    negative eigenvalue mass above ``guard`` means the step diverged.
    """
    h = 0.5 * (m + dagger(m))
    tr = np.trace(h, axis1=-2, axis2=-1).real
    ok = np.abs(tr - 1.0) <= guard
    ok &= np.all(np.isfinite(h), axis=(-2, -1))
    out = m.copy()
    if not ok.any():
        return out, ok
    rows = np.flatnonzero(ok)
    hs = h[rows]
    ev = np.linalg.eigvalsh(hs)
    neg = ev[:, 0] < 0.0
    res = hs / tr[rows, None, None]
    if neg.any():
        w, v = np.linalg.eigh(hs[neg])
        w = np.clip(w, 0.0, None)
        s = w.sum(axis=-1, keepdims=True)
        res[neg] = (v * (w / s)[:, None, :]) @ dagger(v)
        ok[rows[neg]] = np.abs(s[:, 0] - 1.0) <= guard
    good = ok[rows]
    out[rows[good]] = res[good]
    return out, ok


def uncertainty_product(h0, l, rho) -> tuple[float, float]:
    """Robertson uncertainty relation for two observables.

    Returns ``(dH0 * dL, |<[H0, L]>| / 2)``; the first always dominates.
    """
    a, b, r = as_matrix(h0), as_matrix(l), as_matrix(rho)
    _check_same_dim(a, b, r)
    if not (is_hermitian(a) and is_hermitian(b)):
        raise ValueError("uncertainty_product needs Hermitian observables")

    def spread(x):
        mean = np.trace(x @ r).real
        return np.sqrt(max(np.trace(x @ x @ r).real - mean**2, 0.0))

    lhs = spread(a) * spread(b)
    rhs = abs(np.trace(commutator(a, b) @ r)) / 2
    return float(lhs), float(rhs)


# plain-text matrix format: "N <dim>" then N rows of complex literals


def format_matrix(m) -> str:
    m = as_matrix(m)
    n = _check_square(m)
    rows = [f"N {n}"]
    for row in m:
        rows.append(" ".join(complex_literal(z) for z in row))
    return "\n".join(rows) + "\n"


def complex_literal(z) -> str:
    re_, im = repr(float(z.real)), repr(float(z.imag))
    if not im.startswith("-"):
        im = "+" + im
    return f"{re_}{im}j"


def parse_matrix(text: str, source: str = "<string>") -> np.ndarray:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{source}: empty matrix file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "N":
        raise ValueError(f"{source}: header must be 'N <dim>', got {lines[0]!r}")
    try:
        n = int(head[1])
    except ValueError:
        raise ValueError(f"{source}: bad dimension {head[1]!r}") from None
    if len(lines) - 1 != n:
        raise ValueError(f"{source}: expected {n} rows, found {len(lines) - 1}")
    out = np.empty((n, n), dtype=complex)
    for r, ln in enumerate(lines[1:]):
        toks = ln.split()
        if len(toks) != n:
            raise ValueError(f"{source}: row {r + 1} has {len(toks)} entries, expected {n}")
        for c, tok in enumerate(toks):
            try:
                out[r, c] = complex(tok)
            except ValueError:
                raise ValueError(f"{source}: row {r + 1}, column {c + 1}: bad literal {tok!r}") from None
    return out


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    return parse_matrix(path.read_text(), str(path))


def write_matrix(m, path) -> None:
    Path(path).write_text(format_matrix(m))
