"""Control-channel design: the matrix ``A``, its Krylov rank test, and the coupling graph."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .states import HermitianOperator, SystemModel, TargetState, as_matrix, dagger

RANK_RTOL = 1e-10
EDGE_TOL = 1e-12
DEFAULT_ALPHA_GRID = tuple(np.linspace(-10.0, 10.0, 41))


def _a_matrix(model: SystemModel, alpha: float) -> np.ndarray:
    L = model.L.data
    k = model.kappa
    return -1j * (model.H0.data + model.Hb.data) - k * (dagger(L) @ L) + alpha * np.sqrt(k) * L


@dataclass(frozen=True, eq=False)
class DesignProblem:
    model: SystemModel
    alpha: float
    A: np.ndarray

    def __post_init__(self):
        if np.max(np.abs(self.A - _a_matrix(self.model, self.alpha))) > 1e-12:
            raise ValueError("stored A does not match -i(H0 + Hb) - kappa L*L + alpha sqrt(kappa) L")


def build_A(model: SystemModel, alpha: float) -> DesignProblem:
    return DesignProblem(model, float(alpha), _a_matrix(model, alpha))


def krylov_rows(A: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Stack ``psi*, psi* A, ..., psi* A^(N-1)`` as rows."""
    n = A.shape[0]
    rows = np.empty((n, n), dtype=complex)
    rows[0] = psi.conj()
    for k in range(1, n):
        rows[k] = rows[k - 1] @ A
    return rows


def numerical_rank(m: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def rank_condition(problem: DesignProblem, target: TargetState, rtol: float = RANK_RTOL) -> bool:
    A = as_matrix(problem.A)
    return numerical_rank(krylov_rows(A, target.vector), rtol) == A.shape[0]


@dataclass(frozen=True)
class ControlGraph:
    """Undirected graph on eigenstate indices ``1..n``; edges are pairs ``(i, j)`` with ``i < j``."""

    n: int
    edges: frozenset

    def __post_init__(self):
        for i, j in self.edges:
            if i == j:
                raise ValueError("control graph has a self-loop")
            if not (1 <= i < j <= self.n):
                raise ValueError(f"edge {(i, j)} is not normalized to 1 <= i < j <= {self.n}")

    @property
    def vertices(self) -> range:
        return range(1, self.n + 1)

    def neighbours(self, v: int) -> list[int]:
        return sorted({j for i, j in self.edges if i == v} | {i for i, j in self.edges if j == v})

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def control_graph(hb, tol: float = EDGE_TOL) -> ControlGraph:
    h = as_matrix(hb)
    n = h.shape[0]
    edges = frozenset(
        (i + 1, j + 1) for i in range(n) for j in range(i + 1, n) if max(abs(h[i, j]), abs(h[j, i])) > tol
    )
    return ControlGraph(n, edges)


def is_connected(g: ControlGraph) -> bool:
    if g.n <= 1:
        return True
    seen = {1}
    queue = deque([1])
    while queue:
        v = queue.popleft()
        for w in g.neighbours(v):
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == g.n


def components(g: ControlGraph) -> list[list[int]]:
    left = set(g.vertices)
    out = []
    while left:
        start = min(left)
        comp, queue = {start}, deque([start])
        while queue:
            for w in g.neighbours(queue.popleft()):
                if w not in comp:
                    comp.add(w)
                    queue.append(w)
        out.append(sorted(comp))
        left -= comp
    return out


def path_hb(n: int, weights) -> HermitianOperator:
    """Nearest-neighbour coupling: nonzero entries only on the first off-diagonals."""
    w = np.asarray(weights, dtype=complex).ravel()
    if len(w) != n - 1:
        raise ValueError(f"path_hb({n}) needs {n - 1} weights, got {len(w)}")
    if np.any(w == 0):
        raise ValueError("path weights must all be nonzero")
    h = np.diag(w, 1)
    return HermitianOperator(h + dagger(h))


def find_alpha(model: SystemModel, grid=DEFAULT_ALPHA_GRID, rtol: float = RANK_RTOL) -> float | None:
    """First ``alpha`` in ``grid`` for which the rank test passes for every eigenstate."""
    grid = list(grid)
    if not grid:
        raise ValueError("alpha grid is empty")
    targets = [TargetState.for_model(model, d) for d in range(1, model.dim + 1)]
    for alpha in grid:
        prob = build_A(model, alpha)
        if all(rank_condition(prob, t, rtol) for t in targets):
            return float(alpha)
    return None


def design_report(model: SystemModel, grid=DEFAULT_ALPHA_GRID) -> dict:
    """Per-eigenstate rank verdicts, chosen alpha and graph structure, as plain data."""
    grid = list(grid)
    alpha = find_alpha(model, grid)
    g = control_graph(model.Hb)
    probe = alpha if alpha is not None else grid[0]
    prob = build_A(model, probe)
    per_d = []
    for d in range(1, model.dim + 1):
        t = TargetState.for_model(model, d)
        ok_any = [a for a in grid if rank_condition(build_A(model, a), t)]
        per_d.append(
            {
                "d": d,
                "rank_ok_at_alpha": rank_condition(prob, t),
                "first_alpha_for_d": ok_any[0] if ok_any else None,
            }
        )
    return {
        "dim": model.dim,
        "alpha": alpha,
        "alpha_probed": float(probe),
        "grid": {"min": float(min(grid)), "max": float(max(grid)), "points": len(grid)},
        "per_eigenstate": per_d,
        "edges": [list(e) for e in g.edge_list()],
        "connected": is_connected(g),
        "components": components(g),
        "commuting_channel": model.commutes(),
    }
