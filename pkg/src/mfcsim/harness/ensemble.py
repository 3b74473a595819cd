"""Monte Carlo ensembles of SME trajectories and open-loop comparisons."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import binomtest

from ..dynamics import (
    BatchResult,
    OpenLoopModel,
    TrajectoryRecord,
    integrate_deterministic,
    master_equation_stepper,
    simulate_batch,
    unitary_stepper,
)
from ..states import purity, von_neumann_entropy
from .config import ExperimentConfig

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.01


class EnsembleFailure(RuntimeError):
    pass


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(eq=False)
class EnsembleResult:
    times: np.ndarray
    final_distances: np.ndarray
    failed: np.ndarray
    tail_max: np.ndarray
    mean_distance: np.ndarray
    epsilon: float
    target: int
    seed: int
    mean_state: np.ndarray | None = None
    sem_state: np.ndarray | None = None
    trajectories: list[TrajectoryRecord] = field(default_factory=list, repr=False)

    @property
    def n_valid(self) -> int:
        return int(np.sum(~self.failed))

    @property
    def converged(self) -> np.ndarray:
        return (self.final_distances < self.epsilon) & ~self.failed

    @property
    def converged_count(self) -> int:
        return int(np.sum(self.converged))

    @property
    def probability(self) -> float:
        return self.converged_count / self.n_valid if self.n_valid else 0.0

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.converged_count, self.n_valid)

    def probability_at(self, t: float) -> float:
        """Fraction of valid trajectories with ``D < epsilon`` at the sample nearest ``t``."""
        j = int(np.argmin(np.abs(self.times - t)))
        ok = ~self.failed
        return float(np.mean(self.trajectory_distances()[ok, j] < self.epsilon))

    def trajectory_distances(self) -> np.ndarray:
        return np.array([tr.distances for tr in self.trajectories])

    def summary(self) -> dict:
        lo, hi = self.interval
        return {
            "trajectories": int(len(self.failed)),
            "failed": int(np.sum(self.failed)),
            "converged": self.converged_count,
            "probability": self.probability,
            "wilson_low": lo,
            "wilson_high": hi,
            "epsilon": self.epsilon,
            "target": self.target,
            "seed": self.seed,
            "final_distance_mean": float(np.mean(self.final_distances[~self.failed])) if self.n_valid else None,
        }

    def to_dict(self) -> dict:
        d = {
            "summary": self.summary(),
            "times": self.times.tolist(),
            "mean_distance": self.mean_distance.tolist(),
            "final_distances": self.final_distances.tolist(),
            "tail_max": self.tail_max.tolist(),
            "failed": self.failed.astype(int).tolist(),
        }
        if self.mean_state is not None:
            d["mean_state"] = {"re": self.mean_state.real.tolist(), "im": self.mean_state.imag.tolist()}
            d["sem_state"] = {"re": self.sem_state.real.tolist(), "im": self.sem_state.imag.tolist()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleResult":
        s = d["summary"]
        ms = d.get("mean_state")
        ss = d.get("sem_state")
        return cls(
            times=np.array(d["times"], dtype=float),
            final_distances=np.array(d["final_distances"], dtype=float),
            failed=np.array(d["failed"], dtype=bool),
            tail_max=np.array(d["tail_max"], dtype=float),
            mean_distance=np.array(d["mean_distance"], dtype=float),
            epsilon=s["epsilon"],
            target=s["target"],
            seed=s["seed"],
            mean_state=np.array(ms["re"]) + 1j * np.array(ms["im"]) if ms else None,
            sem_state=np.array(ss["re"]) + 1j * np.array(ss["im"]) if ss else None,
        )

    def __eq__(self, other):
        if not isinstance(other, EnsembleResult):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _run_batch(args) -> BatchResult:
    config, law, indices = args
    ctrl = config.build_controller(law)
    return simulate_batch(
        config.model,
        ctrl,
        config.initial_state,
        config.T,
        config.dt,
        config.seed,
        indices,
        config.sample_every,
        config.target,
    )


def tail_window_max(times: np.ndarray, distances: np.ndarray, T: float) -> np.ndarray:
    """Max distance over samples in ``[T/2, T]`` (last axis is time)."""
    mask = times >= T / 2 - 1e-12
    return distances[..., mask].max(axis=-1)


def run_ensemble(config: ExperimentConfig, workers: int = 1, law: str | None = None, keep_states: bool = True) -> EnsembleResult:
    """Simulate ``config.trajectories`` independent trajectories.

    Trajectories are grouped into fixed batches by index, so the output does
    not depend on ``workers``. Blown-up trajectories are excluded from the
    statistics; more than 1% of them is an error.
    """
    M = config.trajectories
    bs = config.batch_size
    jobs = [(config, law, range(s, min(s + bs, M))) for s in range(0, M, bs)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_batch, jobs))
    else:
        batches = [_run_batch(j) for j in jobs]

    times = batches[0].times
    dist = np.concatenate([b.distances for b in batches])
    failed = np.concatenate([b.failed for b in batches])
    states = np.concatenate([b.states for b in batches])
    if failed.sum() > MAX_FAILURE_FRACTION * M:
        raise EnsembleFailure(f"{failed.sum()} of {M} trajectories blew up; reduce dt")
    if failed.any():
        log.warning("%d trajectories blew up and are excluded", failed.sum())

    ok = ~failed
    trajectories = []
    for b in batches:
        trajectories += [b.trajectory(j, config.convergence_epsilon) for j in range(len(b.failed))]
    good = states[ok]
    n_ok = max(int(ok.sum()), 1)
    mean_state = good.mean(axis=0)
    if n_ok > 1:
        sem = (good.real.std(axis=0, ddof=1) + 1j * good.imag.std(axis=0, ddof=1)) / np.sqrt(n_ok)
    else:
        sem = np.zeros_like(mean_state)
    return EnsembleResult(
        times=times,
        final_distances=dist[:, -1],
        failed=failed,
        tail_max=tail_window_max(times, dist, config.T),
        mean_distance=dist[ok].mean(axis=0) if ok.any() else np.full(len(times), np.nan),
        epsilon=config.convergence_epsilon,
        target=config.controller.target,
        seed=config.seed,
        mean_state=mean_state,
        sem_state=sem,
        trajectories=trajectories if keep_states else [],
    )


def entropy_floor(rho) -> float:
    """Smallest distance to any pure state reachable by unitaries: ``1 - lambda_max``."""
    return float(1.0 - np.linalg.eigvalsh(np.asarray(getattr(rho, "data", rho))).max())


def purity_floor(rho) -> float:
    """Distance floor implied by a purity that can only decrease: ``1 - sqrt(Tr rho^2)``."""
    return float(1.0 - np.sqrt(purity(rho)))


def compare_modes(config: ExperimentConfig, workers: int = 1, min_probability: float = 0.9) -> dict:
    """Feedback ensemble versus both open-loop models from the same initial state."""
    rho0 = config.initial_state
    target = config.target
    ens = run_ensemble(config, workers)
    final_states = np.array([tr.states[-1] for tr, f in zip(ens.trajectories, ens.failed) if not f])

    if config.olc_variant is not None:
        olc = config.olc_variant.unitary_model(config.model)
    else:
        olc = OpenLoopModel(config.model.H0, config.model.Hb)
    ctrl = config.build_controller()
    uni = integrate_deterministic(
        unitary_stepper(olc), ctrl, rho0, config.T, config.dt, config.sample_every, target
    )
    me = integrate_deterministic(
        master_equation_stepper(config.model), config.olc_control(), rho0, config.T, config.dt,
        config.sample_every, target,
    )
    s_floor = entropy_floor(rho0)
    p_floor = purity_floor(rho0)
    me_purities = [purity(s) for s in me.states]
    commuting = config.model.commutes()

    def row(states, dists):
        return {
            "final_distance": float(dists[-1]),
            "min_distance": float(np.min(dists)),
            "final_purity": purity(states[-1]),
            "final_entropy": von_neumann_entropy(states[-1]),
        }

    mfc = {
        "final_distance": float(np.mean(ens.final_distances[~ens.failed])),
        "min_distance": float(np.min(ens.final_distances[~ens.failed])),
        "final_purity": float(np.mean([purity(s) for s in final_states])),
        "final_entropy": float(np.mean([von_neumann_entropy(s) for s in final_states])),
        "convergence_probability": ens.probability,
        "wilson": list(ens.interval),
    }
    unitary = row(uni.states, uni.distances) | {"distance_floor": s_floor}
    master = row(me.states, me.distances) | {
        "distance_floor": p_floor if commuting else None,
        "purity_monotone": bool(np.all(np.diff(me_purities) <= 1e-8)) if commuting else None,
    }
    eps = config.convergence_epsilon
    checks = {
        "mfc_converges": ens.probability >= min_probability,
        "unitary_respects_floor": unitary["min_distance"] >= s_floor - 1e-9,
        "unitary_cannot_reach": s_floor >= eps,
    }
    if commuting:
        checks["master_eq_respects_floor"] = master["min_distance"] >= p_floor - 1e-9
        checks["master_eq_purity_monotone"] = master["purity_monotone"]
        checks["master_eq_cannot_reach"] = p_floor >= eps
    return {
        "initial_purity": purity(rho0),
        "initial_entropy": von_neumann_entropy(rho0),
        "commuting_channel": commuting,
        "mfc": mfc,
        "unitary_olc": unitary,
        "master_eq_olc": master,
        "checks": checks,
        "verdict": "PASS" if all(checks.values()) else "FAIL",
        "curves": {
            "times": ens.times.tolist(),
            "mfc_mean_distance": ens.mean_distance.tolist(),
            "unitary_distance": uni.distances.tolist(),
            "master_eq_distance": me.distances.tolist(),
        },
    }


def gamma_scan(config: ExperimentConfig, gammas, workers: int = 1) -> list[dict]:
    rows = []
    for g in gammas:
        g = float(g)
        if not 0 < g < 1:
            raise ValueError(f"gamma {g} outside (0, 1)")
        cfg = config.with_(controller=replace(config.controller, law="switching", gamma=g))
        ens = run_ensemble(cfg, workers, keep_states=False)
        lo, hi = ens.interval
        rows.append({"gamma": g, "probability": ens.probability, "wilson_low": lo, "wilson_high": hi})
    return rows
