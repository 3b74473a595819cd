"""Property suites that check the reachability and impossibility results numerically.

Each suite returns a :class:`Verdict`. Suites refuse to run (raising
:class:`HypothesisMismatch`) when the configured model does not satisfy the
hypotheses of the result being checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..bounds import off_diagonal_weight, worst_eigenstate
from ..design import path_hb
from ..dynamics import (
    Functional,
    OpenLoopModel,
    _Ops,
    drift_of_functional,
    functional_value,
    integrate_deterministic,
    master_equation_step_batch,
    master_equation_stepper,
    sme_step_batch,
    step_count,
    unitary_stepper,
)
from ..feedback import ConstantLaw, LocalLaw, ScheduleLaw, SwitchingLaw, ZeroLaw, local_control
from ..states import DensityMatrix, SystemModel, TargetState, purity, von_neumann_entropy
from .config import ExperimentConfig
from .ensemble import run_ensemble, tail_window_max

THEOREMS = ("T2", "T3", "T4", "T5", "Eq27", "Eq29", "mean")

ADVERSARIAL_NOTE = (
    "evidence, not proof: the result quantifies over every control channel and law, "
    "this suite tries a finite adversarial set"
)


class HypothesisMismatch(ValueError):
    pass


@dataclass
class Verdict:
    theorem: str
    passed: bool
    margins: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def label(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "verdict": self.label, "margins": self.margins, "notes": self.notes}


# hypothesis checks


def _require_nondegenerate(model: SystemModel):
    if not model.H0.is_nondegenerate():
        raise HypothesisMismatch("H0 must be non-degenerate")
    if not model.H0.is_diagonal():
        raise HypothesisMismatch("H0 must be diagonal (work in its eigenbasis)")


def _require_commuting(model: SystemModel):
    if not model.commutes():
        raise HypothesisMismatch("[H0, L] must vanish for this check")


def _require_noncommuting(model: SystemModel):
    if model.commutes():
        raise HypothesisMismatch("[H0, L] must be nonzero for this check")


def _require_hermitian_diagonal_l(model: SystemModel):
    L = model.L.data
    if not (model.L.is_diagonal() and np.allclose(L, L.conj().T, atol=1e-12)):
        raise HypothesisMismatch("L must be Hermitian and diagonal for this check")


def _require_mixed(rho: DensityMatrix):
    if purity(rho) > 1 - 1e-9:
        raise HypothesisMismatch("initial state must be mixed")


# random draws


def random_state(rng: np.random.Generator, n: int, floor: float = 0.0) -> np.ndarray:
    """Random density matrix; ``floor`` mixes in ``I/n`` with that weight."""
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    r = g @ g.conj().T
    r /= np.trace(r).real
    r = (1 - floor) * r + floor * np.eye(n) / n
    return 0.5 * (r + r.conj().T)


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (g + g.conj().T)


def random_commuting_model(rng: np.random.Generator, n: int) -> SystemModel:
    h0 = np.diag(np.sort(rng.uniform(-2, 2, n)) + np.arange(n) * 1e-3)
    L = np.diag(rng.uniform(-2, 2, n))
    return SystemModel(h0, random_hermitian(rng, n), L, rng.uniform(0.2, 2.0), rng.uniform(0.0, 1.0))


# suites


def verify_t2(config: ExperimentConfig, n_random: int = 3) -> Verdict:
    """Unitary open-loop model conserves spectrum and entropy from a mixed start."""
    rho0 = config.initial_state
    _require_mixed(rho0)
    olc = (
        config.olc_variant.unitary_model(config.model)
        if config.olc_variant is not None and config.olc_variant.kind == "unitary"
        else OpenLoopModel(config.model.H0, config.model.Hb)
    )
    spec0 = np.sort(np.linalg.eigvalsh(rho0.data))
    s0 = von_neumann_entropy(rho0)
    worst = {"spectrum": 0.0, "entropy": 0.0}

    def watch(prev, new):
        ev = np.sort(np.linalg.eigvalsh(new))
        worst["spectrum"] = max(worst["spectrum"], float(np.max(np.abs(ev - spec0))))
        pos = ev[ev > 0]
        worst["entropy"] = max(worst["entropy"], abs(float(-np.sum(pos * np.log(pos))) - s0))

    rng = np.random.default_rng(config.seed)
    controls = [config.build_controller()]
    for _ in range(n_random):
        times = np.arange(0.0, config.T, 1.0)
        controls.append(ScheduleLaw(config.target, np.column_stack([times, rng.uniform(-2, 2, len(times))])))
    floor = 1.0 - spec0[-1]
    min_d = 1.0
    for ctrl in controls:
        rec = integrate_deterministic(
            unitary_stepper(olc), ctrl, rho0, config.T, config.dt, config.sample_every, config.target, watch
        )
        min_d = min(min_d, float(rec.distances.min()))
    passed = worst["spectrum"] <= 1e-10 and worst["entropy"] <= 1e-6 and min_d >= floor - 1e-9
    return Verdict(
        "T2",
        passed,
        {
            "max_spectrum_drift": worst["spectrum"],
            "max_entropy_drift": worst["entropy"],
            "initial_entropy": s0,
            "distance_floor": floor,
            "min_distance_seen": min_d,
            "controls_tried": len(controls),
        },
    )


def verify_t3(config: ExperimentConfig, n_random: int = 100) -> Verdict:
    """Master equation with commuting channel never increases purity."""
    model = config.model
    _require_nondegenerate(model)
    _require_commuting(model)
    _require_mixed(config.initial_state)
    rng = np.random.default_rng(config.seed)
    n = model.dim
    rho = np.stack([config.initial_state.data] + [random_state(rng, n) for _ in range(n_random)])
    # random piecewise-constant controls, redrawn every unit of time
    n_steps = step_count(config.T, config.dt)
    hold = max(1, int(round(1.0 / config.dt)))
    ops = _Ops(model)
    ctrl = config.build_controller()
    mem = ctrl.init(rho[:1])
    u = np.zeros(len(rho))
    pur = np.einsum("kij,kji->k", rho, rho).real
    p0 = pur.copy()
    worst = -np.inf
    for step in range(n_steps):
        u0, mem = ctrl.step(step * config.dt, rho[:1], mem)
        if step % hold == 0:
            u[1:] = rng.uniform(-3, 3, n_random)
        u[0] = u0[0]
        rho = master_equation_step_batch(ops, rho, u, config.dt)
        new = np.einsum("kij,kji->k", rho, rho).real
        worst = max(worst, float(np.max(new - pur)))
        pur = new
    floor = 1.0 - np.sqrt(p0[0])
    final_d = 1.0 - rho[0, config.target.i, config.target.i].real
    passed = worst <= 1e-8 and final_d >= floor - 1e-9
    return Verdict(
        "T3",
        passed,
        {
            "max_purity_increase_per_step": worst,
            "final_distance": float(final_d),
            "distance_floor": float(floor),
            "runs": int(len(rho)),
        },
    )


def _adversarial_laws(target: TargetState, hbs, gamma: float) -> list[tuple[str, object, np.ndarray]]:
    out = []
    for name, hb in hbs:
        out += [
            (f"switching/{name}", SwitchingLaw(target, hb, gamma), hb),
            (f"local/{name}", LocalLaw(target, hb), hb),
            (f"constant/{name}", ConstantLaw(target, 1.0), hb),
        ]
    out.append(("zero", ZeroLaw(target), hbs[0][1]))
    return out


def _hb_candidates(model: SystemModel):
    n = model.dim
    return [("config", model.Hb.data), ("path", path_hb(n, np.ones(n - 1)).data)]


def verify_t4(config: ExperimentConfig) -> Verdict:
    """Open-loop master equation stays at least ``delta_d`` away from the certified eigenstate."""
    model = config.model
    _require_nondegenerate(model)
    _require_noncommuting(model)
    d, rep = worst_eigenstate(model.L.data, model.H0, model.eta, model.kappa)
    target = TargetState.for_model(model, d)
    bound = rep.delta_d
    results = {}
    for name, law, hb in _adversarial_laws(target, _hb_candidates(model), config.controller.gamma):
        m = SystemModel(model.H0, hb, model.L, model.kappa, model.eta)
        rec = integrate_deterministic(
            master_equation_stepper(m), law, config.initial_state, config.T, config.dt,
            config.sample_every, target,
        )
        results[name] = float(tail_window_max(rec.times, rec.distances, config.T))
    worst = min(results.values())
    return Verdict(
        "T4",
        worst >= bound,
        {"d": d, "delta_d": bound, "min_tail_max": worst, "tail_max_by_controller": results},
        [ADVERSARIAL_NOTE],
    )


def verify_t5(config: ExperimentConfig, min_fraction: float = 0.99, workers: int = 1) -> Verdict:
    """With imperfect detection no feedback law drives the certified eigenstate's tail distance below ``Delta_d``."""
    model = config.model
    _require_nondegenerate(model)
    _require_noncommuting(model)
    if not 0.0 <= model.eta < 1.0:
        raise HypothesisMismatch("eta must lie in [0, 1)")
    d, rep = worst_eigenstate(model.L.data, model.H0, model.eta, model.kappa)
    bound = rep.capital_delta_d
    offdiag_route = (2 * (1 - model.eta) * off_diagonal_weight(model.L.data, d)) ** 2 / (
        2 * (2 * rep.phi1 + model.eta * rep.phi2) ** 2
    )
    target_cfg = config.with_(controller=replace(config.controller, target=d, value=1.0))
    fractions = {}
    for name, hb in _hb_candidates(model):
        m = SystemModel(model.H0, hb, model.L, model.kappa, model.eta)
        cfg = target_cfg.with_(model=m)
        for law in ("switching", "local", "constant", "zero"):
            if law == "zero" and name != "config":
                continue
            ens = run_ensemble(cfg, workers, law=law, keep_states=False)
            ok = ~ens.failed
            fractions[f"{law}/{name}"] = float(np.mean(ens.tail_max[ok] >= bound))
    worst = min(fractions.values())
    return Verdict(
        "T5",
        worst >= min_fraction,
        {
            "d": d,
            "capital_delta_d": bound,
            "capital_delta_d_off_diagonal_route": offdiag_route,
            "eta": model.eta,
            "min_fraction_above_bound": worst,
            "fraction_by_controller": fractions,
        },
        [ADVERSARIAL_NOTE],
    )


def _drift_identity_draws(config: ExperimentConfig, draws: int, rng) -> dict:
    """Analytic generator versus the closed forms on random commuting-diagonal configurations."""
    n = config.model.dim
    worst27 = worst29 = 0.0
    for k in range(draws):
        model = config.model if k % 2 == 0 else random_commuting_model(rng, n)
        d = int(rng.integers(1, n + 1))
        target = TargetState.for_model(model, d)
        rho = random_state(rng, n)
        u = local_control(model.Hb, rho, target)
        lam = target.lambda_d.real
        p = rho[d - 1, d - 1].real
        trl = np.trace(model.L.data @ rho).real
        eq27 = -(u**2)
        eq29 = -2 * u**2 * p - 4 * model.eta * model.kappa * (lam - trl) ** 2 * p**2
        g27 = drift_of_functional(model, rho, u, Functional.DISTANCE, target)
        g29 = drift_of_functional(model, rho, u, Functional.LYAPUNOV, target)
        worst27 = max(worst27, abs(g27 - eq27))
        worst29 = max(worst29, abs(g29 - eq29))
    return {"eq27_max_residual": worst27, "eq29_max_residual": worst29}


def one_step_generator_estimate(model: SystemModel, rho, u: float, f, target, dt: float, samples: int, seed: int, chunk: int = 20000):
    """Monte Carlo ``(E f(rho_dt) - f(rho)) / dt`` with its standard error, using projected EM steps."""
    ops = _Ops(model)
    rng = np.random.default_rng(seed)
    f0 = functional_value(f, rho, target)
    vals = []
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        stack = np.repeat(np.asarray(rho, dtype=complex)[None], m, axis=0)
        dw = rng.normal(0.0, np.sqrt(dt), m)
        new, ok, _ = sme_step_batch(ops, stack, np.full(m, u), dt, dw)
        i = target.i if target is not None else 0
        if f == Functional.DISTANCE:
            v = 1 - new[:, i, i].real
        elif f == Functional.LYAPUNOV:
            v = 1 - new[:, i, i].real ** 2
        else:
            v = np.array([functional_value(f, s, target) for s in new])
        vals.append((v - f0) / dt)
        done += m
    vals = np.concatenate(vals)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals)))


def _finite_difference_draws(config: ExperimentConfig, configurations: int, samples: int, rng, dt: float = 1e-3) -> dict:
    n = config.model.dim
    worst = {Functional.DISTANCE: 0.0, Functional.LYAPUNOV: 0.0}
    rows = []
    for k in range(configurations):
        model = config.model if k == 0 else random_commuting_model(rng, n)
        target = TargetState.for_model(model, int(rng.integers(1, n + 1)))
        rho = random_state(rng, n, floor=0.5)
        u = local_control(model.Hb, rho, target)
        for f in (Functional.DISTANCE, Functional.LYAPUNOV):
            exact = drift_of_functional(model, rho, u, f, target)
            est, se = one_step_generator_estimate(model, rho, u, f, target, dt, samples, int(rng.integers(2**32)))
            z = abs(est - exact) / se if se > 0 else 0.0
            worst[f] = max(worst[f], z)
            rows.append({"functional": f, "exact": exact, "estimate": est, "stderr": se, "z": z})
    return {"max_z_distance": worst[Functional.DISTANCE], "max_z_lyapunov": worst[Functional.LYAPUNOV], "rows": rows}


def verify_generator(config: ExperimentConfig, which: str, draws: int = 1000, configurations: int = 10, samples: int = 100_000) -> Verdict:
    model = config.model
    _require_nondegenerate(model)
    _require_hermitian_diagonal_l(model)
    _require_commuting(model)
    rng = np.random.default_rng(config.seed)
    ident = _drift_identity_draws(config, draws, rng)
    fd = _finite_difference_draws(config, configurations, samples, rng)
    if which == "Eq27":
        passed = ident["eq27_max_residual"] <= 1e-10 and fd["max_z_distance"] <= 4.0
    else:
        passed = ident["eq29_max_residual"] <= 1e-10 and fd["max_z_lyapunov"] <= 4.0
    return Verdict(which, passed, {**ident, "max_z_distance": fd["max_z_distance"], "max_z_lyapunov": fd["max_z_lyapunov"]})


def verify_mean(config: ExperimentConfig, workers: int = 1, n_se: float = 3.0) -> Verdict:
    """Open-loop SME ensemble mean against the deterministic master equation."""
    if config.controller.law not in ("constant", "zero"):
        raise HypothesisMismatch("mean-consistency needs an open-loop controller (constant or zero)")
    ens = run_ensemble(config, workers, keep_states=False)
    ctrl = config.build_controller()
    ref = integrate_deterministic(
        master_equation_stepper(config.model), ctrl, config.initial_state, config.T, config.dt,
        config.sample_every, config.target,
    )
    dev_re = np.abs(ens.mean_state.real - ref.states.real)
    dev_im = np.abs(ens.mean_state.imag - ref.states.imag)
    tol_re = n_se * ens.sem_state.real + 1e-12
    tol_im = n_se * ens.sem_state.imag + 1e-12
    ratio = max(float(np.max(dev_re / tol_re)), float(np.max(dev_im / tol_im)))
    return Verdict(
        "mean",
        ratio <= 1.0,
        {"max_deviation_over_tolerance": ratio, "trajectories": ens.n_valid, "standard_errors": n_se},
    )


def verify_theorem(config: ExperimentConfig, which: str, workers: int = 1) -> Verdict:
    if which == "T2":
        return verify_t2(config)
    if which == "T3":
        return verify_t3(config)
    if which == "T4":
        return verify_t4(config)
    if which == "T5":
        return verify_t5(config, workers=workers)
    if which in ("Eq27", "Eq29"):
        return verify_generator(config, which)
    if which == "mean":
        return verify_mean(config, workers)
    raise ValueError(f"unknown check {which!r}; expected one of {', '.join(THEOREMS)}")


__all__ = [
    "THEOREMS",
    "HypothesisMismatch",
    "Verdict",
    "verify_theorem",
    "verify_t2",
    "verify_t3",
    "verify_t4",
    "verify_t5",
    "verify_generator",
    "verify_mean",
    "one_step_generator_estimate",
]
