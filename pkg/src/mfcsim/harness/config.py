"""Experiment configuration files (YAML or JSON).

Operators may be given as ``{diag: [...]}``, ``{path: [...]}`` (nearest
neighbour coupling), ``{matrix: [[...]]}`` with numeric or ``"a+bj"`` entries,
or ``{file: name.txt}`` pointing at the plain-text matrix format. Saved
configs always use the ``matrix`` form so that they load back identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..design import path_hb
from ..dynamics import OpenLoopModel
from ..feedback import LAWS, ConstantLaw, make_law
from ..states import (
    DensityMatrix,
    InvalidState,
    SystemModel,
    TargetState,
    as_matrix,
    basis_vector,
    complex_literal,
    read_matrix,
)


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field."""


@dataclass(frozen=True)
class ControllerSpec:
    law: str = "switching"
    target: int = 1
    gamma: float = 0.5
    value: float = 1.0

    def __post_init__(self):
        if self.law not in LAWS:
            raise ConfigError(f"controller.law: unknown controller tag {self.law!r} (expected {', '.join(LAWS)})")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"controller.gamma: must lie in (0, 1), got {self.gamma}")

    def build(self, model: SystemModel, target: int | None = None, law: str | None = None):
        t = TargetState.for_model(model, target or self.target)
        return make_law(law or self.law, t, model.Hb.data, self.gamma, self.value)

    def to_dict(self) -> dict:
        return {"law": self.law, "target": self.target, "gamma": self.gamma, "value": self.value}


@dataclass(frozen=True, eq=False)
class OLCVariant:
    """Open-loop comparison model: ``unitary`` (with ``H0_prime``) or ``master_eq`` (fixed ``u``)."""

    kind: str
    H0_prime: np.ndarray | None = None
    u: float = 0.0

    def __post_init__(self):
        if self.kind not in ("unitary", "master_eq"):
            raise ConfigError(f"olc_variant: unknown kind {self.kind!r}")

    def unitary_model(self, model: SystemModel) -> OpenLoopModel:
        h = self.H0_prime if self.H0_prime is not None else model.H0.data
        return OpenLoopModel(h, model.Hb)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "u": self.u}
        if self.H0_prime is not None:
            out["H0_prime"] = {"matrix": _matrix_to_list(self.H0_prime)}
        return out


@dataclass(eq=False)
class ExperimentConfig:
    model: SystemModel
    initial_state: DensityMatrix
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    olc_variant: OLCVariant | None = None
    T: float = 50.0
    dt: float = 1e-3
    trajectories: int = 200
    seed: int = 0
    sample_every: int = 100
    convergence_epsilon: float = 0.01
    batch_size: int = 50

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError(f"T: must be positive, got {self.T}")
        if not self.dt > 0:
            raise ConfigError(f"dt: must be positive, got {self.dt}")
        if self.trajectories < 1:
            raise ConfigError(f"trajectories: must be at least 1, got {self.trajectories}")
        if not 0 < self.convergence_epsilon < 1:
            raise ConfigError(f"convergence_epsilon: must lie in (0, 1), got {self.convergence_epsilon}")
        if self.sample_every < 1:
            raise ConfigError(f"sample_every: must be at least 1, got {self.sample_every}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size: must be at least 1, got {self.batch_size}")
        if self.initial_state.dim != self.model.dim:
            raise ConfigError("initial_state: dimension does not match model")
        if not 1 <= self.controller.target <= self.model.dim:
            raise ConfigError(f"controller.target: {self.controller.target} outside 1..{self.model.dim}")

    @property
    def target(self) -> TargetState:
        return TargetState.for_model(self.model, self.controller.target)

    def build_controller(self, law: str | None = None):
        return self.controller.build(self.model, law=law)

    def olc_control(self):
        """Fixed control used by the master-equation comparison run."""
        u = self.olc_variant.u if self.olc_variant is not None else 0.0
        return ConstantLaw(self.target, u)

    def with_(self, **changes) -> "ExperimentConfig":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return ExperimentConfig(**kw)

    def to_dict(self) -> dict:
        m = self.model
        return {
            "model": {
                "H0": {"matrix": _matrix_to_list(m.H0.data)},
                "Hb": {"matrix": _matrix_to_list(m.Hb.data)},
                "L": {"matrix": _matrix_to_list(m.L.data)},
                "kappa": m.kappa,
                "eta": m.eta,
            },
            "initial_state": {"matrix": _matrix_to_list(self.initial_state.data)},
            "controller": self.controller.to_dict(),
            "olc_variant": self.olc_variant.to_dict() if self.olc_variant else None,
            "T": self.T,
            "dt": self.dt,
            "trajectories": self.trajectories,
            "seed": self.seed,
            "sample_every": self.sample_every,
            "convergence_epsilon": self.convergence_epsilon,
            "batch_size": self.batch_size,
        }

    def __eq__(self, other):
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _complex_entry(z: complex):
    z = complex(z)
    return float(z.real) if z.imag == 0 else complex_literal(z)


def _matrix_to_list(m) -> list:
    return [[_complex_entry(z) for z in row] for row in as_matrix(m)]


def _parse_entry(x, where: str) -> complex:
    if isinstance(x, bool):
        raise ConfigError(f"{where}: boolean is not a number")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, str):
        try:
            return complex(x.replace(" ", ""))
        except ValueError:
            pass
    raise ConfigError(f"{where}: cannot parse {x!r} as a complex number")


def parse_operator(spec, where: str, base: Path | None = None, dim: int | None = None) -> np.ndarray:
    if isinstance(spec, list):
        spec = {"matrix": spec}
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError(f"{where}: expected one of diag/path/matrix/file, got {spec!r}")
    (kind, val), = spec.items()
    if kind == "diag":
        if not isinstance(val, list):
            raise ConfigError(f"{where}.diag: expected a list")
        return np.diag([_parse_entry(x, f"{where}.diag[{i}]") for i, x in enumerate(val)])
    if kind == "path":
        if not isinstance(val, list):
            raise ConfigError(f"{where}.path: expected a list of weights")
        w = [_parse_entry(x, f"{where}.path[{i}]") for i, x in enumerate(val)]
        try:
            return path_hb(len(w) + 1, w).data
        except ValueError as exc:
            raise ConfigError(f"{where}.path: {exc}") from None
    if kind == "matrix":
        if not isinstance(val, list) or not all(isinstance(r, list) for r in val):
            raise ConfigError(f"{where}.matrix: expected a list of rows")
        rows = [[_parse_entry(x, f"{where}.matrix[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(val)]
        if any(len(r) != len(rows) for r in rows):
            raise ConfigError(f"{where}.matrix: matrix is not square")
        return np.array(rows, dtype=complex)
    if kind == "file":
        p = Path(val)
        if base is not None and not p.is_absolute():
            p = base / p
        try:
            return read_matrix(p)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{where}.file: {exc}") from None
    raise ConfigError(f"{where}: unknown operator form {kind!r}")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing required field '{where}{key}'")
    return d[key]


def _number(d: dict, key: str, where: str, default=None, kind=float):
    if key not in d:
        if default is None:
            raise ConfigError(f"missing required field '{where}{key}'")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}{key}: expected a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ConfigError(f"{where}{key}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def parse_model(d: dict, base: Path | None = None, where: str = "model.") -> SystemModel:
    if not isinstance(d, dict):
        raise ConfigError(f"{where.rstrip('.')}: expected a mapping")
    ops = {k: parse_operator(_require(d, k, where), where + k, base) for k in ("H0", "Hb", "L")}
    try:
        return SystemModel(
            ops["H0"], ops["Hb"], ops["L"], _number(d, "kappa", where, 1.0), _number(d, "eta", where, 1.0)
        )
    except ValueError as exc:
        raise ConfigError(f"{where.rstrip('.')}: {exc}") from None


def parse_initial_state(spec, dim: int, base: Path | None = None) -> DensityMatrix:
    where = "initial_state"
    try:
        if spec in ("maximally_mixed", "mixed"):
            return DensityMatrix.maximally_mixed(dim)
        if isinstance(spec, dict) and len(spec) == 1:
            (kind, val), = spec.items()
            if kind == "eigenstate":
                return DensityMatrix.from_vector(basis_vector(int(val), dim))
            if kind == "pure":
                return DensityMatrix.from_vector([_parse_entry(x, f"{where}.pure") for x in val])
            return DensityMatrix(parse_operator(spec, where, base))
        if isinstance(spec, list):
            return DensityMatrix(parse_operator(spec, where, base))
    except (InvalidState, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unrecognised initial state {spec!r}")


def config_from_dict(d: dict, base: Path | None = None) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config: top level must be a mapping")
    model = parse_model(_require(d, "model", ""), base)
    init = parse_initial_state(d.get("initial_state", "maximally_mixed"), model.dim, base)
    c = d.get("controller") or {}
    if not isinstance(c, dict):
        raise ConfigError("controller: expected a mapping")
    law = c.get("law", "switching")
    if law not in LAWS:
        raise ConfigError(f"controller.law: unknown controller tag {law!r} (expected {', '.join(LAWS)})")
    ctrl = ControllerSpec(
        law=law,
        target=_number(c, "target", "controller.", 1, int),
        gamma=_number(c, "gamma", "controller.", 0.5),
        value=_number(c, "value", "controller.", 1.0),
    )
    olc = None
    o = d.get("olc_variant")
    if o is not None:
        if not isinstance(o, dict):
            raise ConfigError("olc_variant: expected a mapping")
        kind = _require(o, "kind", "olc_variant.")
        h = o.get("H0_prime")
        olc = OLCVariant(
            kind=kind,
            H0_prime=parse_operator(h, "olc_variant.H0_prime", base) if h is not None else None,
            u=_number(o, "u", "olc_variant.", 0.0),
        )
    return ExperimentConfig(
        model=model,
        initial_state=init,
        controller=ctrl,
        olc_variant=olc,
        T=_number(d, "T", ""),
        dt=_number(d, "dt", "", 1e-3),
        trajectories=_number(d, "trajectories", "", 200, int),
        seed=_number(d, "seed", "", 0, int),
        sample_every=_number(d, "sample_every", "", 100, int),
        convergence_epsilon=_number(d, "convergence_epsilon", "", 0.01),
        batch_size=_number(d, "batch_size", "", 50, int),
    )


def _read_yaml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"{path}: parse error{loc}: {getattr(exc, 'problem', exc)}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return config_from_dict(_read_yaml(path), path.parent)


def load_model(path) -> SystemModel:
    """Read a model from a bare model file or from the ``model`` section of a config."""
    path = Path(path)
    d = _read_yaml(path)
    if isinstance(d, dict) and "model" in d:
        return parse_model(d["model"], path.parent)
    return parse_model(d, path.parent, where="")


def save_config(config: ExperimentConfig, path) -> None:
    path = Path(path)
    d = config.to_dict()
    if d["olc_variant"] is None:
        del d["olc_variant"]
    with open(path, "w") as fh:
        if path.suffix == ".json":
            json.dump(d, fh, indent=2)
        else:
            yaml.safe_dump(d, fh, sort_keys=False)
