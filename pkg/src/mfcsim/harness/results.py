"""Writing and reading ensemble results.

JSON carries the ensemble-level summary and curves; CSV carries every
sampled trajectory in long form with a leading ``trajectory`` column.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..dynamics import TrajectoryRecord
from .ensemble import EnsembleResult

FORMATS = ("json", "csv")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def export_results(result: EnsembleResult, path, fmt: str = "json") -> Path:
    path = Path(path)
    if fmt == "json":
        path.write_text(_dumps(result.to_dict()))
    elif fmt == "csv":
        if not result.trajectories:
            raise ValueError("result holds no trajectories; rerun with keep_states=True")
        with open(path, "w", newline="") as fh:
            first = True
            for tr in result.trajectories:
                text = tr.to_csv()
                header, _, body = text.partition("\n")
                if first:
                    fh.write("trajectory," + header + "\n")
                    first = False
                for line in body.splitlines():
                    fh.write(f"{tr.trajectory_index},{line}\n")
    else:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    return path


def load_results(path) -> EnsembleResult:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return EnsembleResult.from_dict(d)


def load_trajectories(path) -> list[TrajectoryRecord]:
    """Read the long-form CSV written by :func:`export_results`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    n = int(round(np.sqrt((len(header) - 5) / 2)))
    groups: dict[int, list] = {}
    for r in rows[1:]:
        groups.setdefault(int(r[0]), []).append([float(x) for x in r[1:]])
    out = []
    for idx, data in groups.items():
        a = np.array(data)
        z = a[:, 4::2] + 1j * a[:, 5::2]
        out.append(
            TrajectoryRecord(
                times=a[:, 0],
                controls=a[:, 1],
                distances=a[:, 2],
                record=a[:, 3],
                states=z.reshape(-1, n, n),
                final_distance=float(a[-1, 2]),
                trajectory_index=idx,
            )
        )
    return out


def write_curves(directory, curves: dict[str, tuple[np.ndarray, dict[str, np.ndarray]]]) -> list[Path]:
    """Per-curve CSV files for external plotting: ``{name: (x, {column: y})}``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, (x, cols) in curves.items():
        p = directory / f"{name}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", *cols])
            for k in range(len(x)):
                w.writerow([repr(float(x[k]))] + [repr(float(v[k])) for v in cols.values()])
        paths.append(p)
    return paths
