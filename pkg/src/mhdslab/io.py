"""Snapshots (exact round trip), time-series CSV and the JSON run summary."""
from __future__ import annotations

import csv
import io
import json
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import EnergyReport, G2NAccumulator
from .discretization import SpectralPlan
from .errors import GridMismatchError, SnapshotError
from .state import Params, SimState

__all__ = [
    "SNAPSHOT_VERSION",
    "Snapshot",
    "snapshot_write",
    "snapshot_read",
    "read_snapshot_bundle",
    "csv_columns",
    "write_series_csv",
    "format_float",
    "write_summary",
]

SNAPSHOT_VERSION = 1
_F8 = np.dtype("<f8")


@dataclass
class Snapshot:
    """Everything needed to resume a run bit-identically."""

    grid: tuple                        # (N1, N2, N3, L1, L2)
    history: list                      # SimStates, oldest first; last is the current state
    accumulator: G2NAccumulator = field(default_factory=G2NAccumulator)
    extra: dict = field(default_factory=dict)

    @property
    def state(self):
        return self.history[-1]


def snapshot_write(state, path, plan: SpectralPlan, history=None, accumulator=None, extra=None):
    """Write ``state`` (and optionally the integrator history window) to ``path``.

    Arrays are stored little-endian float64 in an ``npz`` container together
    with a format version and the grid metadata.
    """
    hist = list(history) if history else [state]
    if hist[-1] is not state:
        hist.append(state)
    state.validate(plan)
    grid = (plan.N1, plan.N2, plan.N3, plan.L1, plan.L2)
    acc = accumulator or G2NAccumulator()
    acc_vals = [np.nan if v is None else v for v in
                (acc.sup_E2N, acc.int_D2N, acc.sup_weighted_EN2, acc.sup_weighted_F2N,
                 acc.last_t, acc.last_D2N)]
    arrays = {
        "version": np.array([SNAPSHOT_VERSION], dtype="<i8"),
        "grid_n": np.array(grid[:3], dtype="<i8"),
        "grid_l": np.array(grid[3:], dtype=_F8),
        "u": np.stack([h.u for h in hist]).astype(_F8),
        "p": np.stack([h.p for h in hist]).astype(_F8),
        "b": np.stack([h.b for h in hist]).astype(_F8),
        "eta": np.stack([h.eta for h in hist]).astype(_F8),
        "t": np.array([h.t for h in hist], dtype=_F8),
        "step": np.array([h.step for h in hist], dtype="<i8"),
        "sigma": np.array([state.params.sigma], dtype=_F8),
        "Bbar": np.array(state.params.Bbar, dtype=_F8),
        "accumulator": np.array(acc_vals, dtype=_F8),
        "extra": np.frombuffer(json.dumps(extra or {}, sort_keys=True).encode(), dtype=np.uint8),
    }
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def read_snapshot_bundle(path, plan=None):
    """Read a snapshot written by :func:`snapshot_write`; returns a :class:`Snapshot`."""
    try:
        with np.load(path, allow_pickle=False) as z:
            data = {k: z[k] for k in z.files}
    except (OSError, ValueError, zipfile.BadZipFile, EOFError) as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from None
    required = {"version", "grid_n", "grid_l", "u", "p", "b", "eta", "t", "step",
                "sigma", "Bbar", "accumulator", "extra"}
    missing = required - set(data)
    if missing:
        raise SnapshotError(f"snapshot {path} is missing {sorted(missing)}")
    version = int(data["version"][0])
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"snapshot format version {version}, expected {SNAPSHOT_VERSION}")
    N1, N2, N3 = (int(x) for x in data["grid_n"])
    L1, L2 = (float(x) for x in data["grid_l"])
    nh = len(data["t"])
    shapes = {"u": (nh, 3, N1, N2, N3 + 1), "p": (nh, N1, N2, N3 + 1),
              "b": (nh, 3, N1, N2, N3 + 1), "eta": (nh, N1, N2)}
    for key, shape in shapes.items():
        if data[key].shape != shape:
            raise SnapshotError(f"snapshot field {key} has shape {data[key].shape}, "
                                f"metadata implies {shape}")
    if plan is not None and (plan.N1, plan.N2, plan.N3, plan.L1, plan.L2) != (N1, N2, N3, L1, L2):
        raise GridMismatchError(
            f"snapshot grid {(N1, N2, N3, L1, L2)} does not match plan "
            f"{(plan.N1, plan.N2, plan.N3, plan.L1, plan.L2)}")
    params = Params(sigma=float(data["sigma"][0]), Bbar=tuple(float(x) for x in data["Bbar"]))
    history = [
        SimState(u=data["u"][i].astype(float), p=data["p"][i].astype(float),
                 b=data["b"][i].astype(float), eta=data["eta"][i].astype(float),
                 t=float(data["t"][i]), params=params, step=int(data["step"][i]))
        for i in range(nh)
    ]
    a = [None if np.isnan(v) else float(v) for v in data["accumulator"]]
    acc = G2NAccumulator(*(0.0 if v is None else v for v in a[:4]), last_t=a[4], last_D2N=a[5])
    try:
        extra = json.loads(bytes(data["extra"]).decode() or "{}")
    except ValueError as exc:
        raise SnapshotError(f"corrupt snapshot metadata: {exc}") from None
    return Snapshot(grid=(N1, N2, N3, L1, L2), history=history, accumulator=acc, extra=extra)


def snapshot_read(path, plan=None):
    """The current state stored in a snapshot."""
    return read_snapshot_bundle(path, plan).state


# -- series and summary ---------------------------------------------------------------

def format_float(x):
    """Shortest round-trip representation (locale independent)."""
    return repr(float(x))


def csv_columns(N):
    ns = sorted({N + 2, 2 * N})
    cols = ["step", "t", "E_sigma", "D_sigma"]
    for n in ns:
        cols += [f"E_{n}", f"D_{n}"]
    cols += ["F2N", "G2N", "balance_flat", "balance_geometric", "mean_eta",
             "mean_correction", "div_A_u"]
    return cols


def _row(report: EnergyReport, N):
    row = [str(report.step), format_float(report.t), format_float(report.E_sigma),
           format_float(report.D_sigma)]
    for n in sorted({N + 2, 2 * N}):
        row += [format_float(report.E_n.get(n, np.nan)), format_float(report.D_n.get(n, np.nan))]
    row += [format_float(x) for x in (report.F2N, report.G2N, report.balance_flat,
                                      report.balance_geometric, report.zero_mean_drift,
                                      report.mean_correction, report.div_A_u)]
    return row


def series_text(reports, N):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_columns(N))
    for r in reports:
        w.writerow(_row(r, N))
    return buf.getvalue()


def write_series_csv(reports, path, N):
    path = Path(path)
    path.write_text(series_text(reports, N), encoding="utf-8")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_summary(summary: dict, path):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path
