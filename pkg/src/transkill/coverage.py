"""Wiping analysis: run-log files, covered area and contact-force statistics.

The surface is split into square cells; a cell counts as wiped when the
tool centre passed within the footprint radius of its centre while
pressing with more than ``CONTACT_THRESHOLD`` newtons along the surface
normal. Everything is computed in the surface frame (origin at a corner,
x along the width, y along the height, z into the material).
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose, quat_to_matrix
from .runtime import RunLog

CELL_SIZE = 0.005
CONTACT_THRESHOLD = 1.0
TRANSIENT = 2.0
PLOT_STRIDE = 10


@dataclass
class SurfaceInfo:
    """What the analysis needs to know about the wiped surface (pose in the robot base frame)."""

    surface: str
    pose: list
    width: float
    height: float
    radius: float
    force: float


@dataclass
class LogData:
    columns: list
    data: np.ndarray  # numeric columns
    skill: list

    def col(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def block(self, names) -> np.ndarray:
        return np.stack([self.col(n) for n in names], axis=1)


@dataclass
class CoverageReport:
    surface: str
    coverage: float
    cells: int
    covered_cells: int
    samples_in_contact: int
    force_setpoint: float
    force_mean: float
    force_min: float
    force_max: float
    force_std: float
    contact_time: float

    @property
    def force_error(self) -> float:
        """Relative deviation of the mean force from the setpoint."""
        return abs(self.force_mean - self.force_setpoint) / self.force_setpoint

    def to_dict(self) -> dict:
        d = asdict(self)
        d["force_error"] = self.force_error
        return d

    def summary(self) -> str:
        return (f"{self.surface}: coverage {100 * self.coverage:.1f}% "
                f"({self.covered_cells}/{self.cells} cells), normal force {self.force_mean:.2f} N "
                f"(setpoint {self.force_setpoint:.1f} N, min {self.force_min:.2f}, max {self.force_max:.2f}), "
                f"{self.contact_time:.1f} s in contact")


# ------------------------------------------------------------------ files
def write_log(log: RunLog, path, surface: SurfaceInfo | None = None) -> Path:
    """CSV with one row per control step, plus a ``.meta.json`` sidecar describing the surface."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(log.columns())
        for k in range(len(log)):
            w.writerow([repr(float(log.t[k])), *map(repr, log.reference[k]), *map(repr, log.actual[k]),
                        *map(repr, log.wrench[k]), *map(repr, log.q[k]), log.skill[k]])
    if surface is not None:
        meta_path(path).write_text(json.dumps(asdict(surface), indent=2) + "\n", encoding="utf-8")
    return path


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def read_log(path) -> LogData:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty log")
    header, body = rows[0], rows[1:]
    if not header or header[0] != "t" or header[-1] != "skill":
        raise ValueError(f"{path}: not a run log")
    try:
        data = np.array([[float(x) for x in r[:-1]] for r in body], dtype=float).reshape(len(body), len(header) - 1)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    return LogData(header[:-1], data, [r[-1] for r in body])


def read_meta(path) -> SurfaceInfo:
    return SurfaceInfo(**json.loads(meta_path(path).read_text(encoding="utf-8")))


def log_data(log: RunLog) -> LogData:
    """In-memory equivalent of writing and reading back a log."""
    cols = log.columns()
    data = np.array([[t, *r, *a, *w, *q] for t, r, a, w, q in
                     zip(log.t, log.reference, log.actual, log.wrench, log.q)], dtype=float)
    return LogData(cols[:-1], data.reshape(len(log), len(cols) - 1), list(log.skill))


# ------------------------------------------------------------------ geometry
def to_surface(data: LogData, surface: SurfaceInfo):
    """TCP positions (surface frame) and normal contact forces (N, positive when pressing)."""
    S = Pose.from_values(surface.pose)
    Rs = S.rotation
    pos = data.block(["act_x", "act_y", "act_z"])
    local = (pos - S.position) @ Rs
    quats = data.block(["act_qx", "act_qy", "act_qz", "act_qw"])
    force_tcp = data.block(["fx", "fy", "fz"])
    normal = np.empty(len(pos))
    for k in range(len(pos)):
        # the log holds the wrench on the robot in the TCP frame; the surface pushes back along -z_s
        f_base = quat_to_matrix(quats[k]) @ force_tcp[k]
        normal[k] = -(Rs[:, 2] @ f_base)
    return local, normal


def grid_centres(width: float, height: float, cell: float = CELL_SIZE) -> np.ndarray:
    nx = max(1, int(round(width / cell)))
    ny = max(1, int(round(height / cell)))
    xs = (np.arange(nx) + 0.5) * width / nx
    ys = (np.arange(ny) + 0.5) * height / ny
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def covered_mask(points_xy: np.ndarray, centres: np.ndarray, radius: float) -> np.ndarray:
    if len(points_xy) == 0:
        return np.zeros(len(centres), dtype=bool)
    d, _ = cKDTree(points_xy).query(centres, k=1)
    return d <= radius


def path_coverage(waypoints, width: float, height: float, radius: float, step: float = 0.001) -> float:
    """Covered fraction for a polyline traced with the footprint centre (no overlay)."""
    pts = [np.asarray(waypoints[0], dtype=float)]
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        a, b = np.asarray(a, float), np.asarray(b, float)
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / step)))
        pts.extend(a + (b - a) * s for s in np.linspace(0, 1, n + 1)[1:])
    centres = grid_centres(width, height)
    return float(covered_mask(np.array(pts), centres, radius).mean())


# ------------------------------------------------------------------ report
def analyze(data: LogData, surface: SurfaceInfo, transient: float = TRANSIENT,
            threshold: float = CONTACT_THRESHOLD, cell: float = CELL_SIZE):
    """Coverage report plus the per-cell coverage mask."""
    centres = grid_centres(surface.width, surface.height, cell)
    if len(data.data) == 0:
        mask = np.zeros(len(centres), dtype=bool)
        return CoverageReport(surface.surface, 0.0, len(centres), 0, 0, surface.force,
                              float("nan"), float("nan"), float("nan"), float("nan"), 0.0), centres, mask
    local, normal = to_surface(data, surface)
    t = data.col("t")
    contact = normal > threshold
    mask = covered_mask(local[contact, :2], centres, surface.radius)
    # steady state: contact samples at least `transient` seconds away from both
    # the first and the last contact (pressing onset and release)
    if contact.any():
        first, last = t[contact][0], t[contact][-1]
        steady = contact & (t >= first + transient) & (t <= last - transient)
    else:
        steady = contact
    f = normal[steady]
    dt = float(np.median(np.diff(t))) if len(t) > 1 else 0.0
    stats = (float(f.mean()), float(f.min()), float(f.max()), float(f.std())) if f.size else (float("nan"),) * 4
    report = CoverageReport(surface.surface, float(mask.mean()), len(centres), int(mask.sum()),
                            int(contact.sum()), surface.force, *stats, contact_time=float(contact.sum() * dt))
    return report, centres, mask


def surface_info(scene, surface_id: str, base: Pose) -> SurfaceInfo:
    """Surface description with the pose expressed in the robot base frame."""
    from .runtime import FOOTPRINT_RADIUS, HEIGHT, WIDTH, WIPE_FORCE

    e = scene.element(surface_id)
    pose = base.inverse() * scene.resolve_world_pose(surface_id)
    return SurfaceInfo(surface_id, pose.to_values(), float(e.get(WIDTH)), float(e.get(HEIGHT)),
                       float(e.get(FOOTPRINT_RADIUS, 0.025)), float(e.get(WIPE_FORCE, 0.0)))


def write_plot_data(data: LogData, surface: SurfaceInfo, centres, mask, out_dir, stride: int = PLOT_STRIDE):
    """Plot-ready CSVs: the reference and actual tool path in surface coordinates
    (every ``stride``-th control step) and the covered cells."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    local, normal = to_surface(data, surface)
    S = Pose.from_values(surface.pose)
    ref = (data.block(["ref_x", "ref_y", "ref_z"]) - S.position) @ S.rotation
    t = data.col("t")
    with open(out_dir / "path.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "ref_x", "ref_y", "act_x", "act_y", "act_z", "normal_force"])
        for k in range(0, len(t), stride):
            w.writerow([f"{t[k]:.4f}", f"{ref[k, 0]:.6f}", f"{ref[k, 1]:.6f}", f"{local[k, 0]:.6f}",
                        f"{local[k, 1]:.6f}", f"{local[k, 2]:.6f}", f"{normal[k]:.4f}"])
    with open(out_dir / "cells.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "covered"])
        for (x, y), c in zip(centres, mask):
            w.writerow([f"{x:.4f}", f"{y:.4f}", int(c)])
    return out_dir / "path.csv", out_dir / "cells.csv"


def report_file(path, out_dir=None) -> CoverageReport:
    """Analyze a log written by :func:`write_log`; optionally write plot CSVs and a JSON report."""
    data = read_log(path)
    surface = read_meta(path)
    report, centres, mask = analyze(data, surface)
    if out_dir is not None:
        write_plot_data(data, surface, centres, mask, out_dir)
        (Path(out_dir) / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                                                   encoding="utf-8")
    return report
