"""Surface datasets: simulation, ZIPcode digits, surface CSV, design assembly."""

from __future__ import annotations

import csv
import os
import tempfile
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataFormatError
from .nbf import NodeGrid, design_matrix, node_grid
from .randdist import RngStream

ZIP_PIXELS = 256
ZIP_SIDE = 16
UNIT_SQUARE = (0.0, 1.0, 0.0, 1.0)


class PixelRangeWarning(UserWarning):
    """A ZIPcode pixel value lies outside [-1.5, 1.5]."""


class SuffStats:
    """Per-surface quantities reused by every Gibbs sweep.

    With a shared design, ``StS`` is one ``(d, d)`` matrix and ``Y`` stacks
    the responses into ``(n, m)``; otherwise ``StS`` is ``(n, d, d)``.
    """

    def __init__(self, values: list[np.ndarray], designs):
        self.n = len(values)
        self.shared = isinstance(designs, np.ndarray)
        if self.shared:
            S = designs
            self.S = S
            self.d = S.shape[1]
            self.Y = np.vstack(values)
            self.StS = S.T @ S
            self.Sty = self.Y @ S
            self.m = np.full(self.n, S.shape[0])
        else:
            self.S = list(designs)
            self.d = self.S[0].shape[1]
            self.Y = None
            self.StS = np.stack([S.T @ S for S in self.S])
            self.Sty = np.stack([S.T @ y for S, y in zip(self.S, values)])
            self.m = np.array([S.shape[0] for S in self.S])
        self.values = values
        self.total_m = int(self.m.sum())

    def residual_sq(self, theta: np.ndarray, index=None) -> np.ndarray:
        """``||y_i - S_i theta_i||^2`` for each row of ``theta``.

        ``theta`` is ``(n, d)``, or aligned with ``index`` when a subset of
        surfaces is given.
        """
        idx = np.arange(self.n) if index is None else np.asarray(index)
        if self.shared:
            r = self.Y[idx] - theta @ self.S.T
            return np.einsum("ij,ij->i", r, r)
        out = np.empty(len(idx))
        for j, i in enumerate(idx):
            r = self.values[i] - self.S[i] @ theta[j]
            out[j] = r @ r
        return out

    def pooled_StS(self, weights: Optional[np.ndarray] = None) -> np.ndarray:
        w = np.ones(self.n) if weights is None else weights
        if self.shared:
            return float(np.sum(w)) * self.StS
        return np.einsum("i,ijk->jk", w, self.StS)

    def StS_times(self, theta: np.ndarray) -> np.ndarray:
        """Rows ``S_i^T S_i theta_i``."""
        if self.shared:
            return theta @ self.StS
        return np.einsum("ijk,ik->ij", self.StS, theta)


@dataclass
class SurfaceDataset:
    """``n`` surfaces, each a set of points with observed values.

    ``designs`` is either one shared ``(m, d)`` array (all surfaces observed
    on the same points) or a list of per-surface arrays.
    """

    values: list
    points: Optional[list] = None
    ids: Optional[list] = None
    labels: Optional[np.ndarray] = None
    grid: Optional[NodeGrid] = None
    designs: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = [np.asarray(v, dtype=float) for v in self.values]
        if not self.values:
            raise ValueError("dataset has no surfaces")
        for i, v in enumerate(self.values):
            if v.ndim != 1 or not np.all(np.isfinite(v)):
                raise DataFormatError(f"surface {i}: values must be a finite vector")
        if self.ids is None:
            self.ids = [str(i + 1) for i in range(len(self.values))]
        self.ids = [str(s) for s in self.ids]
        if len(set(self.ids)) != len(self.ids):
            raise DataFormatError("surface ids must be unique")
        if self.points is not None:
            if isinstance(self.points, np.ndarray) and self.points.ndim == 2:
                self.points = [self.points] * len(self.values)
            self.points = [np.asarray(p, dtype=float) for p in self.points]
            for i, (p, v) in enumerate(zip(self.points, self.values)):
                if p.shape != (len(v), 2):
                    raise DataFormatError(f"surface {self.ids[i]}: {len(p)} points for {len(v)} values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
        if self.designs is not None:
            self._check_designs()

    def _check_designs(self):
        if isinstance(self.designs, np.ndarray):
            for i, v in enumerate(self.values):
                if len(v) != self.designs.shape[0]:
                    raise ValueError(f"surface {self.ids[i]}: shared design has {self.designs.shape[0]} rows")
        else:
            self.designs = [np.asarray(S, dtype=float) for S in self.designs]
            if len(self.designs) != len(self.values):
                raise ValueError("one design matrix per surface is required")
            for i, (S, v) in enumerate(zip(self.designs, self.values)):
                if S.shape[0] != len(v):
                    raise ValueError(f"surface {self.ids[i]}: design has {S.shape[0]} rows for {len(v)} values")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def d(self) -> int:
        return self.design(0).shape[1]

    @property
    def shared_points(self) -> bool:
        if self.points is None:
            return False
        p0 = self.points[0]
        return all(p is p0 or (p.shape == p0.shape and np.array_equal(p, p0)) for p in self.points)

    def design(self, i: int) -> np.ndarray:
        if self.designs is None:
            raise ValueError("dataset has no design matrices; call with_grid first")
        if isinstance(self.designs, np.ndarray):
            return self.designs
        return self.designs[i]

    def with_grid(self, grid: NodeGrid) -> "SurfaceDataset":
        """Copy of the dataset with NBF design matrices for ``grid``."""
        if self.points is None:
            raise ValueError("dataset has no points")
        if self.shared_points:
            designs = design_matrix(self.points[0], grid)
        else:
            designs = [design_matrix(p, grid) for p in self.points]
        return replace(self, grid=grid, designs=designs)

    def subset(self, index: Sequence[int]) -> "SurfaceDataset":
        idx = list(index)
        designs = self.designs
        if designs is not None and not isinstance(designs, np.ndarray):
            designs = [designs[i] for i in idx]
        return replace(
            self,
            values=[self.values[i] for i in idx],
            points=None if self.points is None else [self.points[i] for i in idx],
            ids=[self.ids[i] for i in idx],
            labels=None if self.labels is None else self.labels[idx],
            designs=designs,
        )

    def bounding_box(self) -> tuple[float, float, float, float]:
        allp = np.vstack(self.points)
        return (float(allp[:, 0].min()), float(allp[:, 0].max()),
                float(allp[:, 1].min()), float(allp[:, 1].max()))

    @cached_property
    def stats(self) -> SuffStats:
        if self.designs is None:
            raise ValueError("dataset has no design matrices; call with_grid first")
        return SuffStats(self.values, self.designs)


def true_mean(points) -> np.ndarray:
    """The radial test surface ``sin(r) / r`` with ``r = sqrt(1 + x1^2 + x2^2)``."""
    p = np.asarray(points, dtype=float)
    r = np.sqrt(1.0 + p[..., 0] ** 2 + p[..., 1] ** 2)
    return np.sin(r) / r


def lattice_points(side: int, domain) -> np.ndarray:
    """``side x side`` regular lattice over ``domain``, x1 varying fastest."""
    lo1, hi1, lo2, hi2 = domain
    g1, g2 = np.meshgrid(np.linspace(lo1, hi1, side), np.linspace(lo2, hi2, side))
    return np.column_stack([g1.ravel(), g2.ravel()])


def pixel_points(height: int, width: int, domain=UNIT_SQUARE) -> np.ndarray:
    """Row-major pixel centers mapped onto ``domain``; pixel (0, 0) is top-left."""
    if height < 1 or width < 1:
        raise ValueError("image dimensions must be positive")
    lo1, hi1, lo2, hi2 = domain
    r, c = np.divmod(np.arange(height * width), width)
    x1 = lo1 + c * ((hi1 - lo1) / (width - 1) if width > 1 else 0.0)
    x2 = hi2 - r * ((hi2 - lo2) / (height - 1) if height > 1 else 0.0)
    if width == 1:
        x1 = np.full_like(x1, (lo1 + hi1) / 2.0, dtype=float)
    if height == 1:
        x2 = np.full_like(x2, (lo2 + hi2) / 2.0, dtype=float)
    return np.column_stack([x1, x2]).astype(float)


@dataclass
class SimulationConfig:
    n: int = 100
    grid_side: int = 21
    domain: tuple = (-10.0, 10.0, -10.0, 10.0)
    re_sd: float = 0.1
    noise_sd: float = 0.1
    re_mode: str = "pointwise"
    seed: int = 0
    # coefficient lattice used by re_mode="basis"
    basis_nodes: tuple = (15, 15)

    def validate(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.grid_side < 2:
            raise ValueError("grid_side must be at least 2")
        if self.re_sd < 0 or self.noise_sd < 0:
            raise ValueError("standard deviations must be nonnegative")
        if self.re_mode not in ("pointwise", "basis"):
            raise ValueError(f"unknown re_mode {self.re_mode!r}")


def simulate_surfaces(cfg: SimulationConfig) -> SurfaceDataset:
    """Noisy replicates of :func:`true_mean` on a regular lattice.

    ``pointwise``: ``y_i = mu + b_i + e_i`` with ``b_i, e_i`` iid per point.
    ``basis``: ``y_i = S (beta* + b_i) + e_i`` where ``beta*`` are the node
    values of ``mu`` and ``b_i`` lives in coefficient space.
    """
    cfg.validate()
    rng = RngStream(cfg.seed)
    pts = lattice_points(cfg.grid_side, cfg.domain)
    m = len(pts)
    values = []
    if cfg.re_mode == "pointwise":
        mu = true_mean(pts)
        for _ in range(cfg.n):
            b = cfg.re_sd * rng.normal(m)
            e = cfg.noise_sd * rng.normal(m)
            values.append(mu + b + e)
    else:
        grid = node_grid(cfg.domain, *cfg.basis_nodes)
        S = design_matrix(pts, grid)
        beta = true_mean(grid.centers)
        for _ in range(cfg.n):
            b = cfg.re_sd * rng.normal(grid.d)
            e = cfg.noise_sd * rng.normal(m)
            values.append(S @ (beta + b) + e)
    return SurfaceDataset(values=values, points=[pts] * cfg.n,
                          meta={"source": "simulate", "config": simulation_config_dict(cfg)})


def simulation_config_dict(cfg: SimulationConfig) -> dict:
    return {
        "n": cfg.n, "grid_side": cfg.grid_side, "domain": list(cfg.domain),
        "re_sd": cfg.re_sd, "noise_sd": cfg.noise_sd, "re_mode": cfg.re_mode,
        "seed": cfg.seed, "basis_nodes": list(cfg.basis_nodes),
    }


# --- ZIPcode text format -------------------------------------------------

def load_zipcode(path, limit: Optional[int] = None, seed: Optional[int] = None,
                 domain=UNIT_SQUARE) -> SurfaceDataset:
    """Read digits stored one per line: label then 256 gray levels.

    With ``limit``, a uniform subsample without replacement is drawn using
    ``seed`` (default 0); the kept records stay in file order.
    """
    labels, rows, wide = [], [], []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != ZIP_PIXELS + 1:
                raise DataFormatError(f"expected {ZIP_PIXELS + 1} fields, found {len(tokens)}", lineno)
            try:
                nums = [float(t) for t in tokens]
            except ValueError as exc:
                raise DataFormatError(f"non-numeric field ({exc})", lineno) from None
            lab = nums[0]
            if not np.isfinite(lab) or lab != int(lab):
                raise DataFormatError(f"label {tokens[0]!r} is not an integer", lineno)
            pix = np.array(nums[1:])
            if not np.all(np.isfinite(pix)):
                raise DataFormatError("non-finite pixel value", lineno)
            if np.any(np.abs(pix) > 1.5):
                wide.append(lineno)
            labels.append(int(lab))
            rows.append(pix)
    if not rows:
        raise DataFormatError(f"{path}: no records")
    if wide:
        shown = ", ".join(map(str, wide[:5])) + (", ..." if len(wide) > 5 else "")
        warnings.warn(f"{len(wide)} record(s) with pixel values outside [-1.5, 1.5] (lines {shown})",
                      PixelRangeWarning, stacklevel=2)

    ids = [str(i + 1) for i in range(len(rows))]
    index = np.arange(len(rows))
    if limit is not None:
        if limit < 1:
            raise ValueError("limit must be positive")
        if limit < len(rows):
            rng = RngStream(0 if seed is None else seed)
            index = np.sort(rng.gen.choice(len(rows), size=limit, replace=False))
    pts = pixel_points(ZIP_SIDE, ZIP_SIDE, domain)
    return SurfaceDataset(
        values=[rows[i] for i in index],
        points=[pts] * len(index),
        ids=[ids[i] for i in index],
        labels=np.array([labels[i] for i in index]),
        meta={"source": str(path), "format": "zipcode", "limit": limit, "subsample_seed": seed,
              "pixel_domain": list(domain), "pixel_convention": "row-major, (0,0) top-left"},
    )


def write_zipcode(path, dataset: SurfaceDataset) -> None:
    if dataset.labels is None:
        raise ValueError("ZIPcode format requires labels")
    with atomic_write(path) as fh:
        for lab, v in zip(dataset.labels, dataset.values):
            if len(v) != ZIP_PIXELS:
                raise ValueError(f"ZIPcode records need {ZIP_PIXELS} values")
            fh.write(" ".join([str(int(lab))] + [repr(float(x)) for x in v]) + "\n")


# --- surface CSV ---------------------------------------------------------

CSV_HEADER = ["surface_id", "x1", "x2", "y"]


def write_surface_csv(path, dataset: SurfaceDataset) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for sid, pts, vals in zip(dataset.ids, dataset.points, dataset.values):
            for (x1, x2), y in zip(pts, vals):
                w.writerow([sid, repr(float(x1)), repr(float(x2)), repr(float(y))])


def read_surface_csv(path) -> SurfaceDataset:
    order: list[str] = []
    pts: dict[str, list] = {}
    vals: dict[str, list] = {}
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise DataFormatError(f"header must be {','.join(CSV_HEADER)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataFormatError(f"expected 4 fields, found {len(row)}", lineno)
            sid = row[0]
            try:
                x1, x2, y = float(row[1]), float(row[2]), float(row[3])
            except ValueError:
                raise DataFormatError("non-numeric coordinate or value", lineno) from None
            if not (np.isfinite(x1) and np.isfinite(x2) and np.isfinite(y)):
                raise DataFormatError("non-finite entry", lineno)
            if sid not in pts:
                order.append(sid)
                pts[sid], vals[sid] = [], []
            pts[sid].append((x1, x2))
            vals[sid].append(y)
    if not order:
        raise DataFormatError(f"{path}: no observations")
    points = [np.array(pts[s]) for s in order]
    p0 = points[0]
    points = [p0 if p.shape == p0.shape and np.array_equal(p, p0) else p for p in points]
    return SurfaceDataset(values=[np.array(vals[s]) for s in order], points=points, ids=order,
                          meta={"source": str(path), "format": "csv"})


def load_dataset(path, fmt: str = "auto", limit=None, seed=None) -> SurfaceDataset:
    if fmt == "auto":
        fmt = "csv" if str(path).endswith(".csv") else "zipcode"
    if fmt == "csv":
        ds = read_surface_csv(path)
        if limit is not None and limit < ds.n:
            rng = RngStream(0 if seed is None else seed)
            ds = ds.subset(np.sort(rng.gen.choice(ds.n, size=limit, replace=False)))
        return ds
    if fmt == "zipcode":
        return load_zipcode(path, limit=limit, seed=seed)
    raise ValueError(f"unknown data format {fmt!r}")


class atomic_write:
    """Write to a temp file beside ``path`` and rename into place on success."""

    def __init__(self, path, mode="w"):
        self.path = Path(path)
        self.mode = mode

    def __enter__(self):
        parent = self.path.parent if str(self.path.parent) else Path(".")
        if not parent.is_dir():
            raise FileNotFoundError(f"output directory {parent} does not exist")
        fd, self.tmp = tempfile.mkstemp(prefix=f".{self.path.name}.", dir=parent)
        self.fh = os.fdopen(fd, self.mode, newline="" if "b" not in self.mode else None)
        return self.fh

    def __exit__(self, exc_type, exc, tb):
        self.fh.close()
        if exc_type is None:
            # mkstemp creates 0600 files; apply the usual umask instead
            umask = os.umask(0)
            os.umask(umask)
            os.chmod(self.tmp, 0o666 & ~umask)
            os.replace(self.tmp, self.path)
        else:
            os.unlink(self.tmp)
        return False
