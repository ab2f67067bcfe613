"""Functional datasets: n sites with coordinates and sampled curves.

The on-disk format is a long CSV with the exact header
``site_id,x,y,t,value`` and one row per observation.  Reals are written
with 17 significant digits so save/load round-trips are bit exact.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetParseError, DuplicateKeyError, InvalidParameterError

CSV_HEADER = ["site_id", "x", "y", "t", "value"]


@dataclass
class FunctionalDataset:
    """Curves Z(s_i, t_ij) observed at n sites with per-site time grids."""

    site_ids: list[str]
    coords: np.ndarray  # (n, 2)
    times: list[np.ndarray]  # per-site time grids
    values: list[np.ndarray]  # per-site samples, aligned with times

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        n = len(self.site_ids)
        if self.coords.shape != (n, 2):
            raise InvalidParameterError("coords must be (n, 2)")
        if len(self.times) != n or len(self.values) != n:
            raise InvalidParameterError("times/values must have one entry per site")
        self.times = [np.asarray(t, dtype=float) for t in self.times]
        self.values = [np.asarray(v, dtype=float) for v in self.values]
        for t, v in zip(self.times, self.values):
            if t.shape != v.shape:
                raise InvalidParameterError("per-site times/values length mismatch")

    @property
    def n_sites(self) -> int:
        return len(self.site_ids)

    def shared_grid(self) -> np.ndarray:
        """The common time grid, or raise if sites differ."""
        grid = self.times[0]
        for t in self.times[1:]:
            if t.shape != grid.shape or not np.array_equal(t, grid):
                raise InvalidParameterError("sites do not share a common time grid")
        return grid

    def value_matrix(self) -> np.ndarray:
        """(n, m) value matrix; requires a shared grid."""
        self.shared_grid()
        return np.vstack(self.values)

    def drop_site(self, i: int) -> "FunctionalDataset":
        keep = [j for j in range(self.n_sites) if j != i]
        return FunctionalDataset(
            site_ids=[self.site_ids[j] for j in keep],
            coords=self.coords[keep],
            times=[self.times[j] for j in keep],
            values=[self.values[j] for j in keep],
        )

    def map_values(self, fn) -> "FunctionalDataset":
        """New dataset with values fn(times, values) per site."""
        return FunctionalDataset(
            site_ids=list(self.site_ids),
            coords=self.coords.copy(),
            times=[t.copy() for t in self.times],
            values=[np.asarray(fn(t, v), dtype=float) for t, v in zip(self.times, self.values)],
        )


@dataclass(frozen=True)
class SptObservation:
    """A single point observation of the space-time field."""

    site: int
    coord: tuple[float, float]
    t: float
    value: float


def flatten_observations(ds: FunctionalDataset):
    """Long-form arrays (coords N x 2, times N, values N, site index N)."""
    coords, times, values, sites = [], [], [], []
    for i in range(ds.n_sites):
        m = ds.times[i].size
        coords.append(np.repeat(ds.coords[i][None, :], m, axis=0))
        times.append(ds.times[i])
        values.append(ds.values[i])
        sites.append(np.full(m, i))
    return (
        np.concatenate(coords),
        np.concatenate(times),
        np.concatenate(values),
        np.concatenate(sites),
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write_text(path: str, text: str) -> None:
    """Write via temp file + rename so interrupted runs leave no partial file."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(ds: FunctionalDataset, path: str) -> None:
    lines = [",".join(CSV_HEADER)]
    for i, sid in enumerate(ds.site_ids):
        x, y = ds.coords[i]
        for t, v in zip(ds.times[i], ds.values[i]):
            lines.append(f"{sid},{_fmt(x)},{_fmt(y)},{_fmt(t)},{_fmt(v)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_dataset(path: str) -> FunctionalDataset:
    """Parse and validate a long CSV, sites sorted by id."""
    per_site: dict[str, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetParseError("empty file", line=1)
        if header != CSV_HEADER:
            missing = [c for c in CSV_HEADER if c not in header]
            name = missing[0] if missing else ",".join(header)
            raise DatasetParseError(f"bad header (expected {','.join(CSV_HEADER)}; "
                                    f"problem column: {name})", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DatasetParseError(f"expected 5 fields, got {len(row)}", line=lineno)
            sid = row[0]
            try:
                x, y, t, v = (float(c) for c in row[1:])
            except ValueError as e:
                raise DatasetParseError(str(e), line=lineno)
            if not np.isfinite([x, y, t, v]).all():
                raise DatasetParseError("non-finite value", line=lineno)
            rec = per_site.setdefault(sid, {"coord": (x, y), "times": [], "values": []})
            if rec["coord"] != (x, y):
                raise DatasetParseError(
                    f"site {sid} has inconsistent coordinates", line=lineno
                )
            if t in rec["times"]:
                raise DuplicateKeyError(f"duplicate (site={sid}, t={t})", line=lineno)
            rec["times"].append(t)
            rec["values"].append(v)
    if not per_site:
        raise DatasetParseError("no data rows", line=2)
    sids = sorted(per_site)
    return FunctionalDataset(
        site_ids=sids,
        coords=np.array([per_site[s]["coord"] for s in sids]),
        times=[np.array(per_site[s]["times"]) for s in sids],
        values=[np.array(per_site[s]["values"]) for s in sids],
    )
