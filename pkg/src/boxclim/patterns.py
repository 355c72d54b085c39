"""Pattern scaling: regional warming fields, anchoring and local damages.

Local warming is approximated as ``dT_z = beta_z * dT_global`` with a
per-cell slope field ``beta`` estimated by least squares from model output.
Adding a baseline climatology turns the anomaly into an absolute
temperature, and the hump-shaped productivity curve converts absolute
temperatures into relative TFP changes.

Fields live on regular lat/lon grids (cell centres).  The plain-text grid
format is a CSV file whose first non-comment line is the header

    nlat,nlon,lat0,dlat,lon0,dlon,missing

followed by the header values and then ``nlat`` rows of ``nlon`` values,
southernmost row first.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml
from scipy.interpolate import RegularGridInterpolator

from .data import data_path
from .errors import ConfigError, DataError, DegenerateRegressor, EmptyRegion, SchemaError

SPACING_TOL = 1e-9
GRID_HEADER = ("nlat", "nlon", "lat0", "dlat", "lon0", "dlon", "missing")
DEFAULT_MISSING = -9999.0


# ----------------------------------------------------------------------------
# grids


@dataclass
class GridField:
    """Scalar field on a regular grid; missing cells are stored as NaN."""

    lat: np.ndarray
    lon: np.ndarray
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.lat = np.asarray(self.lat, dtype=float)
        self.lon = np.asarray(self.lon, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.lat.ndim != 1 or self.lon.ndim != 1:
            raise SchemaError("lat and lon must be one-dimensional")
        if self.values.shape != (self.lat.size, self.lon.size):
            raise SchemaError(f"values shape {self.values.shape} does not match grid "
                              f"({self.lat.size}, {self.lon.size})")
        if np.any(np.abs(self.lat) > 90.0):
            raise SchemaError("latitudes must lie within [-90, 90]")
        for axis, name in ((self.lat, "lat"), (self.lon, "lon")):
            if axis.size > 1:
                d = np.diff(axis)
                if np.any(d <= 0) or np.max(np.abs(d - d[0])) > SPACING_TOL:
                    raise SchemaError(f"{name} centres must be ascending and regularly spaced")

    @property
    def mask(self) -> np.ndarray:
        """True where the value is missing."""
        return np.isnan(self.values)

    @property
    def shape(self):
        return self.values.shape

    @property
    def dlat(self) -> float:
        return float(self.lat[1] - self.lat[0]) if self.lat.size > 1 else 180.0

    @property
    def dlon(self) -> float:
        return float(self.lon[1] - self.lon[0]) if self.lon.size > 1 else 360.0

    @property
    def is_global_lon(self) -> bool:
        return abs(self.lon.size * self.dlon - 360.0) < 1e-6

    def weights(self) -> np.ndarray:
        """cos(latitude) area weights broadcast to the grid."""
        w = np.cos(np.deg2rad(self.lat))[:, None]
        return np.broadcast_to(np.clip(w, 0.0, None), self.shape).copy()

    def mean(self, where: np.ndarray | None = None) -> float:
        """Area-weighted mean over non-missing cells (optionally restricted)."""
        ok = ~self.mask
        if where is not None:
            ok &= where
        w = self.weights()[ok]
        if w.sum() <= 0:
            raise EmptyRegion("no valid cells to average")
        return float(np.sum(w * self.values[ok]) / np.sum(w))

    def same_grid(self, other: "GridField") -> bool:
        return (self.lat.shape == other.lat.shape and self.lon.shape == other.lon.shape
                and np.allclose(self.lat, other.lat, atol=SPACING_TOL)
                and np.allclose(self.lon, other.lon, atol=SPACING_TOL))

    def with_values(self, values, name: str | None = None) -> "GridField":
        return GridField(self.lat, self.lon, values, self.name if name is None else name)

    def roll_lon(self, k: int) -> "GridField":
        """Rotate a global grid by ``k`` cells in longitude (values and centres move together)."""
        lon = self.lon[0] + self.dlon * (np.arange(self.lon.size) + k)
        return GridField(self.lat, lon, np.roll(self.values, -k, axis=1), self.name)

    @classmethod
    def uniform(cls, value: float, nlat: int = 36, nlon: int = 72, name: str = "") -> "GridField":
        dlat, dlon = 180.0 / nlat, 360.0 / nlon
        lat = -90 + dlat / 2 + dlat * np.arange(nlat)
        lon = -180 + dlon / 2 + dlon * np.arange(nlon)
        return cls(lat, lon, np.full((nlat, nlon), float(value)), name)


def read_grid(path: str | Path, name: str | None = None) -> GridField:
    path = Path(path)
    if not path.exists():
        raise DataError(f"grid file not found: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.lstrip().startswith("#")) if r]
    if len(rows) < 2 or tuple(c.strip() for c in rows[0]) != GRID_HEADER:
        raise SchemaError(f"{path}: expected header {','.join(GRID_HEADER)}")
    try:
        nlat, nlon = int(rows[1][0]), int(rows[1][1])
        lat0, dlat, lon0, dlon, missing = (float(x) for x in rows[1][2:7])
        data = np.array([[float(x) for x in r] for r in rows[2:]], dtype=float)
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed grid ({exc})") from exc
    if data.shape != (nlat, nlon):
        raise SchemaError(f"{path}: expected {nlat}x{nlon} values, found {data.shape}")
    data[np.isclose(data, missing)] = np.nan
    lat = lat0 + dlat * np.arange(nlat)
    lon = lon0 + dlon * np.arange(nlon)
    return GridField(lat, lon, data, name if name is not None else path.stem)


def write_grid(fld: GridField, path: str | Path, missing: float = DEFAULT_MISSING) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vals = np.where(fld.mask, missing, fld.values)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(GRID_HEADER) + "\n")
        head = (float(fld.lat[0]), fld.dlat, float(fld.lon[0]), fld.dlon, float(missing))
        fh.write(f"{fld.lat.size},{fld.lon.size}," + ",".join(repr(v) for v in head) + "\n")
        for row in vals:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def _interpolator(fld: GridField) -> RegularGridInterpolator:
    lat, lon, vals = fld.lat, fld.lon, fld.values
    if fld.is_global_lon:
        # wrap one column on each side so interpolation is periodic
        lon = np.concatenate([[lon[-1] - 360.0], lon, [lon[0] + 360.0]])
        vals = np.concatenate([vals[:, -1:], vals, vals[:, :1]], axis=1)
    if lat.size == 1:
        lat = np.array([lat[0] - 1.0, lat[0] + 1.0])
        vals = np.vstack([vals, vals])
    return RegularGridInterpolator((lat, lon), vals, method="linear", bounds_error=False, fill_value=None)


def _wrap_lon(lon, fld: GridField):
    lon = np.asarray(lon, dtype=float)
    if fld.is_global_lon:
        return (lon - fld.lon[0]) % 360.0 + fld.lon[0]
    return lon


def sample(fld: GridField, lat, lon) -> np.ndarray:
    """Bilinear interpolation at arbitrary points (latitudes clamped to the outer centres)."""
    lat = np.clip(np.asarray(lat, dtype=float), fld.lat[0], fld.lat[-1])
    pts = np.stack(np.broadcast_arrays(lat, _wrap_lon(lon, fld)), axis=-1)
    return _interpolator(fld)(pts)


def regrid_bilinear(fld: GridField, target: GridField) -> GridField:
    """Interpolate ``fld`` onto the grid of ``target``.

    A cell whose stencil touches a missing value comes out missing.
    """
    if fld.same_grid(target):
        return fld.with_values(fld.values.copy())
    LA, LO = np.meshgrid(target.lat, target.lon, indexing="ij")
    return GridField(target.lat, target.lon, sample(fld, LA, LO), fld.name)


# ----------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Region:
    acronym: str
    name: str
    vertices: tuple  # ((lon, lat), ...)
    kind: str = "Land"


@dataclass
class RegionSet:
    """Ordered collection of polygons; earlier regions win on shared edges."""

    regions: list[Region]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        acr = [r.acronym for r in self.regions]
        if len(set(acr)) != len(acr):
            raise SchemaError("region acronyms must be unique")
        for r in self.regions:
            if len(r.vertices) < 3:
                raise SchemaError(f"region {r.acronym} needs at least three vertices")

    @property
    def acronyms(self) -> list[str]:
        return [r.acronym for r in self.regions]

    def subset(self, acronyms: Iterable[str]) -> "RegionSet":
        want = list(acronyms)
        by = {r.acronym: r for r in self.regions}
        missing = [a for a in want if a not in by]
        if missing:
            raise DataError(f"unknown regions {missing}")
        order = [r for r in self.regions if r.acronym in want]
        return RegionSet(order)

    def assign(self, fld: GridField, land_mask: np.ndarray | None = None) -> np.ndarray:
        """Index of the region containing each cell centre (-1 if none)."""
        import shapely

        key = (fld.lat.tobytes(), fld.lon.tobytes(), None if land_mask is None else land_mask.tobytes())
        if key in self._cache:
            return self._cache[key]
        LA, LO = np.meshgrid(fld.lat, fld.lon, indexing="ij")
        lon180 = (LO + 180.0) % 360.0 - 180.0
        out = np.full(fld.shape, -1, dtype=int)
        for k, reg in enumerate(self.regions):
            poly = shapely.Polygon(reg.vertices)
            hit = np.zeros(fld.shape, dtype=bool)
            # polygons may be written with longitudes beyond +-180
            for shift in (0.0, 360.0, -360.0):
                hit |= shapely.intersects_xy(poly, lon180 + shift, LA)
            out[(out < 0) & hit] = k
        if land_mask is not None:
            out[~np.asarray(land_mask, dtype=bool)] = -1
        self._cache[key] = out
        return out

    @classmethod
    def from_csv(cls, path: str | Path, kind: str | None = "Land") -> "RegionSet":
        """Read polygons in the published reference-region column layout.

        Columns are ``Continent, Type, Name, Acronym`` followed by one
        ``lon|lat`` vertex per column.  ``kind`` filters on ``Type``
        (``None`` keeps all rows).
        """
        path = Path(path)
        if not path.exists():
            raise DataError(f"region file not found: {path}")
        regions = []
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise SchemaError(f"{path}: empty region file")
        start = 1 if "acronym" in ",".join(rows[0]).lower() else 0
        for r in rows[start:]:
            if len(r) < 7:
                continue
            verts = []
            for cell in r[4:]:
                cell = cell.strip()
                if "|" in cell:
                    lo, la = cell.split("|")
                    verts.append((float(lo), float(la)))
            typ = r[1].strip()
            if kind is not None and kind.lower() not in typ.lower():
                continue
            regions.append(Region(r[3].strip(), r[2].strip(), tuple(verts), typ))
        if not regions:
            raise SchemaError(f"{path}: no regions of type {kind!r}")
        return cls(regions)


def aggregate_region(fld: GridField, regions: RegionSet, land_mask: np.ndarray | None = None,
                     acronyms: Sequence[str] | None = None) -> dict[str, float]:
    """cos(latitude)-weighted mean of ``fld`` over each region's cells."""
    idx = regions.assign(fld, land_mask)
    w = fld.weights()
    ok = ~fld.mask
    out = {}
    for k, reg in enumerate(regions.regions):
        if acronyms is not None and reg.acronym not in acronyms:
            continue
        sel = (idx == k) & ok
        if not sel.any():
            raise EmptyRegion(f"region {reg.acronym} covers no valid cell")
        out[reg.acronym] = float(np.sum(w[sel] * fld.values[sel]) / np.sum(w[sel]))
    return out


# ----------------------------------------------------------------------------
# patterns


@dataclass
class PatternFit:
    beta: np.ndarray | GridField
    intercept: np.ndarray
    residual_rms: np.ndarray
    intercept_mode: str


def estimate_pattern(local_series, global_series, intercept_mode: str = "zero",
                     grid: GridField | None = None) -> PatternFit:
    """Per-cell least-squares slope of local on global warming.

    ``local_series`` has time as its first axis.  With ``intercept_mode``
    ``"zero"`` the regression passes through the origin; ``"free"`` also
    fits an intercept.  If ``grid`` is given, ``beta`` is returned as a
    field on that grid.
    """
    y = np.asarray(local_series, dtype=float)
    x = np.asarray(global_series, dtype=float)
    if y.shape[0] != x.size:
        raise SchemaError(f"series misaligned: {y.shape[0]} local vs {x.size} global steps")
    xb = x.reshape((-1,) + (1,) * (y.ndim - 1))
    if intercept_mode == "zero":
        sxx = float(np.sum(x * x))
        if sxx == 0:
            raise DegenerateRegressor("global warming series is identically zero")
        beta = np.sum(xb * y, axis=0) / sxx
        alpha = np.zeros_like(beta)
    elif intercept_mode == "free":
        xc = x - x.mean()
        sxx = float(np.sum(xc * xc))
        if sxx == 0:
            raise DegenerateRegressor("global warming series has no variance")
        ym = y.mean(axis=0)
        beta = np.sum(xc.reshape(xb.shape) * (y - ym), axis=0) / sxx
        alpha = ym - beta * x.mean()
    else:
        raise SchemaError(f"intercept_mode must be 'zero' or 'free', not {intercept_mode!r}")
    resid = y - (alpha + beta * xb)
    rms = np.sqrt(np.mean(resid**2, axis=0))
    if grid is not None:
        beta = grid.with_values(beta, "beta")
    return PatternFit(beta, alpha, rms, intercept_mode)


def scale_pattern(delta_T_global: float, beta: GridField) -> GridField:
    """Local warming field ``delta_T_global * beta``."""
    return beta.with_values(float(delta_T_global) * beta.values)


def anchor_absolute(clim: GridField, delta_T_global: float, beta: GridField) -> GridField:
    """Absolute temperature ``clim + delta_T_global * beta`` on the climatology grid.

    The pattern is interpolated bilinearly when the two grids differ.
    """
    b = beta if beta.same_grid(clim) else regrid_bilinear(beta, clim)
    return clim.with_values(clim.values + float(delta_T_global) * b.values)


def rescale_climatology(clim: GridField, target_mean: float) -> GridField:
    """Shift a climatology so its area-weighted global mean equals ``target_mean``."""
    return clim.with_values(clim.values + (target_mean - clim.mean()))


# ----------------------------------------------------------------------------
# local damages


@dataclass(frozen=True)
class KSDamageParams:
    d: float = 0.02
    T_star: float = 11.58
    kappa_plus: float = 0.00311
    kappa_minus: float = 0.00456

    def __post_init__(self):
        if not 0 < self.d < 1:
            raise ConfigError("d must lie in (0, 1)", "damages.d")
        if not (self.kappa_plus > 0 and self.kappa_minus > 0):
            raise ConfigError("curvatures must be positive", "damages.kappa")


def ks_tfp(T, params: KSDamageParams | None = None):
    """Climate component of TFP, a skewed Gaussian hump peaking at ``T_star``."""
    p = params or KSDamageParams()
    T = np.asarray(T, dtype=float)
    dev = T - p.T_star
    k = np.where(dev >= 0, p.kappa_plus, p.kappa_minus)
    out = (1.0 - p.d) * np.exp(-k * dev * dev) + p.d
    return float(out) if out.ndim == 0 else out


def ks_damage(T_future, T_baseline, params: KSDamageParams | None = None):
    """Relative TFP change from baseline to future temperature (negative is a loss)."""
    out = np.asarray(ks_tfp(T_future, params)) / np.asarray(ks_tfp(T_baseline, params)) - 1.0
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# data access


@dataclass
class PatternLibrary:
    """Pattern fields, model climatologies and an observational baseline."""

    patterns: dict[str, GridField]
    climatologies: dict[str, GridField]
    baseline: GridField | None
    regions: RegionSet | None
    land_mask: np.ndarray | None
    root: Path

    def ensemble(self) -> list[str]:
        return sorted(self.patterns)


def load_pattern_library(manifest: str | Path | None = None) -> PatternLibrary:
    """Read a manifest such as::

        patterns:
          MPI-ESM-LR: {beta: mpi_beta.csv, climatology: mpi_clim.csv}
        baseline: era5_1991_2020.csv
        regions: IPCC-WGI-reference-regions-v4_coordinates.csv
        land_mask: land_fraction.csv

    Paths are relative to the manifest.  Without an argument the manifest
    is looked up as ``patterns/manifest.yaml`` in the data directories.
    """
    path = Path(manifest) if manifest is not None else data_path("patterns", "manifest.yaml")
    if not path.exists():
        raise DataError(f"pattern manifest not found: {path}")
    doc = yaml.safe_load(path.read_text()) or {}
    root = path.parent
    if not isinstance(doc.get("patterns"), Mapping) or not doc["patterns"]:
        raise SchemaError(f"{path}: 'patterns' must map model names to files")
    patterns, clims = {}, {}
    for model, entry in doc["patterns"].items():
        if isinstance(entry, str):
            entry = {"beta": entry}
        patterns[model] = read_grid(root / entry["beta"], model)
        if entry.get("climatology"):
            clims[model] = read_grid(root / entry["climatology"], model)
    baseline = read_grid(root / doc["baseline"], "baseline") if doc.get("baseline") else None
    regions = RegionSet.from_csv(root / doc["regions"]) if doc.get("regions") else None
    land = None
    if doc.get("land_mask"):
        lm = read_grid(root / doc["land_mask"], "land")
        land = np.nan_to_num(lm.values) > 0.5
    return PatternLibrary(patterns, clims, baseline, regions, land, root)


def reference_table(name: str) -> list[dict]:
    """Rows of a bundled reference CSV (``regional_warming``, ``city_temperatures``, ...)."""
    path = data_path("reference", f"{name}.csv")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    out = []
    for r in rows:
        conv = {}
        for k, v in r.items():
            try:
                conv[k] = float(v)
            except ValueError:
                conv[k] = v
        out.append(conv)
    return out


def city_values(fld: GridField, cities: Sequence[Mapping]) -> dict[str, float]:
    """Bilinear field values at city coordinates (``lat``/``lon`` keys)."""
    lat = np.array([c["lat"] for c in cities], dtype=float)
    lon = np.array([c["lon"] for c in cities], dtype=float)
    vals = sample(fld, lat, lon)
    return {c["city"]: float(v) for c, v in zip(cities, vals)}


__all__ = [
    "GridField", "Region", "RegionSet", "KSDamageParams", "PatternFit", "PatternLibrary",
    "read_grid", "write_grid", "sample", "regrid_bilinear", "aggregate_region",
    "estimate_pattern", "scale_pattern", "anchor_absolute", "rescale_climatology",
    "ks_tfp", "ks_damage", "load_pattern_library", "reference_table", "city_values",
]
