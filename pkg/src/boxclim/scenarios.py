"""Standalone climate experiments and data ingestion.

Covers pulse decay, the zero-emissions-commitment (ZEC) protocol, coupled RCP
runs, and the historical spin-up that produces present-day initial states for
the economic model.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .calibration import BenchmarkSet
from .carbon import PI_ATMOSPHERE_GTC, CycleState, Emulator, Operator, operator_path, simulate
from .data import data_path
from .ebm import KAPPA_PERTURBATION, KAPPA_RCP, EbmParams, TempState, forcing
from .errors import (BudgetUnreachable, ConfigError, ContiguityError, NegativeMassWarning, SchemaError,
                     TargetNotReached)

GTC_PER_PPM = 2.124
EMISSION_COLUMNS = ("year", "fossil_industrial_gtc", "land_use_gtc")
SCENARIOS = {"RCP2.6": "rcp26", "RCP4.5": "rcp45", "RCP6.0": "rcp60", "RCP8.5": "rcp85", "historical": "historical"}


@dataclass(frozen=True)
class EmissionSeries:
    years: np.ndarray
    fossil_industrial: np.ndarray
    land_use: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        y = np.asarray(self.years, dtype=int)
        f = np.asarray(self.fossil_industrial, dtype=float)
        lu = np.asarray(self.land_use, dtype=float)
        if not (len(y) == len(f) == len(lu)):
            raise SchemaError("emission columns have different lengths")
        if len(y) > 1 and np.any(np.diff(y) != 1):
            gap = int(y[np.argmax(np.diff(y) != 1)])
            raise ContiguityError(f"years are not contiguous after {gap}")
        if np.any(~np.isfinite(f)) or np.any(~np.isfinite(lu)):
            raise SchemaError("emission series contains NaN or infinite values")
        for name, v in (("years", y), ("fossil_industrial", f), ("land_use", lu)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def total(self) -> np.ndarray:
        return self.fossil_industrial + self.land_use

    def window(self, start: int | None = None, end: int | None = None) -> "EmissionSeries":
        """Sub-series for ``start <= year <= end``."""
        mask = np.ones(len(self.years), bool)
        if start is not None:
            mask &= self.years >= start
        if end is not None:
            mask &= self.years <= end
        return EmissionSeries(self.years[mask], self.fossil_industrial[mask], self.land_use[mask], self.label)

    def cumulative(self) -> tuple[np.ndarray, np.ndarray]:
        return np.cumsum(self.fossil_industrial), np.cumsum(self.land_use)

    @classmethod
    def zeros(cls, start: int, length: int, label: str = "zero") -> "EmissionSeries":
        return cls(np.arange(start, start + length), np.zeros(length), np.zeros(length), label)


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise SchemaError(f"{path}: empty file")
    return [c.strip() for c in rows[0]], rows[1:]


def load_emissions(path, label: str | None = None) -> EmissionSeries:
    """Read ``year,fossil_industrial_gtc,land_use_gtc`` with strict validation."""
    path = Path(path)
    header, rows = _read_csv(path)
    missing = [c for c in EMISSION_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    idx = [header.index(c) for c in EMISSION_COLUMNS]
    try:
        data = np.array([[float(r[k]) for k in idx] for r in rows])
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed row ({exc})") from None
    if data.size == 0:
        raise SchemaError(f"{path}: no data rows")
    if np.any(data[:, 0] != np.round(data[:, 0])):
        raise SchemaError(f"{path}: non-integer year")
    return EmissionSeries(data[:, 0].astype(int), data[:, 1], data[:, 2], label or path.stem)


def bundled_emissions(name: str) -> EmissionSeries:
    """``RCP2.6``, ``RCP4.5``, ``RCP6.0``, ``RCP8.5`` (history + scenario) or ``historical``."""
    key = SCENARIOS.get(name, name)
    if key not in SCENARIOS.values():
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}", "scenario")
    return load_emissions(data_path("emissions", f"{key}.csv"), label=name)


def _read_curve(path: Path) -> np.ndarray:
    header, rows = _read_csv(path)
    if header[:2] != ["year", "value"]:
        raise SchemaError(f"{path}: expected header 'year,value'")
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows])
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed row ({exc})") from None
    if np.any(~np.isfinite(data)):
        raise SchemaError(f"{path}: NaN in curve")
    years = data[:, 0]
    if years[0] != 0 or np.any(np.diff(years) != 1):
        raise ContiguityError(f"{path}: curve years must run 0, 1, 2, ... without gaps")
    return data[:, 1]


def load_benchmark(path) -> BenchmarkSet:
    """Read a benchmark manifest (YAML) and the curves it lists.

    Required keys: ``pulse_gtc``, ``background`` and ``curves`` (a list of
    ``{role, file}`` with role in ``mu``, ``mu_plus``, ``mu_minus`` or
    ``model:<name>``).  Optional: ``value_kind`` (``mass`` or ``fraction``)
    and ``m_eq_atm``.
    """
    path = Path(path)
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise SchemaError(f"{path}: cannot read manifest ({exc})") from None
    for key in ("pulse_gtc", "background", "curves"):
        if key not in doc:
            raise SchemaError(f"{path}: manifest lacks '{key}'")
    kind = doc.get("value_kind", "mass")
    if kind not in ("mass", "fraction"):
        raise SchemaError(f"{path}: value_kind must be 'mass' or 'fraction'")
    pulse = float(doc["pulse_gtc"])
    m_atm = float(doc.get("m_eq_atm", PI_ATMOSPHERE_GTC))
    curves, models = {}, {}
    for entry in doc["curves"]:
        role = str(entry.get("role", ""))
        y = _read_curve(path.parent / entry["file"])
        if kind == "fraction":
            y = m_atm + pulse * y
        if role.startswith("model:"):
            models[role.split(":", 1)[1]] = y
        elif role in ("mu", "mu_plus", "mu_minus"):
            curves[role] = y
        else:
            raise SchemaError(f"{path}: unknown curve role {role!r}")
    if "mu" not in curves:
        raise SchemaError(f"{path}: a 'mu' curve is required")
    return BenchmarkSet(curves["mu"], curves.get("mu_plus"), curves.get("mu_minus"),
                        background=str(doc["background"]).upper(), pulse_gtc=pulse, m_eq_atm=m_atm, models=models)


# ----------------------------------------------------------------------------
# runs


@dataclass
class ScenarioRun:
    years: np.ndarray
    masses: np.ndarray
    m_eq: np.ndarray
    temperature: np.ndarray
    forcing: np.ndarray
    emissions: np.ndarray
    reservoir_names: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    @property
    def atmosphere(self) -> np.ndarray:
        return self.masses[:, 0]

    def mass_balance_error(self) -> float:
        """Relative mismatch between cumulative emissions and total reservoir gain."""
        gain = self.masses[-1].sum() - self.masses[0].sum()
        emitted = self.emissions.sum()
        return abs(gain - emitted) / max(abs(emitted), 1.0)

    def land_diagnostics(self) -> dict[str, np.ndarray] | None:
        """``m_L(t)/m_L(0)`` and ``m_eq_L(t)/m_eq_L(0)`` when a land pool exists."""
        names = self.reservoir_names
        land = [k for k, s in enumerate(names) if s.startswith("L")]
        if not land:
            return None
        k = land[0]
        return {"mass_ratio": self.masses[:, k] / self.masses[0, k],
                "equilibrium_ratio": self.m_eq[:, k] / self.m_eq[0, k]}


def _couple(emulator: Emulator | Operator, m0, total, land_use, ebm: EbmParams, T0: TempState,
            m0_atm: float = PI_ATMOSPHERE_GTC):
    """Joint carbon and temperature rollout; forcing at t+1 drives the step to t+1."""
    T = len(total)
    if isinstance(emulator, Emulator) and emulator.time_dependent:
        mats, eqs = operator_path(emulator, land_use)
    else:
        op = emulator if isinstance(emulator, Operator) else emulator.operator()
        mats = np.broadcast_to(op.matrix, (T, op.n, op.n))
        eqs = np.broadcast_to(op.m_eq, (T + 1, op.n))
    n = mats.shape[1]
    masses = np.empty((T + 1, n))
    temps = np.empty((T + 1, 2))
    F = np.empty(T + 1)
    m = np.array(m0, dtype=float)
    masses[0] = m
    temps[0] = T0.T_atm, T0.T_ocean
    F[0] = forcing(m[0], m0_atm, ebm)
    Ta, To = T0.T_atm, T0.T_ocean
    for t in range(T):
        m = m + mats[t] @ m
        m[0] += total[t]
        masses[t + 1] = m
        F[t + 1] = forcing(m[0], m0_atm, ebm)
        Ta, To = (Ta + ebm.dt * (F[t + 1] - ebm.gamma * (Ta - To) - ebm.lambda_fb * Ta) / ebm.C,
                  To + ebm.dt * ebm.gamma * (Ta - To) / ebm.C0)
        temps[t + 1] = Ta, To
    return masses, np.array(eqs), temps, F


def run_pulse(emulator: Emulator | Operator, pulse: float = 100.0, horizon: int = 500,
              with_temperature: bool = False, ebm: EbmParams | None = None):
    """Airborne fraction ``(m_A(t) - m_eq_A) / pulse`` for t = 0..horizon (starts at 1).

    With ``with_temperature`` the run is returned as a :class:`ScenarioRun`
    with the EBM co-evolved at kappa = 1.
    """
    if pulse == 0:
        raise ConfigError("pulse must be nonzero", "pulse")
    m_eq = np.asarray(emulator.m_eq, dtype=float)
    m0 = m_eq.copy()
    m0[0] += pulse
    if not with_temperature:
        # the system is linear about m_eq, so track the deviation directly
        op = emulator if isinstance(emulator, Operator) else emulator.operator()
        x0 = np.zeros_like(m_eq)
        x0[0] = pulse
        with warnings.catch_warnings():  # deviations may be negative by design
            warnings.simplefilter("ignore", NegativeMassWarning)
            return simulate(op, x0, np.zeros(horizon)).atmosphere / pulse
    p = (ebm or EbmParams()).with_kappa(KAPPA_PERTURBATION)
    masses, eqs, temps, F = _couple(emulator, m0, np.zeros(horizon), np.zeros(horizon), p, TempState())
    frac = (masses[:, 0] - m_eq[0]) / pulse
    names = _names(emulator)
    return ScenarioRun(np.arange(horizon + 1), masses, eqs, temps, F, np.zeros(horizon), names,
                       {"experiment": "pulse", "pulse_gtc": pulse, "kappa": p.kappa, "fraction": frac})


def _names(emulator) -> tuple[str, ...]:
    topo = emulator.topology
    return topo.reservoir_names if topo is not None else tuple(f"r{k}" for k in range(emulator.n))


def run_zec(emulator: Emulator | Operator, growth_rate: float = 0.01, budget: float = 1000.0,
            horizon: int = 1000, ebm: EbmParams | None = None) -> ScenarioRun:
    """Concentration-driven 1 %/yr ramp until the emission budget is spent, then zero emissions."""
    op = emulator if isinstance(emulator, Operator) else emulator.operator()
    A = op.matrix
    m_eq = np.asarray(op.m_eq, dtype=float)
    p = (ebm or EbmParams()).with_kappa(KAPPA_PERTURBATION)
    m = m_eq.copy()
    n = m.size
    masses = np.empty((horizon + 1, n))
    masses[0] = m
    e = np.zeros(horizon)
    cum, cessation = 0.0, None
    if budget <= 0:
        cessation = 0
    for t in range(horizon):
        free = m + A @ m
        if cessation is None:
            target = m_eq[0] * (1.0 + growth_rate) ** (t + 1)
            e[t] = target - free[0]
            if e[t] < 0:
                raise BudgetUnreachable(f"implied emission negative in year {t} before the budget was met")
            cum += e[t]
            if cum >= budget:
                cessation = t + 1
        m = free
        m[0] += e[t]
        masses[t + 1] = m
    if cessation is None:
        raise BudgetUnreachable(f"budget {budget} GtC not reached within {horizon} years")
    F = forcing(masses[:, 0], PI_ATMOSPHERE_GTC, p)
    temps = np.empty((horizon + 1, 2))
    Ta = To = 0.0
    temps[0] = 0.0
    for t in range(horizon):
        Ta, To = (Ta + (F[t + 1] - p.gamma * (Ta - To) - p.lambda_fb * Ta) / p.C,
                  To + p.gamma * (Ta - To) / p.C0)
        temps[t + 1] = Ta, To
    meta = {"experiment": "zec", "growth_rate": growth_rate, "budget_gtc": budget,
            "cessation_year": int(cessation), "cumulative_at_cessation": float(e[:cessation].sum()),
            "kappa": p.kappa}
    return ScenarioRun(np.arange(horizon + 1), masses, np.broadcast_to(m_eq, masses.shape).copy(), temps, F, e,
                       _names(emulator), meta)


def run_rcp(emulator: Emulator, series: EmissionSeries, alpha: float = 0.0, kappa: float = KAPPA_RCP,
            ebm: EbmParams | None = None, initial: CycleState | None = None,
            initial_temp: TempState | None = None) -> ScenarioRun:
    """Coupled emission-driven run over the full series, starting from equilibrium by default.

    Land-use emissions enter the atmosphere and, for 4PR-X, also shrink the
    land equilibrium mass.
    """
    em = emulator.weighted(alpha) if alpha else emulator
    p = (ebm or EbmParams()).with_kappa(kappa)
    m0 = em.m_eq if initial is None else initial.masses
    masses, eqs, temps, F = _couple(em, m0, series.total, series.land_use, p, initial_temp or TempState())
    years = np.concatenate([series.years, [series.years[-1] + 1]])
    meta = {"experiment": "rcp", "scenario": series.label, "emulator": em.name, "alpha": alpha,
            "kappa": kappa, "start_year": int(series.years[0])}
    return ScenarioRun(years, masses, eqs, temps, F, series.total.copy(), _names(em), meta)


@dataclass
class SpinUp:
    """Present-day state reached by the historical spin-up."""

    state: CycleState
    temperature: TempState
    emulator: Emulator
    year: int
    run: ScenarioRun

    @property
    def m_eq(self) -> np.ndarray:
        return self.emulator.m_eq


def spin_up_present_day(emulator: Emulator, historical: EmissionSeries, target_ppm: float = 401.0,
                        gtc_per_ppm: float = GTC_PER_PPM, start_year: int | None = None,
                        r: float | None = None, kappa: float = KAPPA_RCP, ebm: EbmParams | None = None) -> SpinUp:
    """Integrate from PI equilibrium under historical emissions until ``m_A >= target``.

    Returns the state at the first year whose atmospheric mass reaches the
    target, along with the temperature state and the emulator carrying the
    updated land equilibrium (for 4PR-X).  ``start_year`` earlier than the
    series pads with zero emissions.
    """
    em = emulator
    if r is not None and em.land_rule is not None:
        em = replace(em, land_rule=replace(em.land_rule, r=r))
    series = historical
    if start_year is not None:
        if start_year < series.years[0]:
            pad = series.years[0] - start_year
            series = EmissionSeries(np.arange(start_year, series.years[-1] + 1),
                                    np.concatenate([np.zeros(pad), series.fossil_industrial]),
                                    np.concatenate([np.zeros(pad), series.land_use]), series.label)
        else:
            series = series.window(start_year)
    target = target_ppm * gtc_per_ppm
    run = run_rcp(em, series, kappa=kappa, ebm=ebm)
    hit = np.nonzero(run.atmosphere >= target)[0]
    if hit.size == 0:
        raise TargetNotReached(
            f"atmospheric mass peaked at {run.atmosphere.max():.1f} GtC, below the {target:.1f} GtC target")
    k = int(hit[0])
    params = em.params.with_m_eq(run.m_eq[k])
    final = em.with_params(params)
    temp = TempState(float(run.temperature[k, 0]), float(run.temperature[k, 1]), int(run.years[k]))
    trimmed = ScenarioRun(run.years[: k + 1], run.masses[: k + 1], run.m_eq[: k + 1], run.temperature[: k + 1],
                          run.forcing[: k + 1], run.emissions[:k], run.reservoir_names,
                          {**run.meta, "experiment": "spinup", "target_ppm": target_ppm,
                           "gtc_per_ppm": gtc_per_ppm, "stop_year": int(run.years[k])})
    return SpinUp(CycleState(run.masses[k], int(run.years[k])), temp, final, int(run.years[k]), trimmed)


# ----------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    return f"{v:.10g}"


def write_run(run: ScenarioRun, directory) -> Path:
    """Write ``masses.csv``, ``temperature.csv``, ``forcing.csv`` and ``meta.yaml``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "masses.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", *(f"m_{s}" for s in run.reservoir_names), *(f"m_eq_{s}" for s in run.reservoir_names)])
        for y, m, q in zip(run.years, run.masses, run.m_eq):
            w.writerow([int(y), *map(_fmt, m), *map(_fmt, q)])
    with open(d / "temperature.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "T_atm", "T_ocean"])
        for y, (a, o) in zip(run.years, run.temperature):
            w.writerow([int(y), _fmt(a), _fmt(o)])
    with open(d / "forcing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "forcing_wm2"])
        for y, f in zip(run.years, run.forcing):
            w.writerow([int(y), _fmt(f)])
    meta = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in run.meta.items()}
    meta["reservoirs"] = list(run.reservoir_names)
    meta["mass_balance_error"] = float(run.mass_balance_error())
    with open(d / "meta.yaml", "w") as fh:
        yaml.safe_dump(_plain(meta), fh, sort_keys=True)
    return d


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else str(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
