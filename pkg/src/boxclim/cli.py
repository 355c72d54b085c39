"""Command-line entry point: ``boxclim <command> [options]``.

Settings come from an optional YAML file (``--config``) and are overridden
by flags; ``--set section.key=value`` reaches any key without a dedicated
flag.  Outputs go to ``<output>/<command>/`` where ``output`` is taken from
the flag, else ``$BOXCLIM_OUTPUT_DIR``, else the config file.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver
failure.  Failures also print a one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from . import __version__
from .calibration import Hyperparams, calibrate, objective, pulse_fraction_error
from .carbon import (TOPOLOGY_3SR, TOPOLOGY_4PR, Emulator, emulator_to_document, export_operator_csv,
                     timescales, validate_operator)
from .ebm import EbmParams
from .econ import (EconConfig, EconTrajectory, InitialState, run_ccs, scc, solve_bau, solve_optimal)
from .errors import BoxclimError, ConfigError, DataError
from .patterns import (KSDamageParams, aggregate_region, anchor_absolute, city_values, ks_damage,
                       load_pattern_library, reference_table)
from .presets import EMULATOR_NAMES, load_emulator
from .scenarios import (bundled_emissions, load_benchmark, load_emissions, run_pulse, run_rcp, run_zec,
                        spin_up_present_day, write_run)

OUTPUT_ENV = "BOXCLIM_OUTPUT_DIR"
COMMANDS = ("calibrate", "pulse", "zec", "rcp", "spinup", "econ-bau", "econ-opt", "econ-ccs",
            "scc", "pattern", "damages", "validate")

DEFAULTS: dict = {
    "emulator": "4PR",
    "background": "PI",
    "alpha": 0.0,
    "seed": 20240101,
    "output": "boxclim-out",
    "scenario": {
        "name": "RCP4.5", "file": None, "kappa": 1.2, "pulse": 100.0, "horizon": 500,
        "growth_rate": 0.01, "budget": 1000.0,
    },
    "spinup": {"scenario": "RCP8.5", "file": None, "target_ppm": 401.0, "gtc_per_ppm": 2.124,
               "start_year": None},
    "calibration": {"benchmark": None, "n_starts": 16, "rho1": 1e-2, "rho2": 1e-4, "rho3": None,
                    "T_fit": 250},
    "econ": {"emulators": None, "years": [2020, 2050, 2100], "params": {}},
    "pattern": {"manifest": None, "delta_T": 2.65, "models": None, "regions": None, "baseline_warming": 0.0},
    "damages": {"baseline": None, "future": None, "params": {}},
}


@dataclass
class RunConfig:
    """Resolved settings for one invocation."""

    emulator: str
    background: str
    alpha: float
    seed: int
    output: Path
    scenario: dict = field(default_factory=dict)
    spinup: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=dict)
    econ: dict = field(default_factory=dict)
    pattern: dict = field(default_factory=dict)
    damages: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, doc: Mapping) -> "RunConfig":
        merged = _merge(copy.deepcopy(DEFAULTS), dict(doc))
        unknown = set(merged) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}", "config")
        for block in ("scenario", "spinup", "calibration", "econ", "pattern", "damages"):
            extra = set(merged[block]) - set(DEFAULTS[block])
            if extra:
                raise ConfigError(f"unknown keys {sorted(extra)}", block)
        try:
            alpha = float(merged["alpha"])
        except (TypeError, ValueError):
            raise ConfigError("alpha must be a number", "alpha") from None
        if not -1.0 <= alpha <= 1.0:
            raise ConfigError("alpha must lie in [-1, 1]", "alpha")
        bg = str(merged["background"]).upper()
        if bg not in ("PI", "PD"):
            raise ConfigError("background must be PI or PD", "background")
        em = str(merged["emulator"])
        if em not in EMULATOR_NAMES and not Path(em).exists():
            raise ConfigError(f"emulator must be one of {EMULATOR_NAMES} or an existing file", "emulator")
        for key, where in ((merged["scenario"]["file"], "scenario.file"),
                           (merged["spinup"]["file"], "spinup.file"),
                           (merged["calibration"]["benchmark"], "calibration.benchmark"),
                           (merged["pattern"]["manifest"], "pattern.manifest")):
            if key is not None and not Path(key).exists():
                raise ConfigError(f"file not found: {key}", where)
        return cls(em, bg, alpha, int(merged["seed"]), Path(merged["output"]),
                   merged["scenario"], merged["spinup"], merged["calibration"], merged["econ"],
                   merged["pattern"], merged["damages"])

    def emulator_obj(self, name: str | None = None) -> Emulator:
        return load_emulator(name or self.emulator, self.background)


def _merge(base: dict, over: Mapping) -> dict:
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(base.get(k), dict):
            base[k] = _merge(base[k], v)
        else:
            base[k] = v
    return base


def _set_path(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = doc
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"cannot set {dotted}: {k} is not a section", dotted)
    cur[keys[-1]] = value


# ----------------------------------------------------------------------------
# argument parsing


FLAG_KEYS = {
    "emulator": "emulator", "background": "background", "alpha": "alpha", "seed": "seed",
    "scenario": "scenario.name", "scenario_file": "scenario.file", "kappa": "scenario.kappa",
    "pulse": "scenario.pulse", "horizon": "scenario.horizon", "growth_rate": "scenario.growth_rate",
    "budget": "scenario.budget", "target_ppm": "spinup.target_ppm", "benchmark": "calibration.benchmark",
    "n_starts": "calibration.n_starts", "years": "econ.years", "emulators": "econ.emulators",
    "manifest": "pattern.manifest", "delta_T": "pattern.delta_T", "baseline": "damages.baseline",
    "future": "damages.future",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file")
    common.add_argument("--output", help="output root directory")
    common.add_argument("--emulator", help="3SR, 4PR, 4PR-X or a calibration YAML file")
    common.add_argument("--background", help="PI or PD calibration")
    common.add_argument("--alpha", type=float, help="operator weight in [-1, 1]")
    common.add_argument("--seed", type=int)
    common.add_argument("--scenario", help="RCP2.6, RCP4.5, RCP6.0, RCP8.5")
    common.add_argument("--scenario-file", dest="scenario_file", help="emission CSV file")
    common.add_argument("--kappa", type=float, help="forcing multiplier")
    common.add_argument("--pulse", type=float, help="pulse size in GtC")
    common.add_argument("--horizon", type=int, help="simulation length in years")
    common.add_argument("--growth-rate", dest="growth_rate", type=float)
    common.add_argument("--budget", type=float, help="ZEC emission budget in GtC")
    common.add_argument("--target-ppm", dest="target_ppm", type=float)
    common.add_argument("--benchmark", help="benchmark manifest for calibrate")
    common.add_argument("--n-starts", dest="n_starts", type=int)
    common.add_argument("--years", type=int, nargs="+", help="report years for economic runs")
    common.add_argument("--emulators", nargs="+", help="emulators for economic runs")
    common.add_argument("--manifest", help="pattern library manifest")
    common.add_argument("--delta-T", dest="delta_T", type=float, help="global warming for pattern scaling")
    common.add_argument("--baseline", type=float, nargs="+", help="baseline temperatures for damages")
    common.add_argument("--future", type=float, nargs="+", help="future temperatures for damages")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. econ.params.psi2=0.003")

    parser = argparse.ArgumentParser(prog="boxclim", description="Linear box-model climate emulators.")
    parser.add_argument("--version", action="version", version=f"boxclim {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    helps = {
        "calibrate": "fit an emulator to a pulse-decay benchmark",
        "pulse": "100 GtC pulse-decay experiment",
        "zec": "zero-emissions commitment experiment",
        "rcp": "emission-driven scenario run",
        "spinup": "historical spin-up to the present-day state",
        "econ-bau": "planner with zero mitigation",
        "econ-opt": "planner with optimal mitigation",
        "econ-ccs": "planner with full abatement",
        "scc": "social cost of carbon along the optimal path",
        "pattern": "regional warming and absolute temperature",
        "damages": "local productivity damages",
        "validate": "admissibility checks on the operator",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    doc: dict = {}
    if args.config is not None:
        if not args.config.exists():
            raise ConfigError(f"config file not found: {args.config}", "config")
        try:
            doc = yaml.safe_load(args.config.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}", "config") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping", "config")
    env_out = os.environ.get(OUTPUT_ENV)
    if env_out:
        doc["output"] = env_out
    if args.output:
        doc["output"] = args.output
    for attr, key in FLAG_KEYS.items():
        val = getattr(args, attr, None)
        if val is not None:
            _set_path(doc, key, val)
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}", "set")
        k, v = item.split("=", 1)
        _set_path(doc, k.strip(), yaml.safe_load(v))
    return RunConfig.from_mapping(doc)


# ----------------------------------------------------------------------------
# reports


@dataclass
class ReportTable:
    title: str
    columns: list[str]
    rows: list[tuple[str, list[float]]]
    unit: str = ""
    decimals: int = 2


def write_report(tables: Sequence[ReportTable], path: str | Path | None = None) -> str:
    """Markdown summary with a "diff (1) & (3)" column (absolute and percent).

    The difference compares the third column with the first.  The text is a
    pure function of the tables, so identical inputs give identical bytes.
    """
    out: list[str] = []
    for tab in tables:
        out.append(f"## {tab.title}")
        out.append("")
        heads = [f"{c} ({k + 1})" for k, c in enumerate(tab.columns)]
        with_diff = len(tab.columns) >= 3
        head = ["Year / variable", *heads] + (["diff (1) & (3)"] if with_diff else [])
        out.append("| " + " | ".join(head) + " |")
        out.append("|" + "---|" * len(head))
        for label, vals in tab.rows:
            cells = [f"{v:.{tab.decimals}f}" for v in vals]
            if with_diff:
                d = vals[2] - vals[0]
                pct = 100.0 * d / vals[0] if vals[0] != 0 else float("nan")
                unit = f" {tab.unit}" if tab.unit else ""
                cells.append(f"{d:.{tab.decimals}f}{unit} ({pct:.2f}%)")
            out.append("| " + " | ".join([label, *cells]) + " |")
        out.append("")
    text = "\n".join(out)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def econ_tables(mode: str, runs: Mapping[str, EconTrajectory], years: Sequence[int],
                scc_values: Mapping[str, Mapping[int, float]] | None = None) -> list[ReportTable]:
    """Standard tables for a set of emulator runs keyed by emulator name."""
    names = list(runs)
    tabs = []

    def rows(fn, var):
        return [(f"{y} {var}", [fn(runs[n], y) for n in names]) for y in years]

    if mode in ("bau", "ccs", "optimal"):
        tabs.append(ReportTable(f"{mode}: atmospheric carbon and temperature", names,
                                rows(lambda r, y: r.at("masses", y), "m_A (GtC)")
                                + rows(lambda r, y: r.at("T", y), "T_A (degC)"), ""))
    if mode == "bau":
        tabs.append(ReportTable("bau: damages", names,
                                rows(lambda r, y: 100 * r.at("Omega", y), "Omega (p.p.)")
                                + rows(lambda r, y: r.at("D", y), "D (trillion USD)"), "", 4))
    if scc_values is not None:
        tabs.append(ReportTable("social cost of carbon (USD per tCO2)", names,
                                [(f"{y} SCC", [scc_values[n][y] for n in names]) for y in years], ""))
    return tabs


# ----------------------------------------------------------------------------
# command implementations


def _outdir(cfg: RunConfig, command: str) -> Path:
    d = cfg.output / command
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else (int(v) if isinstance(v, (int, np.integer)) else f"{v:.10g}")
                        for v in r])
    return path


def _dump_yaml(path: Path, doc) -> Path:
    from .scenarios import _plain

    with open(path, "w") as fh:
        yaml.safe_dump(_plain(doc), fh, sort_keys=True)
    return path


def _scenario_series(cfg: RunConfig):
    sc = cfg.scenario
    if sc["file"]:
        return load_emissions(sc["file"])
    return bundled_emissions(sc["name"])


def cmd_validate(cfg: RunConfig) -> int:
    d = _outdir(cfg, "validate")
    names = [cfg.emulator] if cfg.emulator not in EMULATOR_NAMES else list(EMULATOR_NAMES)
    lines, ok = [], True
    for name in names:
        em = cfg.emulator_obj(name)
        op = em.operator()
        rep = validate_operator(op)
        taus = timescales(op)
        ok &= rep.ok
        lines.append(f"[{em.name} {cfg.background}]")
        lines.extend(rep.lines())
        lines.append("timescales (yr): " + ", ".join(f"{t:.1f}" for t in taus))
        export_operator_csv(op, d / f"operator_{em.name}.csv")
        export_operator_csv(op, d / f"operator_{em.name}_plus_identity.csv", with_identity=True)
    text = "\n".join(lines) + "\n"
    (d / "validation.txt").write_text(text)
    print(text, end="")
    return 0 if ok else 4


def cmd_calibrate(cfg: RunConfig) -> int:
    from .data import data_path

    c = cfg.calibration
    path = c["benchmark"] or data_path("benchmarks", "joos2013_pd", "manifest.yaml")
    bench = load_benchmark(path)
    topo = {"3SR": TOPOLOGY_3SR, "4PR": TOPOLOGY_4PR}.get(cfg.emulator)
    if topo is None:
        raise ConfigError("calibrate needs emulator 3SR or 4PR", "emulator")
    kw = {"n_starts": int(c["n_starts"]), "seed": cfg.seed, "rho1": c["rho1"], "rho2": c["rho2"],
          "T_fit": int(c["T_fit"])}
    if c["rho3"] is not None:
        kw["rho3"] = c["rho3"]
    hyper = Hyperparams.for_topology(topo, **kw)
    res = calibrate(bench, topo, hyper)
    em = res.emulator(cfg.emulator, bench.background)
    d = _outdir(cfg, "calibrate")
    _dump_yaml(d / "calibration.yaml", emulator_to_document(em))
    op = em.operator()
    export_operator_csv(op, d / "operator.csv")
    diag = {"objective": res.objective, "fit_error": res.fit_error, "q1": res.q1, "q2": res.q2, "q3": res.q3,
            "timescales": timescales(op), "c_plus": res.c_plus, "c_minus": res.c_minus,
            "pulse_fraction_error_1_250": pulse_fraction_error(res.params, topo, bench),
            "benchmark": str(path), **res.diagnostics}
    try:
        ref = load_emulator(cfg.emulator, bench.background)
        diag["objective_at_reference"] = objective(ref.params, topo, bench, hyper)
    except BoxclimError:
        pass
    _dump_yaml(d / "diagnostics.yaml", diag)
    print(f"objective {res.objective:.6g}  timescales {', '.join(f'{t:.1f}' for t in timescales(op))}")
    return 0


def cmd_pulse(cfg: RunConfig) -> int:
    em = cfg.emulator_obj()
    if cfg.alpha:
        em = em.weighted(cfg.alpha)
    sc = cfg.scenario
    run = run_pulse(em, float(sc["pulse"]), int(sc["horizon"]), with_temperature=True)
    d = _outdir(cfg, "pulse")
    write_run(run, d)
    frac = run.meta["fraction"]
    _write_csv(d / "fraction.csv", ["year", "fraction"], zip(range(frac.size), frac))
    print(f"airborne fraction after 100 years: {frac[min(100, frac.size - 1)]:.4f}")
    return 0


def cmd_zec(cfg: RunConfig) -> int:
    em = cfg.emulator_obj()
    if cfg.alpha:
        em = em.weighted(cfg.alpha)
    sc = cfg.scenario
    run = run_zec(em, float(sc["growth_rate"]), float(sc["budget"]), int(sc["horizon"]))
    d = _outdir(cfg, "zec")
    write_run(run, d)
    print(f"emissions ceased in year {run.meta['cessation_year']}")
    return 0


def cmd_rcp(cfg: RunConfig) -> int:
    series = _scenario_series(cfg)
    run = run_rcp(cfg.emulator_obj(), series, alpha=cfg.alpha, kappa=float(cfg.scenario["kappa"]))
    d = _outdir(cfg, "rcp")
    write_run(run, d)
    k = int(np.searchsorted(run.years, 2100)) if run.years[-1] >= 2100 else -1
    print(f"{series.label}: T_A({int(run.years[k])}) = {run.temperature[k, 0]:.3f} degC")
    return 0


def _spinup(cfg: RunConfig, name: str):
    s = cfg.spinup
    hist = load_emissions(s["file"]) if s["file"] else bundled_emissions(s["scenario"])
    return spin_up_present_day(cfg.emulator_obj(name), hist, float(s["target_ppm"]), float(s["gtc_per_ppm"]),
                               start_year=s["start_year"])


def cmd_spinup(cfg: RunConfig) -> int:
    names = [cfg.emulator]
    if cfg.econ["emulators"]:
        names = list(cfg.econ["emulators"])
    d = _outdir(cfg, "spinup")
    rows = []
    for name in names:
        sp = _spinup(cfg, name)
        sub = d / sp.emulator.name
        write_run(sp.run, sub)
        _dump_yaml(sub / "initial_state.yaml", {
            "year": sp.year, "masses": dict(zip(sp.run.reservoir_names, sp.state.masses)),
            "m_eq": dict(zip(sp.run.reservoir_names, sp.m_eq)),
            "T_atm": sp.temperature.T_atm, "T_ocean": sp.temperature.T_ocean})
        rows.append([sp.emulator.name, sp.year, *sp.state.masses])
        print(f"{sp.emulator.name}: year {sp.year}, masses "
              + ", ".join(f"{v:.1f}" for v in sp.state.masses))
    width = max(len(r) for r in rows)
    _write_csv(d / "initial_states.csv", ["emulator", "year"] + [f"m{k}" for k in range(width - 2)],
               [r + [""] * (width - len(r)) for r in rows])
    return 0


def _econ_names(cfg: RunConfig) -> list[str]:
    return list(cfg.econ["emulators"] or [cfg.emulator])


def _econ_run(cfg: RunConfig, mode: str):
    econ_cfg = EconConfig.from_mapping(cfg.econ["params"])
    runs, models = {}, {}
    for name in _econ_names(cfg):
        sp = _spinup(cfg, name)
        init = InitialState(econ_cfg.K0, sp.state.masses, sp.temperature.T_atm, sp.temperature.T_ocean)
        solver = {"bau": solve_bau, "optimal": solve_optimal, "ccs": run_ccs}[mode]
        traj = solver(econ_cfg, sp.emulator, init)
        runs[name] = traj
        models[name] = (sp.emulator, init)
    return econ_cfg, runs, models


def write_econ_csv(traj: EconTrajectory, path: Path) -> Path:
    H = len(traj.s)
    names = [f"m_{k}" for k in range(traj.masses.shape[1])]
    head = ["year", "K", "C", "s", "mu", "Y_gross", "Y_net", "Omega", "D", "Theta", "emissions",
            *names, "T_atm", "T_ocean", "scc_adjoint"]
    rows = []
    for t in range(H):
        rows.append([int(traj.years[t]), traj.K[t], traj.C[t], traj.s[t], traj.mu[t], traj.Y_gross[t],
                     traj.Y_net[t], traj.Omega[t], traj.D[t], traj.Theta[t], traj.emissions[t],
                     *traj.masses[t], traj.T[t, 0], traj.T[t, 1], traj.scc_adjoint(int(traj.years[t]))])
    return _write_csv(path, head, rows)


def _cmd_econ(cfg: RunConfig, mode: str, command: str, with_scc: bool = False) -> int:
    econ_cfg, runs, models = _econ_run(cfg, mode)
    d = _outdir(cfg, command)
    years = [int(y) for y in cfg.econ["years"]]
    scc_values = None
    if with_scc:
        scc_values = {}
        for name, traj in runs.items():
            em, init = models[name]
            scc_values[name] = {y: scc(econ_cfg, em, traj, y, init) for y in years}
    status = 0
    diag = {}
    for name, traj in runs.items():
        write_econ_csv(traj, d / f"econ_{name}.csv")
        diag[name] = {k: v for k, v in traj.diagnostics.items()}
        diag[name]["welfare"] = traj.welfare
        if not traj.diagnostics.get("converged", False):
            status = 4
    _dump_yaml(d / "diagnostics.yaml", diag)
    if scc_values is not None:
        _write_csv(d / "scc.csv", ["emulator", "year", "scc_fd", "scc_adjoint"],
                   [[n, y, v, runs[n].scc_adjoint(y)] for n, vals in scc_values.items() for y, v in vals.items()])
    text = write_report(econ_tables(mode, runs, years, scc_values), d / "report.md")
    print(text, end="")
    if status:
        print(json.dumps({"error": "SolverNotConverged", "exit_code": 4,
                          "message": "projected gradient above tolerance"}), file=sys.stderr)
    return status


def cmd_pattern(cfg: RunConfig) -> int:
    p = cfg.pattern
    lib = load_pattern_library(p["manifest"])
    if lib.regions is None:
        raise DataError("pattern manifest lists no region polygons")
    models = list(p["models"] or lib.ensemble())
    regions = lib.regions if not p["regions"] else lib.regions.subset(p["regions"])
    d = _outdir(cfg, "pattern")
    dT = float(p["delta_T"])
    rows = []
    per_model = {m: aggregate_region(lib.patterns[m], regions, _mask_for(lib, lib.patterns[m])) for m in models}
    for acr in regions.acronyms:
        vals = [per_model[m][acr] for m in models]
        rows.append([acr, *vals, min(vals), max(vals)])
    _write_csv(d / "regional_beta.csv", ["acronym", *models, "min", "max"], rows)
    if lib.baseline is not None:
        shift = dT - float(p["baseline_warming"])
        trows = []
        for m in models:
            fld = anchor_absolute(lib.baseline, shift, lib.patterns[m])
            means = aggregate_region(fld, regions, _mask_for(lib, fld))
            trows.extend([m, a, v] for a, v in means.items())
        _write_csv(d / "regional_t_abs.csv", ["model", "acronym", "t_abs"], trows)
    print(f"wrote regional patterns for {len(models)} models and {len(regions.acronyms)} regions")
    return 0


def _mask_for(lib, fld):
    if lib.land_mask is not None and lib.land_mask.shape == fld.shape:
        return lib.land_mask
    return None


def cmd_damages(cfg: RunConfig) -> int:
    dm = cfg.damages
    params = KSDamageParams(**dm["params"])
    d = _outdir(cfg, "damages")
    if dm["baseline"] is not None:
        base = np.atleast_1d(np.asarray(dm["baseline"], dtype=float))
        fut = np.atleast_1d(np.asarray(dm["future"] if dm["future"] is not None else base, dtype=float))
        if base.shape != fut.shape:
            raise ConfigError("baseline and future must have equal length", "damages.future")
        _write_csv(d / "damages.csv", ["baseline", "future", "damage"],
                   zip(base, fut, np.atleast_1d(ks_damage(fut, base, params))))
        print(f"wrote {base.size} damage values")
        return 0
    lib = load_pattern_library(cfg.pattern["manifest"])
    if lib.baseline is None:
        raise DataError("pattern manifest lists no baseline climatology")
    cities = reference_table("city_temperatures")
    shift = float(cfg.pattern["delta_T"]) - float(cfg.pattern["baseline_warming"])
    base = city_values(lib.baseline, cities)
    rows = []
    for m in cfg.pattern["models"] or lib.ensemble():
        fut = city_values(anchor_absolute(lib.baseline, shift, lib.patterns[m]), cities)
        rows.extend([m, c, base[c], fut[c], ks_damage(fut[c], base[c], params)] for c in base)
    _write_csv(d / "city_damages.csv", ["model", "city", "baseline", "future", "damage"], rows)
    print(f"wrote damages for {len(cities)} cities")
    return 0


HANDLERS = {
    "calibrate": cmd_calibrate, "pulse": cmd_pulse, "zec": cmd_zec, "rcp": cmd_rcp, "spinup": cmd_spinup,
    "econ-bau": lambda c: _cmd_econ(c, "bau", "econ-bau"),
    "econ-opt": lambda c: _cmd_econ(c, "optimal", "econ-opt"),
    "econ-ccs": lambda c: _cmd_econ(c, "ccs", "econ-ccs"),
    "scc": lambda c: _cmd_econ(c, "optimal", "scc", with_scc=True),
    "pattern": cmd_pattern, "damages": cmd_damages, "validate": cmd_validate,
}


def dispatch(command: str, cfg: RunConfig) -> int:
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}", "command")
    return HANDLERS[command](cfg)


def _error_record(exc: BoxclimError) -> str:
    rec = {"error": type(exc).__name__, "exit_code": exc.exit_code, "message": str(exc)}
    fld = getattr(exc, "field", None)
    if fld:
        rec["field"] = fld
    return json.dumps(rec, sort_keys=True)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return 0 if exc.code in (None, 0) else int(exc.code)
    try:
        cfg = resolve_config(args)
        return dispatch(args.command, cfg)
    except BoxclimError as exc:
        print(_error_record(exc), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
