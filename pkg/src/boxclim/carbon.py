"""Linear multi-reservoir carbon-cycle operators.

A carbon-cycle emulator is the annual difference equation

    m_{t+1} = m_t + A m_t + e_t

where ``m_t`` holds the carbon mass (GtC) of each reservoir.  The transfer
operator ``A`` is generated from a handful of strictly lower-triangular rates
``a_ij`` and a vector of equilibrium masses ``m_eq``.  The upper-triangular
mirror entries follow from detailed balance at equilibrium and the diagonal
from column-wise mass conservation, so that ``1^T A = 0`` and ``A m_eq = 0``.

The land-capacity variant (4PR-X) lowers the land equilibrium mass by the
land-use emission of each year and rebuilds the operator before stepping.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CapacityExhausted,
    ConfigError,
    InadmissibleSpectrum,
    NegativeMassWarning,
    TopologyMismatch,
)

ATMOSPHERE = "A"
PI_ATMOSPHERE_GTC = 589.0

IMAG_TOL = 1e-10
RANGE_TOL = 1e-9
COLSUM_TOL = 1e-12
NULLSPACE_TOL = 1e-10

Pair = tuple[int, int]


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Topology:
    """Reservoir labels and the set of nonzero lower-triangular transfer positions.

    Reservoir kinds are read from the label: ``A`` is the atmosphere, labels
    starting with ``O`` are ocean layers and labels starting with ``L`` are
    land-biosphere pools.
    """

    reservoir_names: tuple[str, ...]
    transfer_pairs: tuple[Pair, ...]

    def __post_init__(self):
        names = tuple(self.reservoir_names)
        pairs = tuple(tuple(int(v) for v in p) for p in self.transfer_pairs)
        object.__setattr__(self, "reservoir_names", names)
        object.__setattr__(self, "transfer_pairs", pairs)
        n = len(names)
        if names.count(ATMOSPHERE) != 1:
            raise ConfigError("atmosphere 'A' must appear exactly once", "reservoirs")
        if len(set(names)) != n:
            raise ConfigError("reservoir labels must be unique", "reservoirs")
        if not 1 <= len(pairs) <= n * (n - 1) // 2 or len(set(pairs)) != len(pairs):
            raise ConfigError("invalid number of transfer pairs", "transfers")
        for i, j in pairs:
            if not (0 <= j < i < n):
                raise ConfigError(f"pair {(i, j)} is not strictly lower triangular", "transfers")
        # connectivity from the atmosphere
        adj = {k: set() for k in range(n)}
        for i, j in pairs:
            adj[i].add(j)
            adj[j].add(i)
        seen, stack = set(), [self.atmosphere_index]
        while stack:
            k = stack.pop()
            if k not in seen:
                seen.add(k)
                stack.extend(adj[k] - seen)
        if len(seen) != n:
            raise ConfigError("every reservoir must be reachable from the atmosphere", "transfers")

    @classmethod
    def from_labels(cls, names: Sequence[str], pairs: Iterable[tuple[str, str]]) -> "Topology":
        """Build from ``(to, from)`` label pairs, e.g. ``("O1", "A")``."""
        idx = {name: k for k, name in enumerate(names)}
        try:
            return cls(tuple(names), tuple((idx[to], idx[frm]) for to, frm in pairs))
        except KeyError as exc:
            raise ConfigError(f"unknown reservoir {exc.args[0]!r}", "transfers") from None

    @property
    def n(self) -> int:
        return len(self.reservoir_names)

    @property
    def atmosphere_index(self) -> int:
        return self.reservoir_names.index(ATMOSPHERE)

    @property
    def ocean_indices(self) -> tuple[int, ...]:
        return tuple(k for k, s in enumerate(self.reservoir_names) if s.startswith("O"))

    @property
    def land_indices(self) -> tuple[int, ...]:
        return tuple(k for k, s in enumerate(self.reservoir_names) if s.startswith("L"))

    @property
    def land_index(self) -> int | None:
        land = self.land_indices
        return land[0] if land else None

    def label(self, pair: Pair) -> str:
        i, j = pair
        return f"{self.reservoir_names[j]}->{self.reservoir_names[i]}"


TOPOLOGY_3SR = Topology(("A", "O1", "O2"), ((1, 0), (2, 1)))
TOPOLOGY_4PR = Topology(("A", "O1", "O2", "L"), ((1, 0), (2, 1), (3, 0)))


@dataclass(frozen=True)
class OperatorParams:
    """Generating parameters: lower-triangular rates (1/yr) and equilibrium masses (GtC)."""

    a: Mapping[Pair, float]
    m_eq: np.ndarray

    def __post_init__(self):
        a = {tuple(int(v) for v in k): float(r) for k, r in dict(self.a).items()}
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "m_eq", _frozen(self.m_eq))
        if not np.all(self.m_eq > 0) or not np.all(np.isfinite(self.m_eq)):
            raise ConfigError("equilibrium masses must be finite and positive", "m_eq")
        for k, r in a.items():
            if not (r > 0 and np.isfinite(r)):
                raise ConfigError(f"rate for {k} must be positive", "transfers")

    def rates(self, topology: Topology) -> np.ndarray:
        return np.array([self.a[p] for p in topology.transfer_pairs])

    def with_m_eq(self, m_eq) -> "OperatorParams":
        return OperatorParams(self.a, m_eq)

    def scaled(self, c: float) -> "OperatorParams":
        return OperatorParams({k: c * v for k, v in self.a.items()}, self.m_eq)


@dataclass(frozen=True)
class Operator:
    """A validated transfer matrix together with the parameters it came from."""

    matrix: np.ndarray
    m_eq: np.ndarray
    params: OperatorParams | None = None
    topology: Topology | None = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        object.__setattr__(self, "m_eq", _frozen(self.m_eq))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def plus_identity(self) -> np.ndarray:
        return self.matrix + np.eye(self.n)


@dataclass(frozen=True)
class CycleState:
    masses: np.ndarray
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "masses", _frozen(self.masses))


@dataclass(frozen=True)
class LandCapacityRule:
    """Land-use emissions lower the land equilibrium mass by ``r`` per GtC released."""

    r: float = 1.0
    land_reservoir_index: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ConfigError("deforestation fraction r must lie in [0, 1]", "land_rule.r")


def operator_matrix(rates: np.ndarray, m_eq: np.ndarray, pairs: Sequence[Pair]) -> np.ndarray:
    """Assemble the transfer matrix without any admissibility checks."""
    n = len(m_eq)
    A = np.zeros((n, n))
    for (i, j), r in zip(pairs, rates):
        A[i, j] = r
        A[j, i] = r * m_eq[j] / m_eq[i]
    A[np.diag_indices(n)] = -(A.sum(axis=0))
    return A


def spectrum_ok(A: np.ndarray) -> bool:
    lam = np.linalg.eigvals(A)
    return bool(
        np.all(np.abs(lam.imag) <= IMAG_TOL)
        and np.all(lam.real > -1.0 + RANGE_TOL)
        and np.all(lam.real <= RANGE_TOL)
    )


def build_operator(params: OperatorParams, topology: Topology) -> Operator:
    """Construct the mass-conserving operator with ``A m_eq = 0``.

    Raises
    ------
    TopologyMismatch
        If the rate keys differ from the topology's transfer pairs.
    InadmissibleSpectrum
        If an eigenvalue is complex, positive or at most -1.
    """
    if set(params.a) != set(topology.transfer_pairs):
        raise TopologyMismatch(
            f"rate keys {sorted(params.a)} do not match topology pairs {sorted(topology.transfer_pairs)}"
        )
    if len(params.m_eq) != topology.n:
        raise TopologyMismatch(f"m_eq has {len(params.m_eq)} entries for {topology.n} reservoirs")
    A = operator_matrix(params.rates(topology), params.m_eq, topology.transfer_pairs)
    if not spectrum_ok(A):
        raise InadmissibleSpectrum(f"eigenvalues {np.linalg.eigvals(A)} outside (-1, 0]")
    return Operator(A, params.m_eq, params, topology)


def eigenvalues(op: Operator | np.ndarray) -> np.ndarray:
    A = op.matrix if isinstance(op, Operator) else np.asarray(op)
    return np.linalg.eigvals(A)


def timescales(op: Operator | np.ndarray) -> list[float]:
    """Return ``1/|lambda|`` for the nonzero eigenvalues, longest first.

    The conservative operator always has one zero eigenvalue (the equilibrium
    direction); the eigenvalue closest to zero is treated as that mode and
    left out.
    """
    lam = np.sort(np.abs(eigenvalues(op).real))
    return sorted((1.0 / v for v in lam[1:]), reverse=True)


@dataclass
class ValidationReport:
    column_sums_zero: bool
    equilibrium_null: bool
    eigenvalues_real: bool
    eigenvalues_in_range: bool
    eigenvalues: np.ndarray
    max_column_sum: float
    null_residual: float

    @property
    def ok(self) -> bool:
        return all(
            (self.column_sums_zero, self.equilibrium_null, self.eigenvalues_real, self.eigenvalues_in_range)
        )

    def lines(self) -> list[str]:
        def tag(flag):
            return "PASS" if flag else "FAIL"

        return [
            f"{tag(self.column_sums_zero)} column sums zero (max |sum| = {self.max_column_sum:.3e})",
            f"{tag(self.equilibrium_null)} A m_eq = 0 (residual = {self.null_residual:.3e})",
            f"{tag(self.eigenvalues_real)} eigenvalues real",
            f"{tag(self.eigenvalues_in_range)} eigenvalues in (-1, 0]",
        ]


def validate_operator(op: Operator | np.ndarray, m_eq=None) -> ValidationReport:
    """Run the four admissibility checks without raising."""
    if isinstance(op, Operator):
        A, m = op.matrix, op.m_eq
    else:
        A = np.atleast_2d(np.asarray(op, dtype=float))
        m = np.ones(A.shape[0]) if m_eq is None else np.asarray(m_eq, dtype=float)
    lam = np.linalg.eigvals(A)
    colsum = float(np.max(np.abs(A.sum(axis=0))))
    resid = float(np.linalg.norm(A @ m))
    return ValidationReport(
        column_sums_zero=colsum <= COLSUM_TOL * max(1.0, float(np.max(np.abs(A)))),
        equilibrium_null=resid <= NULLSPACE_TOL * float(np.linalg.norm(m)),
        eigenvalues_real=bool(np.all(np.abs(lam.imag) <= IMAG_TOL)),
        eigenvalues_in_range=bool(np.all(lam.real > -1.0 + RANGE_TOL) and np.all(lam.real <= RANGE_TOL)),
        eigenvalues=lam,
        max_column_sum=colsum,
        null_residual=resid,
    )


def step(state: CycleState, op: Operator, emissions) -> CycleState:
    """Advance one year: ``m_{t+1} = m_t + A m_t + e_t``.

    Negative masses trigger a :class:`NegativeMassWarning` and are kept as is.
    """
    e = np.asarray(emissions, dtype=float)
    if e.shape != state.masses.shape:
        raise ConfigError(f"emission vector must have length {state.masses.size}", "emissions")
    m = state.masses + op.matrix @ state.masses + e
    if np.any(m < 0):
        warnings.warn(f"negative reservoir mass at t={state.t + 1}: {m}", NegativeMassWarning, stacklevel=2)
    return CycleState(m, state.t + 1)


def update_land_equilibrium(
    params: OperatorParams, land_use_emission: float, rule: LandCapacityRule, topology: Topology | None = None
) -> OperatorParams:
    """Lower the land equilibrium by ``r * e_L``; the caller rebuilds the operator."""
    k = rule.land_reservoir_index
    if k is None:
        if topology is None or topology.land_index is None:
            raise TopologyMismatch("land-capacity rule needs a land reservoir")
        k = topology.land_index
    m = np.array(params.m_eq)
    m[k] -= rule.r * land_use_emission
    if m[k] <= 0:
        raise CapacityExhausted(f"land equilibrium exhausted ({m[k]:.3f} GtC)")
    return params.with_m_eq(m)


@dataclass(frozen=True)
class Emulator:
    """A named calibrated carbon cycle: topology, parameters, optional land rule.

    ``rate_scale`` multiplies every transfer rate; it is how the
    alpha-weighted family is represented (each member is a scalar multiple of
    the mean operator).
    """

    name: str
    topology: Topology
    params: OperatorParams
    land_rule: LandCapacityRule | None = None
    c_plus: float | None = None
    c_minus: float | None = None
    background: str = "PI"
    rate_scale: float = 1.0

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def m_eq(self) -> np.ndarray:
        return self.params.m_eq

    @property
    def time_dependent(self) -> bool:
        return self.land_rule is not None

    def operator(self, m_eq=None) -> Operator:
        p = self.params if m_eq is None else self.params.with_m_eq(m_eq)
        if self.rate_scale != 1.0:
            p = p.scaled(self.rate_scale)
        return build_operator(p, self.topology)

    def with_params(self, params: OperatorParams) -> "Emulator":
        return replace(self, params=params)

    def weighted(self, alpha: float) -> "Emulator":
        """Member of the alpha-weighted family (alpha > 0 slower, alpha < 0 faster uptake)."""
        if not -1.0 <= alpha <= 1.0:
            raise ConfigError("alpha must lie in [-1, 1]", "alpha")
        if alpha == 0:
            return replace(self, rate_scale=1.0)
        if alpha > 0:
            if self.c_plus is None:
                raise ConfigError("c_plus is required for alpha > 0", "c_plus")
            s = (1 - alpha) + alpha * self.c_plus
        else:
            if self.c_minus is None:
                raise ConfigError("c_minus is required for alpha < 0", "c_minus")
            s = (1 + alpha) - alpha * self.c_minus
        return replace(self, rate_scale=s)


@dataclass
class Trajectory:
    """Result of :func:`simulate`: ``horizon + 1`` rows including the initial state."""

    masses: np.ndarray
    m_eq: np.ndarray
    negative_mass_years: list[int] = field(default_factory=list)

    @property
    def atmosphere(self) -> np.ndarray:
        return self.masses[:, 0]


def operator_path(emulator: Emulator, land_use: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-year matrices ``A_t`` and equilibria for the land-capacity variant.

    Row ``t`` of the returned stack is the operator used to go from year t to
    t+1, built from the equilibrium after applying year t's land-use release.
    """
    land_use = np.asarray(land_use, dtype=float)
    T = len(land_use)
    mats = np.empty((T, emulator.n, emulator.n))
    eqs = np.empty((T + 1, emulator.n))
    params = emulator.params
    eqs[0] = params.m_eq
    for t in range(T):
        if emulator.land_rule is not None and land_use[t] != 0.0:
            params = update_land_equilibrium(params, land_use[t], emulator.land_rule, emulator.topology)
        eqs[t + 1] = params.m_eq
        mats[t] = emulator.with_params(params).operator().matrix
    return mats, eqs


def simulate(emulator, m0, emissions, horizon: int | None = None, land_use=None) -> Trajectory:
    """Roll the carbon cycle forward.

    Parameters
    ----------
    emulator : Operator or Emulator
        A fixed operator, or an emulator (time dependent when it carries a
        land-capacity rule).
    m0 : CycleState or array
        Initial reservoir masses.
    emissions : array
        Either shape ``(T,)`` (all emissions enter the atmosphere) or
        ``(T, n)`` routed per reservoir.
    horizon : int, optional
        Number of steps; defaults to the length of ``emissions``.
    land_use : array, optional
        Land-use part of the atmospheric emissions, shape ``(T,)``, consumed
        by the land-capacity rule.  Ignored for fixed operators.

    Returns
    -------
    Trajectory
    """
    m = np.array(m0.masses if isinstance(m0, CycleState) else m0, dtype=float)
    n = m.size
    E = np.asarray(emissions, dtype=float)
    if E.ndim == 1:
        routed = np.zeros((E.size, n))
        routed[:, 0] = E
        E = routed
    T = E.shape[0] if horizon is None else int(horizon)
    if E.shape[0] < T:
        raise ConfigError(f"emission series covers {E.shape[0]} years, need {T}", "emissions")
    if isinstance(emulator, Operator):
        mats = np.broadcast_to(emulator.matrix, (T, n, n))
        eqs = np.broadcast_to(emulator.m_eq, (T + 1, n))
    elif emulator.time_dependent:
        lu = np.zeros(T) if land_use is None else np.asarray(land_use, dtype=float)[:T]
        mats, eqs = operator_path(emulator, lu)
    else:
        A = emulator.operator().matrix
        mats = np.broadcast_to(A, (T, n, n))
        eqs = np.broadcast_to(emulator.m_eq, (T + 1, n))
    out = np.empty((T + 1, n))
    out[0] = m
    if mats.strides[0] == 0:  # one fixed matrix
        A = mats[0] if T else None
        for t in range(T):
            m = m + A @ m + E[t]
            out[t + 1] = m
    else:
        for t in range(T):
            m = m + mats[t] @ m + E[t]
            out[t + 1] = m
    negative = [int(k) + 1 for k in np.nonzero(np.any(out[1:] < 0, axis=1))[0]]
    if negative:
        warnings.warn(f"negative reservoir masses in {len(negative)} years", NegativeMassWarning, stacklevel=2)
    return Trajectory(out, np.array(eqs), negative)


# ----------------------------------------------------------------------------
# serialization


def emulator_from_document(doc: Mapping) -> Emulator:
    """Build an :class:`Emulator` from a parsed key-value document."""
    try:
        names = list(doc["reservoirs"])
        transfers = list(doc["transfers"])
        m_eq = [float(v) for v in doc["m_eq"]]
    except KeyError as exc:
        raise ConfigError("missing key", str(exc.args[0])) from None
    topo = Topology.from_labels(names, [(t["to"], t["from"]) for t in transfers])
    idx = {s: k for k, s in enumerate(names)}
    a = {(idx[t["to"]], idx[t["from"]]): float(t["rate"]) for t in transfers}
    rule = None
    if doc.get("land_rule") is not None:
        rule = LandCapacityRule(float(doc["land_rule"].get("r", 1.0)))
        if topo.land_index is None:
            raise ConfigError("land_rule requires a land reservoir", "land_rule")
    return Emulator(
        name=str(doc.get("name", "custom")),
        topology=topo,
        params=OperatorParams(a, m_eq),
        land_rule=rule,
        c_plus=None if doc.get("c_plus") is None else float(doc["c_plus"]),
        c_minus=None if doc.get("c_minus") is None else float(doc["c_minus"]),
        background=str(doc.get("background", "PI")),
    )


def emulator_to_document(em: Emulator) -> dict:
    names = em.topology.reservoir_names
    doc = {
        "name": em.name,
        "background": em.background,
        "reservoirs": list(names),
        "transfers": [
            {"to": names[i], "from": names[j], "rate": float(em.params.a[(i, j)])}
            for i, j in em.topology.transfer_pairs
        ],
        "m_eq": [float(v) for v in em.params.m_eq],
    }
    if em.c_plus is not None:
        doc["c_plus"] = float(em.c_plus)
    if em.c_minus is not None:
        doc["c_minus"] = float(em.c_minus)
    if em.land_rule is not None:
        doc["land_rule"] = {"r": float(em.land_rule.r)}
    return doc


def export_operator_csv(op: Operator, path, with_identity: bool = False) -> None:
    """Write the matrix with 6 significant digits; optionally as ``A + I``."""
    M = op.plus_identity() if with_identity else op.matrix
    labels = op.topology.reservoir_names if op.topology else [f"r{k}" for k in range(op.n)]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["", *labels])
        for name, row in zip(labels, M):
            w.writerow([name, *(f"{v:.6g}" for v in row)])
