"""DICE-2016-style planner coupled to a carbon-cycle emulator and the two-layer EBM.

The planner maximises discounted CRRA utility of per-capita consumption
subject to the capital budget identity, the carbon cycle and the energy
balance model.  The infinite-horizon problem is truncated at ``horizon``
years and the terminal capital stock is valued with a constant-savings
continuation.  Controls are the gross savings rate ``s_t`` (share of net
output invested) and the mitigation rate ``mu_t``, both boxed in [0, 1]:

    Y_t   = K_t^alpha (A_t L_t)^(1-alpha)
    C_t   = (1 - s_t) (1 - Theta(mu_t) - Omega(T_t)) Y_t
    K_t+1 = (1 - delta) K_t + s_t (1 - Theta - Omega) Y_t
    e_t   = sigma_t Y_t (1 - mu_t) + E_land_t

Gradients come from a hand-written adjoint pass, so the same costates give
the social cost of carbon as a cross-check on the finite-difference value.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping

import numpy as np
from scipy import optimize

from .carbon import PI_ATMOSPHERE_GTC, Emulator, operator_path
from .ebm import KAPPA_RCP, EbmParams
from .errors import ConfigError, SolverNotConverged, StepSizeUnstable

GTCO2_PER_GTC = 3.664


@dataclass(frozen=True)
class EconConfig:
    """Planner parameters; defaults are the annualised DICE-2016 calibration.

    Exogenous paths are generated from the DICE-2016 growth laws (stated per
    five-year period there and converted to annual steps here).  Any path can
    be replaced through ``overrides``, a mapping from path name to an array
    of at least ``horizon + 1`` values.
    """

    start_year: int = 2015
    horizon: int = 400
    rho: float = 0.015           # pure rate of time preference, beta = 1 / (1 + rho)
    psi: float = 1 / 1.45        # intertemporal elasticity of substitution
    alpha_cap: float = 0.3
    delta: float = 0.1
    psi1: float = 0.0
    psi2: float = 0.00236
    theta2: float = 2.6
    K0: float = 223.0            # trillion USD
    # population (millions in DICE; used here in billions)
    pop0: float = 7403.0
    pop_asym: float = 11500.0
    pop_adj: float = 0.134       # per five years
    # total factor productivity (DICE Hicks-neutral form)
    tfp0: float = 5.115
    tfp_g0: float = 0.076        # per five years
    tfp_decline: float = 0.005   # per year
    # emission intensity
    e0: float = 35.85            # GtCO2/yr industrial emissions in the start year
    q0: float = 105.5            # trillion USD gross output in the start year
    mu0: float = 0.03            # mitigation rate in the start year (for sigma0 only)
    sigma_g0: float = -0.0152    # per year
    sigma_decline: float = -0.001
    # land-use emissions
    eland0: float = 2.6          # GtCO2/yr
    eland_decline: float = 0.115  # per five years
    # backstop technology
    pback: float = 550.0         # USD per tCO2
    gback: float = 0.025         # per five years
    kappa: float = KAPPA_RCP
    m0_atm: float = PI_ATMOSPHERE_GTC
    terminal_savings: float | None = None
    overrides: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigError("rho must be positive (0 < beta < 1)", "econ.rho")
        if not self.psi > 0 or self.psi == 1:
            raise ConfigError("psi must be positive and different from 1", "econ.psi")
        if not 0 < self.alpha_cap < 1:
            raise ConfigError("capital share must lie in (0, 1)", "econ.alpha_cap")
        if not 0 <= self.delta <= 1:
            raise ConfigError("depreciation must lie in [0, 1]", "econ.delta")
        if self.horizon < 20:
            raise ConfigError("horizon must be at least 20 years", "econ.horizon")
        for key, val in self.overrides.items():
            if key not in PATH_NAMES:
                raise ConfigError(f"unknown exogenous path {key!r}", "econ.overrides")
            if len(val) < self.horizon + 1:
                raise ConfigError(f"path {key} shorter than horizon + 1", "econ.overrides")

    @property
    def beta(self) -> float:
        return 1.0 / (1.0 + self.rho)

    @property
    def savings_bar(self) -> float:
        """Long-run optimal savings rate used for the terminal continuation."""
        if self.terminal_savings is not None:
            return self.terminal_savings
        eta = 1.0 / self.psi
        return (self.delta + 0.004) / (self.delta + 0.004 * eta + self.rho) * self.alpha_cap

    def with_damages(self, factor: float) -> "EconConfig":
        return replace(self, psi1=self.psi1 * factor, psi2=self.psi2 * factor)

    @classmethod
    def from_mapping(cls, doc: Mapping | None) -> "EconConfig":
        doc = dict(doc or {})
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "econ")
        if "overrides" in doc:
            doc["overrides"] = {k: tuple(float(x) for x in v) for k, v in doc["overrides"].items()}
        return cls(**doc)

    def to_mapping(self) -> dict:
        d = asdict(self)
        d["overrides"] = {k: list(v) for k, v in self.overrides.items()}
        return d


PATH_NAMES = ("L", "A", "sigma", "E_land", "theta1")


def exogenous_paths(cfg: EconConfig) -> dict[str, np.ndarray]:
    """Annual labour (billions), labour-augmenting TFP, emission intensity
    (GtC per trillion USD), land-use emissions (GtC/yr) and the abatement
    cost coefficient for ``t = 0..horizon``."""
    H = cfg.horizon
    t = np.arange(H + 1)
    a = cfg.alpha_cap
    # population: L_{t+1} = L_t (L_inf / L_t)^adj, annualised
    adj = 1.0 - (1.0 - cfg.pop_adj) ** (1 / 5)
    L = np.empty(H + 1)
    L[0] = cfg.pop0
    for k in range(H):
        L[k + 1] = L[k] * (cfg.pop_asym / L[k]) ** adj
    L /= 1000.0
    # TFP: A_{t+1} = A_t / (1 - g_t)^(1/5) with g_t = g0 exp(-decline t)
    g = cfg.tfp_g0 * np.exp(-cfg.tfp_decline * t[:-1])
    tfp = cfg.tfp0 * np.concatenate([[1.0], np.cumprod((1.0 - g) ** (-1 / 5))])
    A = tfp ** (1.0 / (1.0 - a))
    # emission intensity: sigma_{t+1} = sigma_t exp(g_sigma_t), g_sigma_t = g0 (1 + d)^t
    sig0 = cfg.e0 / (cfg.q0 * (1.0 - cfg.mu0))  # GtCO2 per trillion USD
    gs = cfg.sigma_g0 * (1.0 + cfg.sigma_decline) ** t[:-1]
    sigma_co2 = sig0 * np.exp(np.concatenate([[0.0], np.cumsum(gs)]))
    sigma = sigma_co2 / GTCO2_PER_GTC
    E_land = cfg.eland0 * (1.0 - cfg.eland_decline) ** (t / 5.0) / GTCO2_PER_GTC
    pb = cfg.pback * (1.0 - cfg.gback) ** (t / 5.0)
    theta1 = pb * sigma_co2 / cfg.theta2 / 1000.0
    paths = {"L": L, "A": A, "sigma": sigma, "E_land": E_land, "theta1": theta1}
    for key, val in cfg.overrides.items():
        paths[key] = np.asarray(val, dtype=float)[: H + 1]
    return paths


# ----------------------------------------------------------------------------
# building blocks


def gross_output(K, A, L, alpha_cap):
    return K**alpha_cap * (A * L) ** (1.0 - alpha_cap)


def damage_share(T_atm, psi1, psi2):
    return psi1 * T_atm + psi2 * T_atm**2


def damage_level(Omega, K, A, L, alpha_cap=0.3):
    return Omega * gross_output(K, A, L, alpha_cap)


def emissions_rule(sigma_t, Y_gross, mu_t, E_land_t):
    return sigma_t * Y_gross * (1.0 - mu_t) + E_land_t


def abatement_cost(mu, theta1_t, theta2):
    return theta1_t * np.power(mu, theta2)


# ----------------------------------------------------------------------------
# model instance


@dataclass
class InitialState:
    K: float
    masses: np.ndarray
    T_atm: float
    T_ocean: float


@dataclass
class EconTrajectory:
    years: np.ndarray
    K: np.ndarray
    C: np.ndarray
    s: np.ndarray
    mu: np.ndarray
    Y_gross: np.ndarray
    Y_net: np.ndarray
    Omega: np.ndarray
    D: np.ndarray
    Theta: np.ndarray
    emissions: np.ndarray
    masses: np.ndarray
    m_eq: np.ndarray
    T: np.ndarray
    welfare: float
    costate_m: np.ndarray
    costate_K: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    label: str = ""

    def index(self, year: int) -> int:
        k = int(year - self.years[0])
        if not 0 <= k < len(self.years):
            raise ConfigError(f"year {year} outside the solved horizon", "year")
        return k

    def at(self, name: str, year: int) -> float:
        arr = getattr(self, name)
        v = arr[self.index(year)]
        return float(v if np.ndim(v) == 0 else v[0])

    def scc_adjoint(self, year: int) -> float:
        """SCC from the costates (USD per tCO2)."""
        k = self.index(year)
        return float(-self.costate_m[k, 0] / self.costate_K[k] * 1000.0 / GTCO2_PER_GTC)

    def budget_residual(self) -> float:
        """Max relative violation of K' - (1-delta) K + C = (1-Theta-Omega) Y."""
        d = self.diagnostics["delta"]
        H = len(self.C)
        lhs = self.K[1 : H + 1] - (1 - d) * self.K[:H] + self.C
        rhs = (1 - self.Theta - self.Omega[:H]) * self.Y_gross[:H]
        return float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))


class PlannerModel:
    """A transcribed planner problem for one emulator and one configuration."""

    def __init__(self, cfg: EconConfig, emulator: Emulator, initial: InitialState, ebm: EbmParams | None = None):
        self.cfg = cfg
        self.em = emulator
        self.ebm = (ebm or EbmParams()).with_kappa(cfg.kappa)
        self.init = initial
        H = cfg.horizon
        self.H = H
        self.paths = exogenous_paths(cfg)
        if emulator.time_dependent:
            mats, eqs = operator_path(emulator, self.paths["E_land"][:H])
        else:
            A = emulator.operator().matrix
            mats = np.broadcast_to(A, (H, emulator.n, emulator.n))
            eqs = np.broadcast_to(emulator.m_eq, (H + 1, emulator.n))
        self.P = np.array(mats) + np.eye(emulator.n)[None]
        self.m_eq = np.array(eqs)
        self.disc = cfg.beta ** np.arange(H + 1)
        self.fcoef = self.ebm.kappa * self.ebm.F2x / math.log(2.0)

    # utility ---------------------------------------------------------------
    def _u(self, c):
        g = 1.0 - 1.0 / self.cfg.psi
        return (c**g - 1.0) / g

    def _du(self, c):
        return c ** (-1.0 / self.cfg.psi)

    # forward -----------------------------------------------------------------
    def rollout(self, s, mu, start: int = 0, state: tuple | None = None, keep: bool = True):
        """Simulate from ``start`` with controls ``s``, ``mu`` (full-length arrays).

        ``state`` = (K, masses, T_atm, T_ocean) at ``start``; defaults to the
        initial state.  Returns the objective (utility from ``start`` on plus
        terminal value, discounted to year 0) and, if ``keep``, the stored
        trajectory.
        """
        cfg, p, e = self.cfg, self.paths, self.ebm
        H = self.H
        a = cfg.alpha_cap
        if state is None:
            K, m, Ta, To = self.init.K, np.array(self.init.masses, float), self.init.T_atm, self.init.T_ocean
        else:
            K, m, Ta, To = state[0], np.array(state[1], float), state[2], state[3]
        L, A, sig, El, th1 = p["L"], p["A"], p["sigma"], p["E_land"], p["theta1"]
        n = m.size
        if keep:
            Ks = np.empty(H + 1); Ms = np.empty((H + 1, n)); Ts = np.empty((H + 1, 2))
            Yg = np.empty(H); Om = np.empty(H); Th = np.empty(H); C = np.empty(H); E = np.empty(H)
            Ks[start] = K; Ms[start] = m; Ts[start] = Ta, To
        J = 0.0
        c1, gam, lam, C0 = e.C, e.gamma, e.lambda_fb, e.C0
        for t in range(start, H):
            y = K**a * (A[t] * L[t]) ** (1 - a)
            om = cfg.psi1 * Ta + cfg.psi2 * Ta * Ta
            th = th1[t] * mu[t] ** cfg.theta2 if mu[t] > 0 else 0.0
            yn = (1.0 - th - om) * y
            c = (1.0 - s[t]) * yn
            J += self.disc[t] * L[t] * self._u(c / L[t])
            em = sig[t] * y * (1.0 - mu[t]) + El[t]
            K = (1.0 - cfg.delta) * K + s[t] * yn
            m = self.P[t] @ m
            m[0] += em
            F = self.fcoef * math.log(m[0] / cfg.m0_atm)
            Ta, To = Ta + (F - gam * (Ta - To) - lam * Ta) / c1, To + gam * (Ta - To) / C0
            if keep:
                Yg[t] = y; Om[t] = om; Th[t] = th; C[t] = c; E[t] = em
                Ks[t + 1] = K; Ms[t + 1] = m; Ts[t + 1] = Ta, To
        J += self._terminal(K)[0]
        if not keep:
            return J
        return J, dict(K=Ks, m=Ms, T=Ts, Yg=Yg, Om=Om, Th=Th, C=C, E=E)

    def _terminal(self, K):
        cfg = self.cfg
        H = self.H
        L, A = self.paths["L"][H], self.paths["A"][H]
        sb = self.savings_bar
        y = K**cfg.alpha_cap * (A * L) ** (1 - cfg.alpha_cap)
        c = (1 - sb) * y / L
        scale = self.disc[H] / (1.0 - cfg.beta)
        W = scale * L * self._u(c)
        dW = scale * self._du(c) * (1 - sb) * cfg.alpha_cap * y / K
        return W, dW

    @property
    def savings_bar(self) -> float:
        return self.cfg.savings_bar

    # adjoint -----------------------------------------------------------------
    def gradient(self, s, mu, traj) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Gradient of the objective with respect to ``s`` and ``mu`` plus the costates."""
        cfg, p, e = self.cfg, self.paths, self.ebm
        H, a = self.H, cfg.alpha_cap
        L, sig, th1 = p["L"], p["sigma"], p["theta1"]
        K, M, T = traj["K"], traj["m"], traj["T"]
        Yg, Om, Th = traj["Yg"], traj["Om"], traj["Th"]
        n = M.shape[1]
        gs = np.empty(H)
        gm = np.empty(H)
        mu_foc = np.zeros(H)
        lamK = np.empty(H + 1)
        lamM = np.empty((H + 1, n))
        lamK[H] = self._terminal(K[H])[1]
        lamM[H] = 0.0
        lTa, lTo = 0.0, 0.0
        c1, gam, lam, C0 = e.C, e.gamma, e.lambda_fb, e.C0
        for t in range(H - 1, -1, -1):
            y, om, th = Yg[t], Om[t], Th[t]
            yn = (1 - th - om) * y
            c = (1 - s[t]) * yn
            uc = self.disc[t] * self._du(c / L[t])
            g_m1 = lamM[t + 1].copy()
            g_m1[0] += lTa / c1 * self.fcoef / M[t + 1, 0]
            ge = g_m1[0]
            lamM[t] = self.P[t].T @ g_m1
            g_yn = uc * (1 - s[t]) + lamK[t + 1] * s[t]
            g_yg = g_yn * (1 - th - om) + ge * sig[t] * (1 - mu[t])
            Ta = T[t, 0]
            nTa = lTa * (1 - (gam + lam) / c1) + lTo * gam / C0 - g_yn * y * (cfg.psi1 + 2 * cfg.psi2 * Ta)
            nTo = lTa * gam / c1 + lTo * (1 - gam / C0)
            lTa, lTo = nTa, nTo
            lamK[t] = lamK[t + 1] * (1 - cfg.delta) + g_yg * a * y / K[t]
            gs[t] = (lamK[t + 1] - uc) * yn
            dth = th1[t] * cfg.theta2 * mu[t] ** (cfg.theta2 - 1) if mu[t] > 0 else 0.0
            gm[t] = -g_yn * y * dth - ge * sig[t] * y
            # abatement level equating marginal cost with the carbon shadow price
            if ge < 0 and g_yn > 0 and th1[t] > 0:
                mu_foc[t] = min(1.0, (-ge * sig[t] / (g_yn * th1[t] * cfg.theta2)) ** (1 / (cfg.theta2 - 1)))
        self.mu_foc = mu_foc
        return gs, gm, lamM, lamK


def projected_gradient_norm(x, g, lo, hi) -> float:
    """Sup norm of the projected gradient for maximisation over a box."""
    pg = np.where((x <= lo) & (g < 0), 0.0, g)
    pg = np.where((x >= hi) & (pg > 0), 0.0, pg)
    return float(np.max(np.abs(pg))) if pg.size else 0.0


@dataclass
class SolveOptions:
    pg_tol: float = 1e-6
    max_iter: int = 20000
    s_bounds: tuple[float, float] = (0.0, 0.999)
    polish_rounds: int = 6


def _solve(model: PlannerModel, mode: str, opts: SolveOptions, label: str) -> EconTrajectory:
    H = model.H
    s_lo, s_hi = opts.s_bounds
    s0 = np.full(H, model.savings_bar)
    if mode == "bau":
        mu_fixed = np.zeros(H)
    elif mode == "ccs":
        mu_fixed = np.ones(H)
    else:
        mu_fixed = None
    free_mu = mu_fixed is None
    if free_mu:
        x0 = np.concatenate([s0, np.full(H, 0.2)])
        bounds = [(s_lo, s_hi)] * H + [(0.0, 1.0)] * H
    else:
        x0 = s0
        bounds = [(s_lo, s_hi)] * H
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def split(x):
        return (x[:H], x[H:]) if free_mu else (x, mu_fixed)

    scale = [1.0]

    def fun(x):
        s, mu = split(x)
        J, traj = model.rollout(s, mu)
        gs, gm, _, _ = model.gradient(s, mu, traj)
        g = np.concatenate([gs, gm]) if free_mu else gs
        return -J / scale[0], -g / scale[0]

    # scale so that the initial gradient is of order one
    _, g0 = fun(x0)
    scale[0] = max(float(np.max(np.abs(g0))), 1e-12)
    x = x0
    total_iter = 0
    pg = np.inf
    for _ in range(opts.polish_rounds):
        res = optimize.minimize(fun, x, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": opts.max_iter, "maxfun": 2 * opts.max_iter,
                                         "ftol": 0.0, "gtol": opts.pg_tol * 1e-3 / scale[0], "maxcor": 30})
        x = np.clip(res.x, lo, hi)
        total_iter += res.nit
        s, mu = split(x)
        J, traj = model.rollout(s, mu)
        gs, gm, _, _ = model.gradient(s, mu, traj)
        g = np.concatenate([gs, gm]) if free_mu else gs
        pg = projected_gradient_norm(x, g, lo, hi)
        if pg < opts.pg_tol:
            break
    if pg >= opts.pg_tol:
        x, pg, n_bb = _bb_polish(lambda z: fun(z)[1], x, lo, hi, opts, scale[0])
        total_iter += n_bb
    if free_mu:
        x, pg = _mitigation_polish(model, fun, x, lo, hi, scale[0], opts.pg_tol)
    x, pg = _snap_to_bounds(fun, x, lo, hi, scale[0], opts.pg_tol)
    s, mu = split(x)
    J, traj = model.rollout(s, mu)
    gs, gm, lamM, lamK = model.gradient(s, mu, traj)
    diag = {"mode": mode, "iterations": total_iter, "projected_gradient": pg, "converged": pg < opts.pg_tol,
            "delta": model.cfg.delta, "message": str(res.message)}
    if not np.isfinite(J):
        raise SolverNotConverged("objective is not finite", diag)
    return _trajectory(model, s, mu, J, traj, lamM, lamK, diag, label)


def _bb_polish(grad, x, lo, hi, opts, scale, max_iter=3000):
    """Projected Barzilai-Borwein iterations driven by gradients only.

    Near the optimum the objective is flat to working precision, which stalls
    line searches on function values; the gradient stays accurate, so this
    finish keeps reducing the projected gradient.  Returns the best iterate.
    """
    g = grad(x)
    best_x, best_pg = x, projected_gradient_norm(x, -g * scale, lo, hi)
    step = 1e-3
    for k in range(max_iter):
        x_new = np.clip(x - step * g, lo, hi)
        g_new = grad(x_new)
        pg = projected_gradient_norm(x_new, -g_new * scale, lo, hi)
        if pg < best_pg:
            best_x, best_pg = x_new, pg
            if pg < opts.pg_tol:
                return best_x, best_pg, k + 1
        dx, dg = x_new - x, g_new - g
        curv = float(dx @ dg)
        step = float(dx @ dx) / curv if curv > 0 else step * 0.5
        x, g = x_new, g_new
    return best_x, best_pg, max_iter


def _mitigation_polish(model, fun, x, lo, hi, scale, pg_tol, rounds=20):
    """Fixed-point sweeps of the first-order condition for abatement.

    Given the carbon shadow price, the optimal abatement of each year solves
    ``theta1 * theta2 * mu**(theta2 - 1) * dW/dY = -lambda_m * sigma`` in
    closed form.  Late in the horizon, discounting leaves gradients too small
    for the quasi-Newton steps to move the controls; these sweeps move them
    directly.  A sweep is kept only if welfare does not fall and the point
    stays stationary.
    """
    H = model.H
    f0, g0 = fun(x)
    pg0 = projected_gradient_norm(x, -g0 * scale, lo, hi)
    for _ in range(rounds):
        y = x.copy()
        y[H:] = model.mu_foc
        f1, g1 = fun(y)
        pg1 = projected_gradient_norm(y, -g1 * scale, lo, hi)
        if not (f1 <= f0 and (pg1 < pg_tol or pg1 <= pg0)):
            break
        done = np.max(np.abs(y - x)) < 1e-12
        x, f0, pg0 = y, f1, pg1
        if done:
            break
    return x, pg0


def _snap_to_bounds(fun, x, lo, hi, scale, pg_tol, width=0.02):
    """Move near-bound controls whose gradient points outward onto the bound.

    Abatement costs grow like mu**theta2, so the gradient vanishes as mu -> 0
    and a first-order method leaves small positive residues.  The snapped
    point is kept only if welfare does not fall and it is still stationary.
    """
    f0, g0 = fun(x)
    at_lo = (x - lo < width) & (g0 >= 0) & (x > lo)
    at_hi = (hi - x < width) & (g0 <= 0) & (x < hi)
    pg0 = projected_gradient_norm(x, -g0 * scale, lo, hi)
    if not (at_lo.any() or at_hi.any()):
        return x, pg0
    y = np.where(at_lo, lo, np.where(at_hi, hi, x))
    f1, g1 = fun(y)
    pg1 = projected_gradient_norm(y, -g1 * scale, lo, hi)
    if f1 <= f0 and (pg1 < pg_tol or pg1 <= pg0):
        return y, pg1
    return x, pg0


def _trajectory(model, s, mu, J, traj, lamM, lamK, diag, label) -> EconTrajectory:
    H = model.H
    cfg = model.cfg
    p = model.paths
    D = traj["Om"] * traj["Yg"]
    return EconTrajectory(
        years=np.arange(cfg.start_year, cfg.start_year + H + 1),
        K=traj["K"], C=traj["C"], s=np.asarray(s, float), mu=np.asarray(mu, float),
        Y_gross=np.concatenate([traj["Yg"], [gross_output(traj["K"][H], p["A"][H], p["L"][H], cfg.alpha_cap)]]),
        Y_net=(1 - traj["Th"] - traj["Om"]) * traj["Yg"],
        Omega=np.concatenate([traj["Om"], [damage_share(traj["T"][H, 0], cfg.psi1, cfg.psi2)]]),
        D=D, Theta=traj["Th"], emissions=traj["E"], masses=traj["m"], m_eq=model.m_eq, T=traj["T"],
        welfare=float(J), costate_m=lamM, costate_K=lamK, diagnostics=diag, label=label,
    )


def _model(config, emulator, initial, ebm) -> PlannerModel:
    if initial is None:
        raise ConfigError("an initial state (from the present-day spin-up) is required", "initial")
    return PlannerModel(config, emulator, initial, ebm)


def solve_bau(config: EconConfig, emulator: Emulator, initial: InitialState, ebm: EbmParams | None = None,
              opts: SolveOptions | None = None) -> EconTrajectory:
    """Optimal savings with mitigation held at zero."""
    return _solve(_model(config, emulator, initial, ebm), "bau", opts or SolveOptions(), emulator.name)


def solve_optimal(config: EconConfig, emulator: Emulator, initial: InitialState, ebm: EbmParams | None = None,
                  opts: SolveOptions | None = None) -> EconTrajectory:
    """Jointly optimal savings and mitigation."""
    return _solve(_model(config, emulator, initial, ebm), "optimal", opts or SolveOptions(), emulator.name)


def run_ccs(config: EconConfig, emulator: Emulator, initial: InitialState, ebm: EbmParams | None = None,
            opts: SolveOptions | None = None) -> EconTrajectory:
    """Full abatement from the first year; savings still optimised."""
    return _solve(_model(config, emulator, initial, ebm), "ccs", opts or SolveOptions(), emulator.name)


def evaluate_policy(config: EconConfig, emulator: Emulator, initial: InitialState, s, mu,
                    ebm: EbmParams | None = None) -> float:
    """Welfare of a fixed control sequence."""
    model = _model(config, emulator, initial, ebm)
    H = model.H
    s = np.broadcast_to(np.asarray(s, float), (H,))
    mu = np.broadcast_to(np.asarray(mu, float), (H,))
    return model.rollout(s, mu, keep=False)


def scc(config: EconConfig, emulator: Emulator, trajectory: EconTrajectory, year: int,
        initial: InitialState | None = None, ebm: EbmParams | None = None,
        rel_step: float = 1e-3, tol: float = 0.05) -> float:
    """Social cost of carbon (USD per tCO2) by symmetric finite differences.

    The value from ``year`` onward is perturbed in atmospheric carbon and in
    capital while the optimal controls stay fixed (envelope evaluation).  A
    Richardson check compares step ``h`` with ``h/2``.

    Raises
    ------
    StepSizeUnstable
        If the two step sizes disagree by more than ``tol``.
    """
    init = initial or InitialState(float(trajectory.K[0]), trajectory.masses[0], float(trajectory.T[0, 0]),
                                   float(trajectory.T[0, 1]))
    model = _model(config, emulator, init, ebm)
    k = trajectory.index(year)
    K = float(trajectory.K[k])
    m = np.array(trajectory.masses[k])
    Ta, To = float(trajectory.T[k, 0]), float(trajectory.T[k, 1])
    s, mu = trajectory.s, trajectory.mu

    def value(dK, dm):
        mm = m.copy()
        mm[0] += dm
        return model.rollout(s, mu, start=k, state=(K + dK, mm, Ta, To), keep=False)

    def derivs(hK, hm):
        dVdK = (value(hK, 0.0) - value(-hK, 0.0)) / (2 * hK)
        dVdm = (value(0.0, hm) - value(0.0, -hm)) / (2 * hm)
        return dVdm, dVdK

    hK, hm = rel_step * K, rel_step * m[0]
    dm1, dk1 = derivs(hK, hm)
    dm2, dk2 = derivs(hK / 2, hm / 2)
    v1 = -dm1 / dk1 * 1000.0 / GTCO2_PER_GTC
    v2 = -dm2 / dk2 * 1000.0 / GTCO2_PER_GTC
    if abs(v1 - v2) > tol * max(abs(v2), 1e-12) and abs(v1 - v2) > 1e-9:
        raise StepSizeUnstable(f"SCC estimates {v1:.6g} and {v2:.6g} disagree")
    # Richardson extrapolation of the two central differences
    return float((4 * v2 - v1) / 3)
