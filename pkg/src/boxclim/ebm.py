"""Two-layer energy-balance model.

    T_A' = T_A + (F - gamma (T_A - T_O) - lambda T_A) / C
    T_O' = T_O + gamma (T_A - T_O) / C0

with CO2 forcing ``F = kappa * F2x / ln 2 * ln(m_A / m0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .carbon import PI_ATMOSPHERE_GTC
from .errors import ConfigError

# Multi-model means and standard deviations of the two-layer fits.
TABLE_MEANS = {"C": 7.3, "C0": 106.0, "gamma": 0.73, "lambda_fb": 1.13, "F4x": 6.9}
TABLE_STD = {"C": 1.1, "C0": 62.0, "gamma": 0.18, "lambda_fb": 0.31, "F4x": 0.9}

KAPPA_RCP = 1.2
KAPPA_PERTURBATION = 1.0


@dataclass(frozen=True)
class EbmParams:
    C: float = TABLE_MEANS["C"]
    C0: float = TABLE_MEANS["C0"]
    gamma: float = TABLE_MEANS["gamma"]
    lambda_fb: float = TABLE_MEANS["lambda_fb"]
    F2x: float = TABLE_MEANS["F4x"] / 2
    kappa: float = KAPPA_RCP
    dt: float = 1.0

    def __post_init__(self):
        for name in ("C", "C0", "gamma", "lambda_fb", "F2x", "kappa", "dt"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError("must be positive", f"ebm.{name}")
        if spectral_radius(self) >= 1:
            raise ConfigError("explicit update is unstable for these parameters", "ebm")

    def with_kappa(self, kappa: float) -> "EbmParams":
        return replace(self, kappa=kappa)

    @property
    def ecs(self) -> float:
        """Equilibrium warming for sustained doubled-CO2 forcing (kappa = 1)."""
        return self.F2x / self.lambda_fb


@dataclass(frozen=True)
class TempState:
    T_atm: float = 0.0
    T_ocean: float = 0.0
    t: int = 0


def update_matrix(p: EbmParams) -> np.ndarray:
    """Matrix ``I + dt B`` of the homogeneous update."""
    B = np.array(
        [[-(p.gamma + p.lambda_fb) / p.C, p.gamma / p.C], [p.gamma / p.C0, -p.gamma / p.C0]]
    )
    return np.eye(2) + p.dt * B


def spectral_radius(p: EbmParams) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(update_matrix(p)))))


def forcing(m_atm, m0_atm: float = PI_ATMOSPHERE_GTC, params: EbmParams | None = None):
    """Radiative forcing in W/m^2 relative to ``m0_atm``; works on scalars and arrays."""
    p = params or EbmParams()
    m = np.asarray(m_atm, dtype=float)
    if np.any(m <= 0) or m0_atm <= 0:
        raise ValueError("atmospheric masses must be positive for the log forcing")
    F = p.kappa * p.F2x / math.log(2.0) * np.log(m / m0_atm)
    return float(F) if F.ndim == 0 else F


def temp_step(state: TempState, F: float, params: EbmParams) -> TempState:
    p = params
    dT_a = (F - p.gamma * (state.T_atm - state.T_ocean) - p.lambda_fb * state.T_atm) / p.C
    dT_o = p.gamma * (state.T_atm - state.T_ocean) / p.C0
    return TempState(state.T_atm + p.dt * dT_a, state.T_ocean + p.dt * dT_o, state.t + 1)


def run_temperature(F_series, params: EbmParams, initial: TempState | None = None) -> np.ndarray:
    """Integrate the model for a forcing path; returns an array ``(len(F)+1, 2)``.

    Row ``t + 1`` is the state after applying forcing ``F[t]``.
    """
    s = initial or TempState()
    F = np.asarray(F_series, dtype=float)
    out = np.empty((F.size + 1, 2))
    out[0] = s.T_atm, s.T_ocean
    for k, f in enumerate(F):
        s = temp_step(s, f, params)
        out[k + 1] = s.T_atm, s.T_ocean
    return out


def steady_state(F: float, params: EbmParams) -> TempState:
    """Fixed point of the update for constant forcing: both layers at ``F / lambda``."""
    T = F / params.lambda_fb
    return TempState(T, T)
