"""
Error analysis between Klein-Gordon and short-pulse solutions.

This module provides:
- Paired initial data for both equations and the distance between them.
- The error ``R = (U - A)/eps`` with its tau-derivatives, the error energy
  ``E``, the correction ``Etilde`` and the flux ``J`` of the energy balance
  ``d/dtau (E + Etilde) = J``, each kept as a per-term ledger.
- The a-priori bound ledgers, power-law and Gronwall fits.
- :func:`convergence_study`, the epsilon sweep behind the O(eps) law.

The integrands of ``Etilde`` and ``J`` are stored as tables of
``(coefficient, eps power, factors)``; factor names are spelled out in
:func:`_factor_table`.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .exceptions import (
    Bound7Violated,
    FitFailed,
    ShortPulseError,
    SyncError,
)
from .klein_gordon import (
    DEFAULT_CFL,
    DEFAULT_MARGIN,
    DEFAULT_SLOPE_CAP,
    KGState,
    ScalingParams,
    kg_dt,
    kg_evolve,
    scale_down,
    scale_up,
    x_grid_for,
)
from .short_pulse import (
    DeltaReport,
    ShortPulseState,
    admissible_initial_data,
    delta_of_trajectory,
    dt_max,
    linearized_rhs,
    perturbation_profile,
    sp_evolve,
    sp_rhs,
)
from .spectral_core import (
    MEAN_TOL,
    Field,
    FourierGrid,
    differentiate,
    power,
    product,
    regrid,
    sobolev_norm,
)

logger = logging.getLogger(__name__)

SYNC_TOL = 1e-12


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PairedInitialData:
    """Short-pulse and Klein-Gordon data at ``tau = 0``.

    Attributes:
        sp0: Short-pulse state carrying ``A0``.
        kg0: Klein-Gordon state built from ``(U0, V0)``.
        bound_value: ``||U0 - A0||_H2 + ||V0 - A_tau(0)||_H1``.
        u_constant: ``||u(0) - 2 eps A0(./2eps)||_H2 / eps^(1/2)``.
        ut_constant: ``||u_t(0) + A0'(./2eps)||_H1 / eps^(1/2)``.
    """

    sp0: ShortPulseState
    kg0: KGState
    bound_value: float
    u_constant: float
    ut_constant: float


@dataclass(frozen=True, eq=False)
class ErrorState:
    tau: float
    R: Field
    Rtau: Field
    Rtautau: Field
    epsilon: float


class ErrorEnergy(NamedTuple):
    value: float
    embedding: float


class LedgerValue(NamedTuple):
    value: float
    components: Dict[str, float]


@dataclass(frozen=True)
class EnergyBreakdown:
    E: float
    Etilde: float
    J: float
    components: Dict[str, float]


class Term(NamedTuple):
    group: str
    coefficient: float
    eps_power: int
    factors: Tuple[str, ...]

    @property
    def label(self) -> str:
        return f"{self.group}[{self.coefficient:+g}*eps^{self.eps_power}*{'*'.join(self.factors)}]"

    @property
    def depends_on_A(self) -> bool:
        return any(f.startswith("A") for f in self.factors)


class GronwallFit(NamedTuple):
    C0: float
    C1: float
    ok: bool


class TheoremOneError(NamedTuple):
    series: pd.DataFrame
    sup: float
    tau_at_sup: float


class LeadingOrderNorms(NamedTuple):
    u_norm: float
    ut_norm: float


class UnscaledError(NamedTuple):
    series: pd.DataFrame
    sup: float
    leading: LeadingOrderNorms


class TunedAmplitude(NamedTuple):
    amplitude: float
    A0: Field
    trajectory: List[ShortPulseState]
    delta: DeltaReport


def _terms(group: str, rows) -> Tuple[Term, ...]:
    return tuple(Term(group, float(c), int(p), tuple(f.split())) for c, p, f in rows)


ENERGY_TERMS = _terms("E", [
    (1, 0, "R R"), (1, 0, "Rx Rx"), (1, 0, "Rxx Rxx"), (2, 2, "Rt Rt"), (1, 4, "Rtt Rtt"),
])

TILDE_TERMS = _terms("Etilde", [
    (-2, 2, "Rx Rt"), (-3, 0, "A A Rx Rx"), (-6, 1, "A R Rx Rx"), (-3, 2, "R R Rx Rx"),
    (-2, 2, "Rxx Rxt"), (-3, 2, "A A Rxt Rxt"), (6, 2, "AAx_x Rt Rt"),
    (-6, 3, "A R Rxt Rxt"), (-3, 4, "R R Rxt Rxt"),
])

# H1-level balance. Integrating -R_xi (3A^2 R)_xi_xi by parts leaves -9 A A_xi R_xi^2
# pointwise, hence the weight 18 after doubling.
FLUX_H1_TERMS = _terms("H1", [
    (2, 1, "Rx Att"), (-2, 1, "Rt Att"),
    (18, 0, "A Ax Rx Rx"), (-6, 0, "AAx_xx R R"), (-6, 0, "A At Rx Rx"), (12, 0, "A Ax R Rxt"),
    (-2, 1, "Axxx R R R"), (18, 1, "Ax R Rx Rx"), (6, 1, "A Rx Rx Rx"), (-6, 1, "Axx R R Rt"),
    (-12, 1, "Ax R Rx Rt"), (-6, 1, "At R Rx Rx"), (-6, 1, "A Rx Rx Rt"),
    (6, 2, "R Rx Rx Rx"), (-6, 2, "R Rx Rx Rt"),
])

FLUX_H2_TERMS = _terms("H2", [
    (2, 1, "Rxx Attx"), (-2, 3, "Rtt Attt"),
]) + _terms("I1", [
    (30, 0, "A Ax Rxx Rxx"), (36, 0, "AAx_x Rx Rxx"), (12, 0, "AAx_xx R Rxx"),
    (-6, 2, "A At Rxt Rxt"), (-12, 2, "A Ax Rtt Rxt"), (-12, 2, "A At Rtt Rxx"),
    (6, 2, "AAt_xx Rt Rt"), (-12, 2, "AAt_xx R Rtt"), (-24, 2, "AAt_x Rx Rtt"),
]) + _terms("I2", [
    (6, 1, "Axxx R R Rxx"), (36, 1, "Axx R Rx Rxx"), (30, 1, "Ax R Rxx Rxx"),
    (36, 1, "Ax Rx Rx Rxx"), (30, 1, "A Rx Rxx Rxx"), (-6, 3, "Axxt R R Rtt"),
    (-24, 3, "Axt R Rx Rtt"), (-12, 3, "At RRx_x Rtt"), (-12, 3, "Axx R Rt Rtt"),
    (-24, 3, "Ax Rx Rt Rtt"), (-12, 3, "Ax R Rtt Rxt"), (-6, 3, "At R Rxt Rxt"),
    (-12, 3, "A Rt Rtt Rxx"), (-12, 3, "A Rx Rtt Rxt"), (-6, 3, "A Rt Rxt Rxt"),
]) + _terms("I3", [
    (30, 2, "R Rx Rxx Rxx"), (-12, 4, "Rx Rx Rt Rtt"), (-12, 4, "R Rt Rxx Rtt"),
    (-12, 4, "R Rx Rxt Rtt"), (-6, 4, "R Rt Rxt Rxt"),
])

FLUX_TERMS = FLUX_H1_TERMS + FLUX_H2_TERMS


# ---------------------------------------------------------------------------
# Initial data and error state
# ---------------------------------------------------------------------------

def build_paired_initial_data(A0: Field, perturbation: Optional[Field], p: ScalingParams,
                              velocity: Union[None, str, Field] = None,
                              grid_x: Optional[FourierGrid] = None,
                              include_time_correction: bool = True,
                              enforce_bound: bool = True,
                              mean_tol: float = MEAN_TOL) -> PairedInitialData:
    """Pair short-pulse data ``A0`` with Klein-Gordon data close to it.

    ``U0 = A0 + eps * perturbation`` and ``V0 = A_tau(0) + eps * dV`` where
    ``dV`` is zero (``velocity=None``), the velocity slaved to the
    perturbation through :func:`linearized_rhs` (``"slaved"``) or a given
    field. The Klein-Gordon state is ``scale_up(U0, V0)``.

    Raises:
        Bound7Violated: If ``enforce_bound`` and the distance exceeds ``eps``.
    """
    eps = p.epsilon
    grid_x = x_grid_for(A0.grid, p) if grid_x is None else grid_x
    A_tau0 = sp_rhs(A0, mean_tol=mean_tol)

    U0 = A0
    if perturbation is not None:
        size = sobolev_norm(perturbation, 2.0)
        if size > 1.0 + 1e-12:
            raise ValueError(f"perturbation must have H2 norm <= 1, got {size:.6g}")
        U0 = A0 + eps * perturbation

    if velocity is None:
        V0 = A_tau0
    elif isinstance(velocity, str):
        if velocity != "slaved":
            raise ValueError(f"unknown velocity mode {velocity!r}")
        V0 = A_tau0 if perturbation is None else A_tau0 + eps * linearized_rhs(A0, perturbation, mean_tol)
    else:
        V0 = A_tau0 + eps * velocity

    bound_value = sobolev_norm(U0 - A0, 2.0) + sobolev_norm(V0 - A_tau0, 1.0)
    if enforce_bound and bound_value > eps * (1.0 + 1e-12):
        raise Bound7Violated(bound_value, eps)

    kg0 = scale_up(U0, V0, 0.0, p, grid_x, include_time_correction)
    leading_u = Field(grid_x, 2.0 * eps * A0.values)
    leading_ut = regrid(differentiate(A0, 1), grid_x)
    root = math.sqrt(eps)
    return PairedInitialData(
        sp0=ShortPulseState(0.0, A0),
        kg0=kg0,
        bound_value=bound_value,
        u_constant=sobolev_norm(kg0.u - leading_u, 2.0) / root,
        ut_constant=sobolev_norm(kg0.ut + leading_ut, 1.0) / root,
    )


def _check_sync(kg: KGState, sp: ShortPulseState, p: ScalingParams) -> None:
    if abs(p.epsilon * kg.t - sp.tau) > SYNC_TOL:
        raise SyncError(f"eps*t={p.epsilon * kg.t!r} does not match tau={sp.tau!r}")


def error_state(kg: KGState, sp: ShortPulseState, p: ScalingParams,
                mean_tol: float = MEAN_TOL) -> ErrorState:
    """``R = (U - A)/eps`` and its tau-derivatives at a synchronized sample.

    ``U_tautau`` is reconstructed from the scaled Klein-Gordon equation,
    ``U_tautau = (d U_tau - U - (U^3)_xi_xi)/eps^2``, so no time differencing
    enters.

    Raises:
        SyncError: If ``|eps t - tau| > 1e-12``.
        GridMismatch: If the grids are not commensurate.
    """
    _check_sync(kg, sp, p)
    eps = p.epsilon
    scaled = scale_down(kg, p, sp.grid)
    A_t, A_tt, _ = sp.derivatives(mean_tol)
    U, U_t = scaled.U, scaled.Utau
    U_tt = (differentiate(U_t, 1) - U - differentiate(power(U, 3), 2)) / eps ** 2
    return ErrorState(
        tau=sp.tau,
        R=(U - sp.A) / eps,
        Rtau=(U_t - A_t) / eps,
        Rtautau=(U_tt - A_tt) / eps,
        epsilon=eps,
    )


def error_energy(es: ErrorState) -> ErrorEnergy:
    """``E = int R^2 + R_xi^2 + R_xixi^2 + 2 eps^2 R_tau^2 + eps^4 R_tautau^2``.

    ``embedding`` is the measured constant in
    ``||R||_inf + ||R_xi||_inf <= C E^(1/2)`` (zero when ``E = 0``).
    """
    value = sum(_energy_components(es).values())
    sup = es.R.sup_norm() + differentiate(es.R, 1).sup_norm()
    embedding = sup / math.sqrt(value) if value > 0 else 0.0
    return ErrorEnergy(value, embedding)


# ---------------------------------------------------------------------------
# Term ledgers
# ---------------------------------------------------------------------------

def _error_factors(es: ErrorState) -> Dict[str, np.ndarray]:
    R, Rt = es.R, es.Rtau
    Rx = differentiate(R, 1)
    return {
        "R": R.values,
        "Rx": Rx.values,
        "Rxx": differentiate(R, 2).values,
        "Rt": Rt.values,
        "Rxt": differentiate(Rt, 1).values,
        "Rtt": es.Rtautau.values,
        "RRx_x": differentiate(product(R, Rx), 1).values,
    }


def _factor_table(es: ErrorState, sp: ShortPulseState,
                  mean_tol: float = MEAN_TOL) -> Dict[str, np.ndarray]:
    """Every factor used by the term tables.

    ``A``-factors: ``A``, ``Ax``..``Axxx`` (xi-derivatives), ``At``, ``Att``,
    ``Attt`` (tau-derivatives), ``Axt``, ``Axxt``, ``Attx`` (mixed),
    ``AAx_x``, ``AAx_xx``, ``AAt_x``, ``AAt_xx`` (derivatives of ``A A_xi``
    and ``A A_tau``). ``R``-factors: ``R``, ``Rx``, ``Rxx``, ``Rt``, ``Rxt``,
    ``Rtt`` and ``RRx_x = (R R_xi)_xi``.
    """
    A = sp.A
    A_t, A_tt, A_ttt = sp.derivatives(mean_tol)
    A_x = differentiate(A, 1)
    AAx = product(A, A_x)
    AAt = product(A, A_t)
    table = {
        "A": A.values,
        "Ax": A_x.values,
        "Axx": differentiate(A, 2).values,
        "Axxx": differentiate(A, 3).values,
        "At": A_t.values,
        "Axt": differentiate(A_t, 1).values,
        "Axxt": differentiate(A_t, 2).values,
        "Att": A_tt.values,
        "Attx": differentiate(A_tt, 1).values,
        "Attt": A_ttt.values,
        "AAx_x": differentiate(AAx, 1).values,
        "AAx_xx": differentiate(AAx, 2).values,
        "AAt_x": differentiate(AAt, 1).values,
        "AAt_xx": differentiate(AAt, 2).values,
    }
    table.update(_error_factors(es))
    return table


def _evaluate(terms: Sequence[Term], factors: Dict[str, np.ndarray], eps: float,
              spacing: float) -> LedgerValue:
    components: Dict[str, float] = {}
    for term in terms:
        integrand = np.prod([factors[name] for name in term.factors], axis=0)
        value = term.coefficient * eps ** term.eps_power * spacing * float(np.sum(integrand))
        components[term.label] = components.get(term.label, 0.0) + value
    return LedgerValue(float(sum(components.values())), components)


def _energy_components(es: ErrorState) -> Dict[str, float]:
    return _evaluate(ENERGY_TERMS, _error_factors(es), es.epsilon, es.R.grid.spacing).components


def tilde_energy(es: ErrorState, sp: ShortPulseState, mean_tol: float = MEAN_TOL) -> LedgerValue:
    """Correction ``Etilde`` with one ledger entry per integrand."""
    return _evaluate(TILDE_TERMS, _factor_table(es, sp, mean_tol), es.epsilon, es.R.grid.spacing)


def flux_J(es: ErrorState, sp: ShortPulseState, mean_tol: float = MEAN_TOL) -> LedgerValue:
    """Flux ``J`` of the energy balance with one ledger entry per integrand.

    Groups: ``H1`` (first-derivative level), ``H2`` (the two ``A_tautau``
    forcing terms of the second-derivative level) and ``I1``, ``I2``, ``I3``
    (its quasilinear integrands, grouped by powers of ``eps``).
    """
    return _evaluate(FLUX_TERMS, _factor_table(es, sp, mean_tol), es.epsilon, es.R.grid.spacing)


def energy_breakdown(es: ErrorState, sp: ShortPulseState,
                     mean_tol: float = MEAN_TOL) -> EnergyBreakdown:
    factors = _factor_table(es, sp, mean_tol)
    eps, h = es.epsilon, es.R.grid.spacing
    energy = _evaluate(ENERGY_TERMS, factors, eps, h)
    tilde = _evaluate(TILDE_TERMS, factors, eps, h)
    flux = _evaluate(FLUX_TERMS, factors, eps, h)
    components = {**energy.components, **tilde.components, **flux.components}
    return EnergyBreakdown(energy.value, tilde.value, flux.value, components)


# ---------------------------------------------------------------------------
# Time series
# ---------------------------------------------------------------------------

def _pairs(kg_traj: Sequence[KGState], sp_traj: Sequence[ShortPulseState], stride: int = 1):
    if len(kg_traj) != len(sp_traj):
        raise SyncError(f"trajectories have {len(kg_traj)} and {len(sp_traj)} samples")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return list(zip(kg_traj[::stride], sp_traj[::stride]))


def energy_series(kg_traj: Sequence[KGState], sp_traj: Sequence[ShortPulseState],
                  p: ScalingParams, stride: int = 1, mean_tol: float = MEAN_TOL) -> pd.DataFrame:
    """Table of ``tau, E, Etilde, J`` at every ``stride``-th synchronized sample."""
    rows = []
    for kg, sp in _pairs(kg_traj, sp_traj, stride):
        b = energy_breakdown(error_state(kg, sp, p, mean_tol), sp, mean_tol)
        rows.append((sp.tau, b.E, b.Etilde, b.J))
    return pd.DataFrame(rows, columns=["tau", "E", "Etilde", "J"])


def add_balance_residual(series: pd.DataFrame) -> pd.DataFrame:
    """Append ``|d(E + Etilde)/dtau - J| / max(1, |J|)`` to an energy table.

    The derivative is the second-order centered difference (one-sided of the
    same order at the ends).
    """
    out = series.reset_index(drop=True).copy()
    if len(out) < 3:
        out["balance_residual"] = 0.0 if len(out) else pd.Series(dtype=float)
        return out
    tau = out["tau"].to_numpy()
    total = (out["E"] + out["Etilde"]).to_numpy()
    rate = np.gradient(total, tau, edge_order=2)
    J = out["J"].to_numpy()
    out["balance_residual"] = np.abs(rate - J) / np.maximum(1.0, np.abs(J))
    return out


def balance_residual(kg_traj: Sequence[KGState], sp_traj: Sequence[ShortPulseState],
                     p: ScalingParams, stride: int = 1, mean_tol: float = MEAN_TOL) -> pd.DataFrame:
    """Residual of ``d/dtau (E + Etilde) = J`` along a co-evolved pair."""
    return add_balance_residual(energy_series(kg_traj, sp_traj, p, stride, mean_tol))


BOUND_NAMES = ("R_xi_tau_l2", "eps_R_tau_sup", "Etilde", "J", "embedding")


def apriori_bound_checks(es: ErrorState, sp: ShortPulseState, delta: float, cap: float = 1e3,
                         breakdown: Optional[EnergyBreakdown] = None,
                         mean_tol: float = MEAN_TOL) -> pd.DataFrame:
    """Ledger of measured left sides, bracket terms and implied constants.

    Each row reads ``lhs <= C * bracket``; ``C = lhs/bracket`` is the smallest
    admissible constant and ``flagged`` marks constants above ``cap``.
    """
    if breakdown is None:
        breakdown = energy_breakdown(es, sp, mean_tol)
    eps, d = es.epsilon, delta
    E = max(breakdown.E, 0.0)
    root = math.sqrt(E)
    rows = [
        ("R_xi_tau_l2", sobolev_norm(differentiate(es.Rtau, 1), 0.0),
         d * eps + root + d ** 2 * root + d * eps * E + eps ** 2 * E ** 1.5),
        ("eps_R_tau_sup", eps * es.Rtau.sup_norm(),
         root + d * eps ** 2 + d * eps ** 2 * E + eps ** 3 * E ** 1.5),
        ("Etilde", abs(breakdown.Etilde),
         eps * E + d ** 2 * E + d * eps * E ** 1.5 + eps ** 2 * E ** 2),
        ("J", abs(breakdown.J),
         d * root + d ** 2 * E + d * E ** 1.5 + eps * E ** 2),
        ("embedding", es.R.sup_norm() + differentiate(es.R, 1).sup_norm(), root),
    ]
    table = pd.DataFrame(rows, columns=["bound", "lhs", "bracket"])
    with np.errstate(divide="ignore", invalid="ignore"):
        C = np.where(table["lhs"] > 0, table["lhs"] / table["bracket"], 0.0)
    table["C"] = C
    table["flagged"] = table["C"] > cap
    return table


def theorem_one_error(kg_traj: Sequence[KGState], sp_traj: Sequence[ShortPulseState],
                      p: ScalingParams) -> TheoremOneError:
    """``||U - A||_H2`` at every sample, its supremum and where it occurs."""
    rows = []
    for kg, sp in _pairs(kg_traj, sp_traj):
        _check_sync(kg, sp, p)
        U = scale_down(kg, p, sp.grid).U
        rows.append((sp.tau, sobolev_norm(U - sp.A, 2.0)))
    series = pd.DataFrame(rows, columns=["tau", "h2_error"])
    if series.empty:
        return TheoremOneError(series, 0.0, 0.0)
    at = int(series["h2_error"].to_numpy().argmax())
    return TheoremOneError(series, float(series["h2_error"].iloc[at]), float(series["tau"].iloc[at]))


def leading_order_norms(A0: Field, p: ScalingParams,
                        grid_x: Optional[FourierGrid] = None) -> LeadingOrderNorms:
    """``||eps A0(./2eps)||_H2`` and ``||A0'(./2eps)||_H1`` on the x-grid."""
    grid_x = x_grid_for(A0.grid, p) if grid_x is None else grid_x
    u = Field(grid_x, p.epsilon * A0.values)
    ut = regrid(differentiate(A0, 1), grid_x)
    return LeadingOrderNorms(sobolev_norm(u, 2.0), sobolev_norm(ut, 1.0))


def unscaled_error(kg_traj: Sequence[KGState], sp_traj: Sequence[ShortPulseState],
                   p: ScalingParams) -> UnscaledError:
    """``||u(t) - 2 eps A(eps t, (. - t)/(2 eps))||_H2`` in original variables."""
    rows = []
    for kg, sp in _pairs(kg_traj, sp_traj):
        _check_sync(kg, sp, p)
        approx = scale_up(sp.A, None, sp.tau, p, kg.grid_x)
        rows.append((kg.t, sp.tau, sobolev_norm(kg.u - approx.u, 2.0)))
    series = pd.DataFrame(rows, columns=["t", "tau", "h2_error"])
    sup = float(series["h2_error"].max()) if len(series) else 0.0
    leading = leading_order_norms(sp_traj[0].A, p, kg_traj[0].grid_x) if len(sp_traj) else LeadingOrderNorms(0.0, 0.0)
    return UnscaledError(series, sup, leading)


# ---------------------------------------------------------------------------
# Fits
# ---------------------------------------------------------------------------

def fit_power_law(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    """Least-squares slope of ``log y`` against ``log x``; ``None`` below three usable points."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if keep.sum() < 3:
        return None
    slope, _ = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope)


def gronwall_fit(tau: Sequence[float], E: Sequence[float], delta: float,
                 C0_cap: float = 1e3, C1_cap: float = 1e3) -> GronwallFit:
    """Constants of the envelope ``E(tau) <= C0 (E(0) + delta tau) exp(C1 delta tau)``.

    ``C1`` is the non-negative least-squares growth rate of ``log E`` in
    ``delta*tau``; ``C0`` is then the smallest constant for which the envelope
    holds at every sample.

    Raises:
        FitFailed: On empty or non-finite input.
    """
    t = np.asarray(tau, dtype=float)
    e = np.asarray(E, dtype=float)
    if t.size == 0 or t.shape != e.shape:
        raise FitFailed("gronwall_fit needs matching, non-empty tau and E series")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(e))):
        raise FitFailed("energy series contains non-finite values")

    s = delta * t
    positive = e > 0
    C1 = 0.0
    if delta > 0 and positive.sum() >= 2:
        slope, _ = np.polyfit(s[positive], np.log(e[positive]), 1)
        C1 = max(0.0, float(slope))

    envelope = (e[0] + s) * np.exp(C1 * s)
    C0 = 0.0
    for value, bound in zip(e, envelope):
        if value <= 0:
            continue
        C0 = max(C0, value / bound if bound > 0 else math.inf)
    ok = math.isfinite(C0) and C0 <= C0_cap and C1 <= C1_cap
    return GronwallFit(float(C0), C1, ok)


def tune_amplitude(shape: str, amplitude: float, width: float, grid: FourierGrid, T: float,
                   sp_dt: float, s: float = 4.0, delta_cap: float = 0.1, max_iter: int = 20,
                   mean_tol: float = MEAN_TOL) -> TunedAmplitude:
    """Lower the amplitude until the short-pulse run satisfies ``delta <= delta_cap``.

    Each pass rescales by ``0.9 * delta_cap / delta``.

    Raises:
        FitFailed: If ``max_iter`` passes do not reach the cap.
    """
    for _ in range(max_iter):
        A0 = admissible_initial_data(shape, amplitude, width, grid)
        dt = min(sp_dt, 0.5 * dt_max(A0))
        trajectory = sp_evolve(A0, T, dt, mean_tol=mean_tol)
        report = delta_of_trajectory(trajectory, s, mean_tol)
        if report.delta <= delta_cap:
            logger.info("amplitude %.6g gives delta=%.6g (cap %.3g)", amplitude, report.delta, delta_cap)
            return TunedAmplitude(amplitude, A0, trajectory, report)
        amplitude *= 0.9 * delta_cap / report.delta
    raise FitFailed(f"delta stayed above {delta_cap} after {max_iter} amplitude reductions")


# ---------------------------------------------------------------------------
# Convergence study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    """Everything :func:`convergence_study` needs; built from the scenario file."""

    length: float = 64.0 * math.pi
    n: int = 1024
    shape: str = "gaussian_derivative"
    amplitude: float = 0.1
    width: float = 1.0
    tune_delta: bool = True
    perturbation: str = "random"
    perturbation_norm: float = 0.5
    velocity: str = "slaved"
    epsilons: Tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    T: float = 1.0
    s: float = 4.0
    delta_cap: float = 0.1
    cfl: float = DEFAULT_CFL
    sp_dt: float = 0.01
    samples: int = 200
    linear: bool = False
    manufactured: bool = False
    include_time_correction: bool = True
    margin: float = DEFAULT_MARGIN
    slope_cap: float = DEFAULT_SLOPE_CAP
    mean_tol: float = MEAN_TOL
    C0_cap: float = 1e3
    C1_cap: float = 1e3
    bound_cap: float = 1e3
    seed: int = 0
    threads: int = 1

    @property
    def grid(self) -> FourierGrid:
        return FourierGrid(self.length, self.n)


@dataclass
class EpsilonRun:
    """Outcome of one epsilon of the sweep; ``error`` is set when it aborted."""

    epsilon: float
    ok: bool = False
    error: Optional[Dict[str, object]] = None
    series: Optional[pd.DataFrame] = None
    energy: Optional[pd.DataFrame] = None
    bounds: Optional[pd.DataFrame] = None
    unscaled: Optional[pd.DataFrame] = None
    sup_h2_error: float = math.nan
    tau_at_sup: float = math.nan
    sup_unscaled_error: float = math.nan
    leading: Optional[LeadingOrderNorms] = None
    bound_value: float = math.nan
    u_constant: float = math.nan
    ut_constant: float = math.nan
    max_tilde_ratio: float = math.nan
    max_constants: Dict[str, float] = field(default_factory=dict)
    gronwall: Optional[GronwallFit] = None
    max_balance_residual: float = math.nan
    elapsed: float = 0.0


@dataclass
class JustificationReport:
    """Result of :func:`convergence_study`.

    ``slope`` is the fitted exponent of the sup H2 error against epsilon and is
    only set when at least three runs succeed; the same holds for the
    unscaled and leading-order exponents.
    """

    config: StudyConfig
    amplitude: float
    delta: Optional[DeltaReport]
    runs: List[EpsilonRun]
    slope: Optional[float] = None
    unscaled_slope: Optional[float] = None
    leading_u_slope: Optional[float] = None
    leading_ut_slope: Optional[float] = None

    @property
    def epsilons(self) -> List[float]:
        return [r.epsilon for r in self.runs]

    @property
    def successful(self) -> List[EpsilonRun]:
        return [r for r in self.runs if r.ok]

    def summary_table(self) -> pd.DataFrame:
        """One row per epsilon (``convergence.csv``); ``slope_running`` uses the runs so far."""
        rows = []
        done_eps: List[float] = []
        done_err: List[float] = []
        for run in self.runs:
            if run.ok:
                done_eps.append(run.epsilon)
                done_err.append(run.sup_h2_error)
            running = fit_power_law(done_eps, done_err) if run.ok else None
            g = run.gronwall
            rows.append({
                "epsilon": run.epsilon,
                "sup_h2_error": run.sup_h2_error,
                "tau_at_sup": run.tau_at_sup,
                "slope_running": math.nan if running is None else running,
                "error_over_eps": run.sup_h2_error / run.epsilon,
                "sup_unscaled_error": run.sup_unscaled_error,
                "leading_u_norm": run.leading.u_norm if run.leading else math.nan,
                "leading_ut_norm": run.leading.ut_norm if run.leading else math.nan,
                "bound_value": run.bound_value,
                "u_constant": run.u_constant,
                "ut_constant": run.ut_constant,
                "max_tilde_ratio": run.max_tilde_ratio,
                "C0": g.C0 if g else math.nan,
                "C1": g.C1 if g else math.nan,
                "max_balance_residual": run.max_balance_residual,
                "status": "ok" if run.ok else run.error.get("type", "failed"),
            })
        columns = ["epsilon", "sup_h2_error", "tau_at_sup", "slope_running", "error_over_eps",
                   "sup_unscaled_error", "leading_u_norm", "leading_ut_norm", "bound_value",
                   "u_constant", "ut_constant", "max_tilde_ratio", "C0", "C1",
                   "max_balance_residual", "status"]
        return pd.DataFrame(rows, columns=columns)


def study_initial_data(config: StudyConfig) -> Tuple[float, Field, Optional[DeltaReport]]:
    """Amplitude, ``A0`` and (when tuned) the delta report of the study."""
    grid = config.grid
    if config.tune_delta and config.amplitude > 0:
        tuned = tune_amplitude(config.shape, config.amplitude, config.width, grid, config.T,
                               config.sp_dt, config.s, config.delta_cap, mean_tol=config.mean_tol)
        return tuned.amplitude, tuned.A0, tuned.delta
    A0 = admissible_initial_data(config.shape, config.amplitude, config.width, grid)
    return config.amplitude, A0, None


def study_perturbation(config: StudyConfig, A0: Field) -> Optional[Field]:
    """Seeded perturbation scaled so its contribution to the data distance is ``perturbation_norm``."""
    if config.perturbation == "none":
        return None
    rng = np.random.default_rng(config.seed)
    bump = perturbation_profile(A0.grid, config.width, rng)
    size = sobolev_norm(bump, 2.0)
    if config.velocity == "slaved":
        size += sobolev_norm(linearized_rhs(A0, bump, config.mean_tol), 1.0)
    return bump * (config.perturbation_norm / size)


def sample_schedule(config: StudyConfig, A0: Field) -> Tuple[float, int]:
    """Short-pulse step and substeps per sample for ``samples`` uniform samples on ``[0, T]``."""
    spacing = config.T / config.samples
    substeps = int(math.ceil(spacing / min(config.sp_dt, 0.5 * dt_max(A0)) - 1e-9))
    return spacing / substeps, substeps


def short_pulse_reference(config: StudyConfig, A0: Field) -> List[ShortPulseState]:
    """The shared short-pulse trajectory, with tau-derivatives cached."""
    dt, substeps = sample_schedule(config, A0)
    trajectory = sp_evolve(A0, config.T, dt, sample_every=substeps,
                           linear=config.linear, mean_tol=config.mean_tol)
    return [s.with_derivatives(config.mean_tol) for s in trajectory]


def klein_gordon_partner(config: StudyConfig, paired: PairedInitialData, p: ScalingParams,
                         sp_traj: Sequence[ShortPulseState]) -> List[KGState]:
    """Klein-Gordon trajectory sampled at ``t = tau_j / eps`` for every short-pulse sample."""
    grid_x = paired.kg0.grid_x
    if config.manufactured:
        return [scale_up(s.A, s.A_tau, s.tau, p, grid_x, config.include_time_correction)
                for s in sp_traj]
    interval = config.T / config.samples / p.epsilon
    substeps = int(math.ceil(interval / kg_dt(grid_x, config.cfl) - 1e-9))
    return kg_evolve(paired.kg0.u, paired.kg0.ut, config.T / p.epsilon, interval / substeps,
                     sample_every=substeps, linear=config.linear, margin=config.margin,
                     slope_cap=config.slope_cap)


def run_epsilon(config: StudyConfig, epsilon: float, A0: Field,
                perturbation: Optional[Field], sp_traj: Sequence[ShortPulseState],
                delta: float) -> EpsilonRun:
    """Co-evolve and diagnose one epsilon; solver errors are recorded, not raised."""
    start = time.perf_counter()
    run = EpsilonRun(epsilon)
    stage = "initial_data"
    logger.info("eps=%g: run started", epsilon)
    try:
        p = ScalingParams(epsilon)
        paired = build_paired_initial_data(
            A0, perturbation, p, velocity=config.velocity if perturbation is not None else None,
            include_time_correction=config.include_time_correction, mean_tol=config.mean_tol)
        run.bound_value = paired.bound_value
        run.u_constant = paired.u_constant
        run.ut_constant = paired.ut_constant

        stage = "klein_gordon"
        kg_traj = klein_gordon_partner(config, paired, p, sp_traj)

        stage = "diagnostics"
        errors = theorem_one_error(kg_traj, sp_traj, p)
        unscaled = unscaled_error(kg_traj, sp_traj, p)
        rows, bounds, ratios = [], [], []
        for kg, sp in zip(kg_traj, sp_traj):
            es = error_state(kg, sp, p, config.mean_tol)
            b = energy_breakdown(es, sp, config.mean_tol)
            rows.append((sp.tau, b.E, b.Etilde, b.J))
            ledger = apriori_bound_checks(es, sp, delta, config.bound_cap, b)
            ledger.insert(0, "tau", sp.tau)
            bounds.append(ledger)
            if b.E > 0:
                ratios.append(abs(b.Etilde) / b.E)
        energy = add_balance_residual(pd.DataFrame(rows, columns=["tau", "E", "Etilde", "J"]))
        bound_table = pd.concat(bounds, ignore_index=True)

        run.series = errors.series.assign(
            E=energy["E"].to_numpy(), Etilde=energy["Etilde"].to_numpy(), J=energy["J"].to_numpy())
        run.energy = energy
        run.bounds = bound_table
        run.unscaled = unscaled.series
        run.sup_h2_error = errors.sup
        run.tau_at_sup = errors.tau_at_sup
        run.sup_unscaled_error = unscaled.sup
        run.leading = unscaled.leading
        run.max_tilde_ratio = max(ratios) if ratios else 0.0
        run.max_constants = bound_table.groupby("bound", sort=False)["C"].max().to_dict()
        run.max_balance_residual = float(energy["balance_residual"].max())

        stage = "gronwall"
        run.gronwall = gronwall_fit(energy["tau"], energy["E"], delta, config.C0_cap, config.C1_cap)
        run.ok = True
    except ShortPulseError as exc:
        t = getattr(exc, "t", getattr(exc, "tau", None))
        logger.warning("eps=%g: %s failed: %s", epsilon, stage, exc)
        run.error = {"stage": stage, "type": type(exc).__name__, "message": str(exc), "time": t}
    run.elapsed = time.perf_counter() - start
    logger.info("eps=%g: run finished in %.2fs (ok=%s)", epsilon, run.elapsed, run.ok)
    return run


def _run_epsilon_job(args) -> EpsilonRun:
    return run_epsilon(*args)


def convergence_study(config: StudyConfig) -> JustificationReport:
    """Run the epsilon sweep and fit the scaling laws.

    The short-pulse trajectory is computed once and shared; each epsilon is
    independent and fans out to a process pool when ``threads > 1``.
    """
    if len(config.epsilons) < 3:
        raise ValueError("convergence_study needs at least three epsilon values")
    amplitude, A0, delta_report = study_initial_data(config)
    perturbation = study_perturbation(config, A0)
    sp_traj = short_pulse_reference(config, A0)
    if delta_report is None:
        delta_report = delta_of_trajectory(sp_traj, config.s, config.mean_tol)
    delta = delta_report.delta

    jobs = [(config, eps, A0, perturbation, sp_traj, delta) for eps in config.epsilons]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            runs = list(pool.map(_run_epsilon_job, jobs))
    else:
        runs = [_run_epsilon_job(job) for job in jobs]

    report = JustificationReport(config, amplitude, delta_report, runs)
    ok = report.successful
    eps = [r.epsilon for r in ok]
    report.slope = fit_power_law(eps, [r.sup_h2_error for r in ok])
    report.unscaled_slope = fit_power_law(eps, [r.sup_unscaled_error for r in ok])
    report.leading_u_slope = fit_power_law(eps, [r.leading.u_norm for r in ok])
    report.leading_ut_slope = fit_power_law(eps, [r.leading.ut_norm for r in ok])
    return report
