"""
Quasilinear Klein-Gordon equation ``u_tt - u_xx + u + (u^3)_xx = 0``.

This module provides:
- The RK4 solver in original variables with the continuation monitor that
  aborts once ``|u|`` approaches ``1/sqrt(3)`` or the slope blows up.
- The symmetric first-order reformulation and its own integrator.
- The energies ``E1``, ``E2``, ``E3`` and their balance laws.
- The moving-frame scaling ``u = 2 eps U(eps t, (x - t)/(2 eps))`` between
  the Klein-Gordon and short-pulse variables.

The solver works on the weight ``1 - 3u^2``, which must stay positive; all
operations that need it raise :class:`ValidityRegionExceeded` otherwise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import fft

from .exceptions import GridMismatch, ValidityRegionExceeded
from .spectral_core import (
    Field,
    FourierGrid,
    differentiate,
    power,
    regrid,
    translate,
)

logger = logging.getLogger(__name__)

VALIDITY_BOUND = 1.0 / math.sqrt(3.0)
DEFAULT_CFL = 0.2
DEFAULT_MARGIN = 0.02
DEFAULT_SLOPE_CAP = 1e3


@dataclass(frozen=True, eq=False)
class KGState:
    """Klein-Gordon sample ``(t, u, u_t)``.

    Only finiteness is enforced here (by :class:`Field`); the validity
    region is checked by the operations that need it.
    """

    t: float
    u: Field
    ut: Field

    def __post_init__(self):
        if self.u.grid != self.ut.grid:
            raise GridMismatch(f"u and ut live on different grids: {self.u.grid} vs {self.ut.grid}")

    @property
    def grid_x(self) -> FourierGrid:
        return self.u.grid


@dataclass(frozen=True, eq=False)
class SymmetricState:
    """``u1 = u_t``, ``u2 = (1 - 3u^2)^(1/2) u_x``, ``u3 = u`` at time ``t``."""

    u1: Field
    u2: Field
    u3: Field
    t: float = 0.0


@dataclass(frozen=True)
class ContinuationReport:
    M0: float
    M1: float
    M2: float
    ok: bool


@dataclass(frozen=True)
class KGEnergies:
    E1: float
    E2: float
    E3: float


class EnergyRates(NamedTuple):
    dE1: float
    dE2: float
    dE3: float


class ScaledState(NamedTuple):
    tau: float
    U: Field
    Utau: Field


@dataclass(frozen=True)
class ScalingParams:
    """Moving-frame parameters: ``tau = eps t``, ``xi = (x - t)/(2 eps)``, ``u = 2 eps U``."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")


def _require_valid(u: Field, t: float) -> None:
    peak = u.sup_norm()
    if peak >= VALIDITY_BOUND:
        raise ValidityRegionExceeded(f"max|u|={peak:.6g} reached 1/sqrt(3)", t)


# ---------------------------------------------------------------------------
# Evolution in original variables
# ---------------------------------------------------------------------------

def kg_rhs(state: KGState, linear: bool = False) -> Tuple[Field, Field]:
    """``(u_t, u_xx - u - (u^3)_xx)`` with a dealiased cube."""
    _require_valid(state.u, state.t)
    dut = differentiate(state.u, 2) - state.u
    if not linear:
        dut = dut - differentiate(power(state.u, 3), 2)
    return state.ut, dut


def kg_dt(grid: FourierGrid, cfl: float = DEFAULT_CFL) -> float:
    """Step ``cfl / sqrt(1 + k_max^2)`` resolving the fastest linear frequency."""
    return cfl / math.sqrt(1.0 + grid.k_max ** 2)


def _acceleration(grid: FourierGrid, linear: bool):
    k2 = grid.k ** 2
    mask = grid.dealias_mask
    n = grid.n

    def accel(u_hat: np.ndarray) -> np.ndarray:
        out = -(1.0 + k2) * u_hat
        if not linear:
            cube = fft.rfft(fft.irfft(u_hat, n=n) ** 3)
            out = out + k2 * np.where(mask, cube, 0.0)
        return out

    return accel


def kg_evolve(u0: Field, v0: Field, t_end: float, dt: Optional[float] = None,
              sample_every: int = 1, linear: bool = False, cfl: float = DEFAULT_CFL,
              margin: float = DEFAULT_MARGIN, slope_cap: float = DEFAULT_SLOPE_CAP,
              t0: float = 0.0) -> List[KGState]:
    """Integrate from ``t0`` to ``t0 + t_end`` with classical RK4.

    The sample at step ``i`` carries the time ``t0 + i*dt``. If ``t_end`` is
    not a multiple of ``dt`` the step is shortened so that it is.

    Args:
        u0: Initial displacement.
        v0: Initial velocity.
        t_end: Integration length.
        dt: Step size, defaults to :func:`kg_dt`.
        sample_every: Sampling stride in steps; the final state is always kept.
        linear: Drop the cubic term.
        cfl: CFL number used when ``dt`` is not given.
        margin: Abort once ``max|u| >= 1/sqrt(3) - margin``.
        slope_cap: Abort once ``max|u_x| > slope_cap``.
        t0: Initial time.

    Returns:
        Sampled trajectory of :class:`KGState`.

    Raises:
        ValidityRegionExceeded: With the abort time and the samples so far.
    """
    if u0.grid != v0.grid:
        raise GridMismatch("u0 and v0 live on different grids")
    if t_end < 0:
        raise ValueError(f"t_end must be >= 0, got {t_end}")
    if sample_every < 1:
        raise ValueError(f"sample_every must be >= 1, got {sample_every}")
    grid = u0.grid
    if dt is None:
        dt = kg_dt(grid, cfl)
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")

    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * dt:
        n_steps = int(math.ceil(t_end / dt))
        dt = t_end / n_steps
        logger.debug("kg_evolve: dt shortened to %.6g to land on t_end", dt)

    limit = VALIDITY_BOUND - margin
    trajectory = [KGState(t0, u0, v0)]
    if u0.sup_norm() >= limit:
        raise ValidityRegionExceeded(
            f"initial max|u|={u0.sup_norm():.6g} outside 1/sqrt(3) - {margin}", t0, [])

    accel = _acceleration(grid, linear)
    ik = 1j * grid.k_odd
    u_hat = fft.rfft(u0.values)
    v_hat = fft.rfft(v0.values)
    half = 0.5 * dt
    for i in range(1, n_steps + 1):
        a1 = accel(u_hat)
        a2 = accel(u_hat + half * v_hat)
        v2 = v_hat + half * a1
        a3 = accel(u_hat + half * v2)
        v3 = v_hat + half * a2
        a4 = accel(u_hat + dt * v3)
        v4 = v_hat + dt * a3
        u_hat = u_hat + (dt / 6.0) * (v_hat + 2.0 * v2 + 2.0 * v3 + v4)
        v_hat = v_hat + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)

        t = t0 + i * dt
        u = fft.irfft(u_hat, n=grid.n)
        reason = None
        if not (np.all(np.isfinite(u_hat)) and np.all(np.isfinite(v_hat))):
            reason = "non-finite values"
        else:
            peak = float(np.max(np.abs(u)))
            slope = float(np.max(np.abs(fft.irfft(ik * u_hat, n=grid.n))))
            if peak >= limit:
                reason = f"max|u|={peak:.6g} reached 1/sqrt(3) - {margin}"
            elif slope > slope_cap:
                reason = f"max|u_x|={slope:.6g} exceeded slope cap {slope_cap:g}"
        if reason is not None:
            logger.warning("kg_evolve aborted at t=%.6g: %s", t, reason)
            raise ValidityRegionExceeded(reason, t, trajectory)

        if i % sample_every == 0 or i == n_steps:
            trajectory.append(KGState(t, Field(grid, u), Field(grid, fft.irfft(v_hat, n=grid.n))))
    return trajectory


# ---------------------------------------------------------------------------
# Symmetric first-order system
# ---------------------------------------------------------------------------

def to_symmetric(state: KGState) -> SymmetricState:
    _require_valid(state.u, state.t)
    weight = np.sqrt(1.0 - 3.0 * state.u.values ** 2)
    u2 = Field(state.grid_x, weight * differentiate(state.u, 1).values)
    return SymmetricState(state.ut, u2, state.u, state.t)


def symmetric_rhs(sym: SymmetricState) -> Tuple[Field, Field, Field]:
    """Time derivatives of the symmetric system with ``w = 1 - 3 u3^2``:

    * ``u1_t = w^(1/2) (u2)_x - u3 - 3 u2^2 u3 / w``
    * ``u2_t = w^(1/2) (u1)_x - 3 u1 u2 u3 / w``
    * ``u3_t = u1``
    """
    _require_valid(sym.u3, sym.t)
    grid = sym.u3.grid
    u1, u2, u3 = sym.u1.values, sym.u2.values, sym.u3.values
    w = 1.0 - 3.0 * u3 ** 2
    root = np.sqrt(w)
    du1 = root * differentiate(sym.u2, 1).values - u3 - 3.0 * u2 ** 2 * u3 / w
    du2 = root * differentiate(sym.u1, 1).values - 3.0 * u1 * u2 * u3 / w
    return Field(grid, du1), Field(grid, du2), sym.u1


def symmetric_evolve(sym0: SymmetricState, t_end: float, dt: float,
                     sample_every: int = 1) -> List[SymmetricState]:
    """RK4 integration of the symmetric system; used to cross-check :func:`kg_evolve`."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    dt = t_end / n_steps

    def shifted(base: SymmetricState, ks, h: float) -> SymmetricState:
        return SymmetricState(base.u1 + h * ks[0], base.u2 + h * ks[1], base.u3 + h * ks[2],
                              base.t + h)

    state = sym0
    trajectory = [state]
    for i in range(1, n_steps + 1):
        k1 = symmetric_rhs(state)
        k2 = symmetric_rhs(shifted(state, k1, 0.5 * dt))
        k3 = symmetric_rhs(shifted(state, k2, 0.5 * dt))
        k4 = symmetric_rhs(shifted(state, k3, dt))
        parts = [state.u1, state.u2, state.u3]
        new = [p + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
               for p, a, b, c, d in zip(parts, k1, k2, k3, k4)]
        state = SymmetricState(*new, t=sym0.t + i * dt)
        if i % sample_every == 0 or i == n_steps:
            trajectory.append(state)
    return trajectory


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------

def _derivatives(f: Field, orders: int) -> List[np.ndarray]:
    return [f.values] + [differentiate(f, m).values for m in range(1, orders + 1)]


def kg_energies(state: KGState) -> KGEnergies:
    """``E_j = int (d^(j-1) u)^2 + (d^(j-1) u_t)^2 + (d^j u)^2 (1 - 3u^2) dx``."""
    _require_valid(state.u, state.t)
    grid = state.grid_x
    u = _derivatives(state.u, 3)
    ut = _derivatives(state.ut, 2)
    weight = 1.0 - 3.0 * u[0] ** 2
    energies = [
        grid.spacing * float(np.sum(u[j] ** 2 + ut[j] ** 2 + weight * u[j + 1] ** 2))
        for j in range(3)
    ]
    return KGEnergies(*energies)


def energy_rates(state: KGState) -> EnergyRates:
    """Right-hand sides of the balance laws for ``dE1/dt``, ``dE2/dt``, ``dE3/dt``."""
    _require_valid(state.u, state.t)
    h = state.grid_x.spacing
    u, ux, uxx, uxxx = _derivatives(state.u, 3)
    ut, utx, utxx = _derivatives(state.ut, 2)
    r1 = -6.0 * np.sum(u * ut * ux ** 2)
    r2 = (-6.0 * np.sum(u * ut * uxx ** 2)
          - 12.0 * np.sum(ux ** 3 * utx)
          - 24.0 * np.sum(u * ux * uxx * utx))
    r3 = (-6.0 * np.sum(u * ut * uxxx ** 2)
          - 72.0 * np.sum(ux ** 2 * uxx * utxx)
          - 36.0 * np.sum(u * ux * uxxx * utxx)
          - 36.0 * np.sum(u * uxx ** 2 * utxx))
    return EnergyRates(h * float(r1), h * float(r2), h * float(r3))


ENERGY_RATE_COLUMNS = ["t", "r1", "r2", "r3", "r1_normalized", "r2_normalized", "r3_normalized"]


def energy_rate_check(trajectory: Sequence[KGState]) -> pd.DataFrame:
    """Residuals ``|centered dE_i/dt - stated rate|`` at the interior samples.

    The ``*_normalized`` columns divide by the largest sampled ``E_i``.
    """
    if len(trajectory) < 3:
        return pd.DataFrame(columns=ENERGY_RATE_COLUMNS)
    times = np.array([s.t for s in trajectory])
    energies = np.array([[e.E1, e.E2, e.E3] for e in map(kg_energies, trajectory)])
    rates = np.array([energy_rates(s) for s in trajectory[1:-1]])
    centered = (energies[2:] - energies[:-2]) / (times[2:] - times[:-2])[:, None]
    residual = np.abs(centered - rates)
    scale = energies.max(axis=0)
    scale[scale == 0.0] = 1.0
    table = pd.DataFrame(residual, columns=["r1", "r2", "r3"])
    table.insert(0, "t", times[1:-1])
    for j in range(3):
        table[f"r{j + 1}_normalized"] = residual[:, j] / scale[j]
    return table


def continuation_monitor(trajectory: Sequence[KGState],
                         margin: float = DEFAULT_MARGIN) -> ContinuationReport:
    """Discrete suprema of ``|u|``, ``|u_t|``, ``|u_x|`` and the continuation verdict."""
    M0 = M1 = M2 = 0.0
    for state in trajectory:
        M0 = max(M0, state.u.sup_norm())
        M1 = max(M1, state.ut.sup_norm())
        M2 = max(M2, differentiate(state.u, 1).sup_norm())
    ok = M0 < VALIDITY_BOUND - margin and math.isfinite(M1) and math.isfinite(M2)
    return ContinuationReport(M0, M1, M2, ok)


# ---------------------------------------------------------------------------
# Moving frame
# ---------------------------------------------------------------------------

def xi_grid_for(grid_x: FourierGrid, p: ScalingParams) -> FourierGrid:
    """The xi-grid matching ``grid_x``: same ``n``, length divided by ``2 eps``."""
    return FourierGrid(grid_x.length / (2.0 * p.epsilon), grid_x.n)


def x_grid_for(grid_xi: FourierGrid, p: ScalingParams) -> FourierGrid:
    return FourierGrid(2.0 * p.epsilon * grid_xi.length, grid_xi.n)


def _check_commensurate(grid_x: FourierGrid, grid_xi: FourierGrid, p: ScalingParams) -> None:
    expected = grid_x.length / (2.0 * p.epsilon)
    if grid_x.n != grid_xi.n or abs(grid_xi.length - expected) > 1e-12 * expected:
        raise GridMismatch(
            f"xi-grid {grid_xi} is not the x-grid {grid_x} rescaled by 1/(2*{p.epsilon})"
        )


def scale_down(state: KGState, p: ScalingParams, grid_xi: FourierGrid) -> ScaledState:
    """Map a Klein-Gordon sample to ``(tau, U, U_tau)`` on ``grid_xi``.

    ``U(xi) = u(2 eps xi + t)/(2 eps)`` and ``U_tau = (u_t + u_x)/(2 eps^2)``
    in the same frame.
    """
    _check_commensurate(state.grid_x, grid_xi, p)
    eps = p.epsilon
    moving = translate(state.u, -state.t)
    flux = translate(state.ut + differentiate(state.u, 1), -state.t)
    U = regrid(moving, grid_xi) / (2.0 * eps)
    Utau = regrid(flux, grid_xi) / (2.0 * eps ** 2)
    return ScaledState(eps * state.t, U, Utau)


def scale_up(U: Field, Utau: Optional[Field], tau: float, p: ScalingParams,
             grid_x: FourierGrid, include_time_correction: bool = True) -> KGState:
    """Inverse of :func:`scale_down`: ``u = 2 eps U``, ``u_t = -U_xi + 2 eps^2 U_tau``.

    With ``Utau=None`` or ``include_time_correction=False`` the velocity is the
    leading-order ``-U_xi``.
    """
    _check_commensurate(grid_x, U.grid, p)
    eps = p.epsilon
    t = tau / eps
    velocity = -differentiate(U, 1)
    if Utau is not None and include_time_correction:
        velocity = velocity + (2.0 * eps ** 2) * Utau
    u = translate(Field(grid_x, 2.0 * eps * U.values), t)
    ut = translate(regrid(velocity, grid_x), t)
    return KGState(t, u, ut)
