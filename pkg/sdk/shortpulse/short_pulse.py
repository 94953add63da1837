"""
Short-pulse equation ``A_xi_tau = A + (A^3)_xi_xi`` on a periodic box.

This module provides:
- The first-order evolution form ``A_tau = d^-1 A + (A^3)_xi`` and its
  classical RK4 integrator (:func:`sp_step`, :func:`sp_evolve`).
- Closed formulas for ``A_tau``, ``A_tau_tau`` and ``A_tau_tau_tau``.
- The Duhamel solver of the linear inhomogeneous equation
  ``B_xi_tau = B + F`` and the forcings that reproduce the first three
  anti-derivatives of ``A``.
- Admissible initial data, the small-norm test and the delta functional
  that controls the approximation theorem.

Throughout, ``d^-1`` is the zero-mean anti-derivative of
:mod:`shortpulse.spectral_core`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate as sp_integrate

from .exceptions import BoundaryLeak, QuadratureUnderResolved, StepUnstable
from .spectral_core import (
    MEAN_TOL,
    Field,
    FourierGrid,
    antiderivative,
    check_mean_zero,
    differentiate,
    power,
    product,
    project_mean_zero,
    semigroup_multiplier,
    sobolev_norm,
)

logger = logging.getLogger(__name__)

SMALL_NORM_THRESHOLD = 1.0 / 6.0
BOUNDARY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ShortPulseState:
    """Sample ``(tau, A)`` of a short-pulse solution.

    The derivative fields are optional caches; :meth:`with_derivatives`
    fills them from :func:`sp_time_derivatives`.
    """

    tau: float
    A: Field
    A_tau: Optional[Field] = None
    A_tautau: Optional[Field] = None
    A_tautautau: Optional[Field] = None

    @property
    def grid(self) -> FourierGrid:
        return self.A.grid

    def derivatives(self, mean_tol: float = MEAN_TOL) -> Tuple[Field, Field, Field]:
        if self.A_tautautau is not None:
            return self.A_tau, self.A_tautau, self.A_tautautau
        return sp_time_derivatives(self.A, mean_tol=mean_tol)

    def with_derivatives(self, mean_tol: float = MEAN_TOL) -> "ShortPulseState":
        if self.A_tautautau is not None:
            return self
        A_t, A_tt, A_ttt = sp_time_derivatives(self.A, mean_tol=mean_tol)
        return ShortPulseState(self.tau, self.A, A_t, A_tt, A_ttt)


@dataclass(frozen=True)
class DeltaReport:
    """Suprema entering the delta condition of the approximation theorem."""

    s: float
    sup_A: float
    sup_At: float
    sup_Att: float
    sup_Attt: float

    @property
    def delta(self) -> float:
        return self.sup_A + self.sup_At + self.sup_Att + self.sup_Attt


@dataclass(frozen=True, eq=False)
class AntiderivativeDiagnostics:
    """``B1 = d^-1 A``, ``B2 = d^-2 A`` and ``B3 = d^-3 A + d^-1 A^3``."""

    B1: Field
    B2: Field
    B3: Field


class SmallNormCheck(NamedTuple):
    sum: float
    ok: bool


class DuhamelCase(str, Enum):
    """Forcing structure of ``B_xi_tau = B + F``.

    ``A_DIV_FORM``: ``F = G_xi`` with ``G`` given.
    ``B_DIFFERENTIABLE``: ``F`` and ``F_tau`` given.
    """

    A_DIV_FORM = "a_div_form"
    B_DIFFERENTIABLE = "b_differentiable"


@dataclass(frozen=True, eq=False)
class DuhamelForcing:
    """Forcing samples at ``tau_j = j * dt``; which lists are needed depends on the case."""

    G: Optional[Sequence[Field]] = None
    F: Optional[Sequence[Field]] = None
    F_tau: Optional[Sequence[Field]] = None


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------

def sp_rhs(A: Field, linear: bool = False, mean_tol: float = MEAN_TOL) -> Field:
    """``A_tau = d^-1 A + (A^3)_xi`` with a dealiased cube.

    Args:
        A: Zero-mean amplitude.
        linear: Drop the cubic term.
        mean_tol: Zero-mean tolerance for the anti-derivative.
    """
    rhs = antiderivative(A, 1, mean_tol, which="A")
    if not linear:
        rhs = rhs + differentiate(power(A, 3), 1)
    return rhs


def dt_max(A: Field) -> float:
    """Stability limit ``0.5 / (L/(2 pi) + 3 k_max^2 max|A|^2)`` of RK4."""
    grid = A.grid
    return 0.5 / (grid.length / (2.0 * np.pi) + 3.0 * grid.k_max ** 2 * A.sup_norm() ** 2)


def sp_step(state: ShortPulseState, dt: float, linear: bool = False,
            mean_tol: float = MEAN_TOL) -> ShortPulseState:
    """Advance one classical RK4 step, projecting each stage onto zero mean.

    Raises:
        StepUnstable: If ``|dt|`` exceeds :func:`dt_max` or the L2 norm grows
            by more than a factor 10 in the step.
    """
    A = state.A
    limit = dt_max(A)
    if abs(dt) > limit:
        raise StepUnstable(f"|dt|={abs(dt):.3e} exceeds dt_max={limit:.3e}", state.tau)

    def rhs(X: Field) -> Field:
        return project_mean_zero(sp_rhs(X, linear, mean_tol), "A_tau")

    try:
        k1 = rhs(A)
        k2 = rhs(A + (0.5 * dt) * k1)
        k3 = rhs(A + (0.5 * dt) * k2)
        k4 = rhs(A + dt * k3)
        A_new = project_mean_zero(A + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), "A")
    except ValueError as exc:
        # non-finite stage values
        raise StepUnstable(f"step produced invalid values: {exc}", state.tau) from exc

    old_norm = sobolev_norm(A, 0.0)
    new_norm = sobolev_norm(A_new, 0.0)
    if new_norm > 10.0 * old_norm and old_norm > 0.0:
        raise StepUnstable(f"L2 norm grew from {old_norm:.3e} to {new_norm:.3e}", state.tau)
    return ShortPulseState(state.tau + dt, A_new)


def sp_evolve(A0: Field, T: float, dt: float, sample_every: int = 1,
              linear: bool = False, mean_tol: float = MEAN_TOL) -> List[ShortPulseState]:
    """Integrate from ``tau = 0`` to ``T`` and return the sampled trajectory.

    Samples are taken at ``tau = 0, dt*sample_every, ...`` and at ``T``; a
    shortened last step lands exactly on ``T``.

    Args:
        A0: Zero-mean initial amplitude.
        T: Final time (``T = 0`` returns ``[A0]``).
        dt: Step size.
        sample_every: Sampling stride in steps.
        linear: Drop the cubic term.
        mean_tol: Zero-mean tolerance.

    Returns:
        List of :class:`ShortPulseState` in increasing ``tau``.
    """
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if sample_every < 1:
        raise ValueError(f"sample_every must be >= 1, got {sample_every}")
    check_mean_zero(A0, "A0", mean_tol)

    state = ShortPulseState(0.0, A0)
    trajectory = [state]
    n_full = int(np.floor(T / dt + 1e-9))
    remainder = T - n_full * dt
    if remainder < 1e-9 * dt:
        remainder = 0.0

    for i in range(1, n_full + 1):
        state = sp_step(state, dt, linear, mean_tol)
        tau = T if (i == n_full and remainder == 0.0) else i * dt
        state = ShortPulseState(tau, state.A)
        if i % sample_every == 0 or (i == n_full and remainder == 0.0):
            trajectory.append(state)

    if remainder > 0.0:
        state = sp_step(state, remainder, linear, mean_tol)
        trajectory.append(ShortPulseState(T, state.A))

    logger.debug("sp_evolve: %d samples up to tau=%.6g", len(trajectory), T)
    return trajectory


def sp_time_derivatives(A: Field, mean_tol: float = MEAN_TOL,
                        periodic: bool = True) -> Tuple[Field, Field, Field]:
    """First three tau-derivatives of ``A`` expressed through ``A`` alone.

    The whole-line formulas are

    * ``A_tau = d^-1 A + (A^3)_xi``
    * ``A_tautau = d^-2 A + 3 (A^2)_xi d^-1 A + 4 A^3 + 9/5 (A^5)_xi_xi``
    * ``A_tautautau = d^-3 A + d^-1 A^3 + 18 A^2 d^-1 A + 3 (A^2)_xi d^-2 A
      + 6 A_xi (d^-1 A)^2 + 27/2 (A^4)_xi_xi d^-1 A + 123/5 (A^5)_xi
      + 27/7 (A^7)_xi_xi_xi``

    On the periodic box ``d^-1 (A^3)_xi = A^3 - mean(A^3)``; with
    ``periodic=True`` the corresponding mean terms are subtracted so that
    the results are the exact derivatives of the integrated flow.

    Raises:
        MeanNotZero: With ``which="A"`` if ``A`` is not zero-mean.
    """
    B1 = antiderivative(A, 1, mean_tol, which="A")
    B2 = antiderivative(A, 2, mean_tol, which="A")
    B3 = antiderivative(A, 3, mean_tol, which="A")
    A_x = differentiate(A, 1)
    A2 = power(A, 2)
    A3 = power(A, 3)
    A4 = power(A, 4)
    A5 = power(A, 5)
    A7 = power(A, 7)
    A2_x = differentiate(A2, 1)
    cube_mean = A3.mean()
    d_inv_cube = antiderivative(project_mean_zero(A3, "A^3"), 1, mean_tol, which="A^3")

    A_t = B1 + differentiate(A3, 1)
    A_tt = (B2 + 3.0 * product(A2_x, B1) + 4.0 * A3
            + (9.0 / 5.0) * differentiate(A5, 2))
    A_ttt = (B3 + d_inv_cube
             + 18.0 * product(A2, B1)
             + 3.0 * product(A2_x, B2)
             + 6.0 * product(A_x, B1, B1)
             + 13.5 * product(differentiate(A4, 2), B1)
             + (123.0 / 5.0) * differentiate(A5, 1)
             + (27.0 / 7.0) * differentiate(A7, 3))

    if periodic:
        A_tt = A_tt - cube_mean
        A_ttt = A_ttt - (3.0 * cube_mean) * A2_x - 3.0 * product(A2, A_t).mean()
    return A_t, A_tt, A_ttt


# ---------------------------------------------------------------------------
# Duhamel solver
# ---------------------------------------------------------------------------

def _cumulative_simpson(values: np.ndarray, taus: np.ndarray) -> np.ndarray:
    if len(taus) < 3:
        integrator = sp_integrate.cumulative_trapezoid
    else:
        integrator = sp_integrate.cumulative_simpson
    real = integrator(values.real, x=taus, axis=0, initial=0.0)
    imag = integrator(values.imag, x=taus, axis=0, initial=0.0)
    return real + 1j * imag


def _spectral_l2(coeffs: np.ndarray, grid: FourierGrid) -> float:
    return float(np.sqrt(np.sum(grid.parseval_weights * np.abs(coeffs) ** 2) / grid.length))


def duhamel_solve(B0: Field, forcing: Optional[DuhamelForcing], T: float, dt: float,
                  case: DuhamelCase = DuhamelCase.A_DIV_FORM,
                  mean_tol: float = MEAN_TOL,
                  quadrature_tol: float = 1e-4) -> List[Field]:
    """Solve ``B_xi_tau = B + F`` on the sample times ``tau_j = j*dt`` up to ``T``.

    Case ``a_div_form`` (``F = G_xi``) uses
    ``B(tau) = S(tau) B0 + int_0^tau S(tau - s) G(s) ds``. Case
    ``b_differentiable`` writes ``B = -F + Bt`` where ``Bt`` solves case (a)
    with source ``F_tau`` and initial value ``B0 + F(0)``. The integral is
    accumulated as ``S(tau) int_0^tau S(-s) G(s) ds`` with composite Simpson
    quadrature in spectral space.

    Args:
        B0: Zero-mean initial value.
        forcing: Sampled forcing, ``None`` for the homogeneous problem.
        T: Final time; must be a multiple of ``dt``.
        dt: Sample spacing of the forcing.
        case: Forcing structure.
        mean_tol: Zero-mean tolerance for ``B0``.
        quadrature_tol: Allowed relative change when the spacing is doubled.

    Returns:
        ``B`` at every sample time.

    Raises:
        MeanNotZero: If ``B0`` is not zero-mean.
        QuadratureUnderResolved: If the coarse and fine quadratures disagree.
    """
    case = DuhamelCase(case)
    n_steps = int(round(T / dt))
    if n_steps < 0 or abs(n_steps * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    check_mean_zero(B0, "B0", mean_tol)
    grid = B0.grid
    taus = dt * np.arange(n_steps + 1)
    forward = np.array([semigroup_multiplier(grid, tau) for tau in taus])

    if forcing is None:
        return [Field.from_spectrum(grid, B0.spectrum * forward[j]) for j in range(n_steps + 1)]

    if case is DuhamelCase.A_DIV_FORM:
        source, shift = forcing.G, None
        base = B0.spectrum
    else:
        source = forcing.F_tau
        shift = [project_mean_zero(F, "F") for F in forcing.F]
        base = B0.spectrum + shift[0].spectrum
    if source is None or len(source) != n_steps + 1:
        raise ValueError(f"forcing must provide {n_steps + 1} samples for case {case.value}")

    backward = np.conj(forward)
    integrand = np.array([
        project_mean_zero(G, "forcing").spectrum * backward[j] for j, G in enumerate(source)
    ])
    accumulated = _cumulative_simpson(integrand, taus)

    if n_steps >= 4:
        coarse = _cumulative_simpson(integrand[::2], taus[::2])
        j = 2 * (len(coarse) - 1)
        scale = _spectral_l2(base + accumulated[j], grid)
        if scale > 0.0:
            change = _spectral_l2(accumulated[j] - coarse[-1], grid) / scale
            if change > quadrature_tol:
                raise QuadratureUnderResolved(change, quadrature_tol)

    solution = []
    for j in range(n_steps + 1):
        B = Field.from_spectrum(grid, (base + accumulated[j]) * forward[j])
        if shift is not None:
            B = B - shift[j]
        solution.append(B)
    return solution


def cube_forcing(trajectory: Sequence[ShortPulseState]) -> DuhamelForcing:
    """Case (a) source ``G = A^3``, the forcing of ``B1 = d^-1 A``."""
    return DuhamelForcing(G=[project_mean_zero(power(s.A, 3), "A^3") for s in trajectory])


def b2_forcing(trajectory: Sequence[ShortPulseState],
               mean_tol: float = MEAN_TOL) -> DuhamelForcing:
    """Case (b) forcing of ``B2 = d^-2 A``: ``F = A^3``, ``F_tau = 3 A^2 A_tau``."""
    F, F_tau = [], []
    for s in trajectory:
        A_t = s.A_tau if s.A_tau is not None else sp_rhs(s.A, mean_tol=mean_tol)
        F.append(project_mean_zero(power(s.A, 3), "A^3"))
        F_tau.append(project_mean_zero(3.0 * product(s.A, s.A, A_t), "3A^2A_tau"))
    return DuhamelForcing(F=F, F_tau=F_tau)


def b3_forcing(trajectory: Sequence[ShortPulseState],
               mean_tol: float = MEAN_TOL) -> DuhamelForcing:
    """Case (b) forcing of ``B3``: ``F = 3 A^2 d^-1 A + 9 A^4 A_xi`` (that is
    ``3 A^2 A_tau``) and ``F_tau = 6 A A_tau^2 + 3 A^2 A_tautau``."""
    F, F_tau = [], []
    for s in trajectory:
        A_t, A_tt, _ = s.derivatives(mean_tol)
        F.append(project_mean_zero(3.0 * product(s.A, s.A, A_t), "F"))
        F_tau.append(project_mean_zero(
            6.0 * product(s.A, A_t, A_t) + 3.0 * product(s.A, s.A, A_tt), "F_tau"))
    return DuhamelForcing(F=F, F_tau=F_tau)


def antiderivative_diagnostics(state: ShortPulseState,
                               mean_tol: float = MEAN_TOL) -> AntiderivativeDiagnostics:
    """Evaluate ``B1``, ``B2``, ``B3`` by direct spectral anti-differentiation."""
    A = state.A
    B1 = antiderivative(A, 1, mean_tol, which="A")
    B2 = antiderivative(A, 2, mean_tol, which="A")
    cube = project_mean_zero(power(A, 3), "A^3")
    B3 = antiderivative(A, 3, mean_tol, which="A") + antiderivative(cube, 1, mean_tol, which="A^3")
    return AntiderivativeDiagnostics(B1, B2, B3)


# ---------------------------------------------------------------------------
# Data and diagnostics
# ---------------------------------------------------------------------------

def _gaussian_density(grid: FourierGrid, width: float, center: Optional[float]) -> np.ndarray:
    c = grid.length / 2.0 if center is None else center
    x = grid.nodes - c
    return np.exp(-0.5 * (x / width) ** 2) / (width * np.sqrt(2.0 * np.pi))


def admissible_initial_data(shape: str, amplitude: float, width: float, grid: FourierGrid,
                            center: Optional[float] = None,
                            boundary_tol: float = BOUNDARY_TOL) -> Field:
    """Initial amplitude ``A0 = amplitude * d^3 psi`` for a localized ``psi``.

    Args:
        shape: ``"gaussian_derivative"`` (``psi`` a Gaussian density of
            standard deviation ``width``) or ``"sine_packet"`` (that density
            times ``cos(2 xi / width)``).
        amplitude: Non-negative prefactor.
        width: Positive width of ``psi``.
        grid: Target grid; ``psi`` is centred in the box unless ``center``.
        center: Optional centre position.
        boundary_tol: Admissible edge-to-peak ratio of the profile.

    Returns:
        A zero-mean field whose first three anti-derivatives are zero-mean too.

    Raises:
        BoundaryLeak: If the profile does not decay to the box edges.
    """
    if amplitude < 0:
        raise ValueError(f"amplitude must be >= 0, got {amplitude}")
    if width <= 0:
        raise ValueError(f"width must be positive, got {width}")
    psi = _gaussian_density(grid, width, center)
    if shape == "sine_packet":
        c = grid.length / 2.0 if center is None else center
        psi = psi * np.cos(2.0 * (grid.nodes - c) / width)
    elif shape != "gaussian_derivative":
        raise ValueError(f"unknown shape {shape!r}")

    profile = differentiate(Field(grid, psi), 3)
    peak = profile.sup_norm()
    ratio = max(abs(profile.values[0]), abs(profile.values[-1])) / peak
    if ratio > boundary_tol:
        raise BoundaryLeak(ratio, boundary_tol)
    return amplitude * profile


def perturbation_profile(grid: FourierGrid, width: float,
                         rng: Optional[np.random.Generator] = None,
                         center: Optional[float] = None) -> Field:
    """Zero-mean bump ``c1 psi' + c2 psi''`` with unit H2 norm.

    ``c1, c2`` are standard normal draws from ``rng``; without a generator
    the bump is ``psi'``.
    """
    psi = Field(grid, _gaussian_density(grid, width, center))
    c1, c2 = (1.0, 0.0) if rng is None else rng.standard_normal(2)
    bump = c1 * differentiate(psi, 1) + c2 * differentiate(psi, 2)
    return bump / sobolev_norm(bump, 2.0)


def linearized_rhs(A: Field, p: Field, mean_tol: float = MEAN_TOL) -> Field:
    """Derivative of :func:`sp_rhs` at ``A`` in direction ``p``: ``d^-1 p + (3 A^2 p)_xi``."""
    return antiderivative(p, 1, mean_tol, which="p") + differentiate(3.0 * product(A, A, p), 1)


def small_norm_check(A0: Field) -> SmallNormCheck:
    """Global-existence test ``||A0'||^2 + ||A0''||^2 < 1/6``."""
    total = sobolev_norm(differentiate(A0, 1), 0.0) ** 2 + sobolev_norm(differentiate(A0, 2), 0.0) ** 2
    return SmallNormCheck(total, total < SMALL_NORM_THRESHOLD)


def delta_of_trajectory(trajectory: Sequence[ShortPulseState], s: float = 4.0,
                        mean_tol: float = MEAN_TOL) -> DeltaReport:
    """Suprema of ``||A||_s + ||A_tau||_{s-1} + ||A_tautau||_{s-2} + ||A_tautautau||_{s-3}``.

    Raises:
        ValueError: If ``s <= 7/2``.
    """
    if s <= 3.5:
        raise ValueError(f"s must exceed 7/2, got {s}")
    sups = np.zeros(4)
    for state in trajectory:
        A_t, A_tt, A_ttt = state.derivatives(mean_tol)
        norms = (
            sobolev_norm(state.A, s),
            sobolev_norm(A_t, s - 1.0),
            sobolev_norm(A_tt, s - 2.0),
            sobolev_norm(A_ttt, s - 3.0),
        )
        sups = np.maximum(sups, norms)
    return DeltaReport(s, *(float(v) for v in sups))
