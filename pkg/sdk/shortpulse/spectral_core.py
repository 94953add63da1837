"""
Periodic Fourier discretization for the shortpulse SDK.

This module provides:
- :class:`FourierGrid`, the uniform periodic grid with its wavenumber tables.
- :class:`Field`, a real grid function with cached spectral coefficients.
- Spectral calculus: differentiation, zero-mean anti-differentiation, the
  short-pulse semigroup ``S(tau) = exp(tau * d^-1)``, translation and the
  2/3-rule dealiasing of pointwise products.
- Sobolev and homogeneous negative norms evaluated through Parseval.

Spectral coefficients are stored real-to-complex and scaled by ``L/n`` so that
``f_hat(k)`` approximates ``integral f(x) exp(-ikx) dx``; with this scaling the
discrete Parseval sum reproduces the continuum L2 integral.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np
from scipy import fft

from .exceptions import GridMismatch, InvalidGrid, MeanNotZero

logger = logging.getLogger(__name__)

# Default admissibility tolerance for zero-mean checks: |f_hat(0)| <= MEAN_TOL * ||f||_L2
MEAN_TOL = 1e-8

Scalar = Union[int, float, np.floating]


@dataclass(frozen=True)
class FourierGrid:
    """Uniform periodic grid on ``[0, length)`` with ``n`` nodes.

    Grids are immutable and compare equal when length and sample count agree,
    so they can be shared freely between fields and threads.

    Args:
        length: Domain period L.
        n: Even number of samples, at least 8.
    """

    length: float
    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n:
            raise InvalidGrid(f"n must be an integer, got {self.n!r}")
        if self.n < 8 or self.n % 2:
            raise InvalidGrid(f"n must be even and >= 8, got {self.n}")
        if not np.isfinite(self.length) or self.length <= 0:
            raise InvalidGrid(f"length must be positive, got {self.length!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "length", float(self.length))

    @property
    def spacing(self) -> float:
        """Node spacing h = L/n."""
        return self.length / self.n

    @property
    def k_max(self) -> float:
        """Largest resolved wavenumber (the Nyquist wavenumber pi*n/L)."""
        return np.pi * self.n / self.length

    @cached_property
    def nodes(self) -> np.ndarray:
        return _frozen(np.arange(self.n) * self.spacing)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Full wavenumber table k_m = 2*pi*m/L for m = -n/2+1, ..., n/2."""
        m = np.arange(-self.n // 2 + 1, self.n // 2 + 1)
        return _frozen(2.0 * np.pi * m / self.length)

    @cached_property
    def modes(self) -> np.ndarray:
        """Non-negative mode indices 0..n/2 matching the rfft layout."""
        return _frozen(np.arange(self.n // 2 + 1))

    @cached_property
    def k(self) -> np.ndarray:
        """rfft wavenumbers, Nyquist entry included."""
        return _frozen(2.0 * np.pi * self.modes / self.length)

    @cached_property
    def k_odd(self) -> np.ndarray:
        """rfft wavenumbers with the Nyquist entry zeroed.

        Symbols of odd order would turn the (real) Nyquist coefficient
        imaginary, which a real field cannot hold; they are evaluated with
        this table instead.
        """
        k = np.array(self.k)
        k[-1] = 0.0
        return _frozen(k)

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        """Multiplicity of each rfft mode in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return _frozen(w)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True for modes kept by the 2/3 rule (|m| <= n/3)."""
        return _frozen(self.modes <= self.n // 3)


def make_grid(length: float, n: int) -> FourierGrid:
    """Build a :class:`FourierGrid`, rejecting odd ``n`` and non-positive lengths."""
    return FourierGrid(length=length, n=n)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Field:
    """Real-valued grid function with lazily cached spectrum.

    Fields are values: every operation returns a fresh field and never
    modifies its inputs.

    Args:
        grid: The grid the samples live on.
        values: ``n`` finite physical samples.
    """

    grid: FourierGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise GridMismatch(
                f"expected {self.grid.n} samples, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("Field values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def zeros(cls, grid: FourierGrid) -> "Field":
        return cls(grid, np.zeros(grid.n))

    @classmethod
    def from_function(cls, grid: FourierGrid, func: Callable[[np.ndarray], np.ndarray]) -> "Field":
        """Sample ``func`` at the grid nodes."""
        return cls(grid, func(grid.nodes))

    @classmethod
    def from_spectrum(cls, grid: FourierGrid, coeffs: np.ndarray) -> "Field":
        """Inverse of :attr:`spectrum`; the imaginary parts of the k=0 and
        Nyquist coefficients are dropped, which enforces Hermitian symmetry."""
        return cls(grid, fft.irfft(np.asarray(coeffs) / grid.spacing, n=grid.n))

    @cached_property
    def spectrum(self) -> np.ndarray:
        return _frozen(fft.rfft(self.values) * self.grid.spacing)

    def mean(self) -> float:
        return float(self.values.mean())

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def integral(self) -> float:
        return integrate(self.values, self.grid)

    # Arithmetic -----------------------------------------------------------

    def _operand(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GridMismatch(f"grids differ: {self.grid} vs {other.grid}")
            return other.values
        return other

    def __add__(self, other) -> "Field":
        return Field(self.grid, self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other) -> "Field":
        return Field(self.grid, self.values - self._operand(other))

    def __rsub__(self, other) -> "Field":
        return Field(self.grid, self._operand(other) - self.values)

    def __mul__(self, other) -> "Field":
        return Field(self.grid, self.values * self._operand(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "Field":
        if isinstance(other, Field):
            raise TypeError("division by a Field is not supported")
        return Field(self.grid, self.values / other)

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


# ---------------------------------------------------------------------------
# Quadrature and mean handling
# ---------------------------------------------------------------------------

def integrate(values: np.ndarray, grid: FourierGrid) -> float:
    """Trapezoidal (spectrally accurate) integral over one period."""
    return float(grid.spacing * np.sum(values))


def check_mean_zero(f: Field, which: str = "f", mean_tol: float = MEAN_TOL) -> None:
    """Raise :class:`MeanNotZero` unless ``|f_hat(0)| <= mean_tol * ||f||_L2``."""
    zero_mode = abs(f.spectrum[0])
    allowed = mean_tol * sobolev_norm(f, 0.0)
    if zero_mode > allowed:
        raise MeanNotZero(which, zero_mode, allowed)


def project_mean_zero(f: Field, which: str = "f") -> Field:
    """Remove the mean of ``f``; the discarded value is logged."""
    mean = f.mean()
    if mean != 0.0:
        logger.debug("mean projection of %s discarded %.3e", which, mean)
    return Field(f.grid, f.values - mean)


def regrid(f: Field, grid: FourierGrid) -> Field:
    """Reinterpret the samples of ``f`` on another grid with the same ``n``."""
    if grid.n != f.grid.n:
        raise GridMismatch(f"sample counts differ: {f.grid.n} vs {grid.n}")
    return Field(grid, f.values)


# ---------------------------------------------------------------------------
# Spectral calculus
# ---------------------------------------------------------------------------

def _symbol_wavenumbers(grid: FourierGrid, order: int) -> np.ndarray:
    return grid.k_odd if order % 2 else grid.k


def differentiate(f: Field, order: int = 1) -> Field:
    """Spectral derivative: coefficients multiplied by ``(ik)**order``."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    k = _symbol_wavenumbers(f.grid, order)
    return Field.from_spectrum(f.grid, f.spectrum * (1j * k) ** order)


def antiderivative(f: Field, order: int = 1, mean_tol: float = MEAN_TOL,
                   which: str = "f") -> Field:
    """Zero-mean anti-derivative of order ``order``.

    Args:
        f: Zero-mean field.
        order: Number of anti-differentiations.
        mean_tol: Admissibility tolerance of the zero-mean check.
        which: Label reported by :class:`MeanNotZero`.

    Returns:
        The field with spectrum ``f_hat(k) / (ik)**order`` for ``k != 0`` and
        zero at ``k = 0``.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    check_mean_zero(f, which, mean_tol)
    k = _symbol_wavenumbers(f.grid, order)
    coeffs = np.zeros_like(f.spectrum)
    nz = k != 0.0
    coeffs[nz] = f.spectrum[nz] / (1j * k[nz]) ** order
    return Field.from_spectrum(f.grid, coeffs)


def sobolev_norm(f: Field, s: float) -> float:
    """H^s norm ``(sum (1+k^2)^s |f_hat|^2 / L)^(1/2)``; ``s=0`` is the L2 norm."""
    if s < 0:
        raise ValueError(f"s must be >= 0, got {s}")
    grid = f.grid
    weight = grid.parseval_weights * (1.0 + grid.k ** 2) ** s
    return float(np.sqrt(np.sum(weight * np.abs(f.spectrum) ** 2) / grid.length))


def homogeneous_negative_norm(f: Field, m: int, mean_tol: float = MEAN_TOL) -> float:
    """Homogeneous norm of order ``-m`` (the k=0 term is excluded after the mean check)."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    check_mean_zero(f, "f", mean_tol)
    grid = f.grid
    nz = grid.k != 0.0
    weight = grid.parseval_weights[nz] * grid.k[nz] ** (-2.0 * m)
    return float(np.sqrt(np.sum(weight * np.abs(f.spectrum[nz]) ** 2) / grid.length))


def semigroup_multiplier(grid: FourierGrid, tau: float) -> np.ndarray:
    """Spectral multiplier ``exp(tau / (ik))`` of the linear short-pulse flow."""
    k = grid.k_odd
    mult = np.ones(k.shape, dtype=complex)
    nz = k != 0.0
    mult[nz] = np.exp(tau / (1j * k[nz]))
    return mult


def semigroup_apply(f: Field, tau: float, mean_tol: float = MEAN_TOL) -> Field:
    """Apply ``S(tau)``, the L2 isometry solving ``B_tau = d^-1 B``."""
    check_mean_zero(f, "f", mean_tol)
    return Field.from_spectrum(f.grid, f.spectrum * semigroup_multiplier(f.grid, tau))


def translate(f: Field, shift: float) -> Field:
    """Return ``f(. - shift)`` through the phase ``exp(-ik*shift)``."""
    return Field.from_spectrum(f.grid, f.spectrum * np.exp(-1j * f.grid.k_odd * shift))


def dealias(f: Field) -> Field:
    """2/3 rule: zero all modes with |m| > n/3."""
    return Field.from_spectrum(f.grid, np.where(f.grid.dealias_mask, f.spectrum, 0.0))


def product(*fields: Field) -> Field:
    """Pointwise product of same-grid fields followed by :func:`dealias`."""
    if not fields:
        raise ValueError("product needs at least one field")
    out = fields[0]
    for other in fields[1:]:
        out = out * other
    return dealias(out)


def power(f: Field, p: int) -> Field:
    """Dealiased pointwise power ``f**p``."""
    return dealias(Field(f.grid, f.values ** p))
