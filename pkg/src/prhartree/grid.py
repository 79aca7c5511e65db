"""Periodic cubic grids, real-space fields and their discrete Fourier transforms.

The box is ``[-L, L)^3`` sampled at ``n`` points per axis, so ``x_i = -L + i*h``
with ``h = 2L/n``; the origin sits on the node ``i = n/2``.  Frequencies are
``xi_j = (pi/L) * j`` for ``j`` in ``[-n/2, n/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft


@dataclass(frozen=True)
class Grid:
    """Cubic periodic grid on ``[-L, L)^3``."""

    n: int
    L: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n % 2 != 0:
            raise ValueError(f"grid size n must be an even integer, got {self.n}")
        if self.n < 8:
            raise ValueError(f"grid size n must be >= 8, got {self.n}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise ValueError(f"half-length L must be positive, got {self.L}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def size(self) -> int:
        return self.n**3

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def freqs(self) -> np.ndarray:
        """Per-axis frequencies in FFT order, ``(pi/L) * j``."""
        return (np.pi / self.L) * np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def _rfreqs(self) -> np.ndarray:
        return (np.pi / self.L) * np.fft.rfftfreq(self.n, d=1.0 / self.n)

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays ``(X, Y, Z)``."""
        a = self.axis
        return a[:, None, None], a[None, :, None], a[None, None, :]

    @cached_property
    def radius(self) -> np.ndarray:
        X, Y, Z = self.coords()
        return np.sqrt(X**2 + Y**2 + Z**2)

    @cached_property
    def xi2(self) -> np.ndarray:
        """``|xi|^2`` on the half-spectrum layout used by ``rfftn``."""
        f, r = self.freqs, self._rfreqs
        return f[:, None, None] ** 2 + f[None, :, None] ** 2 + r[None, None, :] ** 2

    @cached_property
    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each half-spectrum column in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    def index_of(self, point) -> tuple[int, int, int] | None:
        """Grid index of ``point`` if it lies exactly on a node, else ``None``."""
        idx = []
        for c in np.asarray(point, dtype=float):
            k = (c + self.L) / self.h
            kr = round(k)
            if abs(k - kr) > 1e-9 or not 0 <= kr < self.n:
                return None
            idx.append(int(kr))
        return tuple(idx)


def make_grid(n: int, L: float) -> Grid:
    """Build a grid with ``n >= 16`` (even) points per axis on ``[-L, L)^3``."""
    if int(n) != n or n % 2 != 0:
        raise ValueError(f"n must be even, got {n}")
    if n < 16:
        raise ValueError(f"n must be >= 16, got {n}")
    return Grid(int(n), float(L))


@dataclass(frozen=True)
class Field:
    """Real samples of a function on a grid (row-major, ``i`` outermost)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            if v.size != self.grid.size:
                raise ValueError(f"expected {self.grid.size} values, got {v.size}")
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def mass(self) -> float:
        return mass(self.values, self.grid)


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients on the full frequency lattice (FFT order).

    Normalised as a unitary continuous transform, so that
    ``sum |c|^2 * (pi/L)^3`` equals the real-space quadrature of ``u^2``.
    """

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    @property
    def mass(self) -> float:
        dxi = np.pi / self.grid.L
        return float(np.sum(np.abs(self.coeffs).ravel() ** 2) * dxi**3)


def check_field(u, grid: Grid, name: str = "u") -> np.ndarray:
    """Return ``u`` as a finite float array of the grid's shape."""
    if isinstance(u, Field):
        if u.grid != grid:
            raise ValueError(f"{name} lives on {u.grid}, expected {grid}")
        return u.values
    arr = np.asarray(u, dtype=np.float64)
    if arr.shape != grid.shape:
        raise ValueError(f"{name} has shape {arr.shape}, expected {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def integrate(f, grid: Grid) -> float:
    """Periodic trapezoidal quadrature, pairwise summed."""
    return float(np.sum(np.ravel(f)) * grid.cell_volume)


def inner(f, g, grid: Grid) -> float:
    return integrate(np.multiply(f, g), grid)


def mass(u, grid: Grid) -> float:
    u = np.asarray(u)
    return integrate(u * u, grid)


def l2norm(u, grid: Grid) -> float:
    return float(np.sqrt(mass(u, grid)))


def _phase(grid: Grid) -> np.ndarray:
    # exp(-i xi x_0) with x_0 = -L is (-1)^j on the lattice
    j = np.fft.fftfreq(grid.n, d=1.0 / grid.n).astype(int)
    s = np.where(j % 2 == 0, 1.0, -1.0)
    return s[:, None, None] * s[None, :, None] * s[None, None, :]


def to_spectral(u, grid: Grid) -> SpectralField:
    u = check_field(u, grid)
    c = sfft.fftn(u) * (grid.cell_volume / (2 * np.pi) ** 1.5) * _phase(grid)
    return SpectralField(grid, c)


def from_spectral(s: SpectralField) -> Field:
    grid = s.grid
    c = s.coeffs * _phase(grid) / (grid.cell_volume / (2 * np.pi) ** 1.5)
    return Field(grid, sfft.ifftn(c).real)


def periodic_sinc_matrix(grid: Grid, targets) -> np.ndarray:
    """Rows evaluate the band-limited interpolant of axis samples at ``targets``.

    For even ``n`` the Nyquist mode enters as a cosine, which keeps the
    interpolant real.
    """
    t = np.asarray(targets, dtype=float)[:, None] - grid.axis[None, :]
    n, L = grid.n, grid.L
    arg = np.pi * t / (2 * L)
    with np.errstate(divide="ignore", invalid="ignore"):
        S = np.sin(n * arg) / (n * np.tan(arg))
    # exact nodes (mod the period) give the Kronecker delta
    k = t / grid.h
    hit = np.abs(k - np.round(k)) < 1e-12
    S[hit] = np.where(np.round(k[hit]) % n == 0, 1.0, 0.0)
    return S


def trig_interpolate(u, grid: Grid, ax, ay=None, az=None) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``u`` on a tensor grid."""
    u = check_field(u, grid)
    ay = ax if ay is None else ay
    az = ax if az is None else az
    Sx, Sy, Sz = (periodic_sinc_matrix(grid, a) for a in (ax, ay, az))
    out = np.tensordot(Sx, u, axes=(1, 0))
    out = np.tensordot(Sy, out, axes=(1, 1)).transpose(1, 0, 2)
    out = np.tensordot(Sz, out, axes=(1, 2)).transpose(1, 2, 0)
    return np.ascontiguousarray(out)
