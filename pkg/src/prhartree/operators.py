"""Fourier-multiplier operators and the free-space Coulomb convolution."""

from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy import integrate as sint
from scipy import special

from .grid import Grid, check_field

__all__ = [
    "BoundaryContaminationWarning",
    "apply_multiplier",
    "apply_kinetic",
    "kinetic_form",
    "riesz_form",
    "coulomb_convolve",
    "commutator_apply",
    "cell_average_inverse_r",
    "coulomb_kernel",
    "hartree_potential",
    "boundary_ratio",
]


class BoundaryContaminationWarning(UserWarning):
    """A field is not negligible on the faces of the periodic box."""


def kinetic_symbol(grid: Grid, m: float = 0.0) -> np.ndarray:
    return np.sqrt(grid.xi2 + float(m) ** 2)


def apply_multiplier(u: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """Apply a real, even Fourier symbol given on the ``rfftn`` layout."""
    return sfft.irfftn(symbol * sfft.rfftn(u), s=u.shape)


def apply_kinetic(u, grid: Grid, m: float = 0.0) -> np.ndarray:
    """``sqrt(-Laplacian + m^2) u``."""
    u = check_field(u, grid)
    return apply_multiplier(u, kinetic_symbol(grid, m))


def _spectral_form(u: np.ndarray, grid: Grid, symbol: np.ndarray) -> float:
    uh = sfft.rfftn(u)
    power = (uh.real**2 + uh.imag**2) * symbol * grid.rfft_weights
    return float(np.sum(power.ravel()) * grid.cell_volume / grid.size)


def kinetic_form(u, grid: Grid, m: float = 0.0) -> float:
    """Quadratic form ``<u, sqrt(-Laplacian + m^2) u>``."""
    u = check_field(u, grid)
    return _spectral_form(u, grid, kinetic_symbol(grid, m))


def riesz_form(u, grid: Grid, s: float = 0.5) -> float:
    """``sum |xi|^(2s) |u_hat|^2`` for ``s`` in ``{1/2, -1/2}``.

    For ``s = -1/2`` the zero mode is dropped.
    """
    u = check_field(u, grid)
    if s == 0.5:
        sym = np.sqrt(grid.xi2)
    elif s == -0.5:
        with np.errstate(divide="ignore"):
            sym = 1.0 / np.sqrt(grid.xi2)
        sym[0, 0, 0] = 0.0
    else:
        raise ValueError(f"unsupported Riesz exponent {s!r}; use 0.5 or -0.5")
    return _spectral_form(u, grid, sym)


@lru_cache(maxsize=1)
def cell_average_inverse_r() -> float:
    """Mean of ``1/|x|`` over the unit cube ``[-1/2, 1/2]^3``.

    Written as a sum over the six faces, each term being the smooth integral
    ``(1/2) * int_face d/|y| dA`` with ``d = 1/2``.
    """
    val, err = sint.dblquad(
        lambda z, y: 1.0 / np.sqrt(0.25 + y * y + z * z),
        -0.5, 0.5, -0.5, 0.5, epsabs=1e-13, epsrel=1e-13,
    )
    if err > 1e-10:
        raise RuntimeError(f"cell-average quadrature did not converge (err={err:g})")
    return 6 * 0.5 * 0.5 * val


KERNELS = ("split", "cell")
_SPLIT_WIDTH = 4.0  # Gaussian split width in grid spacings


def _doubled_offsets(n: int, h: float):
    d = np.fft.fftfreq(2 * n, d=1.0 / (2 * n)) * h
    return d[:, None, None], d[None, :, None], d[None, None, :]


@lru_cache(maxsize=4)
def _coulomb_kernel_hat(n: int, L: float, kernel: str) -> np.ndarray:
    """Half-spectrum of the doubled-grid kernel, pre-multiplied by ``h^3``."""
    h = 2.0 * L / n
    dx, dy, dz = _doubled_offsets(n, h)
    r = np.sqrt(dx**2 + dy**2 + dz**2)
    if kernel == "cell":
        with np.errstate(divide="ignore"):
            K = 1.0 / r
        K[0, 0, 0] = cell_average_inverse_r() / h
        return sfft.rfftn(K) * h**3
    if kernel != "split":
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    # 1/r = erf(r/s)/r + erfc(r/s)/r: the smooth part is sampled, the
    # short-range part enters through its exact transform.
    s = _SPLIT_WIDTH * h
    with np.errstate(divide="ignore", invalid="ignore"):
        K = special.erf(r / s) / r
    K[0, 0, 0] = 2.0 / (np.sqrt(np.pi) * s)
    Kh = sfft.rfftn(K) * h**3
    k = (np.pi / (2.0 * L)) * np.fft.fftfreq(2 * n, d=1.0 / (2 * n))
    kr = (np.pi / (2.0 * L)) * np.fft.rfftfreq(2 * n, d=1.0 / (2 * n))
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + kr[None, None, :] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        short = 4.0 * np.pi * -np.expm1(-k2 * s * s / 4.0) / k2
    short[0, 0, 0] = np.pi * s * s
    return Kh + short


def coulomb_kernel(grid: Grid, kernel: str = "split") -> np.ndarray:
    """Real-space kernel on the doubled grid (offset order of ``fftfreq``)."""
    n = grid.n
    Kh = _coulomb_kernel_hat(n, grid.L, kernel)
    return sfft.irfftn(Kh, s=(2 * n,) * 3) / grid.cell_volume


def boundary_ratio(f: np.ndarray) -> float:
    """Largest face value of ``|f|`` relative to ``max |f|``."""
    top = np.max(np.abs(f))
    if top == 0:
        return 0.0
    faces = max(
        np.max(np.abs(f[0])), np.max(np.abs(f[:, 0])), np.max(np.abs(f[:, :, 0])),
        np.max(np.abs(f[-1])), np.max(np.abs(f[:, -1])), np.max(np.abs(f[:, :, -1])),
    )
    return float(faces / top)


def coulomb_convolve(f, grid: Grid, warn: bool = True, kernel: str = "split") -> np.ndarray:
    """Free-space ``(1/|x|) * f`` by zero padding onto the doubled grid.

    ``kernel="split"`` (default) is spectrally accurate for resolved sources;
    ``kernel="cell"`` samples ``1/|x|`` with the cell average at the origin,
    which is only second-order accurate.
    """
    f = check_field(f, grid, "f")
    if warn and boundary_ratio(f) > 1e-8:
        warnings.warn(
            f"source is {boundary_ratio(f):.2e} of its maximum on the box faces",
            BoundaryContaminationWarning, stacklevel=2,
        )
    n = grid.n
    Kh = _coulomb_kernel_hat(n, grid.L, kernel)
    fh = sfft.rfftn(f, s=(2 * n,) * 3)
    g = sfft.irfftn(fh * Kh, s=(2 * n,) * 3)[:n, :n, :n]
    return np.ascontiguousarray(g)


def hartree_potential(u, grid: Grid, warn: bool = False, kernel: str = "split") -> np.ndarray:
    u = check_field(u, grid)
    return coulomb_convolve(u * u, grid, warn=warn, kernel=kernel)


def commutator_apply(u, phi, grid: Grid) -> np.ndarray:
    """``[sqrt(-Laplacian), phi] u``."""
    u = check_field(u, grid)
    phi = check_field(phi, grid, "phi")
    sym = np.sqrt(grid.xi2)
    return apply_multiplier(phi * u, sym) - phi * apply_multiplier(u, sym)

