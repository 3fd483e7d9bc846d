"""Zernike polynomials on the unit disk with ANSI single-index ordering.

Modes are orthonormal over the disk by default (``NORMALIZATION = "orthonormal"``):
the disk average of Z_j**2 is 1, so the sum of squared coefficients equals
the wavefront variance.  Set it to ``"unit"`` for the bare R(rho)*cos/sin form.
Coefficients cover ANSI indices 3..27; piston and tip/tilt are excluded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

FIRST_MODE = 3
LAST_MODE = 27
N_MODES = LAST_MODE - FIRST_MODE + 1
MODE_INDICES = tuple(range(FIRST_MODE, LAST_MODE + 1))
DEFOCUS = 4

NORMALIZATION = "orthonormal"

GROUPING_MODES = ("azimuthal", "aberration", "none")


@dataclass(frozen=True)
class ZernikeIndex:
    ansi: int
    n: int
    m: int

    @classmethod
    def from_ansi(cls, j: int) -> "ZernikeIndex":
        n, m = ansi_nm(j)
        return cls(j, n, m)


def ansi_nm(j: int) -> Tuple[int, int]:
    """Map ANSI index ``j`` to (radial order n, azimuthal degree m)."""
    if int(j) != j or j < 0:
        raise DomainError(f"ANSI index must be a non-negative integer, got {j!r}")
    j = int(j)
    n = int((math.isqrt(8 * j + 1) - 1) // 2)
    m = 2 * j - n * (n + 2)
    return n, m


def nm_ansi(n: int, m: int) -> int:
    """Inverse of :func:`ansi_nm`: j = (n(n+2) + m) / 2."""
    if n < 0 or abs(m) > n or (n - abs(m)) % 2:
        raise DomainError(f"invalid Zernike pair (n={n}, m={m})")
    return (n * (n + 2) + m) // 2


def _factorial(k: int) -> float:
    out = 1.0
    for i in range(2, k + 1):
        out *= i
    return out


def radial_coefficients(n: int, m_abs: int) -> list[tuple[float, int]]:
    """(coefficient, power) terms of R_n^|m|(rho)."""
    if n < 0 or m_abs < 0 or m_abs > n or (n - m_abs) % 2:
        raise DomainError(f"invalid radial pair (n={n}, |m|={m_abs})")
    terms = []
    for k in range((n - m_abs) // 2 + 1):
        c = (-1) ** k * _factorial(n - k) / (
            _factorial(k) * _factorial((n + m_abs) // 2 - k) * _factorial((n - m_abs) // 2 - k))
        terms.append((c, n - 2 * k))
    return terms


def radial_poly(n: int, m_abs: int, rho):
    """Evaluate R_n^|m|(rho) for scalar or array ``rho`` in [0, 1]."""
    rho_arr = np.asarray(rho, dtype=np.float64)
    if np.any(rho_arr < 0.0) or np.any(rho_arr > 1.0) or not np.all(np.isfinite(rho_arr)):
        raise DomainError("rho must lie in [0, 1]")
    out = np.zeros_like(rho_arr)
    for c, p in radial_coefficients(n, m_abs):
        out = out + c * rho_arr**p
    return float(out) if np.ndim(rho) == 0 else out


def mode_norm(n: int, m: int) -> float:
    if NORMALIZATION == "unit":
        return 1.0
    if NORMALIZATION != "orthonormal":
        raise ConfigError(f"unknown normalization {NORMALIZATION!r}")
    return math.sqrt(n + 1) if m == 0 else math.sqrt(2 * (n + 1))


@dataclass(frozen=True, eq=False)
class UnitDiskGrid:
    """Polar coordinates of an N x N pixel-centre grid.

    The disk is inscribed in the central ``fraction`` of the grid, so its
    diameter is ``fraction * size`` samples.  Pixels with rho <= 1 are inside.
    """

    size: int
    fraction: float
    rho: np.ndarray
    phi: np.ndarray
    mask: np.ndarray

    @classmethod
    def build(cls, size: int, fraction: float = 1.0) -> "UnitDiskGrid":
        return _grid(int(size), float(fraction))


@lru_cache(maxsize=16)
def _grid(size: int, fraction: float) -> UnitDiskGrid:
    if size < 2:
        raise ConfigError(f"grid size must be >= 2, got {size}")
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"disk fraction must be in (0, 1], got {fraction}")
    radius = 0.5 * fraction * size
    c = (np.arange(size) - (size - 1) / 2.0) / radius
    y, x = np.meshgrid(c, c, indexing="ij")
    rho = np.hypot(x, y)
    phi = np.arctan2(y, x)
    mask = (rho <= 1.0).astype(np.float64)
    for arr in (rho, phi, mask):
        arr.setflags(write=False)
    return UnitDiskGrid(size, fraction, rho, phi, mask)


def evaluate_mode(j: int, grid: UnitDiskGrid) -> np.ndarray:
    """Zernike mode ``j`` sampled on ``grid``; zero outside the aperture."""
    if not FIRST_MODE <= j <= LAST_MODE:
        raise DomainError(f"mode index must lie in [{FIRST_MODE}, {LAST_MODE}], got {j}")
    n, m = ansi_nm(j)
    inside = grid.mask > 0
    rho = np.where(inside, grid.rho, 0.0)
    angular = np.cos(m * grid.phi) if m >= 0 else np.sin(-m * grid.phi)
    return np.where(inside, mode_norm(n, m) * radial_poly(n, abs(m), rho) * angular, 0.0)


def mode_basis(grid: UnitDiskGrid) -> np.ndarray:
    """All 25 modes stacked as (25, N, N), cached per grid."""
    return _basis(grid.size, grid.fraction, NORMALIZATION)


@lru_cache(maxsize=8)
def _basis(size: int, fraction: float, normalization: str) -> np.ndarray:
    grid = UnitDiskGrid.build(size, fraction)
    basis = np.stack([evaluate_mode(j, grid) for j in MODE_INDICES])
    basis.setflags(write=False)
    return basis


def validate_coefficients(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.float64)
    if c.shape[-1:] != (N_MODES,):
        raise ShapeError(f"coefficient vectors must have length {N_MODES}, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise DomainError("coefficients must be finite")
    return c


def compose_wavefront(coeffs, grid: UnitDiskGrid) -> np.ndarray:
    """Phase map sum_j c_j Z_j in radians; accepts (25,) or (B, 25)."""
    c = validate_coefficients(coeffs)
    return np.tensordot(c, mode_basis(grid), axes=([-1], [0]))


def sample_coefficients(rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw coefficient vectors i.i.d. from U[-1, 1] rad."""
    shape = (N_MODES,) if size is None else (size, N_MODES)
    return rng.uniform(-1.0, 1.0, size=shape)


@dataclass(frozen=True)
class Group:
    key: tuple
    members: tuple


@dataclass(frozen=True)
class GroupingTable:
    mode: str
    groups: tuple

    def member_groups(self) -> dict:
        """ANSI index -> position of its group."""
        return {j: g for g, grp in enumerate(self.groups) for j in grp.members}

    def to_json(self) -> dict:
        def key_json(key):
            return key[0] if len(key) == 1 else list(key)

        return {"mode": self.mode,
                "groups": [{"key": key_json(g.key), "members": list(g.members)} for g in self.groups]}


def grouping(mode: str) -> GroupingTable:
    """Partition modes 3..27 by azimuthal degree, aberration type, or not at all."""
    if mode not in GROUPING_MODES:
        raise ConfigError(f"grouping must be one of {GROUPING_MODES}, got {mode!r}")
    if mode == "none":
        return GroupingTable(mode, (Group((), MODE_INDICES),))
    buckets: dict = {}
    for j in MODE_INDICES:
        n, m = ansi_nm(j)
        key = (m,) if mode == "azimuthal" else (n, abs(m))
        buckets.setdefault(key, []).append(j)
    groups = tuple(Group(k, tuple(sorted(v))) for k, v in sorted(buckets.items()))
    return GroupingTable(mode, groups)
