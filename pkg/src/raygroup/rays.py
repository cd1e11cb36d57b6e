"""Deterministic spherical ray bundles and the box-scale far bound.

A bundle is parameterized by the polar bin count P: bin p sits at polar
angle ``theta_p = pi * p / (P - 1)`` and carries ``A_p`` rays at equally
spaced azimuths ``psi = 2*pi*a / A_p``.  The two pole bins carry one ray
each; interior bins carry ``factor * min(p, P - 1 - p)`` rays, so ray
density peaks at the equator.  Canonical ray order is (p ascending,
a ascending) and every consumer of a bundle relies on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .scene import Box3D, _freeze

#: Default number-of-azimuths multiplier for interior polar bins.
DEFAULT_AZIMUTH_FACTOR = 4

#: Default lower clamp (meters) applied to predicted scales before emission.
MIN_SCALE = 0.05


def azimuth_counts(P: int, azimuth_factor: int = DEFAULT_AZIMUTH_FACTOR) -> np.ndarray:
    """Rays per polar bin: A_0 = A_{P-1} = 1, else factor * min(p, P-1-p)."""
    if P < 2:
        raise InvalidParameter(f"P must be >= 2, got {P}")
    if azimuth_factor < 1:
        raise InvalidParameter(f"azimuth_factor must be >= 1, got {azimuth_factor}")
    counts = np.empty(P, dtype=np.int64)
    for p in range(P):
        if p == 0 or p == P - 1:
            counts[p] = 1
        elif 2 * p <= P - 1:
            counts[p] = azimuth_factor * p
        else:
            counts[p] = azimuth_factor * (P - p - 1)
    return counts


def ray_count(P: int, azimuth_factor: int = DEFAULT_AZIMUTH_FACTOR) -> int:
    """Total rays N for P polar bins (P=9 gives 66 at the default factor)."""
    return int(azimuth_counts(P, azimuth_factor).sum())


def ray_directions(
    P: int, azimuth_factor: int = DEFAULT_AZIMUTH_FACTOR
) -> list[tuple[float, float]]:
    """All (theta, psi) pairs in canonical (p ascending, a ascending) order."""
    counts = azimuth_counts(P, azimuth_factor)
    out = []
    for p in range(P):
        theta = math.pi * p / (P - 1)
        A_p = int(counts[p])
        for a in range(A_p):
            out.append((theta, 2.0 * math.pi * a / A_p))
    return out


def unit_direction(theta: float, psi: float) -> np.ndarray:
    """(sin t cos p, sin t sin p, cos t)."""
    st = math.sin(theta)
    return np.array([st * math.cos(psi), st * math.sin(psi), math.cos(theta)])


def scale_target(box: Box3D) -> float:
    """Half the diagonal of the box: the far bound a ray bundle should use."""
    return 0.5 * float(np.sqrt(np.sum(box.size * box.size)))


def clamp_scale(scale: float, min_scale: float = MIN_SCALE) -> float:
    """Guard a predicted scale against non-positive / tiny far bounds."""
    return max(float(scale), float(min_scale))


@dataclass(frozen=True, eq=False)
class Ray:
    """One determined ray of a bundle."""

    polar: float
    azimuth: float
    direction: np.ndarray
    origin: np.ndarray
    far_bound: float
    bin_index: int
    azimuth_index: int

    def endpoint(self) -> np.ndarray:
        return self.origin + self.far_bound * self.direction


@dataclass(frozen=True, eq=False)
class RayBundle:
    """All N rays emitted from one cluster center, in canonical order.

    ``directions`` and ``angles`` are (N, 3) / (N, 2) array views of the
    same data for vectorized consumers.
    """

    origin: np.ndarray
    rays: tuple[Ray, ...]
    P: int
    scale: float

    @property
    def N(self) -> int:
        return len(self.rays)

    @property
    def directions(self) -> np.ndarray:
        return self._directions

    @property
    def angles(self) -> np.ndarray:
        return self._angles

    def __post_init__(self):
        object.__setattr__(self, "origin", _freeze(np.asarray(self.origin, dtype=np.float64).reshape(3)))
        dirs = _freeze(np.array([r.direction for r in self.rays]).reshape(len(self.rays), 3))
        angles = _freeze(np.array([[r.polar, r.azimuth] for r in self.rays]).reshape(len(self.rays), 2))
        object.__setattr__(self, "_directions", dirs)
        object.__setattr__(self, "_angles", angles)

    def endpoints(self) -> np.ndarray:
        return self.origin + self.scale * self.directions


def emit_rays(
    origin,
    scale: float,
    P: int,
    azimuth_factor: int = DEFAULT_AZIMUTH_FACTOR,
) -> RayBundle:
    """Emit the canonical bundle from ``origin`` with far bound ``scale``.

    ``scale`` may be zero (all rays degenerate to the origin) but not
    negative; predicted scales should go through clamp_scale first.
    """
    if not np.isfinite(scale) or scale < 0.0:
        raise InvalidParameter(f"scale must be >= 0, got {scale}")
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    counts = azimuth_counts(P, azimuth_factor)
    rays = []
    for p in range(P):
        theta = math.pi * p / (P - 1)
        A_p = int(counts[p])
        for a in range(A_p):
            psi = 2.0 * math.pi * a / A_p
            rays.append(
                Ray(
                    polar=theta,
                    azimuth=psi,
                    direction=_freeze(unit_direction(theta, psi)),
                    origin=origin,
                    far_bound=float(scale),
                    bin_index=p,
                    azimuth_index=a,
                )
            )
    return RayBundle(origin=origin, rays=tuple(rays), P=P, scale=float(scale))
