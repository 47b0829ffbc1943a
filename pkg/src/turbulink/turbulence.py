"""Turbulence strength along a curved-Earth path and the scalar decay densities.

The von Karman spectrum fixes the scattering-rate normalization; the decay
density l(z) (and its two-frequency generalization) is the only turbulence
input the propagation equations need once the outer-scale counter term has
been cancelled analytically.

Note on the total-rate constant: evaluating k1 k2 * int Phi d^2K / 4 pi^2
with the von Karman density gives 30.86 C_n^2 / (lambda1 lambda2 kappa_0^{5/3});
the rate carries lambda^{-2}, not lambda^{+2} (dimensionally it must be an
inverse length).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

SPECTRUM_AMPLITUDE = 0.033  # Kolmogorov spectral constant in the von Karman density
EARTH_RADIUS_M = 6.371e6
CN2_MIN = 1e-19
CN2_MAX = 1e-11
SPEED_OF_LIGHT = 299792458.0

# k1 k2 * int Phi(K) d^2K / 4 pi^2 = TOTAL_RATE_CONSTANT * C_n^2 / (l1 l2 kappa_0^{5/3})
TOTAL_RATE_CONSTANT = SPECTRUM_AMPLITUDE * 0.6 * 16.0 * math.pi**4  # = 30.857...


class ProfileError(ValueError):
    """Malformed turbulence profile (bad table or file)."""


class QuadratureError(RuntimeError):
    """Adaptive path quadrature failed to converge."""


@dataclass(frozen=True)
class LinkGeometry:
    """Propagation path and beam parameters.

    path_length: link distance z_f (m)
    transmitter_height / receiver_height: endpoint heights above sea level (m)
    waist: beam waist w_0 at the transmitter (m)
    wavelength: carrier wavelength (m)
    """

    path_length: float
    transmitter_height: float
    receiver_height: float
    waist: float
    wavelength: float
    earth_radius: float = EARTH_RADIUS_M

    def __post_init__(self):
        if self.path_length <= 0:
            raise ValueError("path_length must be positive")
        if self.transmitter_height <= 0 or self.receiver_height <= 0:
            raise ValueError("endpoint heights must be positive")
        if self.waist <= 0 or self.wavelength <= 0:
            raise ValueError("waist and wavelength must be positive")

    @property
    def rayleigh_range(self) -> float:
        return math.pi * self.waist**2 / self.wavelength


@dataclass(frozen=True)
class SpectrumParams:
    """Outer-scale wavenumber kappa_0 (1/m) of the von Karman spectrum."""

    kappa_0: float = 1.0

    def __post_init__(self):
        if self.kappa_0 <= 0:
            raise ValueError("kappa_0 must be positive")


@dataclass(frozen=True)
class TurbulenceProfile:
    """Structure-constant profile: either constant or tabulated in height.

    Tabulated profiles interpolate log(C_n^2) linearly in height and clamp
    at the table ends; C_n^2 near the surface spans orders of magnitude, so
    linear interpolation of the raw value would be badly biased.
    """

    constant: float | None = None
    table: tuple = field(default=())  # ((height_m, cn2), ...) with increasing heights

    @classmethod
    def from_constant(cls, cn2: float) -> "TurbulenceProfile":
        _check_cn2(cn2, allow_zero=True)
        return cls(constant=cn2)

    @property
    def is_zero(self) -> bool:
        return self.constant == 0.0

    @classmethod
    def from_table(cls, points) -> "TurbulenceProfile":
        points = tuple((float(h), float(c)) for h, c in points)
        if len(points) < 2:
            raise ProfileError("tabulated profile needs at least 2 points")
        heights = [h for h, _ in points]
        if any(b <= a for a, b in zip(heights, heights[1:])):
            raise ProfileError("profile heights must be strictly increasing")
        for _, c in points:
            _check_cn2(c)
        return cls(table=points)

    @classmethod
    def from_csv(cls, path) -> "TurbulenceProfile":
        """Read a two-column `height_m,cn2` CSV with a header row."""
        points = []
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            for lineno, row in enumerate(reader, start=1):
                if lineno == 1:
                    if [c.strip() for c in row[:2]] != ["height_m", "cn2"]:
                        raise ProfileError(
                            f"{path}: line 1: expected header 'height_m,cn2'"
                        )
                    continue
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) < 2:
                    raise ProfileError(f"{path}: line {lineno}: expected 2 columns")
                try:
                    points.append((float(row[0]), float(row[1])))
                except ValueError as exc:
                    raise ProfileError(f"{path}: line {lineno}: {exc}") from exc
        try:
            return cls.from_table(points)
        except ProfileError as exc:
            raise ProfileError(f"{path}: {exc}") from exc


def _check_cn2(cn2: float, allow_zero: bool = False):
    # exactly zero switches turbulence off (constant profiles only)
    if allow_zero and cn2 == 0.0:
        return
    if not (CN2_MIN <= cn2 <= CN2_MAX):
        raise ProfileError(f"C_n^2 value {cn2} outside [{CN2_MIN}, {CN2_MAX}] m^-2/3")


def path_height(geom: LinkGeometry, z: float) -> float:
    """Height above the sea surface of the straight chord at path position z.

    The endpoints sit at their stated heights over a sphere of radius
    earth_radius; the beam travels the straight chord between them (no
    refractive bending), so mid-path points lose the sagitta relative to the
    endpoint heights.
    """
    if z < 0 or z > geom.path_length:
        raise ValueError(f"z={z} outside path [0, {geom.path_length}]")
    r_tx = geom.earth_radius + geom.transmitter_height
    r_rx = geom.earth_radius + geom.receiver_height
    cos_phi = (r_tx**2 + r_rx**2 - geom.path_length**2) / (2.0 * r_tx * r_rx)
    cos_phi = min(1.0, cos_phi)
    sin_phi = math.sqrt(max(0.0, 1.0 - cos_phi**2))
    ax, ay = r_tx, 0.0
    bx, by = r_rx * cos_phi, r_rx * sin_phi
    s = z / geom.path_length
    px, py = ax + s * (bx - ax), ay + s * (by - ay)
    return math.hypot(px, py) - geom.earth_radius


def cn2_at(profile: TurbulenceProfile, geom: LinkGeometry, z: float) -> float:
    """C_n^2 at path position z (constant, or interpolated at the chord height).

    Tabulated profiles interpolate log C_n^2 linearly in log height (surface
    profiles are power-law-like, straight lines on that scale), clamped at
    the table ends.
    """
    if profile.constant is not None:
        return profile.constant
    if not profile.table:
        raise ProfileError("empty turbulence profile")
    height = path_height(geom, z)
    log_heights = np.log([h for h, _ in profile.table])
    log_cn2 = np.log([c for _, c in profile.table])
    return float(np.exp(np.interp(math.log(max(height, 1e-12)), log_heights, log_cn2)))


def vonkarman_psd(K: float, cn2: float, sp: SpectrumParams) -> float:
    """von Karman refractive-index power spectral density at radial wavenumber K."""
    if K < 0:
        raise ValueError("K must be >= 0")
    return SPECTRUM_AMPLITUDE * (2.0 * math.pi) ** 3 * cn2 / (K * K + sp.kappa_0**2) ** (11.0 / 6.0)


def big_l_t(lambda1: float, lambda2: float, cn2: float, sp: SpectrumParams) -> float:
    """Total scattering rate k1 k2 int Phi(K) d^2K / 4 pi^2 (units 1/m).

    Diverges like kappa_0^{-5/3} as the outer scale grows; the coupling
    tensor cancels it analytically, so this value only appears on its own in
    diagnostics and oracle tests.
    """
    return TOTAL_RATE_CONSTANT * cn2 / (lambda1 * lambda2) * sp.kappa_0 ** (-5.0 / 3.0)


def l_strength(z: float, cn2: float, wavelength: float, waist: float) -> float:
    """Single-wavelength decay density l(z) (the fundamental-mode loss rate
    is 54.1 * l(z) in the pure-decay regime)."""
    t = wavelength * z / (math.pi * waist**2)
    return cn2 / wavelength**2 * waist ** (5.0 / 3.0) * (1.0 + t * t) ** (5.0 / 6.0)


def l_cross(z: float, omega1: float, omega2: float, cn2: float, waist: float) -> float:
    """Two-frequency decay density for coherences between omega1 and omega2.

    Reduces exactly to l_strength when the frequencies coincide; the beam
    spreading of the two wavelengths enters through the mean of their
    squared normalized distances.
    """
    if omega1 <= 0 or omega2 <= 0:
        raise ValueError("frequencies must be positive")
    lambda1 = 2.0 * math.pi * SPEED_OF_LIGHT / omega1
    lambda2 = 2.0 * math.pi * SPEED_OF_LIGHT / omega2
    t1 = lambda1 * z / (math.pi * waist**2)
    t2 = lambda2 * z / (math.pi * waist**2)
    bracket = 1.0 + 0.5 * t1 * t1 + 0.5 * t2 * t2
    return cn2 / (lambda1 * lambda2) * waist ** (5.0 / 3.0) * bracket ** (5.0 / 6.0)


def fried_parameter(wavelength: float, cn2: float, z: float) -> float:
    """Fried coherence length r_0 = 0.185 (lambda^2 / (C_n^2 z))^{3/5} (m)."""
    if wavelength <= 0 or cn2 <= 0 or z <= 0:
        raise ValueError("all arguments must be positive")
    return 0.185 * (wavelength**2 / (cn2 * z)) ** 0.6


def integrated_l(
    profile: TurbulenceProfile,
    geom: LinkGeometry,
    frequencies: float | tuple | None = None,
) -> float:
    """Path integral of the decay density, int_0^{z_f} l(z) dz (dimensionless).

    frequencies:
      None          -> use geom.wavelength (single-wavelength l)
      float         -> that wavelength (m)
      (w1, w2)      -> two-frequency l for the angular-frequency pair (rad/s)
    """
    if frequencies is None:
        frequencies = geom.wavelength

    if isinstance(frequencies, tuple):
        omega1, omega2 = frequencies

        def integrand(z):
            return l_cross(z, omega1, omega2, cn2_at(profile, geom, z), geom.waist)

    else:
        wavelength = float(frequencies)

        def integrand(z):
            return l_strength(z, cn2_at(profile, geom, z), wavelength, geom.waist)

    value, abserr, info = quad(
        integrand, 0.0, geom.path_length, epsrel=1e-8, epsabs=0.0,
        limit=200, full_output=True,
    )[:3]
    if value != 0.0 and abserr > 1e-6 * abs(value):
        raise QuadratureError(
            f"path integral did not converge (value={value}, abserr={abserr})"
        )
    return value


def optimal_waist_for_minimum_l(wavelength: float, z: float) -> float:
    """Waist minimizing the local decay density l(z): w_0 = sqrt(lambda z / pi)."""
    return math.sqrt(wavelength * z / math.pi)
