"""Two-frequency decay kernel and the temporal-mode transmission matrix.

The channel damps each frequency-basis element |omega1><omega2| of the
lowest spatial mode by a factor P(omega1, omega2).  Sampling P on the
Gauss-Hermite grid matched to the source bandwidth turns every temporal-mode
quantity into a small quadratic form: mode traces, the transmission matrix
S_{n,m}, and the per-mode output densities.

Two kernel fidelities:
  ANALYTIC  pure decay, P = exp(-54.1 * int l(omega1, omega2, z) dz); this is
            the regime in which the reference transmission matrix lives.
  FULL_IPE  propagate the cross-frequency coherence over a truncated LG basis
            and read off the fundamental-fundamental element; quadratically
            more expensive, kept as a validation path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .ipe import DECAY_CONSTANT, generator_parts
from .lgmodes import (
    COUPLING_PREFACTOR,
    ModeBasis,
    coefficient_stack,
    gamma_weight_matrix,
    selection_mask,
)
from .mathcore import gauss_hermite_rule
from .schmidt import BiphotonSpec, discrete_modes, frequency_grid
from .turbulence import LinkGeometry, TurbulenceProfile, cn2_at, integrated_l, l_cross

MAX_GRID_ORDER = 64
MAX_FULL_IPE_GRID = 12


class KernelFidelity(Enum):
    ANALYTIC = "analytic"
    FULL_IPE = "full_ipe"


class CostGuardError(ValueError):
    """Requested kernel evaluation beyond the configured cost guards."""


class ResolutionError(ValueError):
    """Mode order not resolvable on the current frequency grid."""


@dataclass(frozen=True)
class ChannelKernel:
    """Decay surface P(omega_i, omega_j) on a Gauss-Hermite frequency grid."""

    spec: BiphotonSpec
    omegas: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    matrix: np.ndarray
    fidelity: KernelFidelity
    cutoff: int | None = None

    @property
    def order(self) -> int:
        return len(self.omegas)

    def mode_vectors(self, count: int) -> np.ndarray:
        """Discrete orthonormal temporal-mode vectors on the kernel grid."""
        if count > self.order // 2:
            raise ResolutionError(
                f"mode order {count - 1} not resolvable on a grid of {self.order} nodes"
            )
        return discrete_modes(self.spec, self.nodes, self.weights, count)


def _cross_frequency_full_ipe(
    omega1: float,
    omega2: float,
    profile: TurbulenceProfile,
    geom: LinkGeometry,
    cutoff: int,
    steps: int = 128,
) -> float:
    """Fundamental-to-fundamental damping of the |omega1><omega2| coherence
    by propagating the cross-frequency block over the truncated LG basis."""
    parts = generator_parts(cutoff)
    basis = parts.basis
    size = basis.size
    weights = gamma_weight_matrix(6 * cutoff + 1)
    mask = selection_mask(basis)
    gouy = parts.gouy
    c = 299792458.0
    lam1 = 2.0 * math.pi * c / omega1
    lam2 = 2.0 * math.pi * c / omega2
    zr1 = math.pi * geom.waist**2 / lam1
    zr2 = math.pi * geom.waist**2 / lam2
    stack0 = generator_coefficients(cutoff)
    j_count = stack0.shape[0]
    js = np.arange(j_count)
    flat0 = stack0.reshape(j_count, size * size)
    pair_phase = gouy[:, None] - gouy[None, :]

    def generator(z):
        cn2 = cn2_at(profile, geom, z)
        t1 = z / zr1
        t2 = z / zr2
        a1 = (1.0 + t1 * t1) * geom.waist**2
        a2 = (1.0 + t2 * t2) * geom.waist**2
        a_mean = 0.5 * (a1 + a2)
        scale1 = (a1 / a_mean) ** (0.5 * js)
        scale2 = (a2 / a_mean) ** (0.5 * js)
        phase1 = np.exp(2j * math.atan(t1) * pair_phase).reshape(-1)
        phase2 = np.exp(-2j * math.atan(t2) * pair_phase).reshape(-1)
        left = (flat0 * scale1[:, None]) * phase1[None, :]
        right = (np.conj(flat0) * scale2[:, None]) * phase2[None, :]
        pairs = left.T @ weights[:j_count, :j_count] @ right
        tensor = pairs.reshape(size, size, size, size)
        tensor *= mask
        rate = COUPLING_PREFACTOR * l_cross(z, omega1, omega2, cn2, geom.waist)
        return rate * np.transpose(tensor, (1, 3, 0, 2)).reshape(size * size, size * size)

    fundamental = basis.fundamental
    state = np.zeros(size * size, dtype=complex)
    state[fundamental * size + fundamental] = 1.0
    h = geom.path_length / steps
    z = 0.0
    for _ in range(steps):
        r1 = generator(z)
        r2 = generator(z + 0.5 * h)
        r4 = generator(z + h)
        k1 = r1 @ state
        k2 = r2 @ (state + 0.5 * h * k1)
        k3 = r2 @ (state + 0.5 * h * k2)
        k4 = r4 @ (state + h * k3)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        z += h
    value = complex(state[fundamental * size + fundamental])
    # off-diagonal frequency pairs acquire a small dispersive phase (the two
    # carriers couple to the mode ladder with different Gouy rotations); the
    # kernel contract is real-valued, so keep the modulus-level real part and
    # only fail if the phase stops being a perturbation
    if abs(value.imag) > 0.05 * max(abs(value.real), 1e-12):
        raise RuntimeError(f"cross-frequency population has imaginary part {value.imag:.2e}")
    return float(value.real)


def generator_coefficients(cutoff: int) -> np.ndarray:
    """t = 0 coefficient stack shared with the single-frequency solver."""
    return coefficient_stack(ModeBasis(cutoff), 0.0)


def channel_kernel(
    spec: BiphotonSpec,
    profile: TurbulenceProfile,
    geom: LinkGeometry,
    grid_order: int = 32,
    fidelity: KernelFidelity = KernelFidelity.ANALYTIC,
    cutoff: int = 2,
    extinction_per_km: float = 0.0,
    steps: int = 128,
) -> ChannelKernel:
    """Sample the two-frequency survival probability on the source grid."""
    if grid_order > MAX_GRID_ORDER:
        raise CostGuardError(f"grid order {grid_order} exceeds {MAX_GRID_ORDER}")
    if fidelity is KernelFidelity.FULL_IPE and grid_order > MAX_FULL_IPE_GRID:
        raise CostGuardError(
            f"full propagation kernels are limited to grid order {MAX_FULL_IPE_GRID}"
        )
    rule = gauss_hermite_rule(grid_order)
    omegas = frequency_grid(spec, rule.nodes)
    matrix = np.ones((grid_order, grid_order))
    extinction = math.exp(-extinction_per_km * geom.path_length / 1000.0)
    if not profile.is_zero:
        for i in range(grid_order):
            for j in range(i, grid_order):
                if fidelity is KernelFidelity.ANALYTIC:
                    exponent = DECAY_CONSTANT * integrated_l(
                        profile, geom, (omegas[i], omegas[j])
                    )
                    value = math.exp(-exponent)
                else:
                    value = _cross_frequency_full_ipe(
                        omegas[i], omegas[j], profile, geom, cutoff, steps=steps
                    )
                matrix[i, j] = value
                matrix[j, i] = value
    matrix = matrix * extinction
    return ChannelKernel(
        spec=spec,
        omegas=omegas,
        nodes=rule.nodes,
        weights=rule.weights,
        matrix=matrix,
        fidelity=fidelity,
        cutoff=cutoff if fidelity is KernelFidelity.FULL_IPE else None,
    )


def mode_trace(kernel: ChannelKernel, spec: BiphotonSpec, n: int) -> float:
    """Survival probability T_n of the n-th temporal mode (diagonal average)."""
    psi = kernel.mode_vectors(n + 1)[n]
    return float(np.sum(psi * psi * np.diag(kernel.matrix)))


@dataclass(frozen=True)
class TransmissionMatrix:
    """Normalized mode-to-mode transition probabilities S[n, m] with traces."""

    matrix: np.ndarray
    traces: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def row_leakage(self, n: int) -> float:
        """Probability lost to modes above the truncation for input mode n."""
        return 1.0 - float(self.matrix[n].sum())


def transmission_matrix(kernel: ChannelKernel, spec: BiphotonSpec, max_mode: int) -> TransmissionMatrix:
    """S[n, m]: probability of receiving temporal mode m when n was sent.

    Rows are normalized by the mode traces T_n, so each full row over all
    modes sums to one; the returned block stops at max_mode.
    """
    psi = kernel.mode_vectors(max_mode + 1)
    diag = np.diag(kernel.matrix)
    traces = np.array([float(np.sum(p * p * diag)) for p in psi])
    overlap = psi[:, None, :] * psi[None, :, :]  # (n, m, grid)
    s = np.einsum("nmi,ij,nmj->nm", overlap, kernel.matrix, overlap)
    return TransmissionMatrix(matrix=s / traces[:, None], traces=traces)


def apply_channel_single(
    kernel: ChannelKernel, spec: BiphotonSpec, n: int, max_mode: int
) -> tuple:
    """Normalized output density over temporal modes 0..max_mode for input
    mode n, plus the leakage mass above the truncation."""
    psi = kernel.mode_vectors(max(max_mode, n) + 1)
    weighted = psi[n] * psi[: max_mode + 1]  # (m, grid)
    block = weighted @ kernel.matrix @ weighted.T
    trace_n = float(np.sum(psi[n] * psi[n] * np.diag(kernel.matrix)))
    density = block / trace_n
    leakage = 1.0 - float(np.trace(density).real)
    return density, leakage
