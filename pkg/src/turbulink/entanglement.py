"""Entangled photon pairs through independent turbulent channels.

Each photon of a two-photon temporal-mode state rides its own copy of the
single-photon channel: frequency-basis amplitudes are damped by
P(omega1, omega2) P(omega1', omega2'), so the mode-basis map is the tensor
square of the one-photon channel tensor.  Entanglement is scored by the
negativity of the partial transpose and by overlap fidelity with the input.

Basis ordering for the pair density is first-photon-major: the matrix index
of |f_m> |f_n> is m * dim + n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .schmidt import BiphotonSpec
from .temporal import ChannelKernel

MAX_PAIR_MODES = 14
PAIR_POSITIVITY_TOL = 1e-9


@dataclass(frozen=True)
class TwoPhotonState:
    """Pure two-photon state sum_{mn} psi[m, n] |f_m>|f_n>, unit norm."""

    coefficients: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.coefficients)
        if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
            raise ValueError("coefficient matrix must be square")
        norm = float(np.sum(np.abs(psi) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state norm^2 = {norm}, expected 1")

    @property
    def dim(self) -> int:
        return self.coefficients.shape[0]

    @classmethod
    def mode_pair(cls, m: int, n: int, dim: int) -> "TwoPhotonState":
        """(|f_m f_m> + |f_n f_n>) / sqrt(2), or the bare |f_m f_m> when
        m == n (the superposition degenerates to a product state)."""
        if max(m, n) >= dim:
            raise ValueError("mode index outside the basis dimension")
        psi = np.zeros((dim, dim), dtype=complex)
        if m == n:
            psi[m, m] = 1.0
        else:
            psi[m, m] = 1.0 / math.sqrt(2.0)
            psi[n, n] = 1.0 / math.sqrt(2.0)
        return cls(coefficients=psi)

    @classmethod
    def qudit_bell(cls, modes, dim: int) -> "TwoPhotonState":
        """Maximally entangled state over the given mode list."""
        psi = np.zeros((dim, dim), dtype=complex)
        for m in modes:
            psi[m, m] = 1.0 / math.sqrt(len(modes))
        return cls(coefficients=psi)


@dataclass(frozen=True)
class TwoPhotonDensity:
    """Hermitian density over the product mode basis (first-photon-major)."""

    dim: int
    matrix: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        size = self.dim * self.dim
        if self.matrix.shape != (size, size):
            raise ValueError("matrix shape does not match mode dimension")
        deviation = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if deviation > 1e-10:
            raise ValueError(f"pair density not Hermitian (deviation {deviation:.2e})")


def channel_tensor(kernel: ChannelKernel, spec: BiphotonSpec, dim: int) -> np.ndarray:
    """One-photon channel tensor C[u, v, m, n] = int int f_u f_m P f_n f_v.

    Maps |f_m><f_n| to sum_{uv} C[u, v, m, n] |f_u><f_v|; real symmetric in
    the sense C[u, v, m, n] = C[v, u, n, m].
    """
    psi = kernel.mode_vectors(dim)  # (dim, grid)
    left = psi[:, None, :] * psi[None, :, :]  # (u, m, grid)
    grid = left.reshape(dim * dim, -1)
    block = grid @ kernel.matrix @ grid.T  # [(u,m), (n,v)]
    return block.reshape(dim, dim, dim, dim).transpose(0, 3, 1, 2)


def propagate_pair(
    state: TwoPhotonState,
    kernel: ChannelKernel,
    spec: BiphotonSpec,
    dim: int | None = None,
    single_sided: bool = False,
) -> tuple:
    """Send both photons through independent copies of the channel.

    Returns (TwoPhotonDensity, transmitted_mass): the density is normalized
    and the mass is the pre-normalization trace (joint survival probability
    within the truncated mode space).  With single_sided=True the second
    photon is kept ideal (identity channel); no reference values are claimed
    for that mode, it exists for exploratory use.
    """
    dim = state.dim if dim is None else dim
    if dim > MAX_PAIR_MODES:
        raise ValueError(f"pair propagation limited to {MAX_PAIR_MODES} modes")
    if dim < state.dim:
        raise ValueError("target dimension smaller than the state")
    psi = np.zeros((dim, dim), dtype=complex)
    psi[: state.dim, : state.dim] = state.coefficients
    tensor = channel_tensor(kernel, spec, dim)
    # first[u, v, m', n] = sum_m C[u, v, m, m'] psi[m, n]
    first = np.einsum("uvmp,mn->uvpn", tensor, psi)
    if single_sided:
        out = np.einsum("uvpn,pq->unvq", first, np.conj(psi))
    else:
        out = np.einsum("uvpn,UVnq,pq->uUvV", first, tensor, np.conj(psi))
    matrix = out.reshape(dim * dim, dim * dim)
    matrix = 0.5 * (matrix + matrix.conj().T)
    mass = float(np.trace(matrix).real)
    return (
        TwoPhotonDensity(dim=dim, matrix=matrix / mass, normalized=True),
        mass,
    )


def log_negativity(rho: TwoPhotonDensity) -> float:
    """E_N = log2(2 N + 1) with N the absolute sum of the negative
    eigenvalues of the partial transpose over the second photon."""
    dim = rho.dim
    four = rho.matrix.reshape(dim, dim, dim, dim)  # [u, u', v, v']
    swapped = four.transpose(0, 3, 2, 1).reshape(dim * dim, dim * dim)
    eigenvalues = np.linalg.eigvalsh(0.5 * (swapped + swapped.conj().T))
    negativity = float(-eigenvalues[eigenvalues < 0.0].sum())
    return math.log2(2.0 * negativity + 1.0)


def fidelity_to_input(rho: TwoPhotonDensity, state: TwoPhotonState) -> float:
    """Overlap <psi| rho |psi> of the output density with the input state."""
    psi = np.zeros((rho.dim, rho.dim), dtype=complex)
    psi[: state.dim, : state.dim] = state.coefficients
    vec = psi.reshape(-1)
    value = complex(vec.conj() @ rho.matrix @ vec)
    return float(value.real)


@dataclass(frozen=True)
class RobustnessRow:
    n: int
    en_initial: float
    en_final: float
    fidelity: float
    degenerate: bool
    transmitted_mass: float


def robustness_scan(
    kernel: ChannelKernel,
    spec: BiphotonSpec,
    fixed_mode: int,
    n_range,
    dim: int = 12,
) -> list:
    """Sweep the second mode of (|f_m f_m> + |f_n f_n>)/sqrt(2) over n.

    The n == fixed_mode row degenerates to a product state; it is reported
    with zero initial negativity and flagged rather than skipped.
    """
    rows = []
    for n in n_range:
        degenerate = n == fixed_mode
        state = TwoPhotonState.mode_pair(fixed_mode, n, dim)
        en_initial = 0.0 if degenerate else 1.0
        rho, mass = propagate_pair(state, kernel, spec, dim)
        rows.append(
            RobustnessRow(
                n=n,
                en_initial=en_initial,
                en_final=log_negativity(rho),
                fidelity=fidelity_to_input(rho, state),
                degenerate=degenerate,
                transmitted_mass=mass,
            )
        )
    return rows
