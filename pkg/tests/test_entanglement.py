import math

import numpy as np
import pytest

from turbulink.entanglement import (
    RobustnessRow,
    TwoPhotonDensity,
    TwoPhotonState,
    channel_tensor,
    fidelity_to_input,
    log_negativity,
    propagate_pair,
    robustness_scan,
)
from turbulink.temporal import apply_channel_single


def bell_density(dim=2):
    psi = TwoPhotonState.mode_pair(0, 1, dim)
    vec = psi.coefficients.reshape(-1)
    return TwoPhotonDensity(dim=dim, matrix=np.outer(vec, vec.conj()))


class TestStates:
    def test_mode_pair_norm(self):
        state = TwoPhotonState.mode_pair(0, 3, 8)
        assert np.sum(np.abs(state.coefficients) ** 2) == pytest.approx(1.0, abs=1e-15)

    def test_degenerate_pair_is_product(self):
        state = TwoPhotonState.mode_pair(2, 2, 6)
        assert state.coefficients[2, 2] == 1.0
        assert np.sum(np.abs(state.coefficients) ** 2) == pytest.approx(1.0)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            TwoPhotonState(coefficients=np.eye(3, dtype=complex))

    def test_mode_outside_dimension(self):
        with pytest.raises(ValueError):
            TwoPhotonState.mode_pair(0, 9, 4)


class TestLogNegativity:
    def test_bell_state(self):
        assert log_negativity(bell_density()) == pytest.approx(1.0, abs=1e-12)

    def test_product_state_ppt(self):
        psi = TwoPhotonState.mode_pair(1, 1, 3)
        vec = psi.coefficients.reshape(-1)
        rho = TwoPhotonDensity(dim=3, matrix=np.outer(vec, vec.conj()))
        assert log_negativity(rho) < 1e-9

    def test_isotropic_mixture_against_eigen_oracle(self):
        # 0.5 Bell + 0.5 I/4: brute-force partial transpose of the 4x4 matrix
        bell = bell_density().matrix
        mixture = 0.5 * bell + 0.5 * np.eye(4) / 4.0
        four = mixture.reshape(2, 2, 2, 2)
        transposed = four.transpose(0, 3, 2, 1).reshape(4, 4)
        eigenvalues = np.linalg.eigvalsh(transposed)
        negativity = -eigenvalues[eigenvalues < 0].sum()
        expected = math.log2(2.0 * negativity + 1.0)
        rho = TwoPhotonDensity(dim=2, matrix=mixture)
        assert log_negativity(rho) == pytest.approx(expected, abs=1e-12)
        # the single negative PT eigenvalue is 0.5*(-1/2) + 0.5*(1/4) = -1/8
        assert negativity == pytest.approx(0.125, abs=1e-12)
        assert expected == pytest.approx(math.log2(1.25), abs=1e-12)

    def test_classical_mixture_ppt(self):
        diag = np.diag([0.4, 0.3, 0.2, 0.1]).astype(complex)
        rho = TwoPhotonDensity(dim=2, matrix=diag)
        assert log_negativity(rho) < 1e-9


class TestChannelTensor:
    def test_exchange_symmetry(self, paper_spec, kernel_1e16):
        tensor = channel_tensor(kernel_1e16, paper_spec, 6)
        swapped = np.conj(np.transpose(tensor, (1, 0, 3, 2)))
        assert np.max(np.abs(tensor - swapped)) < 1e-12

    def test_matches_single_photon_channel(self, paper_spec, kernel_1e16):
        tensor = channel_tensor(kernel_1e16, paper_spec, 5)
        for n in (0, 3):
            density, _ = apply_channel_single(kernel_1e16, paper_spec, n, 4)
            trace = np.trace(tensor[:, :, n, n]).real
            assert np.max(np.abs(tensor[:, :, n, n] / trace - density / np.trace(density))) < 1e-12


class TestPropagatePair:
    def test_zero_turbulence_exact(self, paper_spec, kernel_zero):
        state = TwoPhotonState.mode_pair(0, 3, 12)
        rho, mass = propagate_pair(state, kernel_zero, paper_spec)
        vec = state.coefficients.reshape(-1)
        assert mass == pytest.approx(1.0, abs=1e-10)
        assert np.max(np.abs(rho.matrix - np.outer(vec, vec.conj()))) < 1e-10
        assert log_negativity(rho) == pytest.approx(1.0, abs=1e-9)
        assert fidelity_to_input(rho, state) == pytest.approx(1.0, abs=1e-10)

    def test_separable_input_factorizes(self, paper_spec, kernel_1e16):
        state = TwoPhotonState.mode_pair(0, 0, 8)
        rho, _ = propagate_pair(state, kernel_1e16, paper_spec, dim=8)
        single, _ = apply_channel_single(kernel_1e16, paper_spec, 0, 7)
        normalized = single / np.trace(single).real
        expected = np.kron(normalized, normalized)
        assert np.max(np.abs(rho.matrix - expected)) < 1e-10

    def test_single_sided_mode(self, paper_spec, kernel_1e16):
        state = TwoPhotonState.mode_pair(0, 2, 6)
        rho, mass = propagate_pair(state, kernel_1e16, paper_spec, dim=6, single_sided=True)
        assert 0 < mass <= 1.0 + 1e-9
        assert np.max(np.abs(rho.matrix - rho.matrix.conj().T)) < 1e-10

    def test_dimension_guard(self, paper_spec, kernel_1e16):
        with pytest.raises(ValueError):
            propagate_pair(TwoPhotonState.mode_pair(0, 1, 15), kernel_1e16, paper_spec)

    def test_fidelity_of_orthogonal_state(self):
        rho = bell_density(4)
        other = TwoPhotonState.mode_pair(2, 3, 4)
        assert fidelity_to_input(rho, other) == pytest.approx(0.0, abs=1e-12)


@pytest.fixture(scope="module")
def scan_1e16(paper_spec, kernel_1e16):
    return robustness_scan(kernel_1e16, paper_spec, 0, range(11), dim=12)


@pytest.fixture(scope="module")
def scan_1e15(paper_spec, kernel_1e15):
    return robustness_scan(kernel_1e15, paper_spec, 0, range(11), dim=12)


class TestRobustnessScan:

    def test_degenerate_row_flagged(self, scan_1e16):
        row = scan_1e16[0]
        assert row.degenerate
        assert row.en_initial == 0.0
        assert row.en_final < 0.01

    def test_distant_modes_keep_entanglement(self, scan_1e16):
        for row in scan_1e16:
            if not row.degenerate and abs(row.n - 0) > 1:
                assert abs(row.en_final - 1.0) < 0.05

    def test_neighbor_drop_dominates(self, scan_1e16):
        drops = {row.n: row.en_initial - row.en_final for row in scan_1e16 if not row.degenerate}
        neighbor = drops.pop(1)
        assert all(neighbor > other for other in drops.values())

    def test_neighbor_drop_dominates_strong(self, scan_1e15):
        drops = {row.n: row.en_initial - row.en_final for row in scan_1e15 if not row.degenerate}
        neighbor = drops.pop(1)
        assert neighbor > 0.05  # clearly visible dip at |m-n| = 1
        assert all(neighbor > other for other in drops.values())

    def test_stronger_turbulence_never_helps(self, scan_1e16, scan_1e15):
        # up to the few-1e-3 non-positivity artifact of the kernel
        for weak, strong in zip(scan_1e16, scan_1e15):
            assert strong.en_final <= weak.en_final + 5e-3

    def test_outputs_nearly_positive(self, paper_spec, kernel_1e16):
        for n in (1, 5, 10):
            state = TwoPhotonState.mode_pair(0, n, 12)
            rho, _ = propagate_pair(state, kernel_1e16, paper_spec)
            assert np.linalg.eigvalsh(rho.matrix)[0] > -1e-2

    def test_even_mode_qudit_more_robust(self, paper_spec, kernel_1e16):
        even = TwoPhotonState.qudit_bell([0, 2, 4], 12)
        consecutive = TwoPhotonState.qudit_bell([0, 1, 2], 12)
        rho_even, _ = propagate_pair(even, kernel_1e16, paper_spec)
        rho_cons, _ = propagate_pair(consecutive, kernel_1e16, paper_spec)
        initial = math.log2(3.0)
        loss_even = initial - log_negativity(rho_even)
        loss_cons = initial - log_negativity(rho_cons)
        assert loss_even < loss_cons
