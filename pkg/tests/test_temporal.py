import math

import numpy as np
import pytest

from turbulink.ipe import analytic_decay
from turbulink.temporal import (
    CostGuardError,
    KernelFidelity,
    ResolutionError,
    apply_channel_single,
    channel_kernel,
    mode_trace,
    transmission_matrix,
)
from turbulink.turbulence import LinkGeometry, TurbulenceProfile

C = 299792458.0

PAPER_MATRIX = np.array(
    [
        [0.9838, 0.0161, 0.0000, 0.0000],
        [0.0152, 0.9538, 0.0307, 0.0003],
        [0.0001, 0.0289, 0.9266, 0.0438],
        [0.0000, 0.0003, 0.0414, 0.9018],
    ]
)


class TestKernel:
    def test_zero_turbulence_all_ones(self, kernel_zero):
        assert np.all(kernel_zero.matrix == 1.0)

    def test_entries_in_unit_interval(self, kernel_1e15):
        assert np.all(kernel_1e15.matrix > 0.0)
        assert np.all(kernel_1e15.matrix <= 1.0)

    def test_symmetry(self, kernel_1e15):
        assert np.array_equal(kernel_1e15.matrix, kernel_1e15.matrix.T)

    def test_diagonal_equals_single_frequency_decay(self, paper_spec, paper_geometry, kernel_1e15):
        profile = TurbulenceProfile.from_constant(1e-15)
        for i in range(64):
            omega = kernel_1e15.omegas[i]
            geom = LinkGeometry(
                path_length=paper_geometry.path_length,
                transmitter_height=paper_geometry.transmitter_height,
                receiver_height=paper_geometry.receiver_height,
                waist=paper_geometry.waist,
                wavelength=2.0 * math.pi * C / omega,
            )
            assert kernel_1e15.matrix[i, i] == pytest.approx(
                analytic_decay(profile, geom), rel=1e-7
            )

    def test_extinction_scales_all_entries(self, paper_spec, paper_geometry):
        profile = TurbulenceProfile.from_constant(0.0)
        kernel = channel_kernel(
            paper_spec, profile, paper_geometry, grid_order=8, extinction_per_km=0.2
        )
        assert np.all(kernel.matrix == pytest.approx(math.exp(-0.2 * 30.0), rel=1e-12))

    def test_grid_guards(self, paper_spec, paper_geometry):
        profile = TurbulenceProfile.from_constant(1e-16)
        with pytest.raises(CostGuardError):
            channel_kernel(paper_spec, profile, paper_geometry, grid_order=65)
        with pytest.raises(CostGuardError):
            channel_kernel(
                paper_spec, profile, paper_geometry, grid_order=16,
                fidelity=KernelFidelity.FULL_IPE,
            )


@pytest.fixture(scope="module")
def kernels_8(paper_spec, paper_geometry):
    profile = TurbulenceProfile.from_constant(1e-16)
    analytic = channel_kernel(paper_spec, profile, paper_geometry, grid_order=8)
    full = channel_kernel(
        paper_spec, profile, paper_geometry, grid_order=8,
        fidelity=KernelFidelity.FULL_IPE, cutoff=2,
    )
    return analytic, full


class TestFullPropagationKernel:

    def test_repopulation_magnitude(self, kernels_8):
        # the truncated-basis kernel exceeds pure decay by the repopulation
        # of the fundamental: second order in the decay exponent, ~15-19%
        # at this channel, far from negligible but bounded
        analytic, full = kernels_8
        rel = np.abs(full.matrix - analytic.matrix) / analytic.matrix
        assert np.all(full.matrix >= analytic.matrix - 1e-12)
        assert rel.max() < 0.25
        assert rel.max() > 0.05

    def test_agreement_in_weak_turbulence(self, paper_spec, paper_geometry):
        profile = TurbulenceProfile.from_constant(1e-17)
        analytic = channel_kernel(paper_spec, profile, paper_geometry, grid_order=4)
        full = channel_kernel(
            paper_spec, profile, paper_geometry, grid_order=4,
            fidelity=KernelFidelity.FULL_IPE, cutoff=2,
        )
        rel = np.abs(full.matrix - analytic.matrix) / analytic.matrix
        assert rel.max() < 0.02

    def test_single_mode_cutoff_reduces_to_pure_decay(self, paper_spec, paper_geometry):
        # with no higher spatial modes the cross-frequency propagation is the
        # closed-form exponential; ties the full path to the analytic one
        profile = TurbulenceProfile.from_constant(1e-16)
        analytic = channel_kernel(paper_spec, profile, paper_geometry, grid_order=6)
        full = channel_kernel(
            paper_spec, profile, paper_geometry, grid_order=6,
            fidelity=KernelFidelity.FULL_IPE, cutoff=0,
        )
        assert np.max(np.abs(full.matrix - analytic.matrix)) < 1e-7

    def test_symmetry_and_range(self, kernels_8):
        _, full = kernels_8
        assert np.array_equal(full.matrix, full.matrix.T)
        assert np.all(full.matrix > 0.0)
        assert np.all(full.matrix <= 1.0)


class TestModeTrace:
    def test_zero_turbulence_unity(self, paper_spec, kernel_zero):
        for n in range(11):
            assert mode_trace(kernel_zero, paper_spec, n) == pytest.approx(1.0, abs=1e-10)

    def test_all_traces_above_forty_db(self, paper_spec, kernel_1e15):
        traces = [mode_trace(kernel_1e15, paper_spec, n) for n in range(11)]
        assert all(t > 1e-4 for t in traces)

    def test_trend_flips_with_turbulence_strength(self, paper_spec, paper_geometry, kernel_1e15):
        # deep decay rewards the low-frequency wing: traces grow with mode
        # order; in the weak (linearized) regime wider modes lose more
        strong = [mode_trace(kernel_1e15, paper_spec, n) for n in range(11)]
        assert np.all(np.diff(strong) > 0)
        weak_kernel = channel_kernel(
            paper_spec, TurbulenceProfile.from_constant(1e-17), paper_geometry, grid_order=64
        )
        weak = [mode_trace(weak_kernel, paper_spec, n) for n in range(11)]
        assert np.all(np.diff(weak) < 0)

    def test_under_resolved_mode_rejected(self, paper_spec, paper_geometry):
        profile = TurbulenceProfile.from_constant(1e-16)
        kernel = channel_kernel(paper_spec, profile, paper_geometry, grid_order=8)
        with pytest.raises(ResolutionError):
            mode_trace(kernel, paper_spec, 4)


class TestTransmissionMatrix:
    def test_zero_turbulence_identity(self, paper_spec, kernel_zero):
        tm = transmission_matrix(kernel_zero, paper_spec, 3)
        assert np.max(np.abs(tm.matrix - np.eye(4))) < 1e-10
        assert tm.traces == pytest.approx(np.ones(4), abs=1e-10)

    def test_paper_matrix(self, paper_spec, kernel_1e15):
        tm = transmission_matrix(kernel_1e15, paper_spec, 3)
        assert np.max(np.abs(tm.matrix - PAPER_MATRIX)) < 0.02

    def test_far_couplings_small(self, paper_spec, kernel_1e15):
        tm = transmission_matrix(kernel_1e15, paper_spec, 3)
        for n in range(4):
            for m in range(4):
                if abs(n - m) >= 2:
                    assert tm.matrix[n, m] < 0.05

    def test_row_sums_plus_leakage(self, paper_spec, kernel_1e15):
        # leakage recomputed independently from the modes above the cut
        tm = transmission_matrix(kernel_1e15, paper_spec, 3)
        wide = transmission_matrix(kernel_1e15, paper_spec, 31)
        for n in range(4):
            above = float(wide.matrix[n, 4:].sum())
            assert tm.matrix[n].sum() + above == pytest.approx(1.0, abs=1e-6)
            assert tm.row_leakage(n) == pytest.approx(above, abs=1e-6)

    def test_grid_refinement_stability(self, paper_spec, paper_geometry, kernel_1e15):
        profile = TurbulenceProfile.from_constant(1e-15)
        coarse = channel_kernel(paper_spec, profile, paper_geometry, grid_order=32)
        tm32 = transmission_matrix(coarse, paper_spec, 3)
        tm64 = transmission_matrix(kernel_1e15, paper_spec, 3)
        assert np.max(np.abs(tm64.matrix - tm32.matrix)) < 1e-4

    def test_row_normalization_by_traces(self, paper_spec, kernel_1e15):
        tm = transmission_matrix(kernel_1e15, paper_spec, 3)
        for n in range(4):
            assert tm.traces[n] == pytest.approx(
                mode_trace(kernel_1e15, paper_spec, n), rel=1e-12
            )


class TestApplyChannel:
    def test_zero_turbulence_pure_output(self, paper_spec, kernel_zero):
        for n in (0, 2, 5):
            density, leakage = apply_channel_single(kernel_zero, paper_spec, n, 6)
            expected = np.zeros((7, 7))
            expected[n, n] = 1.0
            assert np.max(np.abs(density - expected)) < 1e-10
            assert leakage == pytest.approx(0.0, abs=1e-10)

    def test_diagonal_matches_transmission_row(self, paper_spec, kernel_1e15):
        tm = transmission_matrix(kernel_1e15, paper_spec, 3)
        density, _ = apply_channel_single(kernel_1e15, paper_spec, 0, 3)
        assert np.diag(density).real == pytest.approx(tm.matrix[0], rel=1e-12)

    def test_output_nearly_positive(self, paper_spec, kernel_1e15, kernel_1e16):
        # the pure-decay kernel is not an exactly positive multiplier; the
        # violations stay at the few-1e-3 level (see decisions ledger)
        for kernel in (kernel_1e15, kernel_1e16):
            for n in range(11):
                density, _ = apply_channel_single(kernel, paper_spec, n, 11)
                assert np.max(np.abs(density - density.conj().T)) < 1e-12
                assert np.linalg.eigvalsh(density)[0] > -1e-2

    def test_hermitian_output(self, paper_spec, kernel_1e15):
        density, _ = apply_channel_single(kernel_1e15, paper_spec, 2, 5)
        assert np.max(np.abs(density - density.conj().T)) < 1e-14
