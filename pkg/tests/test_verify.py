import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isasep.errors import DegenerateSample, DimensionMismatch, TooFewSamples
from isasep.linalg import derive_seed, make_rng
from isasep.model import make_instance
from isasep.sources import (
    ROT90,
    ChiOfDim,
    Constant,
    ExponentialRadial,
    IidMarginal,
    LpSpherical,
    Rot90,
    Spherical,
)
from isasep.verify import (
    angle_direction,
    check_entropy_combination,
    check_projection_invariance,
    check_proposition_sum,
    check_rot90_symmetry,
    check_w_epi,
    exact_block,
    isotropic_scale,
    ks_critical_value,
    min_entropy_basis,
    sample_directions,
    scan_argmin,
    scan_entropy_on_circle,
    scan_range,
    sheared_uniform,
    uniform_square,
    verification_instance,
)

N = 20_000


def block(spec, n=N, seed=0):
    return exact_block(spec, n, seed)


class TestDirections:
    def test_canonical_first(self):
        d = sample_directions(2, 5, 0, include_canonical=True)
        assert d.shape == (7, 2)
        assert np.array_equal(d[:2], np.eye(2))

    @given(st.integers(1, 6), st.integers(0, 2**32))
    @settings(max_examples=20, deadline=None)
    def test_unit_norm(self, L, seed):
        d = sample_directions(L, 50, seed, include_canonical=True)
        assert np.all(np.abs(np.linalg.norm(d, axis=1) - 1) <= 1e-12)

    def test_isotropic_mean(self):
        assert np.linalg.norm(sample_directions(3, 10_000, 1).mean(axis=0)) < 0.05

    def test_deterministic(self):
        assert np.array_equal(sample_directions(3, 10, 4), sample_directions(3, 10, 4))

    def test_angle_direction(self):
        assert np.allclose(angle_direction(0.0), [1, 0])
        assert np.allclose(angle_direction(math.pi / 2), [0, 1])
        assert np.allclose(ROT90 @ angle_direction(0.3), angle_direction(0.3 + math.pi / 2))


class TestWEpi:
    def test_gaussian_pair_closed_form(self):
        u = make_rng(1).standard_normal((100_000, 2))
        w = np.array([[1, 1]]) / math.sqrt(2)
        rec = check_w_epi(u, w, seed=2).records[0]
        two_pi_e = 2 * math.pi * math.e
        assert rec.lhs == pytest.approx(two_pi_e, rel=0.02)
        assert rec.rhs == pytest.approx(two_pi_e, rel=0.02)
        assert abs(rec.margin) / rec.lhs < 0.02

    @pytest.mark.parametrize("radial", [ChiOfDim(), ExponentialRadial(1.0)])
    def test_spherical_equality(self, radial):
        b = block(Spherical(2, radial), 100_000, 3)
        rep = check_w_epi(b, sample_directions(2, 20, 4), seed=5)
        assert max(abs(r.margin) / r.lhs for r in rep.records) < 0.02

    @pytest.mark.parametrize("marginal", ["laplace", "uniform"])
    def test_independent_pairs_hold(self, marginal):
        b = block(IidMarginal(2, marginal), N, 6)
        rep = check_w_epi(b, sample_directions(2, 50, 7, include_canonical=True), seed=8)
        assert rep.violations == 0 and rep.passed
        assert rep.kind == "inequality"

    def test_rhs_uses_scaling_identity(self):
        # rhs depends on w only through w_i^2, so w and a sign flip agree.
        b = block(IidMarginal(2, "laplace"), N, 9)
        w = np.array([[0.6, 0.8], [-0.6, 0.8]])
        rep = check_w_epi(b, w, seed=10)
        assert rep.records[0].rhs == rep.records[1].rhs

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            check_w_epi(np.zeros((100, 2)), np.eye(2))


class TestEntropyCombination:
    def test_canonical_margin_zero(self):
        b = block(IidMarginal(2, "laplace"), N, 11)
        rep = check_entropy_combination(b, np.eye(2), seed=12)
        for r in rep.records:
            assert abs(r.margin) <= 2 * r.stderr

    def test_spherical_equality(self):
        b = block(Spherical(2, ChiOfDim()), 50_000, 13)
        rep = check_entropy_combination(b, sample_directions(2, 20, 14), seed=15)
        for r in rep.records:
            assert abs(r.margin) <= 3 * r.stderr

    def test_uniform_pair_holds_and_agrees_with_w_epi(self):
        b = block(IidMarginal(2, "uniform"), N, 16)
        dirs = sample_directions(2, 100, 17)
        assert check_entropy_combination(b, dirs, seed=18).violations == 0
        assert check_w_epi(b, dirs, seed=18).violations == 0


    def test_lp_small_p_chi_radial_holds(self):
        b = block(LpSpherical(2, 0.5), 50_000, 61)
        assert check_entropy_combination(b, sample_directions(2, 20, 62), seed=63).violations == 0

    def test_uniform_on_l1_circle_fails(self):
        # Half the mass sits on the edges x + y = +-1: the diagonal projection
        # has atoms, and nearby directions have very low entropy.
        b = block(LpSpherical(2, 1.0, Constant()), 50_000, 64)
        with pytest.raises(DegenerateSample):
            check_entropy_combination(b, np.array([[1.0, 1.0]]) / math.sqrt(2), seed=65)
        rep = check_entropy_combination(b, [angle_direction(math.pi / 4 + 0.01)], seed=65)
        assert rep.violations == 1 and rep.worst_margin < -0.5


class TestPropositionSum:
    def test_identity_margin_exactly_zero(self):
        inst = make_instance((Spherical(2, Constant()), Spherical(2, Constant())), 10_000, 19)
        rep = check_proposition_sum(inst, 5, seed=20)
        assert rep.trials == 6
        assert rep.records[0].margin == 0.0

    @pytest.mark.parametrize(
        "specs",
        [
            (Spherical(2, Constant()), Spherical(2, ChiOfDim())),
            (Rot90(IidMarginal(2, "uniform")), Rot90(IidMarginal(2, "laplace"))),
        ],
    )
    def test_sufficient_families_hold(self, specs):
        inst = make_instance(specs, 20_000, 21)
        rep = check_proposition_sum(inst, 20, seed=22)
        assert rep.violations == 0

    def test_deterministic(self):
        inst = make_instance((IidMarginal(2, "uniform"), Spherical(2)), 5000, 23)
        a = check_proposition_sum(inst, 3, seed=24)
        b = check_proposition_sum(inst, 3, seed=24)
        assert a.per_trial == b.per_trial


class TestProjectionInvariance:
    @pytest.mark.parametrize("radial", [ChiOfDim(), Constant()])
    def test_spherical(self, radial):
        b = block(Spherical(2, radial), 50_000, 25)
        rep = check_projection_invariance(b, sample_directions(2, 30, 26), seed=27)
        assert rep.violations == 0
        assert rep.kind == "equality"

    def test_uniform_square_control_fails(self):
        b = uniform_square(50_000, 28)
        dirs = sample_directions(2, 30, 29, include_canonical=True)
        rep = check_projection_invariance(b, dirs, seed=30)
        assert rep.violations > 0 and not rep.passed
        assert rep.max_abs_margin > 3 * max(r.stderr for r in rep.records)


class TestRot90:
    @pytest.mark.parametrize(
        "spec", [Rot90(IidMarginal(2, "laplace")), Rot90(IidMarginal(2, "uniform")), LpSpherical(2, 4.0, Constant())]
    )
    def test_invariant_blocks(self, spec):
        b = block(spec, N, 31)
        rep = check_rot90_symmetry(b, sample_directions(2, 50, 32), seed=33)
        assert rep.violations == 0
        assert rep.max_ks is not None
        assert all(r.ks < r.ks_critical for r in rep.records)

    def test_spherical_arbitrary_pairs(self):
        b = block(Spherical(2, Constant()), N, 34)
        assert check_rot90_symmetry(b, sample_directions(2, 30, 35), seed=36).violations == 0
        assert check_projection_invariance(b, sample_directions(2, 30, 37), seed=38).violations == 0

    def test_sheared_control_fails(self):
        b = sheared_uniform(N, 0.5, 39)
        rep = check_rot90_symmetry(b, sample_directions(2, 20, 40, include_canonical=True), seed=41)
        assert rep.violations > 0
        assert any(r.ks > r.ks_critical for r in rep.records)

    def test_needs_2d(self):
        with pytest.raises(DimensionMismatch):
            check_rot90_symmetry(np.zeros((N, 3)), np.eye(3))

    def test_ks_critical_value(self):
        # Asymptotic 1% two-sample value: 1.628 * sqrt(2 / n).
        assert ks_critical_value(10_000, 10_000, 0.01) == pytest.approx(1.6276 * math.sqrt(2e-4), rel=1e-3)


class TestScan:
    def test_spherical_flat(self):
        b = block(Spherical(2, ChiOfDim()), 100_000, 42)
        spread, sd = scan_range(scan_entropy_on_circle(b, 16, seed=43))
        assert spread < 3 * sd

    def test_lp4_period(self):
        b = block(LpSpherical(2, 4.0), 50_000, 44)
        angles = np.linspace(0, math.pi / 2, 16, endpoint=False)
        for th in angles:
            a = check_projection_invariance(b, np.vstack([angle_direction(th), angle_direction(th + math.pi / 2)]), seed=45)
            r = a.records[1]
            assert abs(r.margin) < 3 * r.stderr

    def test_lp4_not_flat(self):
        b = block(LpSpherical(2, 4.0, Constant()), 50_000, 46)
        spread, sd = scan_range(scan_entropy_on_circle(b, 16, seed=47))
        assert spread > 3 * sd

    def test_refinement_consistency(self):
        b = block(Rot90(IidMarginal(2, "uniform")), 50_000, 48)
        coarse = scan_entropy_on_circle(b, 8, seed=49)
        fine = scan_entropy_on_circle(b, 64, seed=49)
        step = (math.pi / 2) / 7
        diff = abs(coarse[scan_argmin(coarse)][0] - fine[scan_argmin(fine)][0])
        # The profile is pi/2-periodic, so 0 and pi/2 are the same point.
        diff = min(diff, math.pi / 2 - diff)
        assert diff <= step + 1e-12

    def test_min_entropy_basis_orthonormal(self):
        b = block(Rot90(IidMarginal(2, "uniform")), 20_000, 50)
        basis = min_entropy_basis(scan_entropy_on_circle(b, 16, seed=51))
        assert np.allclose(basis @ basis.T, np.eye(2), atol=1e-12)

    def test_resolution_and_shape(self):
        b = block(Spherical(2), 2000, 52)
        scan = scan_entropy_on_circle(b, 8)
        assert len(scan) == 8 and scan[0][0] == 0.0 and scan[-1][0] == pytest.approx(math.pi / 2)
        with pytest.raises(ValueError):
            scan_entropy_on_circle(b, 7)
        with pytest.raises(DimensionMismatch):
            scan_entropy_on_circle(np.zeros((2000, 3)), 8)


class TestExactBlocks:
    @given(st.floats(0, 2 * math.pi), st.integers(0, 2**32))
    @settings(max_examples=20, deadline=None)
    def test_scale_commutes_with_rotation(self, th, seed):
        x = make_rng(seed).standard_normal((200, 2)) * [1.0, 3.0]
        c, s = math.cos(th), math.sin(th)
        R = np.array([[c, -s], [s, c]])
        assert np.allclose(isotropic_scale(x @ R.T), isotropic_scale(x) @ R.T, atol=1e-12)

    def test_unit_mean_square(self):
        b = exact_block(LpSpherical(3, 1.5), 5000, 56)
        assert np.mean(np.sum(b * b, axis=1)) == pytest.approx(3.0, rel=1e-12)

    def test_elliptical_mapped_to_spherical(self):
        from isasep.sources import Elliptical

        spec = Elliptical((1.0, -2.0), ((3.0, 1.0), (0.0, 0.5)))
        b = exact_block(spec, 50_000, 57)
        assert np.allclose(np.cov(b.T, bias=True), np.eye(2), atol=0.03)
        assert check_projection_invariance(b, sample_directions(2, 20, 58), seed=59).violations == 0

    def test_verification_instance(self):
        specs = (Spherical(2, Constant()), Rot90(IidMarginal(2, "uniform")))
        inst = verification_instance(specs, 1000, 60)
        assert np.array_equal(inst.A, np.eye(4)) and np.array_equal(inst.Z, inst.S)
        assert inst.dims == (2, 2)
        assert np.array_equal(inst.S[:, 2:], exact_block(specs[1], 1000, derive_seed(60, "source", 1)))
        # Circle samples stay on a circle: no whitening distortion.
        r = np.linalg.norm(inst.S[:, :2], axis=1)
        assert np.ptp(r) < 1e-12


class TestReport:
    def test_summary_and_fields(self):
        b = block(IidMarginal(2, "laplace"), N, 53)
        rep = check_entropy_combination(b, sample_directions(2, 5, 54), seed=55)
        assert rep.trials == 5
        assert rep.worst_margin == min(r.margin for r in rep.records)
        assert rep.tolerance == max(r.tolerance for r in rep.records)
        assert len(rep.per_trial) == 5
        assert "entropy_combination" in rep.summary()
