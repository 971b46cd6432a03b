import numpy as np
import pytest

from vrd import linalg
from vrd.core import (
    VrdParams,
    assemble_sp,
    energy,
    factorize,
    green_function,
    green_support_radius,
    helmholtz_solve,
    stationarity_residual,
    vrd_backward,
    vrd_forward,
    vrd_solve,
)
from vrd.exceptions import ShapeMismatchError
from vrd.lattice import Field, laplacian_apply, mix_channels
from vrd.oracle import dense_solve_oracle, minimizer_check, vrd_gradient_check

from conftest import make_params, random_spd


def scalar_params(lam: float, q_i: float = 1.0, b_i: float = 0.0) -> VrdParams:
    """N_i = N_o = 1 parameters with B^o = 1 and Q^o = lam."""
    return VrdParams.from_spd([[1.0]], [[lam]], [[b_i]], [[q_i]])


class TestVrdParams:
    def test_initial_is_identity(self, rng):
        params = VrdParams.initial(3, 2, rng)
        np.testing.assert_allclose(params.b_o, np.eye(2))
        np.testing.assert_allclose(params.q_o, np.eye(2))
        np.testing.assert_array_equal(params.b_i, np.zeros((2, 3)))
        assert np.all(np.abs(params.q_i) <= 0.1)

    def test_from_spd_roundtrip(self, rng):
        b, q = random_spd(rng, 3), random_spd(rng, 3)
        params = VrdParams.from_spd(b, q, np.zeros((3, 1)), np.zeros((3, 1)))
        np.testing.assert_allclose(params.b_o, b, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(params.q_o, q, rtol=1e-10, atol=1e-10)

    def test_shape_validation(self):
        with pytest.raises(ShapeMismatchError):
            VrdParams(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))


class TestAssembleSp:
    def test_zero_cross_blocks(self, rng):
        params = VrdParams(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 3)))
        assert np.all(assemble_sp(Field.random(4, 4, 3, rng), params).data == 0.0)

    def test_pointwise_when_b_i_zero(self, rng):
        params = make_params(rng, 3, 2)
        params.b_i[...] = 0.0
        s_i = Field.random(4, 5, 3, rng)
        expected = np.einsum("oi,hwi->hwo", params.q_i, s_i.data)
        np.testing.assert_allclose(assemble_sp(s_i, params).data, expected, atol=1e-14)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeMismatchError):
            assemble_sp(Field.random(3, 3, 2, rng), make_params(rng, 3, 2))


class TestHelmholtzSolve:
    def test_zero(self):
        assert np.all(helmholtz_solve(Field.zeros(5, 4), 0.5).data == 0.0)

    def test_single_cell(self):
        z = helmholtz_solve(Field(np.array([[3.0]])), 2.0)
        assert z.data[0, 0, 0] == pytest.approx(3.0 / (-4.0 - 2.0), rel=1e-14)

    def test_pde_residual(self, rng):
        f = Field.random(6, 7, 1, rng)
        z = helmholtz_solve(f, 0.5)
        residual = laplacian_apply(z).data - 0.5 * z.data - f.data
        assert np.max(np.abs(residual)) <= 1e-10

    @pytest.mark.parametrize("lam", [0.0, -1.0])
    def test_non_positive_lambda(self, lam):
        with pytest.raises(ValueError):
            helmholtz_solve(Field.zeros(2, 2), lam)


class TestVrdSolve:
    def test_zero_source(self, rng):
        _, _, b_o_inv, schur = factorize(make_params(rng, 1, 3))
        assert np.all(vrd_solve(Field.zeros(4, 4, 3), schur, b_o_inv).data == 0.0)

    def test_scalar_reduces_to_helmholtz(self, rng):
        _, _, b_o_inv, schur = factorize(scalar_params(0.7))
        s_p = Field.random(6, 5, 1, rng)
        np.testing.assert_allclose(vrd_solve(s_p, schur, b_o_inv).data,
                                   helmholtz_solve(s_p, 0.7).data, atol=1e-12)

    def test_matches_dense_oracle(self, rng):
        params = make_params(rng, 1, 3)
        s_p = Field.random(6, 5, 3, rng)
        _, _, b_o_inv, schur = factorize(params)
        fast = vrd_solve(s_p, schur, b_o_inv).data
        dense = dense_solve_oracle(params, s_p).data
        assert np.linalg.norm(fast - dense) / np.linalg.norm(dense) <= 1e-8

    def test_oracle_agreement_over_draws(self, rng):
        for _ in range(20):
            n_out = int(rng.integers(1, 5))
            h, w = rng.integers(1, 9, size=2)
            params = make_params(rng, 1, n_out)
            s_p = Field.random(h, w, n_out, rng)
            _, _, b_o_inv, schur = factorize(params)
            fast = vrd_solve(s_p, schur, b_o_inv).data
            dense = dense_solve_oracle(params, s_p).data
            assert np.linalg.norm(fast - dense) / np.linalg.norm(dense) <= 1e-8

    def test_self_adjoint(self, rng):
        _, _, b_o_inv, schur = factorize(make_params(rng, 1, 3))
        f, g = Field.random(8, 7, 3, rng), Field.random(8, 7, 3, rng)
        lhs = np.vdot(vrd_solve(f, schur, b_o_inv).data, g.data)
        rhs = np.vdot(f.data, vrd_solve(g, schur, b_o_inv).data)
        assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_channel_mismatch(self, rng):
        _, _, b_o_inv, schur = factorize(make_params(rng, 1, 3))
        with pytest.raises(ShapeMismatchError):
            vrd_solve(Field.zeros(3, 3, 2), schur, b_o_inv)


class TestVrdForward:
    def test_zero_input(self, rng):
        s_o, _ = vrd_forward(Field.zeros(5, 6, 2), make_params(rng, 2, 3))
        assert np.all(s_o.data == 0.0)

    def test_smoothing_parameters(self, rng):
        s_i = Field.random(9, 8, 1, rng)
        s_o, _ = vrd_forward(s_i, scalar_params(1.0, q_i=-1.0))
        residual = laplacian_apply(s_o).data - s_o.data + s_i.data
        assert np.max(np.abs(residual)) <= 1e-10
        # A smoothing of the input has less variation than the input itself
        assert np.var(np.diff(s_o.data, axis=0)) < np.var(np.diff(s_i.data, axis=0))

    def test_stationarity(self, rng):
        params = make_params(rng, 2, 3)
        s_i = Field.random(32, 17, 2, rng)
        s_o, cache = vrd_forward(s_i, params)
        assert stationarity_residual(s_i, s_o, params) <= 1e-8 * cache.s_p.max_abs()

    def test_minimizes_energy(self, rng):
        params = make_params(rng, 2, 2)
        s_i = Field.random(6, 5, 2, rng)
        report = minimizer_check(params, s_i, trials=100, epsilons=(1e-2,), rng=rng)
        assert report.passed
        assert report.worst_margin >= 0.0

    def test_commutes_with_channel_rotation(self, rng):
        # Rotating the output channels of B^o, Q^o and the cross blocks rotates s^o
        params = make_params(rng, 2, 3)
        v, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        rotated = VrdParams.from_spd(v.T @ params.b_o @ v, v.T @ params.q_o @ v,
                                     v.T @ params.b_i, v.T @ params.q_i)
        s_i = Field.random(6, 7, 2, rng)
        s_o, _ = vrd_forward(s_i, params)
        s_o_rot, _ = vrd_forward(s_i, rotated)
        np.testing.assert_allclose(s_o_rot.data, mix_channels(v.T, s_o).data, atol=1e-9)


class TestVrdBackward:
    def test_zero_gradient(self, rng):
        params = make_params(rng, 2, 3)
        s_i = Field.random(5, 4, 2, rng)
        _, cache = vrd_forward(s_i, params)
        grads = vrd_backward(Field.zeros(5, 4, 3), cache, s_i, params)
        for name in ("dl_dsp", "dl_dsi"):
            assert np.all(getattr(grads, name).data == 0.0)
        for name in ("dl_dbo", "dl_dqo", "dl_dbi", "dl_dqi", "dl_drb", "dl_drq"):
            assert np.all(getattr(grads, name) == 0.0)

    def test_scalar_adjoint_is_helmholtz(self, rng):
        params = scalar_params(0.3)
        s_i = Field.random(6, 6, 1, rng)
        _, cache = vrd_forward(s_i, params)
        dl_dso = Field.random(6, 6, 1, rng)
        grads = vrd_backward(dl_dso, cache, s_i, params)
        np.testing.assert_allclose(grads.dl_dsp.data, helmholtz_solve(dl_dso, 0.3).data, atol=1e-12)

    def test_finite_differences(self, rng):
        params = make_params(rng, 2, 3)
        s_i = Field.random(5, 4, 2, rng)
        errors = vrd_gradient_check(params, s_i, np.zeros((5, 4, 3)))
        assert set(errors) == {"dL/ds^p", "dL/ds^i", "dL/dB^o", "dL/dQ^o",
                               "dL/dB^i", "dL/dQ^i", "dL/dr_b", "dL/dr_q"}
        for name, err in errors.items():
            assert err <= 1e-4, name

    def test_finite_differences_weighted_loss(self, rng):
        params = make_params(rng, 2, 2)
        s_i = Field.random(4, 5, 2, rng)
        errors = vrd_gradient_check(params, s_i, rng.standard_normal((4, 5, 2)))
        assert max(errors.values()) <= 1e-4


class TestEnergy:
    def test_zero_fields(self, rng):
        params = make_params(rng, 2, 3)
        assert energy(Field.zeros(4, 4, 2), Field.zeros(4, 4, 3), params) == 0.0

    def test_single_cell_closed_form(self):
        q, b, v = 1.5, 0.7, -2.0
        params = VrdParams.from_spd([[b]], [[q]], np.zeros((1, 0)), np.zeros((1, 0)))
        value = energy(None, Field(np.array([[v]])), params)
        assert value == pytest.approx(q * v * v + 4 * b * v * v, rel=1e-12)

    def test_input_only_blocks_shift_energy(self, rng):
        params = make_params(rng, 2, 2)
        s_i = Field.random(3, 3, 2, rng)
        s_o = Field.random(3, 3, 2, rng)
        q_ii = random_spd(rng, 2)
        base = energy(s_i, s_o, params)
        shifted = energy(s_i, s_o, params, q_ii=q_ii)
        expected = np.einsum("ni,ij,nj->", s_i.data.reshape(-1, 2), q_ii, s_i.data.reshape(-1, 2))
        assert shifted - base == pytest.approx(expected, rel=1e-10)

    def test_grid_mismatch(self, rng):
        params = make_params(rng, 2, 2)
        with pytest.raises(ShapeMismatchError):
            energy(Field.zeros(3, 3, 2), Field.zeros(3, 4, 2), params)


class TestGreenFunction:
    def test_delta_like_for_large_lambda(self):
        g = green_function(1e6, 15, 15).channel(0)
        outside = np.abs(g).sum() - abs(g[7, 7])
        assert outside / np.abs(g).sum() < 1e-5

    def test_peak_at_center(self):
        g = green_function(1e-2, 31, 31).channel(0)
        assert np.unravel_index(np.argmax(g), g.shape) == (15, 15)
        assert g[15, 15] > 0

    def test_flip_symmetry(self):
        g = green_function(0.05, 21, 21).channel(0)
        np.testing.assert_allclose(g, g[::-1, :], atol=1e-12)
        np.testing.assert_allclose(g, g[:, ::-1], atol=1e-12)

    def test_width_grows_as_lambda_shrinks(self):
        narrow = green_support_radius(green_function(1e-2, 255, 255))
        wide = green_support_radius(green_function(1e-6, 255, 255))
        assert wide > narrow
