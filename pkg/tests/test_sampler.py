import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klwiener.errors import DomainError, UnsupportedProcessError
from klwiener.kernels import ProcessSpec, kernel_for
from klwiener.quadform import QuadLaw, moments
from klwiener.sampler import (
    Method,
    RandomStream,
    SamplePath,
    l2_norm_sq,
    mc_quad_identity,
    sample_change_of_variables,
    sample_grid,
    sample_kl,
    sample_norms,
    sample_upper_tail_grid,
    sample_wiener_grid,
    transform_path,
    trapezoid_weights,
    uniform_grid,
)
from klwiener.spectra import partial_trace, spectrum_bridge, spectrum_for, spectrum_w0

GAMMAS = [-0.3, 0.5, 1.0, 2.0]
ONE_D = ([ProcessSpec("w0"), ProcessSpec("bridge")]
         + [ProcessSpec("wgamma", g) for g in GAMMAS]
         + [ProcessSpec("wbridge", g) for g in GAMMAS])


SLOW_POINTWISE = [ProcessSpec("wgamma", -0.3), ProcessSpec("wbridge", 2.0)]


def kernel_matrix(spec, t):
    with np.errstate(divide="ignore", invalid="ignore"):
        k = kernel_for(spec)(t[:, None], t[None, :])
    # weighted bridges with gamma < 0 are 0 * inf at the origin; the limit is 0
    return np.nan_to_num(k, nan=0.0)


def trapezoid(values):
    return values @ trapezoid_weights(values.shape[-1])


class TestRandomStream:
    def test_reproducible(self):
        a = RandomStream(42).normal((3, 5))
        b = RandomStream(42).normal((3, 5))
        assert np.array_equal(a, b)

    def test_spawned_streams_differ(self):
        parent = RandomStream(7)
        draws = [parent.spawn(i).normal(20_000) for i in range(3)]
        draws.append(RandomStream(7).normal(20_000))
        for i in range(4):
            for j in range(i + 1, 4):
                assert abs(np.corrcoef(draws[i], draws[j])[0, 1]) < 0.03

    def test_spawn_is_deterministic(self):
        s = RandomStream(5, (1, 2))
        assert np.array_equal(s.spawn(3).normal(10), RandomStream(5, (1, 2, 3)).normal(10))

    def test_state_is_json(self):
        s = RandomStream(3, 4)
        s.normal(17)
        state = json.loads(json.dumps(s.state))
        assert state["seed"] == 3 and state["substream"] == [4]
        assert state != RandomStream(3, 4).state

    def test_moments(self):
        x = RandomStream(1).normal(200_000)
        assert abs(x.mean()) < 4 / math.sqrt(x.size)
        assert x.var() == pytest.approx(1.0, abs=4 * math.sqrt(2 / x.size))
        u = RandomStream(1).uniform(1000)
        assert np.all((u >= 0) & (u < 1))

    @pytest.mark.parametrize("seed", [-1, 2**64, 1.5])
    def test_bad_seed(self, seed):
        with pytest.raises(DomainError):
            RandomStream(seed)


class TestGrid:
    def test_uniform_grid(self):
        assert np.array_equal(uniform_grid(5), [0.0, 0.25, 0.5, 0.75, 1.0])
        with pytest.raises(DomainError):
            uniform_grid(1)

    def test_trapezoid_weights(self):
        w = trapezoid_weights(11)
        assert w.sum() == pytest.approx(1.0, abs=1e-15)
        assert w[0] == w[-1] == pytest.approx(0.05)


class TestL2Norm:
    def test_constant(self):
        assert l2_norm_sq(np.full(33, 3.0)) == pytest.approx(9.0, rel=1e-14)
        assert l2_norm_sq(np.full((9, 9), 2.0)) == pytest.approx(4.0, rel=1e-14)

    def test_zero(self):
        assert l2_norm_sq(np.zeros(10)) == 0.0

    def test_unit_eigenfunction(self):
        t = uniform_grid(1024)
        assert abs(l2_norm_sq(math.sqrt(2) * np.cos(math.pi * t)) - 1.0) <= 1e-5

    def test_batched(self):
        path = sample_kl(spectrum_w0(), 65, 16, RandomStream(0), 4)
        norms = l2_norm_sq(path)
        assert norms.shape == (4,)
        assert norms[2] == pytest.approx(l2_norm_sq(path.values[2]), rel=1e-15)


class TestKL:
    def test_w0_variance_at_zero(self):
        path = sample_kl(spectrum_w0(), 9, 512, RandomStream(1), 100_000)
        v = path.values[:, 0].var()
        assert abs(v - 1 / 3) <= 3 * (1 / 3) * math.sqrt(2 / 100_000)

    def test_bridge_ends_are_zero(self):
        path = sample_kl(spectrum_bridge(), 17, 512, RandomStream(2), 50)
        assert np.all(path.values[:, 0] == 0.0) and np.all(path.values[:, -1] == 0.0)

    def test_single_term(self):
        s = spectrum_w0()
        path = sample_kl(s, 33, 1, RandomStream(3), 5)
        shape = math.sqrt(2) * np.cos(math.pi * path.grid) / math.pi
        ratios = path.values / shape
        np.testing.assert_allclose(ratios, ratios[:, :1] * np.ones_like(ratios), rtol=1e-12)

    def test_reports_tail(self):
        s = spectrum_w0()
        path = sample_kl(s, 9, 100, RandomStream(0))
        assert path.tail == pytest.approx(s.trace_tail(100).estimate)
        assert isinstance(path, SamplePath) and path.n_paths == 1 and path.d == 1

    @pytest.mark.parametrize("spec", ONE_D, ids=str)
    def test_covariance_reproduction(self, spec):
        n, K = 100_000, 512
        s = spectrum_for(spec)
        path = sample_kl(s, 9, K, RandomStream(17), n)
        x = path.values
        emp = x.T @ x / n
        k = kernel_matrix(spec, path.grid)
        diag = np.diag(k)
        se = np.sqrt((np.outer(diag, diag) + k**2) / n)
        # the sampler targets the truncated kernel exactly
        e = s.evaluate(K, path.grid)
        truncated = (e * s.eigenvalues(K)[:, None]).T @ e
        assert np.all(np.abs(emp - truncated) <= 4 * se + 1e-15)
        # which is within 4 SE of the closed form except where the series
        # converges slowly pointwise (origin for gamma < 0, small t for large gamma)
        gap = np.abs(truncated - k)
        if spec in SLOW_POINTWISE:
            assert np.max(gap / np.maximum(se, 1e-300)) > 1.0
        else:
            assert np.all(np.abs(emp - k) <= 4 * se + 1e-15)

    @pytest.mark.parametrize("spec", ONE_D, ids=str)
    def test_truncated_kernel_converges(self, spec):
        s = spectrum_for(spec)
        t = uniform_grid(9)
        k = kernel_matrix(spec, t)
        gaps = []
        for K in (512, 4096, 16384):
            e = s.evaluate(K, t)
            gaps.append(np.max(np.abs((e * s.eigenvalues(K)[:, None]).T @ e - k)))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] <= 5e-3 * np.max(np.diag(k))

    @pytest.mark.parametrize("spec", [ProcessSpec("w0"), ProcessSpec("wgamma", 1.0),
                                      ProcessSpec("wbridge", 0.5)], ids=str)
    def test_truncation_bias_equals_tail(self, spec):
        # E||truncated path||^2 = sum_{k<=K} lambda_k ||e_k||^2 = trace - tail
        s, K = spectrum_for(spec), 20
        t = uniform_grid(4001)
        expected = s.eigenvalues(K) @ trapezoid(s.evaluate(K, t) ** 2)
        head = partial_trace(s, K, tail=False)
        assert expected == pytest.approx(head, rel=1e-5)
        assert head + s.trace_tail(K).estimate == pytest.approx(moments(QuadLaw(s)).mean, rel=1e-6)
        # and by simulation
        norms = l2_norm_sq(sample_kl(s, 4001, K, RandomStream(8), 20_000))
        se = norms.std() / math.sqrt(norms.size)
        assert abs(norms.mean() - head) <= 4 * se

    def test_sheet(self):
        path = sample_kl(spectrum_for(ProcessSpec("w0", d=2)), 9, 64, RandomStream(0), 3)
        assert path.values.shape == (3, 9, 9) and path.d == 2

    def test_bad_K(self):
        with pytest.raises(DomainError):
            sample_kl(spectrum_w0(), 9, 0, RandomStream(0))


class TestWienerGrid:
    def test_variance_at_one(self):
        w = sample_wiener_grid(17, 1, RandomStream(4), 100_000)
        assert abs(w.values[:, -1].var() - 1.0) <= 3 * math.sqrt(2 / 100_000)

    def test_sheet_covariance(self):
        n = 100_000
        w = sample_wiener_grid(3, 2, RandomStream(5), n)
        a, b = w.values[:, 1, 2], w.values[:, 2, 1]
        # Var(a) = Var(b) = 1/2, Cov = 1/4
        se = math.sqrt((0.25 + 0.0625) / n)
        assert abs(np.mean(a * b) - 0.25) <= 4 * se

    def test_zero_on_axes(self):
        w = sample_wiener_grid(9, 2, RandomStream(6), 4)
        assert np.all(w.values[:, 0, :] == 0.0) and np.all(w.values[:, :, 0] == 0.0)
        w1 = sample_wiener_grid(9, 1, RandomStream(6), 4)
        assert np.all(w1.values[:, 0] == 0.0)

    def test_warped_increments(self):
        w = sample_wiener_grid(5, 1, RandomStream(7), 100_000, time_exponent=3.0)
        v = w.values.var(axis=0)
        np.testing.assert_allclose(v, w.grid**3, atol=4 * math.sqrt(2 / 100_000))

    def test_bad_dimension(self):
        with pytest.raises((DomainError, UnsupportedProcessError)):
            sample_wiener_grid(5, 3, RandomStream(0))


@pytest.fixture(scope="module")
def wiener():
    return sample_wiener_grid(129, 1, RandomStream(9), 200)


class TestTransforms:
    @pytest.mark.parametrize("spec", [ProcessSpec("w0"), ProcessSpec("wgamma", 0.0),
                                      ProcessSpec("wgamma", 1.0), ProcessSpec("wgamma", -0.3),
                                      ProcessSpec("uppertail_mc", 0.0)], ids=str)
    def test_pathwise_centering(self, wiener, spec):
        vals = transform_path(wiener, spec).values
        assert np.max(np.abs(trapezoid(vals))) <= 1e-12

    def test_sheet_centering(self):
        w = sample_wiener_grid(33, 2, RandomStream(10), 20)
        vals = transform_path(w, ProcessSpec("w0", d=2)).values
        w_ = trapezoid_weights(33)
        assert np.max(np.abs(vals @ w_)) <= 1e-12
        assert np.max(np.abs(np.einsum("pij,i->pj", vals, w_))) <= 1e-12

    def test_gamma_zero_is_plain_centering(self, wiener):
        a = transform_path(wiener, ProcessSpec("w0")).values
        b = transform_path(wiener, ProcessSpec("wgamma", 0.0)).values
        assert np.array_equal(a, b)

    def test_bridge_ends(self, wiener):
        vals = transform_path(wiener, ProcessSpec("bridge")).values
        assert np.all(vals[:, [0, -1]] == 0.0)

    def test_tied_sheet_boundary(self):
        w = sample_wiener_grid(17, 2, RandomStream(11), 5)
        vals = transform_path(w, ProcessSpec("tied", d=2)).values
        for edge in (vals[:, 0, :], vals[:, -1, :], vals[:, :, 0], vals[:, :, -1]):
            assert np.all(edge == 0.0)

    def test_wgamma_variance_at_one(self):
        n = 100_000
        path = sample_grid(ProcessSpec("wgamma", 1.0), 65, RandomStream(12), n)
        assert abs(path.values[:, -1].var() - 0.2) <= 4 * 0.2 * math.sqrt(2 / n)

    def test_interpolated_time_change(self):
        # W drawn on the plain grid and warped by interpolation, fine grid
        n = 50_000
        w = sample_wiener_grid(513, 1, RandomStream(13), n)
        vals = transform_path(w, ProcessSpec("wgamma", 1.0)).values
        assert abs(vals[:, -1].var() - 0.2) <= 4 * 0.2 * math.sqrt(2 / n) + 2e-3

    @pytest.mark.parametrize("spec", [ProcessSpec("w0"), ProcessSpec("bridge"),
                                      ProcessSpec("wgamma", 0.5), ProcessSpec("wbridge", 1.0),
                                      ProcessSpec("uppertail", 0.0)], ids=str)
    def test_grid_covariance(self, spec):
        n = 100_000
        path = sample_grid(spec, 9, RandomStream(14), n)
        k = kernel_matrix(spec, path.grid)
        emp = path.values.T @ path.values / n
        diag = np.diag(k)
        # trapezoid centering on 9 points perturbs the centered kernels slightly
        bias = 5e-3 if spec.family.value in ("w0", "wgamma") else 0.0
        se = np.sqrt((np.outer(diag, diag) + k**2) / n)
        assert np.all(np.abs(emp - k) <= 4 * se + bias + 1e-15)

    def test_upper_tail_weighted(self):
        n = 100_000
        spec = ProcessSpec("uppertail", 0.5)
        path = sample_upper_tail_grid(9, (0.5,), RandomStream(15), n)
        k = kernel_matrix(spec, path.grid)
        emp = path.values.T @ path.values / n
        diag = np.diag(k)
        se = np.sqrt((np.outer(diag, diag) + k**2) / n)
        assert np.all(np.abs(emp - k) <= 4 * se + 1e-15)

    def test_unsupported(self, wiener):
        with pytest.raises(UnsupportedProcessError):
            transform_path(wiener, ProcessSpec("uppertail", 0.5))
        kl = sample_kl(spectrum_w0(), 9, 4, RandomStream(0))
        with pytest.raises(UnsupportedProcessError):
            transform_path(kl, ProcessSpec("w0"))
        with pytest.raises(UnsupportedProcessError):
            transform_path(wiener, ProcessSpec("w0", d=2))


class TestNorms:
    def test_change_of_variables_mean(self):
        gamma = 0.5
        draws = sample_change_of_variables(gamma, 512, RandomStream(16), 40_000)
        trace = 1 / (2 * (1 + gamma) * (3 + 2 * gamma))
        assert abs(draws.mean() - trace) <= 4 * draws.std() / math.sqrt(draws.size) + 1e-3

    def test_methods(self):
        spec = ProcessSpec("wgamma", 1.0)
        for m in Method:
            out = sample_norms(spec, m, 100, 65, 64, RandomStream(0))
            assert out.shape == (100,) and np.all(out >= 0)
        with pytest.raises(UnsupportedProcessError):
            sample_norms(ProcessSpec("w0"), "cv", 10, 9, 8, RandomStream(0))
        with pytest.raises(ValueError):
            sample_norms(spec, "bogus", 10, 9, 8, RandomStream(0))

    def test_grid_norms_deterministic(self):
        spec = ProcessSpec("w0")
        a = sample_norms(spec, "grid", 300, 33, 8, RandomStream(21))
        b = sample_norms(spec, "grid", 300, 33, 8, RandomStream(21))
        assert np.array_equal(a, b)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_kl_norm_is_parseval(self, seed):
        # the KL norm draw equals the grid norm of the same truncated path
        s, K = spectrum_w0(), 6
        path = sample_kl(s, 4097, K, RandomStream(seed), 3)
        omega = RandomStream(seed).normal((3, K))
        np.testing.assert_allclose(l2_norm_sq(path), (omega**2) @ s.eigenvalues(K), rtol=1e-5)


class TestQuadIdentity:
    def test_w0_grid_against_bridge_kl(self):
        rep = mc_quad_identity(ProcessSpec("w0"), ProcessSpec("bridge"), 10_000, 256, 512,
                               RandomStream(0))
        assert rep.p_value > 0.01

    def test_wgamma_grid_against_kl(self):
        spec = ProcessSpec("wgamma", 1.0)
        rep = mc_quad_identity(spec, spec, 10_000, 256, 512, RandomStream(1))
        assert rep.p_value > 0.01

    def test_detects_different_laws(self):
        rep = mc_quad_identity(ProcessSpec("w0"), ProcessSpec("wgamma", 1.0), 10_000, 256, 512,
                               RandomStream(2), methods=("kl", "kl"))
        assert rep.p_value < 1e-6

    def test_sheet_identity(self):
        # mean-centered reversed sheet against the mean-centered sheet spectrum
        rep = mc_quad_identity(ProcessSpec("uppertail_mc", d=2), ProcessSpec("w0", d=2), 4000,
                               48, 512, RandomStream(3))
        assert rep.p_value > 0.01
