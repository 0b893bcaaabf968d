"""Noise path sampling, dyadic refinement, and parameter process tests."""
import numpy as np
import pytest

from stochlab.noise import (
    DOMAIN_BASE,
    DOMAIN_ENSEMBLE,
    DOMAIN_REFINE,
    NoisePath,
    ParameterProcess,
    coarse_sum,
    constant_eta,
    iterated_log_eta,
    parameter_sde,
    path_from_csv,
    path_to_csv,
    refine,
    sample_brownian,
    stream,
)


def test_stream_is_deterministic_and_domain_separated():
    a = stream(42, DOMAIN_BASE, 0).normal(size=8)
    b = stream(42, DOMAIN_BASE, 0).normal(size=8)
    assert np.array_equal(a, b)
    c = stream(42, DOMAIN_REFINE, 0).normal(size=8)
    d = stream(42, DOMAIN_BASE, 1).normal(size=8)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert not np.array_equal(a, stream(43, DOMAIN_BASE, 0).normal(size=8))


def test_sample_brownian_grid_and_shapes():
    p = sample_brownian(7, T=1.0, h=2.0**-6, dims=2)
    assert p.n_steps == 64
    assert p.dims == 2
    assert p.level == 0
    assert p.h == 2.0**-6
    # the grid is the literal arange product, bitwise
    assert np.array_equal(p.times, np.arange(65) * 2.0**-6)
    w = p.cumulative()
    assert w.shape == (65, 2)
    assert np.all(w[0] == 0.0)
    assert np.allclose(w[-1], np.sum(p.increments, axis=0))


def test_sample_brownian_nondyadic_step_count():
    p = sample_brownian(7, T=1.0, h=1e-3)
    assert p.n_steps == 1000


def test_sample_brownian_deterministic():
    p = sample_brownian(123, T=2.0, h=0.25, dims=3)
    q = sample_brownian(123, T=2.0, h=0.25, dims=3)
    assert np.array_equal(p.increments, q.increments)
    r = sample_brownian(124, T=2.0, h=0.25, dims=3)
    assert not np.array_equal(p.increments, r.increments)


def test_increment_variance_scales_with_h():
    p = sample_brownian(99, T=64.0, h=2.0**-4, dims=1)
    std = np.std(p.increments)
    assert 0.9 * 2.0**-2 < std < 1.1 * 2.0**-2


def test_noise_path_validates_shapes_and_is_frozen():
    times = np.arange(5) * 0.5
    with pytest.raises(ValueError):
        NoisePath(times=times, increments=np.zeros((3, 1)), seed=0)
    p = NoisePath(times=times, increments=np.zeros((4, 1)), seed=0)
    with pytest.raises(ValueError):
        p.times[0] = 1.0


def test_refine_halves_grid_bitwise():
    p = sample_brownian(5, T=1.0, h=2.0**-3)
    f = refine(p)
    assert f.level == 1
    assert f.n_steps == 2 * p.n_steps
    assert np.array_equal(f.times, np.arange(17) * 2.0**-4)


def test_refine_is_deterministic():
    p = sample_brownian(5, T=1.0, h=2.0**-3, dims=2)
    assert np.array_equal(refine(p).increments, refine(p).increments)


def test_refine_sums_close_within_one_ulp_and_mostly_exact():
    p = sample_brownian(21, T=4.0, h=2.0**-6, dims=2)
    f = refine(p)
    sums = coarse_sum(f)
    diff = np.abs(sums - p.increments)
    # pair sums land back on the parent increment exactly on most steps and
    # never further than one rounding granule of the summands
    tol = np.spacing(np.abs(f.increments[0::2]) + np.abs(f.increments[1::2]))
    assert np.all(diff <= tol)
    assert np.mean(sums == p.increments) > 0.5


def test_refine_preserves_terminal_value():
    p = sample_brownian(33, T=8.0, h=2.0**-5)
    f = refine(refine(p))
    drift = abs(float(np.sum(f.increments) - np.sum(p.increments)))
    assert drift < 1e-12


def test_refine_midpoint_noise_has_bridge_scale():
    # W_mid - (W_l + W_r)/2 must be N(0, h/4): the refinement cannot shrink
    # or inflate the bridge law without biasing coupled convergence studies
    p = sample_brownian(17, T=32.0, h=2.0**-4)
    f = refine(p)
    xi = f.increments[0::2, 0] - 0.5 * p.increments[:, 0]
    target = np.sqrt(p.h) / 2.0
    assert 0.9 < np.std(xi) / target < 1.1
    # and it is uncorrelated with the parent increments
    corr = np.corrcoef(xi, p.increments[:, 0])[0, 1]
    assert abs(corr) < 0.1


def test_refined_quadratic_variation_is_stable_over_levels():
    p = sample_brownian(3, T=16.0, h=2.0**-3)
    qv = [float(np.sum(p.increments**2))]
    for _ in range(3):
        p = refine(p)
        qv.append(float(np.sum(p.increments**2)))
    assert all(0.7 * 16.0 < v < 1.3 * 16.0 for v in qv)


def test_coarse_sum_rejects_odd_steps():
    p = NoisePath(times=np.arange(4) * 0.5, increments=np.zeros((3, 1)), seed=0)
    with pytest.raises(ValueError):
        coarse_sum(p)


def test_path_csv_roundtrip_bitwise(tmp_path):
    p = refine(sample_brownian(11, T=1.0, h=2.0**-4, dims=2))
    dest = tmp_path / "path.csv"
    path_to_csv(p, str(dest))
    first = dest.read_text()
    assert first.startswith("# seed=11 level=1")
    q = path_from_csv(str(dest))
    assert q.seed == p.seed
    assert q.level == p.level
    assert np.array_equal(q.increments, p.increments)
    assert np.array_equal(q.times, p.times)
    path_to_csv(q, str(dest))
    assert dest.read_text() == first


def test_parameter_process_validation():
    t = np.arange(4) * 1.0
    with pytest.raises(ValueError):
        ParameterProcess(times=t, values=np.ones(3), provenance="constant")
    with pytest.raises(ValueError):
        ParameterProcess(times=t, values=np.ones(4), provenance="psychic")
    with pytest.raises(ValueError):
        ParameterProcess(times=t, values=2.0 * np.ones(4), provenance="constant",
                         bound=1.0)
    p = ParameterProcess(times=t, values=np.ones((4, 2)), provenance="constant",
                         bound=1.0)
    assert p.dim == 2


def test_constant_eta_scalar_and_vector():
    t = np.arange(5) * 0.1
    s = constant_eta(t, 2.5)
    assert s.values.shape == (5,)
    assert np.all(s.values == 2.5)
    v = constant_eta(t, [1.0, -2.0])
    assert v.values.shape == (5, 2)
    assert v.bound == 2.0


def test_iterated_log_eta_clamps_before_t_min():
    p = sample_brownian(4, T=10.0, h=0.5)
    eta = iterated_log_eta(p, t_min=3.0)
    early = p.times <= 3.0
    assert np.all(eta.values[early] == 1.0)
    assert np.all(eta.values > 0.0)
    assert eta.bound is not None
    assert np.all(np.abs(eta.values) <= eta.bound)
    # spot-check the formula at one late grid point
    k = int(np.argmax(p.times > 3.0))
    t = p.times[k]
    w = p.cumulative()[k, 0]
    expected = np.exp(w / np.sqrt(2.0 * t * np.log(np.log(t))))
    assert eta.values[k] == pytest.approx(expected, rel=1e-12)


def test_iterated_log_eta_validates_inputs():
    p = sample_brownian(4, T=10.0, h=0.5, dims=2)
    with pytest.raises(ValueError):
        iterated_log_eta(p)
    q = sample_brownian(4, T=10.0, h=0.5)
    with pytest.raises(ValueError):
        iterated_log_eta(q, t_min=2.0)


def test_parameter_sde_constant_case_and_determinism():
    p = sample_brownian(8, T=1.0, h=2.0**-4)
    flat = parameter_sde(lambda t, e: 0.0, lambda t, e: [[0.0]], 1.5, p)
    assert np.all(flat.values == 1.5)
    ou1 = parameter_sde(lambda t, e: -e, lambda t, e: [[0.3]], 1.0, p)
    ou2 = parameter_sde(lambda t, e: -e, lambda t, e: [[0.3]], 1.0, p)
    assert np.array_equal(ou1.values, ou2.values)
    assert ou1.provenance == "sde-driven"


def test_parameter_sde_validates_sigma_shape():
    p = sample_brownian(8, T=1.0, h=2.0**-4, dims=2)
    with pytest.raises(ValueError):
        parameter_sde(lambda t, e: 0.0, lambda t, e: [[0.0]], 1.0, p)
