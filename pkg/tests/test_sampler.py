import math

import numpy as np
import pytest
from scipy import stats

import oracles
from dualebm.geometry import Manifold
from dualebm.model import TeacherModel, teacher_energy
from dualebm.sampler import (LangevinConfig, SamplerError, generate_dataset, langevin_step, load_dataset,
                             run_chains, save_dataset)


def test_zero_energy_no_noise_is_identity(rng):
    man = Manifold.sphere(2)
    x = man.uniform(rng, 5)
    y = langevin_step(x, lambda z: np.zeros_like(z), math.inf, 0.01, rng, man)
    np.testing.assert_allclose(y, x, atol=1e-15)


def test_flat_sphere_chain_is_uniform():
    man = Manifold.sphere(2)
    cfg = LangevinConfig(h=0.01, burn_in=500, thin=20, chains=50)
    n = 5000
    X = run_chains(lambda z: np.zeros_like(z), man, 1.0, n, cfg, seed=4)
    assert man.check(X)
    assert np.all(np.abs(X.mean(axis=0)) <= 3.0 * math.sqrt(1.0 / (3 * n)))


def test_ou_stationary_variance():
    # f = a |x|^2 / 2 on R^2 with the Gaussian base: the Gibbs law is N(0, 1 / (beta a + 1))
    a, beta = 2.0, 1.5
    man = Manifold.euclidean(2)
    cfg = LangevinConfig(h=0.002, burn_in=2000, thin=25, chains=200)
    X = run_chains(lambda z: a * z, man, beta, 20_000, cfg, seed=1)
    want = 1.0 / (beta * a + 1.0)
    assert abs(X.var(axis=0).mean() / want - 1.0) <= 0.05


def test_chains_are_reproducible():
    man = Manifold.sphere(2)
    cfg = LangevinConfig(h=0.01, burn_in=10, thin=2, chains=4, block=3)
    a = run_chains(lambda z: z * 0.0, man, 2.0, 17, cfg, seed=8)
    b = run_chains(lambda z: z * 0.0, man, 2.0, 17, cfg, seed=8)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (17, 3)


def test_zero_teacher_gives_uniform_projection():
    t = TeacherModel.two_neuron(2, 2.87, 0.0)
    X = generate_dataset(t, 1.0, 2000, LangevinConfig(burn_in=5000, thin=50, chains=100), seed=3)
    # on S^2 the height <theta, x> of a uniform point is uniform on [-1, 1]
    p = stats.kstest(X @ t.theta[0], stats.uniform(-1, 2).cdf).pvalue
    assert p > 0.01


@pytest.mark.derived("sphere_quadrature_partition")
def test_bimodal_teacher_matches_quadrature():
    t = TeacherModel.two_neuron(2, 2.87, -10.0)
    beta = 20.0
    n = 2000
    # one sample per chain: the two modes do not mix at this temperature, so
    # independence comes from independent chains
    X = generate_dataset(t, beta, n, LangevinConfig(burn_in=4000, thin=1, chains=n), seed=11)
    c = X @ t.theta[0]
    edges = np.linspace(-1.0, 1.0, 21)
    obs, _ = np.histogram(c, bins=edges)

    def f(P):
        return teacher_energy(t, P)[0]

    grid = oracles._grid(2, 1024)
    w = np.exp(-beta * (f(grid) - f(grid).min()))
    h = grid @ t.theta[0]
    expect, _ = np.histogram(h, bins=edges, weights=w)
    expect = expect / expect.sum() * n
    keep = expect >= 5
    obs_k = np.append(obs[keep], obs[~keep].sum())
    exp_k = np.append(expect[keep], expect[~keep].sum())
    if exp_k[-1] == 0:
        obs_k, exp_k = obs_k[:-1], exp_k[:-1]
    p = stats.chisquare(obs_k, exp_k * obs_k.sum() / exp_k.sum()).pvalue
    print(f"chi-square p-value {p:.3g} over {keep.sum()} bins")
    assert p > 0.01
    # both modes are populated
    assert (c > 0.5).mean() > 0.3 and (X @ t.theta[1] > 0.5).mean() > 0.3


def test_generate_dataset_rejects_empty():
    t = TeacherModel.two_neuron(2, 1.0)
    with pytest.raises(ValueError):
        generate_dataset(t, 1.0, 0)


def test_nonfinite_teacher_aborts():
    t = TeacherModel.two_neuron(2, 1.0, np.inf)
    with pytest.raises(SamplerError):
        generate_dataset(t, 1.0, 5, LangevinConfig(burn_in=1, thin=1, chains=2))


def test_dataset_roundtrip(tmp_path, rng):
    X = rng.standard_normal((7, 3))
    p = tmp_path / "d.csv"
    save_dataset(p, X)
    np.testing.assert_array_equal(load_dataset(p), X)
    assert p.read_text().splitlines()[0] == "x0,x1,x2"


def test_config_validation():
    with pytest.raises(ValueError):
        LangevinConfig(h=0.0)
    with pytest.raises(ValueError):
        LangevinConfig(burn_in=-1)


def test_burn_in_doubling_is_stable():
    t = TeacherModel.two_neuron(2, 2.87, -10.0)
    beta = 20.0
    vals = []
    for k, burn in enumerate((2000, 4000)):
        X = generate_dataset(t, beta, 1000, LangevinConfig(burn_in=burn, thin=20, chains=100), seed=20 + k)
        e = beta * teacher_energy(t, X)[0]
        vals.append((e.mean(), e.std() / math.sqrt(len(e))))
    (m1, s1), (m2, s2) = vals
    assert abs(m1 - m2) <= 3.0 * math.hypot(s1, s2)
