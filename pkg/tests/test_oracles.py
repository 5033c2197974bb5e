import math
import pathlib
import re

import numpy as np
import pytest

import oracles

TESTS = pathlib.Path(__file__).parent


def test_every_derived_marker_names_an_oracle():
    names = set()
    for path in TESTS.glob("test_*.py"):
        names |= set(re.findall(r"derived\(\"(\w+)\"\)", path.read_text()))
    assert names, "no derived markers found"
    missing = sorted(n for n in names if not callable(getattr(oracles, n, None)))
    assert not missing, f"markers without an oracle: {missing}"


def test_fd_gradient_examples(rng):
    a = rng.standard_normal(5)
    np.testing.assert_allclose(oracles.fd_gradient(lambda x: a @ x, rng.standard_normal(5)), a, atol=1e-9)
    x = rng.standard_normal(5)
    np.testing.assert_allclose(oracles.fd_gradient(lambda y: 0.5 * y @ y, x, h=1e-5), x, atol=1e-7)


@pytest.mark.parametrize("d", [1, 2])
def test_flat_energy_has_unit_partition(d):
    assert oracles.sphere_quadrature_partition(lambda X: np.zeros(len(X)), 20.0, d=d) == pytest.approx(1.0, abs=1e-12)


def test_partition_of_linear_energy_closed_form():
    # on S^2 the height <e3, x> is uniform on [-1, 1], so Z = sinh(beta) / beta
    beta = 3.0
    Z = oracles.sphere_quadrature_partition(lambda X: X[:, 2], beta)
    assert Z == pytest.approx(math.sinh(beta) / beta, rel=1e-6)


def test_kl_equal_zero_and_positive(rng):
    f = lambda X: np.maximum(X @ np.array([1.0, 0.0, 0.0]), 0.0)  # noqa: E731
    assert oracles.sphere_quadrature_kl(f, f, 5.0) == pytest.approx(0.0, abs=1e-12)
    for _ in range(3):
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        kl = oracles.sphere_quadrature_kl(lambda X: np.tanh(X @ a), lambda X: np.tanh(X @ b), 2.0)
        assert kl > 0


def test_non_convergence_is_reported():
    with pytest.raises(oracles.QuadratureError):
        oracles.sphere_quadrature_partition(lambda X: 1e4 * X[:, 0] ** 2, 1.0, resolution=8, max_resolution=16)
    with pytest.raises(oracles.QuadratureError):
        oracles.sphere_quadrature_partition(lambda X: X[:, 0], 1.0, d=3)


def test_brute_force_trivial_cases(rng):
    X = rng.standard_normal((4, 3)).tolist()
    assert oracles.brute_force_mmd2(X, X, oracles.arccos1_kernel) == pytest.approx(0.0, abs=1e-15)
    a, b = X[0], X[1]
    k = oracles.arccos1_kernel
    assert oracles.brute_force_mmd2([a], [b], k) == pytest.approx(k(a, a) + k(b, b) - 2 * k(a, b), rel=1e-15)
    assert oracles.brute_force_F(X, X, [1.0, 0.0, 0.0], lambda x, t: max(0.0, x[0])) == 0.0
    assert oracles.brute_force_sm_loss([[1.0, 0, 0]], [0.0], [[0.0, 1.0, 0.0]], 2.0, "sphere") == 0.0


def test_rejection_sampler_moment():
    rng = np.random.default_rng(4)
    X = oracles.rejection_sample_sphere(lambda Y: Y[:, 2], 3.0, 20_000, rng)
    # E[z] = 1/beta - coth(beta) for the density exp(-beta z) on [-1, 1]
    want = 1 / 3.0 - 1 / math.tanh(3.0)
    assert abs(X[:, 2].mean() - want) <= 4 * X[:, 2].std() / math.sqrt(len(X))


def test_report_lines():
    ok = oracles.compare("x", 1.0, 1.0 + 1e-12, 1e-10)
    bad = oracles.compare("y", 1.0, 2.0, 1e-3, relative=True)
    assert ok.passed and not bad.passed
    assert ok.line().startswith("ORACLE PASS x:") and bad.line().startswith("ORACLE FAIL y:")
    with pytest.raises(ValueError):
        oracles.compare_arrays("z", np.zeros(2), np.zeros(3), 1.0)
