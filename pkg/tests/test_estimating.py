import numpy as np
import pytest

from elsem.estimating import (
    Dataset,
    InfeasibleWeightsError,
    SingularModelError,
    check_params,
    estfun_naive,
    estfun_pinned,
    estfun_profile,
    free_params,
    omega_of,
    params_from_free,
    residuals,
    sigma_of,
    vech,
)
from elsem.graph import MixedGraph

from .conftest import simulate_instance


def test_sigma_of_chain():
    B = np.array([[0.0, 0.0], [0.5, 0.0]])
    Omega = np.eye(2)
    # Y1 = e1, Y2 = .5 e1 + e2
    np.testing.assert_allclose(sigma_of(B, Omega), [[1.0, 0.5], [0.5, 1.25]])


def test_sigma_of_singular():
    B = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(SingularModelError):
        sigma_of(B, np.eye(2))


def test_vech_order():
    S = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(vech(S), [0, 1, 2, 4, 5, 8])


def test_check_params(chain3):
    B = np.zeros((3, 3))
    B[1, 0] = 0.3
    Om = np.eye(3)
    Om[0, 2] = Om[2, 0] = 0.2
    check_params(B, Om, chain3)
    bad = B.copy()
    bad[2, 0] = 0.1
    with pytest.raises(ValueError, match="directed"):
        check_params(bad, Om, chain3)
    bad = Om.copy()
    bad[0, 1] = bad[1, 0] = 0.1
    with pytest.raises(ValueError, match="bidirected"):
        check_params(B, bad, chain3)


def test_estfun_shapes(chain3):
    rng = np.random.default_rng(0)
    Y = rng.standard_normal((10, 3))
    B = np.zeros((3, 3))
    B[1, 0], B[2, 1] = 0.4, -0.2
    G = estfun_profile(Y, B, chain3)
    assert G.shape == (10, chain3.n_profile_constraints())
    R = residuals(Y, B)
    np.testing.assert_allclose(G[:, 3], R[:, 0] * R[:, 1])
    np.testing.assert_allclose(G[:, 4], R[:, 1] * R[:, 2])
    Om = np.eye(3)
    assert estfun_naive(Y, B, Om, chain3).shape == (10, 3 + 6)
    assert estfun_pinned(Y, B, Om, chain3).shape == (10, 5 + 4)


def test_naive_forms_agree_in_mean():
    # both forms have zero mean at the population parameters
    g, p, Y = simulate_instance(3, n=200_000)
    for form in ("residual", "vech"):
        G = estfun_naive(Y, p.B, p.Omega, g, form=form)
        assert np.max(np.abs(G.mean(axis=0))) < 0.1


def test_omega_of_uniform_weights_is_residual_moment():
    g = MixedGraph(["A", "B"], [("A", "B")], [("A", "B")])
    rng = np.random.default_rng(1)
    Y = rng.standard_normal((50, 2))
    B = np.array([[0.0, 0.0], [0.7, 0.0]])
    R = residuals(Y, B)
    Om, diag = omega_of(Y, B, np.full(50, 1 / 50), g)
    np.testing.assert_allclose(Om, R.T @ R / 50)
    assert diag == 0.0


def test_omega_of_rejects_infeasible(chain3):
    rng = np.random.default_rng(2)
    Y = rng.standard_normal((40, 3)) + 0.5 * rng.standard_normal((40, 1))
    with pytest.raises(InfeasibleWeightsError):
        omega_of(Y, np.zeros((3, 3)), np.full(40, 1 / 40), chain3)
    with pytest.raises(InfeasibleWeightsError):
        omega_of(Y, np.zeros((3, 3)), np.full(40, 1 / 39), chain3)
    Om, diag = omega_of(Y, np.zeros((3, 3)), np.full(40, 1 / 40), chain3, tol=None)
    assert diag > 1e-3
    assert Om[0, 1] == 0.0 and Om[1, 2] == 0.0


def test_free_params_round_trip(chain3):
    theta = np.array([0.3, -0.4, 2.0, 0.5, 1.5, 3.0])
    P = params_from_free(theta, chain3)
    check_params(P.B, P.Omega, chain3)
    np.testing.assert_array_equal(free_params(P.B, P.Omega, chain3), theta)


def test_dataset_csv_reorders_columns(tmp_path, chain3):
    f = tmp_path / "d.csv"
    f.write_text("C,A,B\n3,1,2\n6,4,5\n")
    d = Dataset.from_csv(f, chain3)
    assert d.columns == ("A", "B", "C")
    np.testing.assert_array_equal(d.Y, [[1, 2, 3], [4, 5, 6]])
    f.write_text("A,B\n1,2\n")
    with pytest.raises(ValueError, match="missing"):
        Dataset.from_csv(f, chain3)
    c = Dataset(np.array([[1.0, 2.0], [3.0, 6.0]])).center()
    np.testing.assert_array_equal(c.Y.mean(axis=0), [0, 0])
    assert c.centered
