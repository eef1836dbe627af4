import numpy as np
import pytest

from kising.sk_model import ModelParams, decompose, read_matrix, sample_couplings, write_matrix


def offdiag(J):
    return J[~np.eye(len(J), dtype=bool)]


@pytest.mark.parametrize("k", [0.0, 0.5, 1.0, 2.0])
def test_entry_variance_is_J2_over_N(k):
    n = 400
    J = sample_couplings(ModelParams(n_spins=n, temperature=1.0, coupling_scale=1.5, asymmetry=k, rng_seed=3))
    v = offdiag(J).var()
    # ~80k draws but only half are independent; 5% is > 10 sigma
    assert v == pytest.approx(1.5**2 / n, rel=0.05)


@pytest.mark.parametrize("k", [0.0, 0.5, 1.0, 3.0])
def test_pair_correlation(k):
    n = 300
    J = sample_couplings(ModelParams(n_spins=n, temperature=1.0, asymmetry=k, rng_seed=1))
    iu = np.triu_indices(n, 1)
    r = np.corrcoef(J[iu], J.T[iu])[0, 1]
    assert r == pytest.approx((1 - k * k) / (1 + k * k), abs=0.03)


def test_symmetric_when_k_zero_and_zero_diagonal():
    J = sample_couplings(ModelParams(n_spins=30, temperature=1.0, asymmetry=0.0))
    assert np.array_equal(J, J.T)
    assert np.all(np.diag(J) == 0)


def test_decompose_parts():
    p = ModelParams(n_spins=25, temperature=1.0, asymmetry=0.7, rng_seed=9)
    J = sample_couplings(p)
    Js, Jas = decompose(J)
    assert np.allclose(Js, Js.T) and np.allclose(Jas, -Jas.T)
    assert np.allclose(Js + Jas, J)
    # J = Js + k * Jas_unit with equal variances of the two unit parts
    iu = np.triu_indices(25, 1)
    assert np.var(Jas[iu]) / np.var(Js[iu]) == pytest.approx(0.49, rel=0.5)


def test_same_seed_same_matrix():
    p = ModelParams(n_spins=12, temperature=2.0, rng_seed=2**63 + 5)
    assert np.array_equal(sample_couplings(p), sample_couplings(p))
    assert not np.array_equal(sample_couplings(p), sample_couplings(p.with_(rng_seed=1)))


def test_matrix_round_trip_is_exact(tmp_path):
    J = sample_couplings(ModelParams(n_spins=7, temperature=1.0, rng_seed=4))
    write_matrix(tmp_path / "J.txt", J)
    assert np.array_equal(read_matrix(tmp_path / "J.txt"), J)
    assert (tmp_path / "J.txt").read_text().splitlines()[0] == "7"


def test_read_matrix_rejects_bad_shape(tmp_path):
    (tmp_path / "bad.txt").write_text("3\n1 2 3\n4 5 6\n")
    with pytest.raises(ValueError):
        read_matrix(tmp_path / "bad.txt")


@pytest.mark.parametrize(
    "kw, key",
    [
        (dict(n_spins=1), "n_spins"),
        (dict(temperature=0.0), "temperature"),
        (dict(temperature=-1.0), "temperature"),
        (dict(coupling_scale=0.0), "coupling_scale"),
        (dict(asymmetry=-0.1), "asymmetry"),
        (dict(rng_seed=-1), "rng_seed"),
    ],
)
def test_params_validation(kw, key):
    base = dict(n_spins=5, temperature=1.0)
    base.update(kw)
    with pytest.raises(ValueError, match=key):
        ModelParams(**base)


def test_field_broadcast_and_length_check():
    p = ModelParams(n_spins=4, temperature=1.0, external_field=0.5)
    assert np.array_equal(p.external_field, np.full(4, 0.5))
    assert p.beta == 1.0
    with pytest.raises(ValueError):
        ModelParams(n_spins=4, temperature=1.0, external_field=[0.1, 0.2])
