import json

import numpy as np
import pytest

from estimator.factorize import (
    DFFactors,
    FactorizationError,
    SFFactors,
    THCFactors,
    cholesky_sf,
    cp3_init,
    double_factorize,
    factorization_error,
    load_factors,
    reconstruct_eri,
    save_factors,
    select_rank,
    select_rank_from_errors,
    suggest_thc_rank,
    thc_loss_and_gradient,
    thc_optimize,
)
from estimator.integrals import Hamiltonian, validate_symmetry
from estimator.logical_cost import calibration_table

from conftest import random_hamiltonian


def planted_cp3(seed=0, n=4, m=3, n_vectors=5):
    rng = np.random.default_rng(seed)
    beta = rng.normal(size=(n, m))
    zeta = rng.normal(size=(n_vectors, m))
    return SFFactors(np.einsum("it,jt,xt->xij", beta, beta, zeta))


def eight_fold_deviation(eri):
    return validate_symmetry(Hamiltonian(np.zeros(eri.shape[:2]), eri)).eri_deviation


# -- Cholesky ----------------------------------------------------------------


def test_cholesky_full_rank_reconstructs_exactly(ham4):
    sf = cholesky_sf(ham4, threshold=1e-14)
    assert np.max(np.abs(reconstruct_eri(sf) - ham4.eri)) <= 1e-10
    assert sf.rank <= 10  # number of symmetric pairs for N=4


def test_cholesky_first_pivot_is_largest_diagonal(ham4):
    sf = cholesky_sf(ham4)
    diag = ham4.eri.reshape(16, 16).diagonal()
    assert sf.pivots[0] == int(np.argmax(diag))
    assert sf.pivot_diagonals[0] == pytest.approx(diag.max())


def test_cholesky_residual_non_increasing_with_rank(ham4):
    residuals = [cholesky_sf(ham4, rank=k).residual_max_diagonal for k in range(1, 11)]
    assert all(b <= a + 1e-12 for a, b in zip(residuals, residuals[1:]))
    errors = [factorization_error(ham4, cholesky_sf(ham4, rank=k)) for k in range(1, 11)]
    assert all(b <= a + 1e-10 for a, b in zip(errors, errors[1:]))


def test_cholesky_pivot_diagonals_non_increasing(ham4):
    d = cholesky_sf(ham4, threshold=1e-12).pivot_diagonals
    assert all(b <= a * (1 + 1e-12) for a, b in zip(d, d[1:]))


def test_cholesky_rejects_indefinite_tensor():
    eri = np.zeros((2, 2, 2, 2))
    eri[0, 0, 0, 0] = -1.0
    with pytest.raises(FactorizationError):
        cholesky_sf(Hamiltonian(np.zeros((2, 2)), eri))


def test_cholesky_threshold_must_be_positive(ham4):
    with pytest.raises(FactorizationError):
        cholesky_sf(ham4, threshold=0.0)


def test_cholesky_zero_tensor_has_rank_zero():
    sf = cholesky_sf(Hamiltonian(np.eye(2), np.zeros((2, 2, 2, 2))))
    assert sf.rank == 0
    assert np.all(reconstruct_eri(sf) == 0)


# -- double factorization ----------------------------------------------------


def test_df_without_truncation_matches_sf(ham4):
    sf = cholesky_sf(ham4, threshold=1e-12)
    df = double_factorize(sf)
    assert np.max(np.abs(reconstruct_eri(df) - reconstruct_eri(sf))) <= 1e-12
    assert df.average_rank == 4
    assert df.gamma == 4 * sum(df.leaf_ranks)


def test_df_truncation_drops_small_eigenvalues(ham4):
    sf = cholesky_sf(ham4, threshold=1e-12)
    full = double_factorize(sf)
    cut = max(np.max(np.abs(f)) for f in full.eigenvalues) / 10
    trunc = double_factorize(sf, cut)
    assert all(np.all(np.abs(f) >= cut) for f in trunc.eigenvalues)
    assert sum(trunc.leaf_ranks) < sum(full.leaf_ranks)


def test_df_negative_threshold_rejected(ham4):
    with pytest.raises(FactorizationError):
        double_factorize(cholesky_sf(ham4), -1.0)


# -- CP3 ---------------------------------------------------------------------


def test_cp3_recovers_planted_decomposition():
    cp3, thc = cp3_init(planted_cp3(0), rank=3, sweeps=3000, seed=1)
    assert cp3.residual < 1e-10
    # THC built from the CP3 factors reproduces the planted integrals
    planted = reconstruct_eri(planted_cp3(0))
    assert np.max(np.abs(reconstruct_eri(thc) - planted)) < 1e-9


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cp3_objective_monotone(ham4, seed):
    cp3, _ = cp3_init(cholesky_sf(ham4), rank=6, sweeps=200, seed=seed)
    h = np.array(cp3.objective_history)
    assert np.all(np.diff(h) <= 0)
    assert cp3.residual == pytest.approx(np.sqrt(h[-1]))


def test_cp3_is_seed_deterministic(ham4):
    sf = cholesky_sf(ham4)
    a, _ = cp3_init(sf, 5, sweeps=50, seed=4)
    b, _ = cp3_init(sf, 5, sweeps=50, seed=4)
    assert np.array_equal(a.beta, b.beta) and a.objective_history == b.objective_history


def test_cp3_rank_must_be_positive(ham4):
    with pytest.raises(FactorizationError):
        cp3_init(cholesky_sf(ham4), 0)


# -- THC ---------------------------------------------------------------------


def test_thc_gradient_matches_central_differences(ham4):
    rng = np.random.default_rng(0)
    leaf = rng.normal(size=(4, 6))
    core = rng.normal(size=(6, 6))
    core = core + core.T
    c = 0.3
    _, gx, gz = thc_loss_and_gradient(ham4.eri, leaf, core, c)
    h = 1e-6
    num_x = np.zeros_like(leaf)
    for idx in np.ndindex(leaf.shape):
        d = np.zeros_like(leaf)
        d[idx] = h
        num_x[idx] = (thc_loss_and_gradient(ham4.eri, leaf + d, core, c)[0]
                      - thc_loss_and_gradient(ham4.eri, leaf - d, core, c)[0]) / (2 * h)
    assert np.linalg.norm(gx - num_x) / np.linalg.norm(num_x) <= 1e-5
    # the core enters symmetrized; differentiate along symmetric directions
    num_z = np.zeros_like(core)
    for i, j in zip(*np.triu_indices(6)):
        d = np.zeros_like(core)
        d[i, j] = d[j, i] = h
        slope = (thc_loss_and_gradient(ham4.eri, leaf, core + d, c)[0]
                 - thc_loss_and_gradient(ham4.eri, leaf, core - d, c)[0]) / (2 * h)
        num_z[i, j] = num_z[j, i] = slope if i == j else slope / 2
    assert np.linalg.norm(gz - num_z) / np.linalg.norm(num_z) <= 1e-5


def test_thc_loss_zero_for_exact_factors():
    sf = planted_cp3(0)
    _, thc = cp3_init(sf, 3, sweeps=3000, seed=1)
    eri = reconstruct_eri(thc)
    loss, gx, gz = thc_loss_and_gradient(eri, thc.leaf, thc.core, 0.0)
    assert loss == pytest.approx(0.0, abs=1e-20)


def test_thc_optimize_never_worse_than_init(ham4):
    _, init = cp3_init(cholesky_sf(ham4), 8, sweeps=100, seed=0)
    out = thc_optimize(ham4, init, max_iter=300)
    c = out.regularizer
    start, _, _ = thc_loss_and_gradient(ham4.eri, init.leaf, init.core, c)
    final, _, _ = thc_loss_and_gradient(ham4.eri, out.leaf, out.core, c)
    assert final <= start
    assert out.loss_history[0] == pytest.approx(start)
    assert min(out.loss_history) == pytest.approx(final)
    assert out.seed == 0


def test_thc_default_regularizer_balances_terms(ham4):
    _, init = cp3_init(cholesky_sf(ham4), 6, sweeps=20, seed=0)
    out = thc_optimize(ham4, init, max_iter=1)
    l2 = float(np.sum((reconstruct_eri(init) - ham4.eri) ** 2))
    assert out.regularizer * np.sum(np.abs(init.core)) == pytest.approx(l2)


def test_thc_core_symmetrized():
    thc = THCFactors(np.ones((2, 2)), np.array([[1.0, 2.0], [0.0, 1.0]]))
    assert np.array_equal(thc.core, thc.core.T)
    assert thc.gamma == 4


def test_suggest_thc_rank():
    assert suggest_thc_rank(58) == 290
    assert suggest_thc_rank(0) == 1


# -- reconstructions ---------------------------------------------------------


def test_all_reconstructions_eight_fold_symmetric(ham4):
    sf = cholesky_sf(ham4, rank=5)
    _, init = cp3_init(sf, 7, sweeps=30, seed=2)
    thc = thc_optimize(ham4, init, max_iter=50)
    for f in (sf, double_factorize(sf, 0.05), thc):
        assert eight_fold_deviation(reconstruct_eri(f)) <= 1e-12


def test_factorization_error_checks_size(ham4):
    with pytest.raises(FactorizationError):
        factorization_error(random_hamiltonian(3), cholesky_sf(ham4))


# -- archives ----------------------------------------------------------------


def test_archives_round_trip(tmp_path, ham4):
    sf = cholesky_sf(ham4, rank=6)
    df = double_factorize(sf, 0.1)
    _, init = cp3_init(sf, 5, sweeps=10, seed=3)
    for f in (sf, df, init):
        back = load_factors(save_factors(f, tmp_path / f.method, extra={"note": "x"}))
        assert type(back) is type(f)
        assert np.array_equal(reconstruct_eri(back), reconstruct_eri(f))
    manifest = json.loads((tmp_path / "df" / "manifest.json").read_text())
    assert manifest["leaf_ranks"] == list(df.leaf_ranks)
    assert isinstance(load_factors(tmp_path / "df"), DFFactors)


# -- rank selection ----------------------------------------------------------


def test_persistence_rule_on_calibration_table():
    # the reported THC rank for the 58-orbital Cpd I space
    rows = calibration_table()["rows"]
    ranks = [r[0] for r in rows]
    errors = [r[2] * 1e-3 for r in rows]
    assert select_rank_from_errors(ranks, errors, 1e-3) == 320


def test_persistence_rule_differs_from_pointwise():
    # 20 passes pointwise but is followed by a failure
    assert select_rank_from_errors([10, 20, 30, 40], [5.0, 0.1, 2.0, 0.5], 1.0) == 40


def test_persistence_rule_errors():
    with pytest.raises(FactorizationError):
        select_rank_from_errors([1, 2], [0.0, 5.0], 1.0)
    with pytest.raises(FactorizationError):
        select_rank_from_errors([2, 1], [0.0, 0.0], 1.0)
    with pytest.raises(FactorizationError):
        select_rank_from_errors([1], [0.0, 0.0], 1.0)


def test_select_rank_with_fci_evaluator(ham4):
    from estimator.oracle import energy_error_evaluator

    sel = select_rank(ham4, "sf", [2, 4, 6, 8, 10], threshold=1e-3)
    assert [r for r, _ in sel.table] == [2, 4, 6, 8, 10]
    sf = cholesky_sf(ham4, rank=sel.rank)
    recheck = energy_error_evaluator(ham4)(ham4.with_eri(reconstruct_eri(sf)))
    assert abs(recheck) <= 1e-3


def test_select_rank_worker_count_does_not_change_result(ham4):
    errs = lambda h: float(np.linalg.norm(h.eri - ham4.eri))  # noqa: E731
    a = select_rank(ham4, "df", [3, 6, 9], energy_evaluator=errs, threshold=1.0)
    b = select_rank(ham4, "df", [3, 6, 9], energy_evaluator=errs, threshold=1.0, workers=3)
    assert a == b


def test_select_rank_unknown_method(ham4):
    with pytest.raises(FactorizationError):
        select_rank(ham4, "xx", [1], energy_evaluator=lambda h: 0.0)
