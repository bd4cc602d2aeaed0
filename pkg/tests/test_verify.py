import math

import numpy as np
import pytest

from adaptpw import (
    AdaptiveConfig,
    EnergyMetric,
    ball,
    eigenvalue_gap_check,
    fit_rates,
    reference_solve,
    run_distances,
    run_eigen,
    subspace_distance,
)
from adaptpw.adapt import IterationRecord
from adaptpw.verify import RankDeficiencyError, group_slices
from conftest import trig_potential


def fake_records(n, dofs):
    return [
        IterationRecord(
            n=i, index_set_size=dofs[i] + 5, dof_delta=dofs[i], values=(1.0,),
            eta_tilde=1.0, eta_exact=1.0, zeta_actual=0.0, truncation_M=1,
            marked_pairs=1, residual_onset_max=0.0, residual_max=1.0, wall_time=0.0,
        )
        for i in range(n)
    ]


# -- reference solve --------------------------------------------------------


def test_reference_constant(constant_potential):
    ref = reference_solve(constant_potential, 0, 3, 10)
    assert np.allclose(ref.cluster.eigenvalues, [1.0, 2.0, 2.0], atol=1e-12)
    ok, below, above = eigenvalue_gap_check(ref)
    assert ok
    assert ref.eigenvalue_tail_gap == pytest.approx(3.0, abs=1e-12)


def test_reference_interior_cluster(constant_potential):
    ref = reference_solve(constant_potential, 1, 2, 10)
    assert np.allclose(ref.cluster.eigenvalues, [2.0, 2.0], atol=1e-12)


def test_reference_self_consistency(cosine_potential):
    r32 = reference_solve(cosine_potential, 0, 2, 32)
    r64 = reference_solve(cosine_potential, 0, 2, 64)
    assert np.allclose(r32.cluster.eigenvalues, r64.cluster.eigenvalues, atol=1e-10)


def test_gap_check_detects_cut_multiplet(constant_potential):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ref = reference_solve(constant_potential, 0, 2, 10)
    ok, below, above = eigenvalue_gap_check(ref)
    assert not ok
    ref_trig = reference_solve(trig_potential(1, 1.0, {(1,): 1.0}), 0, 2, 32)
    assert eigenvalue_gap_check(ref_trig)[0]


# -- subspace distance --------------------------------------------------------


def test_distance_identical_subspaces(constant_potential):
    basis = ball(2, 1)
    metric = EnergyMetric(basis, constant_potential)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(len(basis), 2))
    assert subspace_distance(x, x.copy(), metric) <= 1e-13


def test_distance_orthogonal_subspaces(constant_potential):
    basis = ball(1, 1)
    metric = EnergyMetric(basis, constant_potential)
    x = np.zeros((3, 1)); x[0, 0] = 1.0  # e_0
    y = np.zeros((3, 1)); y[2, 0] = 1.0  # e_1 (a-orthogonal for constant V)
    assert subspace_distance(x, y, metric) == pytest.approx(1.0, abs=1e-12)


def test_distance_matches_sampling_oracle():
    v = trig_potential(1, 1.0, {(1,): 0.6})
    basis = ball(3, 1)  # 7-dim space
    metric = EnergyMetric(basis, v)
    rng = np.random.default_rng(23)
    x = rng.normal(size=(7, 2))
    y = rng.normal(size=(7, 2))
    d = subspace_distance(x, y, metric)

    # oracle: scan the a-unit circle of span(x), project each sample onto
    # span(y); coarse scan plus one local refinement reaches ~1e-8
    zx = metric.to_frame(x).real
    zy = metric.to_frame(y).real
    qx, _ = np.linalg.qr(zx)
    qy, _ = np.linalg.qr(zy)

    def scan(lo, hi, n):
        phi = np.linspace(lo, hi, n)
        u = np.outer(qx[:, 0], np.cos(phi)) + np.outer(qx[:, 1], np.sin(phi))
        resid = u - qy @ (qy.T @ u)
        norms = np.linalg.norm(resid, axis=0)
        k = int(np.argmax(norms))
        return phi[k], float(norms[k])

    phi0, _ = scan(0.0, math.pi, 4000)
    h = math.pi / 4000
    _, worst = scan(phi0 - h, phi0 + h, 4000)
    assert d == pytest.approx(worst, abs=1e-6)


def test_distance_basis_change_invariance(cosine_potential):
    basis = ball(4, 1)
    metric = EnergyMetric(basis, cosine_potential)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(len(basis), 3))
    y = rng.normal(size=(len(basis), 3))
    d0 = subspace_distance(x, y, metric)
    for _ in range(5):
        ax = rng.normal(size=(3, 3))
        ay = rng.normal(size=(3, 3))
        d = subspace_distance(x @ ax, y @ ay, metric)
        assert d == pytest.approx(d0, abs=1e-10)
    assert 0.0 <= d0 <= 1.0
    assert subspace_distance(y, x, metric) == pytest.approx(d0, abs=1e-10)


def test_distance_rank_deficiency(constant_potential):
    basis = ball(2, 1)
    metric = EnergyMetric(basis, constant_potential)
    x = np.zeros((5, 2))
    x[0, 0] = 1.0
    x[0, 1] = 1.0 + 1e-14  # numerically dependent columns
    y = np.eye(5)[:, :2]
    with pytest.raises(RankDeficiencyError):
        subspace_distance(x, y, metric)


def test_group_slices():
    lam = np.array([1.0, 2.0, 2.0, 2.0000001, 3.0])
    slices = group_slices(lam, rtol=1e-6)
    assert slices == [slice(0, 1), slice(1, 4), slice(4, 5)]
    slices_fine = group_slices(lam, rtol=1e-9)
    assert slices_fine == [slice(0, 1), slice(1, 3), slice(3, 4), slice(4, 5)]


# -- rate fits -----------------------------------------------------------------


def test_fit_exact_geometric():
    errors = [1.0, 0.5, 0.25, 0.125]
    fit = fit_rates(fake_records(4, [0, 2, 4, 6]), errors, skip_first=0)
    assert fit.alpha_hat == pytest.approx(0.5, rel=1e-12)
    assert fit.alpha_r2 == pytest.approx(1.0, abs=1e-12)
    fit_skip = fit_rates(fake_records(4, [0, 2, 4, 6]), errors)
    assert fit_skip.alpha_hat == pytest.approx(0.5, rel=1e-12)


def test_fit_flat_flagged():
    fit = fit_rates(fake_records(4, [0, 2, 4, 6]), [1.0, 1.0, 1.0, 1.0])
    assert fit.alpha_hat == pytest.approx(1.0, rel=1e-12)
    assert fit.status == "non-contracting"


def test_fit_power_law():
    dofs = [0, 4, 8, 16, 32, 64]
    errors = [1.0] + [3.0 * d**-2.0 for d in dofs[1:]]
    fit = fit_rates(fake_records(6, dofs), errors)
    assert fit.s_hat == pytest.approx(2.0, abs=1e-10)
    assert fit.s_r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_zero_errors_sentinel():
    fit = fit_rates(fake_records(4, [0, 2, 4, 6]), [1.0, 0.5, 0.0, 0.0])
    assert fit.status == "exact"
    assert math.isnan(fit.alpha_hat)


def test_fit_too_few_points():
    with pytest.raises(ValueError):
        fit_rates(fake_records(3, [0, 2, 4]), [1.0, 0.5, 0.25])


# -- run distances -------------------------------------------------------------


def test_run_distances_decrease(cosine_potential):
    cfg = AdaptiveConfig(dim=1, M0=1, k0=0, n_eigs=1, tol=0.0, max_iter=5, zeta=0.2)
    run = run_eigen(cfg, cosine_potential)
    ref = reference_solve(cosine_potential, 0, 1, 32)
    rep = run_distances(run, ref, cosine_potential)
    assert len(rep.totals) == len(run.records)
    assert all(b < a for a, b in zip(rep.totals, rep.totals[1:]))
    # eigenvalue error is quadratic in the subspace distance in the clean regime
    lam_err = [r.values[0] - float(ref.cluster.eigenvalues[0]) for r in run.records]
    ratios = [e / d**2 for e, d in zip(lam_err[:4], rep.totals[:4])]
    assert max(ratios) / min(ratios) < 2.0


def test_error_estimator_ratio_window():
    """Two-sided equivalence of error and estimator for a coercive potential."""
    from adaptpw.cli import build_potential

    pot, _ = build_potential(
        {"family": "random-decay", "amplitude": 1.0, "p": 2.5, "r_cut": 16}, 1, seed=3
    )
    cfg = AdaptiveConfig(dim=1, M0=2, k0=0, n_eigs=1, tol=0.0, max_iter=8, zeta=0.2)
    run = run_eigen(cfg, pot)
    ref = reference_solve(pot, 0, 1, 64)
    rep = run_distances(run, ref, pot)
    lo = 1.0 / (2.0 * math.sqrt(pot.alpha_upper))
    hi = 2.0 / math.sqrt(pot.alpha_lower)
    for rec, dist in list(zip(run.records, rep.totals))[1:]:
        ratio = dist / rec.eta_exact
        assert lo <= ratio <= hi


def test_run_distances_coverage_error(cosine_potential):
    from adaptpw.verify import CoverageError

    cfg = AdaptiveConfig(dim=1, M0=1, k0=0, n_eigs=1, tol=0.0, max_iter=6, zeta=0.2)
    run = run_eigen(cfg, cosine_potential)
    small_ref = reference_solve(cosine_potential, 0, 1, 4)
    with pytest.raises(CoverageError):
        run_distances(run, small_ref, cosine_potential)
