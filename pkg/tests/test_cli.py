import json

import numpy as np
import pytest

from adaptpw import reference_solve
from adaptpw.cli import (
    ConfigError,
    build_potential,
    ingest_config,
    main,
    uniform_sweep,
    validate_config,
)
from adaptpw.spectral import evaluate_on_grid


def minimal_config(**overrides):
    cfg = {
        "problem": {
            "dim": 1,
            "k0": 0,
            "n_eigs": 1,
            "potential": {"family": "constant", "c": 1.0},
        },
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


# -- ingestion ------------------------------------------------------------------


def test_minimal_config_defaults(tmp_path):
    cfg = ingest_config(write_config(tmp_path, minimal_config()))
    assert cfg.algorithm.theta_tilde == 0.5
    assert cfg.algorithm.zeta == 0.1
    assert cfg.algorithm.tol == 1e-6
    assert cfg.algorithm.M0 == 2
    assert cfg.algorithm.max_iter == 50
    assert cfg.algorithm.max_dof == 20000


def test_zeta_above_theta_rejected(tmp_path):
    raw = minimal_config(algorithm={"theta_tilde": 0.3, "zeta": 0.4})
    with pytest.raises(ConfigError) as err:
        ingest_config(write_config(tmp_path, raw))
    assert "zeta" in str(err.value) and "theta_tilde" in str(err.value)


def test_dim_cap_rejected():
    raw = minimal_config()
    raw["problem"]["dim"] = 4
    with pytest.raises(ConfigError) as err:
        validate_config(raw)
    assert err.value.field == "problem.dim"


def test_random_decay_requires_seed():
    raw = minimal_config()
    raw["problem"]["potential"] = {"family": "random-decay", "p": 2.5, "r_cut": 8}
    with pytest.raises(ConfigError) as err:
        validate_config(raw)
    assert err.value.field == "seed"


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        ingest_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ingest_config(bad)


# -- potential families ----------------------------------------------------------


def test_random_decay_family_properties():
    spec = {"family": "random-decay", "amplitude": 1.0, "p": 2.5, "r_cut": 8}
    pot, meta = build_potential(spec, 1, seed=5)
    pot2, _ = build_potential(spec, 1, seed=5)
    assert np.array_equal(pot.field.coeffs, pot2.field.coeffs)
    pot3, _ = build_potential(spec, 1, seed=6)
    assert not np.array_equal(pot.field.coeffs, pot3.field.coeffs)
    vals = evaluate_on_grid(pot.field, 4 * (8 + 1))  # the family's verification grid
    assert vals.min() >= 0.5 - 1e-9
    assert meta["positivity_shift"] >= 0.0
    assert pot.field.hermitian_defect() == 0.0
    mags = np.abs(pot.field.coeffs)
    law = 1.0 * (1.0 + pot.field.support.norms_sq.astype(float)) ** -1.25
    zero = pot.field.support.index_of((0,))
    keep = np.arange(len(mags)) != zero
    assert np.allclose(mags[keep], law[keep], rtol=1e-12)


def test_explicit_family_requires_hermitian():
    spec = {
        "family": "explicit",
        "coefficients": [{"index": [1], "re": 1.0}],
    }
    with pytest.raises(ConfigError):
        build_potential(spec, 1, seed=None)


# -- runs -------------------------------------------------------------------------


def test_smoke_run_writes_artifacts(tmp_path):
    raw = minimal_config(output={"directory": str(tmp_path / "out")})
    rc = main(["run", str(write_config(tmp_path, raw)), "--quiet"])
    assert rc == 0
    lines = (tmp_path / "out" / "iterations.csv").read_text().splitlines()
    assert len(lines) == 2  # header + single exact iteration
    header = lines[0].split(",")
    row = lines[1].split(",")
    assert row[header.index("eta_tilde")] == "0"
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["termination_reason"] == "tol"
    assert summary["final_eigenvalues"] == [1.0]


def test_trig_run_eta_decreasing(tmp_path):
    raw = {
        "problem": {
            "dim": 1,
            "n_eigs": 1,
            "potential": {"family": "trig", "c": 1.0, "terms": [{"k": [1], "a": 1.0}]},
        },
        "algorithm": {"M0": 1, "tol": 1e-6, "zeta": 0.2},
        "verification": {"M_ref": 32},
        "output": {"directory": str(tmp_path / "out")},
    }
    rc = main(["run", str(write_config(tmp_path, raw)), "--quiet"])
    assert rc == 0
    lines = (tmp_path / "out" / "iterations.csv").read_text().splitlines()
    header = lines[0].split(",")
    etas = [float(l.split(",")[header.index("eta_tilde")]) for l in lines[1:]]
    assert all(b < a for a, b in zip(etas, etas[1:]))
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["termination_reason"] in ("tol", "max_iter", "max_dof", "exact")


def test_compare_mode_outputs(tmp_path):
    raw = {
        "problem": {
            "dim": 1,
            "n_eigs": 1,
            "potential": {"family": "trig", "c": 1.0, "terms": [{"k": [1], "a": 1.0}]},
        },
        "algorithm": {"M0": 1, "tol": 1e-5, "zeta": 0.2},
        "verification": {"M_ref": 32},
        "output": {"directory": str(tmp_path / "out")},
    }
    rc = main(["run", str(write_config(tmp_path, raw)), "--quiet", "--mode", "compare"])
    assert rc == 0
    assert (tmp_path / "out" / "uniform.csv").is_file()
    assert (tmp_path / "out" / "comparison.csv").is_file()
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert "comparison" in summary
    assert summary["comparison"]["dof_ratio"] <= 2.0


def test_source_mode(tmp_path):
    raw = {
        "problem": {
            "dim": 1,
            "n_eigs": 1,
            "potential": {"family": "trig", "c": 1.0, "terms": [{"k": [1], "a": 1.0}]},
            "rhs": [[{"index": [0], "re": 1.0}]],
        },
        "algorithm": {"mode": "source", "theta_tilde": 0.6, "zeta": 0.0, "tol": 1e-8},
        "verification": {"M_ref": 32},
        "output": {"directory": str(tmp_path / "out")},
    }
    rc = main(["run", str(write_config(tmp_path, raw)), "--quiet"])
    assert rc == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["mode"] == "source"
    assert summary["rate_fits"] is None or summary["rate_fits"]["alpha_hat"] < 1.0


def test_exit_code_2_on_bad_config(tmp_path):
    raw = minimal_config()
    raw["problem"]["dim"] = 7
    rc = main(["run", str(write_config(tmp_path, raw)), "--quiet"])
    assert rc == 2


def test_exit_code_3_on_numerical_failure(tmp_path):
    # compare mode needs the reference machinery; disabling it is a runtime
    # failure of the numerical pipeline, not a config-shape error
    raw = minimal_config(
        verification={"enable_subspace_distance": False},
        output={"directory": str(tmp_path / "out")},
    )
    rc = main(["run", str(write_config(tmp_path, raw)), "--quiet", "--mode", "compare"])
    assert rc == 3


def test_uniform_mode(tmp_path):
    raw = minimal_config(
        verification={"M_ref": 12},
        output={"directory": str(tmp_path / "out")},
    )
    rc = main(["run", str(write_config(tmp_path, raw)), "--quiet", "--mode", "uniform"])
    assert rc == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["termination_reason"] in ("tol", "max_iter", "max_dof", "exact")
    assert (tmp_path / "out" / "uniform.csv").is_file()


def test_csv_floats_roundtrip(tmp_path):
    raw = {
        "problem": {
            "dim": 1,
            "n_eigs": 2,
            "potential": {"family": "random-decay", "amplitude": 1.0, "p": 2.5, "r_cut": 8},
        },
        "algorithm": {"M0": 2, "tol": 0.0, "max_iter": 5},
        "verification": {"M_ref": 32},
        "output": {"directory": str(tmp_path / "out")},
        "seed": 3,
    }
    rc = main(["run", str(write_config(tmp_path, raw)), "--quiet"])
    assert rc == 0
    from adaptpw import AdaptiveConfig, run_eigen

    pot, _ = build_potential(raw["problem"]["potential"], 1, seed=3)
    run = run_eigen(
        AdaptiveConfig(dim=1, M0=2, n_eigs=2, tol=0.0, max_iter=5), pot
    )
    lines = (tmp_path / "out" / "iterations.csv").read_text().splitlines()
    header = lines[0].split(",")
    for rec, line in zip(run.records, lines[1:]):
        row = line.split(",")
        assert float(row[header.index("eta_tilde")]) == rec.eta_tilde
        assert float(row[header.index("lambda_1")]) == rec.values[0]


def test_output_dir_override(tmp_path, monkeypatch):
    raw = minimal_config(output={"directory": str(tmp_path / "ignored")})
    cfgp = write_config(tmp_path, raw)
    override = tmp_path / "env_dir"
    monkeypatch.setenv("ADAPTPW_OUT", str(override))
    assert main(["run", str(cfgp), "--quiet"]) == 0
    assert (override / "summary.json").is_file()
    assert not (tmp_path / "ignored").exists()


# -- uniform sweep ----------------------------------------------------------------


def test_uniform_sweep_constant_exact(constant_potential):
    ref = reference_solve(constant_potential, 0, 1, 16)
    rows = uniform_sweep(constant_potential, 0, 1, [1, 2, 3], ref)
    for row in rows:
        assert abs(row.max_eigenvalue_error) <= 1e-13
        assert row.distance <= 1e-10


def test_uniform_sweep_monotone(cosine_potential):
    ref = reference_solve(cosine_potential, 0, 1, 32)
    rows = uniform_sweep(cosine_potential, 0, 1, [1, 2, 3, 4, 5, 6], ref)
    errs = [r.max_eigenvalue_error for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    assert [r.dof for r in rows] == [2 * m + 1 for m in range(1, 7)]


def test_uniform_sweep_requires_ascending(cosine_potential):
    with pytest.raises(ValueError):
        uniform_sweep(cosine_potential, 0, 1, [3, 2])
