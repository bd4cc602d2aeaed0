"""Experiment runner: config ingestion, potential families, outputs.

Config files are plain JSON::

    {
      "problem":      {"dim": 1, "k0": 0, "n_eigs": 2,
                       "potential": {"family": "trig", "c": 1.0,
                                     "terms": [{"k": [1], "a": 1.0}]},
                       "rhs": [[{"index": [0], "re": 1.0}]]},
      "algorithm":    {"mode": "eigen-feasible", "theta_tilde": 0.5,
                       "zeta": 0.1, "tol": 1e-6, "M0": 2,
                       "max_iter": 50, "max_dof": 20000},
      "verification": {"M_ref": 32, "enable_subspace_distance": true},
      "output":       {"directory": "runs/demo", "formats": ["csv", "json"]},
      "seed": 7
    }

Potential families:
  constant      {"family": "constant", "c": 1.0}
  trig          c + sum_k a_k cos(k . x), terms listing integer k and a
  random-decay  seeded coefficients |V_G| = A (1+|G|^2)^(-p/2) for
                |G| <= r_cut with random phases, Hermitian-symmetrized,
                then shifted so min V >= 0.5 on the verification grid
                (the shift is recorded in the summary)
  explicit      raw (index, re, im) coefficient triples

"rhs" (source mode only) lists one coefficient-triple list per
right-hand side.

Outputs: iterations.csv (one row per adaptive iteration; wall time is
reported in summary.json only so reruns are byte-identical),
summary.json, marked_sets.jsonl, and in uniform/compare modes
uniform.csv plus comparison.csv. Exit codes: 0 success, 2 config error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adapt import AdaptiveConfig, AdaptiveRun, run_eigen, run_source
from .estimator import EstimatorError
from .frequency import ball
from .marking import MarkingError
from .operator import Potential, PotentialError, SolverError, verify_potential
from .spectral import SpectralField, evaluate_on_grid
from .verify import (
    CoverageError,
    EnergyMetric,
    RateFit,
    ReferenceSolution,
    eigenvalue_gap_check,
    embed_columns,
    fit_rates,
    group_slices,
    reference_solve,
    run_distances,
    source_errors,
    subspace_distance,
)

ENV_OUTPUT_DIR = "ADAPTPW_OUT"

ALGORITHM_DEFAULTS = {
    "mode": "eigen-feasible",
    "theta_tilde": 0.5,
    "zeta": 0.1,
    "tol": 1e-6,
    "M0": 2,
    "max_iter": 50,
    "max_dof": 20000,
}


class ConfigError(ValueError):
    """Invalid experiment configuration; `field` names the offending entry."""

    def __init__(self, field_path: str, message: str) -> None:
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int
    k0: int
    n_eigs: int
    potential_spec: dict
    rhs_spec: list | None
    algorithm: AdaptiveConfig
    m_ref: int
    enable_subspace_distance: bool
    output_dir: str
    formats: tuple[str, ...]
    seed: int | None
    raw: dict


@dataclass
class RunSummary:
    """Machine-readable run outcome mirrored into summary.json."""

    data: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        _atomic_write(path, json.dumps(self.data, indent=2, sort_keys=True) + "\n")


# -- config ingestion ---------------------------------------------------------


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return mapping[key]


def ingest_config(path: str | Path) -> ExperimentConfig:
    """Load and validate a JSON experiment config, applying defaults."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return validate_config(raw)


def validate_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    problem = _require(raw, "problem", "config")
    dim = int(_require(problem, "dim", "problem"))
    if not 1 <= dim <= 3:
        raise ConfigError("problem.dim", f"must be 1, 2 or 3, got {dim}")
    k0 = int(problem.get("k0", 0))
    if k0 < 0:
        raise ConfigError("problem.k0", f"must be >= 0, got {k0}")
    n_eigs = int(_require(problem, "n_eigs", "problem"))
    if n_eigs < 1:
        raise ConfigError("problem.n_eigs", f"must be >= 1, got {n_eigs}")
    pot = _require(problem, "potential", "problem")
    if not isinstance(pot, dict) or "family" not in pot:
        raise ConfigError("problem.potential", "must be an object with a 'family' key")
    if pot["family"] not in ("constant", "trig", "random-decay", "explicit"):
        raise ConfigError("problem.potential.family", f"unknown family {pot['family']!r}")

    algo = dict(ALGORITHM_DEFAULTS)
    algo.update(raw.get("algorithm", {}))
    mode = algo.pop("mode")
    if mode not in ("eigen-feasible", "eigen-exact", "source"):
        raise ConfigError("algorithm.mode", f"unknown mode {mode!r}")
    if float(algo["zeta"]) >= float(algo["theta_tilde"]):
        raise ConfigError(
            "algorithm.zeta",
            f"must be < algorithm.theta_tilde "
            f"(zeta={algo['zeta']}, theta_tilde={algo['theta_tilde']})",
        )
    try:
        adaptive = AdaptiveConfig(
            dim=dim,
            theta_tilde=float(algo["theta_tilde"]),
            zeta=float(algo["zeta"]),
            tol=float(algo["tol"]),
            M0=int(algo["M0"]),
            k0=k0,
            n_eigs=n_eigs,
            max_iter=int(algo["max_iter"]),
            max_dof=int(algo["max_dof"]),
            mode=mode if mode != "uniform" else "eigen-feasible",
        )
    except ValueError as exc:
        raise ConfigError("algorithm", str(exc)) from exc

    rhs_spec = problem.get("rhs")
    if mode == "source":
        if not rhs_spec:
            raise ConfigError("problem.rhs", "source mode requires right-hand sides")

    verification = raw.get("verification", {})
    m_ref = int(verification.get("M_ref", 32))
    if m_ref < 1:
        raise ConfigError("verification.M_ref", f"must be >= 1, got {m_ref}")
    enable_dist = bool(verification.get("enable_subspace_distance", True))

    output = raw.get("output", {})
    outdir = str(output.get("directory", "out"))
    formats = tuple(output.get("formats", ("csv", "json")))

    seed = raw.get("seed")
    if pot["family"] == "random-decay" and seed is None:
        raise ConfigError("seed", "random-decay potentials require an explicit seed")

    return ExperimentConfig(
        dim=dim,
        k0=k0,
        n_eigs=n_eigs,
        potential_spec=pot,
        rhs_spec=rhs_spec,
        algorithm=adaptive,
        m_ref=m_ref,
        enable_subspace_distance=enable_dist,
        output_dir=outdir,
        formats=formats,
        seed=None if seed is None else int(seed),
        raw=raw,
    )


# -- potential families -------------------------------------------------------


def build_potential(spec: dict, dim: int, seed: int | None = None) -> tuple[Potential, dict]:
    """Construct and verify a potential from a family spec.

    Returns the potential and a metadata dict (seed, positivity shift,
    and the recorded coefficient-tail modeling error for random-decay).
    """
    family = spec["family"]
    norm = (2.0 * math.pi) ** (dim / 2.0)
    meta: dict = {"family": family}
    if family == "constant":
        c = float(spec.get("c", 1.0))
        if c <= 0.0:
            raise ConfigError("problem.potential.c", f"must be > 0, got {c}")
        fld = SpectralField.from_pairs(dim, {(0,) * dim: c * norm}, real_flag=True)
    elif family == "trig":
        c = float(spec.get("c", 0.0))
        coeffs: dict[tuple, complex] = {(0,) * dim: c * norm}
        for i, term in enumerate(spec.get("terms", [])):
            k = tuple(int(x) for x in term["k"])
            if len(k) != dim:
                raise ConfigError(
                    f"problem.potential.terms[{i}].k", f"needs {dim} components"
                )
            a = float(term["a"])
            half = 0.5 * a * norm
            neg = tuple(-x for x in k)
            coeffs[k] = coeffs.get(k, 0.0) + half
            coeffs[neg] = coeffs.get(neg, 0.0) + half
        fld = SpectralField.from_pairs(dim, coeffs, real_flag=True)
    elif family == "random-decay":
        if seed is None:
            raise ConfigError("seed", "random-decay potentials require a seed")
        amplitude = float(spec.get("amplitude", 1.0))
        p = float(_require(spec, "p", "problem.potential"))
        r_cut = int(_require(spec, "r_cut", "problem.potential"))
        fld, shift, tail = _random_decay_field(dim, amplitude, p, r_cut, seed)
        meta.update(
            seed=seed,
            positivity_shift=shift,
            modeling_error_l1=tail,
            amplitude=amplitude,
            p=p,
            r_cut=r_cut,
        )
    elif family == "explicit":
        coeffs = {}
        for i, entry in enumerate(spec.get("coefficients", [])):
            k = tuple(int(x) for x in entry["index"])
            if len(k) != dim:
                raise ConfigError(
                    f"problem.potential.coefficients[{i}].index",
                    f"needs {dim} components",
                )
            coeffs[k] = float(entry.get("re", 0.0)) + 1j * float(entry.get("im", 0.0))
        fld = SpectralField.from_pairs(dim, coeffs)
        if not fld.real_flag:
            raise ConfigError(
                "problem.potential.coefficients",
                "coefficients must be Hermitian-symmetric (real potential)",
            )
    else:  # pragma: no cover - guarded in validate_config
        raise ConfigError("problem.potential.family", f"unknown family {family!r}")
    try:
        potential = verify_potential(fld)
    except PotentialError as exc:
        raise ConfigError("problem.potential", str(exc)) from exc
    meta.update(
        nu_lower=potential.nu_lower, nu_upper=potential.nu_upper, l1_total=potential.l1_total
    )
    return potential, meta


def _random_decay_field(
    dim: int, amplitude: float, p: float, r_cut: int, seed: int
) -> tuple[SpectralField, float, float]:
    """Seeded random potential with algebraic coefficient decay.

    Magnitudes follow A (1+|G|^2)^(-p/2) exactly up to |G| <= r_cut; one
    phase is drawn per +-pair (in canonical support order) and assigned
    conjugately, so Hermitian symmetry holds by construction. The mean is
    then shifted so the sampled minimum is at least 0.5.
    """
    support = ball(r_cut, dim)
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=len(support))
    mags = amplitude * (1.0 + support.norms_sq.astype(np.float64)) ** (-p / 2.0)
    neg = support.negation_permutation()
    sym = np.zeros(len(support), dtype=np.complex128)
    for i in range(len(support)):
        j = int(neg[i])
        if i < j:
            phase = np.exp(1j * phases[i])
            sym[i] = mags[i] * phase
            sym[j] = mags[i] * np.conj(phase)
        elif i == j:
            sym[i] = mags[i]
    fld = SpectralField(support, sym, real_flag=True)
    npts = 4 * (r_cut + 1)
    vmin = float(evaluate_on_grid(fld, npts).min())
    shift = max(0.0, 0.5 - vmin)
    if shift > 0.0:
        zero = support.index_of((0,) * dim)
        shifted = sym.copy()
        shifted[zero] += shift * (2.0 * math.pi) ** (dim / 2.0)
        fld = SpectralField(support, shifted, real_flag=True)
    # modeling error of truncating the infinite family at r_cut: l1 tail of
    # the magnitude law summed over the next shells (window of width 3 r_cut)
    window = ball(4 * r_cut, dim)
    outside = window.norms_sq > r_cut * r_cut
    tail = float(
        np.sum(amplitude * (1.0 + window.norms_sq[outside].astype(np.float64)) ** (-p / 2.0))
    )
    return fld, shift, tail


def build_rhs(rhs_spec: list, dim: int) -> list[SpectralField]:
    fields = []
    for i, triples in enumerate(rhs_spec):
        coeffs = {}
        for entry in triples:
            k = tuple(int(x) for x in entry["index"])
            if len(k) != dim:
                raise ConfigError(f"problem.rhs[{i}]", f"index needs {dim} components")
            coeffs[k] = float(entry.get("re", 0.0)) + 1j * float(entry.get("im", 0.0))
        fields.append(SpectralField.from_pairs(dim, coeffs))
    return fields


# -- uniform sweep ------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    m: int
    dof: int
    eigenvalues: tuple[float, ...]
    max_eigenvalue_error: float
    distance: float


def uniform_sweep(
    potential: Potential,
    k0: int,
    n_eigs: int,
    m_list: list[int],
    ref: ReferenceSolution | None = None,
) -> list[SweepRow]:
    """Dense solves on balls of increasing radius, with errors vs reference."""
    if list(m_list) != sorted(m_list):
        raise ValueError("m_list must be ascending")
    from .operator import assemble, solve_eigen  # local import keeps module load light

    metric = None
    groups = None
    if ref is not None:
        metric = EnergyMetric(ref.basis, potential)
        groups = group_slices(ref.cluster.eigenvalues)
    rows = []
    for m in m_list:
        basis = ball(m, potential.dim)
        cluster = solve_eigen(assemble(basis, potential), k0, n_eigs)
        lam = tuple(float(x) for x in cluster.eigenvalues)
        err = math.nan
        dist = math.nan
        if ref is not None:
            err = float(
                np.max(np.array(lam) - ref.cluster.eigenvalues.astype(np.float64))
            )
            emb = embed_columns(cluster.vectors, basis, ref.basis)
            ds = [
                subspace_distance(ref.cluster.vectors[:, sl], emb[:, sl], metric)
                for sl in groups
            ]
            dist = math.sqrt(sum(d * d for d in ds))
        rows.append(
            SweepRow(
                m=m,
                dof=len(basis),
                eigenvalues=lam,
                max_eigenvalue_error=err,
                distance=dist,
            )
        )
    return rows


# -- output files -------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_iterations_csv(
    path: Path, run: AdaptiveRun, distances: list[float] | None
) -> None:
    """One row per iteration; floats carry 17 significant digits.

    Wall-clock time is deliberately omitted (it lives in summary.json) so
    identical configs produce byte-identical files.
    """
    n_values = len(run.records[0].values) if run.records else 0
    value_name = "lambda" if run.clusters else "norm"
    header = (
        ["n", "index_set_size", "dof_delta", "eta_tilde", "eta_exact", "zeta_actual",
         "truncation_M", "marked_pairs", "residual_onset_max", "residual_max",
         "ref_distance"]
        + [f"{value_name}_{i + 1}" for i in range(n_values)]
    )
    lines = [",".join(header)]
    for i, rec in enumerate(run.records):
        dist = distances[i] if distances is not None else math.nan
        row = [
            str(rec.n),
            str(rec.index_set_size),
            str(rec.dof_delta),
            _fmt(rec.eta_tilde),
            _fmt(rec.eta_exact),
            _fmt(rec.zeta_actual),
            str(rec.truncation_M),
            str(rec.marked_pairs),
            _fmt(rec.residual_onset_max),
            _fmt(rec.residual_max),
            _fmt(dist),
        ] + [_fmt(v) for v in rec.values]
        lines.append(",".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_marked_sets(path: Path, run: AdaptiveRun) -> None:
    lines = []
    for n, mark in enumerate(run.marks):
        entry = {
            "n": n,
            "achieved_fraction": mark.achieved_fraction,
            "pairs_considered": mark.pairs_considered,
            "marked": [list(g) for g in mark.marked.to_list()],
            "per_pair": {
                ",".join(str(x) for x in rep): val
                for rep, val in sorted(run.estimates[n].per_pair.items())
            },
        }
        lines.append(json.dumps(entry, sort_keys=True))
    _atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


def write_uniform_csv(path: Path, rows: list[SweepRow]) -> None:
    n_values = len(rows[0].eigenvalues) if rows else 0
    header = ["M", "dof", "max_eigenvalue_error", "distance"] + [
        f"lambda_{i + 1}" for i in range(n_values)
    ]
    lines = [",".join(header)]
    for r in rows:
        lines.append(
            ",".join(
                [str(r.m), str(r.dof), _fmt(r.max_eigenvalue_error), _fmt(r.distance)]
                + [_fmt(v) for v in r.eigenvalues]
            )
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def write_comparison_csv(path: Path, comparison: dict) -> None:
    header = [
        "adaptive_error", "adaptive_dof", "matched_uniform_M", "uniform_dof",
        "dof_ratio",
    ]
    row = [
        _fmt(comparison["adaptive_error"]),
        str(comparison["adaptive_dof"]),
        str(comparison["matched_uniform_M"]),
        str(comparison["uniform_dof"]),
        _fmt(comparison["dof_ratio"]),
    ]
    _atomic_write(path, ",".join(header) + "\n" + ",".join(row) + "\n")


def _write_gnuplot_script(path: Path, mode: str) -> None:
    text = (
        "set logscale y\n"
        "set xlabel 'iteration'\n"
        "set ylabel 'estimator'\n"
        "set datafile separator ','\n"
        f"plot 'iterations.csv' using 1:4 with linespoints title 'eta ({mode})'\n"
    )
    _atomic_write(path, text)


# -- experiment orchestration -------------------------------------------------


def _rate_fit_dict(fit: RateFit | None) -> dict | None:
    if fit is None:
        return None
    return {
        "alpha_hat": fit.alpha_hat,
        "alpha_r2": fit.alpha_r2,
        "s_hat": fit.s_hat,
        "s_r2": fit.s_r2,
        "status": fit.status,
    }


def run_experiment(config: ExperimentConfig, mode: str | None = None, quiet: bool = False) -> RunSummary:
    """Execute the configured experiment and write artifacts to disk."""
    t_start = time.perf_counter()
    mode = mode or config.algorithm.mode
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    potential, pot_meta = build_potential(config.potential_spec, config.dim, config.seed)

    summary = RunSummary()
    summary.data["config"] = config.raw
    summary.data["mode"] = mode
    summary.data["seed"] = config.seed
    summary.data["potential"] = pot_meta
    summary.data["files"] = {}

    def say(msg: str) -> None:
        if not quiet:
            print(msg)

    if mode in ("eigen-feasible", "eigen-exact"):
        algo = AdaptiveConfig(
            **{**config.algorithm.__dict__, "mode": mode}  # type: ignore[arg-type]
        )
        run = run_eigen(algo, potential)
        distances, fit, ref = _verify_eigen_run(config, potential, run, summary)
        write_iterations_csv(outdir / "iterations.csv", run, distances)
        write_marked_sets(outdir / "marked_sets.jsonl", run)
        summary.data["files"]["iterations"] = "iterations.csv"
        summary.data["files"]["marked_sets"] = "marked_sets.jsonl"
        summary.data["termination_reason"] = run.termination_reason
        summary.data["iterations"] = len(run.records)
        summary.data["final_dof"] = len(run.final_index_set)
        summary.data["final_eigenvalues"] = [float(x) for x in run.final_cluster.eigenvalues]
        summary.data["admissible_parameters"] = run.admissible
        summary.data["rate_fits"] = _rate_fit_dict(fit)
        say(
            f"{mode}: {run.termination_reason} after {len(run.records)} iterations, "
            f"dof {len(run.final_index_set)}"
        )
    elif mode == "source":
        algo = AdaptiveConfig(**{**config.algorithm.__dict__, "mode": "source"})
        rhs = build_rhs(config.rhs_spec or [], config.dim)
        run = run_source(algo, potential, rhs)
        errors = None
        fit = None
        if config.enable_subspace_distance:
            from .operator import solve_source

            ref_sols = solve_source(ball(config.m_ref, config.dim), potential, rhs)
            errors = source_errors(run, ref_sols, potential)
            positive = [e for e in errors if e > 0.0]
            if len(positive) == len(errors) and len(errors) >= 4:
                fit = fit_rates(run.records, errors)
        write_iterations_csv(outdir / "iterations.csv", run, errors)
        write_marked_sets(outdir / "marked_sets.jsonl", run)
        summary.data["files"]["iterations"] = "iterations.csv"
        summary.data["files"]["marked_sets"] = "marked_sets.jsonl"
        summary.data["termination_reason"] = run.termination_reason
        summary.data["iterations"] = len(run.records)
        summary.data["final_dof"] = len(run.final_index_set)
        summary.data["final_solution_norms"] = list(run.records[-1].values)
        summary.data["rate_fits"] = _rate_fit_dict(fit)
        say(
            f"source: {run.termination_reason} after {len(run.records)} iterations, "
            f"dof {len(run.final_index_set)}"
        )
    elif mode == "uniform":
        ref = reference_solve(potential, config.k0, config.n_eigs, config.m_ref)
        m_max = max(config.algorithm.M0 + 1, config.m_ref // 2)
        rows = uniform_sweep(
            potential, config.k0, config.n_eigs,
            list(range(config.algorithm.M0, m_max + 1)), ref,
        )
        write_uniform_csv(outdir / "uniform.csv", rows)
        summary.data["files"]["uniform"] = "uniform.csv"
        summary.data["termination_reason"] = "max_dof"  # sweep budget exhausted
        summary.data["reference_eigenvalues"] = [float(x) for x in ref.cluster.eigenvalues]
        say(f"uniform sweep: {len(rows)} radii")
    elif mode == "compare":
        algo = AdaptiveConfig(**{**config.algorithm.__dict__, "mode": "eigen-feasible"})
        run = run_eigen(algo, potential)
        distances, fit, ref = _verify_eigen_run(config, potential, run, summary)
        write_iterations_csv(outdir / "iterations.csv", run, distances)
        write_marked_sets(outdir / "marked_sets.jsonl", run)
        summary.data["files"]["iterations"] = "iterations.csv"
        summary.data["files"]["marked_sets"] = "marked_sets.jsonl"
        summary.data["termination_reason"] = run.termination_reason
        summary.data["iterations"] = len(run.records)
        summary.data["final_dof"] = len(run.final_index_set)
        summary.data["final_eigenvalues"] = [float(x) for x in run.final_cluster.eigenvalues]
        summary.data["rate_fits"] = _rate_fit_dict(fit)
        if ref is None or distances is None:
            raise SolverError("compare mode requires verification to be enabled")
        m_hi = int(math.ceil(run.final_index_set.max_radius())) + 1
        m_hi = min(m_hi, config.m_ref)
        rows = uniform_sweep(
            potential, config.k0, config.n_eigs,
            list(range(config.algorithm.M0, m_hi + 1)), ref,
        )
        write_uniform_csv(outdir / "uniform.csv", rows)
        summary.data["files"]["uniform"] = "uniform.csv"
        comparison = matched_error_comparison(run, distances, rows)
        write_comparison_csv(outdir / "comparison.csv", comparison)
        summary.data["files"]["comparison"] = "comparison.csv"
        summary.data["comparison"] = comparison
        say(
            f"compare: adaptive dof {comparison['adaptive_dof']} vs uniform "
            f"{comparison['uniform_dof']} at matched error"
        )
    else:
        raise ConfigError("mode", f"unknown mode {mode!r}")

    if "gnuplot" in config.formats:
        _write_gnuplot_script(outdir / "plots.gp", mode)
        summary.data["files"]["gnuplot"] = "plots.gp"
    summary.data["wall_time_s"] = time.perf_counter() - t_start
    summary.write(outdir / "summary.json")
    say(f"wrote {outdir / 'summary.json'}")
    return summary


def _verify_eigen_run(
    config: ExperimentConfig,
    potential: Potential,
    run: AdaptiveRun,
    summary: RunSummary,
):
    """Reference solve + per-iteration distances + rate fits for eigen runs."""
    distances = None
    fit = None
    ref = None
    if config.enable_subspace_distance:
        try:
            ref = reference_solve(potential, config.k0, config.n_eigs, config.m_ref)
        except ValueError as exc:
            raise SolverError(str(exc)) from exc
        gap_ok, gap_below, gap_above = eigenvalue_gap_check(ref)
        summary.data["reference_eigenvalues"] = [float(x) for x in ref.cluster.eigenvalues]
        summary.data["cluster_gaps"] = {
            "ok": gap_ok, "below": gap_below, "above": gap_above,
        }
        try:
            report = run_distances(run, ref, potential)
            distances = report.totals
            summary.data["per_group_distances"] = report.per_group
        except CoverageError as exc:
            summary.data["verification_skipped"] = str(exc)
    errors = distances
    if errors is None:
        errors = [rec.eta_exact for rec in run.records]
    positive = [e for e in errors if e > 0.0]
    if len(positive) == len(errors) and len(errors) >= 4:
        fit = fit_rates(run.records, errors)
    return distances, fit, ref


def matched_error_comparison(
    run: AdaptiveRun, distances: list[float], rows: list[SweepRow]
) -> dict:
    """Smallest uniform ball matching the adaptive run's final error."""
    target = distances[-1]
    adaptive_dof = len(run.final_index_set)
    matched = None
    for row in rows:
        if not math.isnan(row.distance) and row.distance <= target:
            matched = row
            break
    if matched is None:
        return {
            "adaptive_error": target,
            "adaptive_dof": adaptive_dof,
            "matched_uniform_M": -1,
            "uniform_dof": -1,
            "dof_ratio": math.inf,
        }
    return {
        "adaptive_error": target,
        "adaptive_dof": adaptive_dof,
        "matched_uniform_M": matched.m,
        "uniform_dof": matched.dof,
        "dof_ratio": adaptive_dof / matched.dof,
    }


# -- entry point --------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="adaptpw", description="Adaptive planewave experiment runner"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="execute an experiment config")
    runp.add_argument("config", help="path to a JSON experiment config")
    runp.add_argument("--out", help="output directory (overrides config)")
    runp.add_argument("--seed", type=int, help="seed override for random potentials")
    runp.add_argument(
        "--mode",
        choices=["eigen-feasible", "eigen-exact", "source", "uniform", "compare"],
        help="run mode override",
    )
    runp.add_argument("--quiet", action="store_true", help="suppress progress output")
    args = parser.parse_args(argv)

    try:
        config = ingest_config(args.config)
        outdir = args.out or os.environ.get(ENV_OUTPUT_DIR) or config.output_dir
        seed = args.seed if args.seed is not None else config.seed
        if seed != config.seed or outdir != config.output_dir:
            config = ExperimentConfig(
                **{**config.__dict__, "seed": seed, "output_dir": outdir}
            )
        if (
            config.potential_spec.get("family") == "random-decay"
            and config.seed is None
        ):
            raise ConfigError("seed", "random-decay potentials require a seed")
        run_experiment(config, mode=args.mode, quiet=args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, MarkingError, EstimatorError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


def console_entry() -> None:  # pragma: no cover - thin wrapper
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
