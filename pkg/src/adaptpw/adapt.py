"""Adaptive refinement loops for the eigenvalue and source problems.

One loop covers both the exact-estimator and the feasible (truncated)
eigenvalue algorithms: with finite-support potentials the exact residual
is itself finite, so the exact algorithm is just the feasible one with
the truncation policy pinned to "use everything". The source-problem
loop differs in two inherited ways: it starts from the empty index set
(the first marking selects from the support of the data) and its
stopping test compares the plain estimator against tol, without the
1/(1+zeta) safety factor used by the feasible eigenvalue loop.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

from .estimator import (
    EstimatorValue,
    choose_truncation,
    cluster_estimate,
    eta_cluster,
    onset_offset_maxima,
    residual,
    source_residual,
)
from .frequency import IndexSet, ball, union
from .marking import MarkResult, dorfler_mark
from .operator import EigenCluster, Potential, assemble, solve_eigen, solve_source
from .spectral import SpectralField, a_norm

MODES = ("eigen-feasible", "eigen-exact", "source")
TERMINATION_REASONS = ("tol", "max_iter", "max_dof", "exact")


class AdmissibilityWarning(UserWarning):
    """Marking parameters lie outside the range backed by complexity theory."""


@dataclass(frozen=True)
class AdaptiveConfig:
    """Parameters of one adaptive run.

    theta_tilde is the bulk-marking fraction, zeta the certified
    truncation slack of the feasible estimator (ignored in mode
    "eigen-exact"), M0 the initial ball radius of the eigenvalue loop,
    and (k0, n_eigs) the eigenvalue cluster window. max_iter bounds the
    number of refinement steps and max_dof the index-set size, so tol=0
    experiment runs still terminate.
    """

    dim: int
    theta_tilde: float = 0.5
    zeta: float = 0.1
    tol: float = 1e-6
    M0: int = 2
    k0: int = 0
    n_eigs: int = 1
    max_iter: int = 50
    max_dof: int = 20000
    mode: str = "eigen-feasible"

    def __post_init__(self):
        if not 1 <= self.dim <= 3:
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not 0.0 < self.theta_tilde < 1.0:
            raise ValueError(f"theta_tilde must be in (0, 1), got {self.theta_tilde}")
        if not 0.0 <= self.zeta < self.theta_tilde:
            raise ValueError(
                f"zeta must be in [0, theta_tilde), got zeta={self.zeta}, "
                f"theta_tilde={self.theta_tilde}"
            )
        if self.tol < 0.0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")
        if self.M0 < 1:
            raise ValueError(f"M0 must be >= 1, got {self.M0}")
        if self.k0 < 0:
            raise ValueError(f"k0 must be >= 0, got {self.k0}")
        if self.n_eigs < 1:
            raise ValueError(f"n_eigs must be >= 1, got {self.n_eigs}")
        if self.max_iter < 0:
            raise ValueError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.max_dof < 1:
            raise ValueError(f"max_dof must be >= 1, got {self.max_dof}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class IterationRecord:
    """Per-iteration audit snapshot of an adaptive run.

    For eigenvalue runs `values` holds the cluster eigenvalues; for
    source runs it holds the energy norms of the discrete solutions.
    residual_onset_max / residual_max are the largest exact-residual
    coefficient magnitudes on and off the current index set; their ratio
    certifies Galerkin orthogonality while residuals are above the
    eigensolver's backward-error floor.
    """

    n: int
    index_set_size: int
    dof_delta: int
    values: tuple[float, ...]
    eta_tilde: float
    eta_exact: float
    zeta_actual: float
    truncation_M: int
    marked_pairs: int
    residual_onset_max: float
    residual_max: float
    wall_time: float


@dataclass
class AdaptiveRun:
    """Full history of an adaptive run (immutable-value entries)."""

    config: AdaptiveConfig
    records: list[IterationRecord] = field(default_factory=list)
    index_sets: list[IndexSet] = field(default_factory=list)
    clusters: list[EigenCluster] = field(default_factory=list)
    solutions: list[list[SpectralField]] = field(default_factory=list)
    marks: list[MarkResult] = field(default_factory=list)
    estimates: list[EstimatorValue] = field(default_factory=list)
    termination_reason: str = ""
    admissible: bool = False

    @property
    def final_cluster(self) -> EigenCluster:
        return self.clusters[-1]

    @property
    def final_solutions(self) -> list[SpectralField]:
        return self.solutions[-1]

    @property
    def final_index_set(self) -> IndexSet:
        return self.index_sets[-1]


def admissible_parameters(config: AdaptiveConfig, potential: Potential) -> bool:
    """Whether (theta_tilde, zeta) lie in the quasi-optimality range.

    The sufficient range is theta_tilde < sqrt(alpha_* / (3 alpha^*)) with
    zeta below (bound - theta_tilde) / (1 + bound). Violations get a
    warning but runs proceed: the range is sufficient, not necessary.
    """
    if potential.alpha_lower <= 0.0:
        return False
    bound = math.sqrt(potential.alpha_lower / (3.0 * potential.alpha_upper))
    if config.theta_tilde >= bound:
        return False
    if config.mode == "eigen-feasible" and config.zeta >= (bound - config.theta_tilde) / (
        1.0 + bound
    ):
        return False
    return True


def _check_admissibility(config: AdaptiveConfig, potential: Potential) -> bool:
    ok = admissible_parameters(config, potential)
    if not ok:
        warnings.warn(
            f"marking parameters theta_tilde={config.theta_tilde}, zeta={config.zeta} "
            "are outside the range that guarantees quasi-optimal complexity; "
            "proceeding anyway",
            AdmissibilityWarning,
            stacklevel=3,
        )
    return ok


def run_eigen(config: AdaptiveConfig, potential: Potential) -> AdaptiveRun:
    """Adaptive eigenvalue loop (feasible or exact estimator policy).

    Per iteration: dense solve on the current set, residual/truncation
    policy, estimator, record, stopping tests (tol, exact, budgets),
    bulk marking over off-set pairs, union refinement. Stopping by tol
    uses eta_tilde < tol/(1+zeta) so the exact estimator is certified
    below tol on exit.
    """
    if config.mode not in ("eigen-feasible", "eigen-exact"):
        raise ValueError(f"run_eigen requires an eigen mode, got {config.mode!r}")
    if config.dim != potential.dim:
        raise ValueError("config/potential dimension mismatch")
    run = AdaptiveRun(config=config)
    run.admissible = _check_admissibility(config, potential)

    current = ball(config.M0, config.dim)
    if config.k0 + config.n_eigs > len(current):
        raise ValueError(
            f"initial ball of radius {config.M0} has {len(current)} frequencies, "
            f"too few for k0={config.k0}, n_eigs={config.n_eigs}"
        )
    zeta = config.zeta if config.mode == "eigen-feasible" else 0.0
    dof0 = len(current)
    n = 0
    while True:
        t0 = time.perf_counter()
        cluster = solve_eigen(assemble(current, potential), config.k0, config.n_eigs)
        fields = cluster.fields()
        lambdas = [float(x) for x in cluster.eigenvalues]

        rs_exact = [residual(u, lam, potential) for u, lam in zip(fields, lambdas)]
        if config.mode == "eigen-exact":
            trunc_m, rs = potential.support_radius(), rs_exact
        else:
            trunc_m, rs = choose_truncation(fields, lambdas, potential, zeta)
        estimate = cluster_estimate(rs, current)
        eta_tilde = estimate.total
        eta_exact = eta_cluster(rs_exact)
        onset_max, overall_max = onset_offset_maxima(rs_exact, current)

        stop_reason = None
        if eta_tilde < config.tol / (1.0 + zeta):
            stop_reason = "tol"
        elif estimate.off_set_sq == 0.0:
            stop_reason = "exact"  # no markable mass left
        elif n >= config.max_iter:
            stop_reason = "max_iter"
        elif len(current) >= config.max_dof:
            stop_reason = "max_dof"

        mark = None
        if stop_reason is None:
            mark = dorfler_mark(
                estimate.per_pair, config.theta_tilde, estimate.off_set_sq, config.dim
            )
            run.marks.append(mark)

        run.records.append(
            IterationRecord(
                n=n,
                index_set_size=len(current),
                dof_delta=len(current) - dof0,
                values=tuple(lambdas),
                eta_tilde=eta_tilde,
                eta_exact=eta_exact,
                zeta_actual=estimate.zeta_actual,
                truncation_M=trunc_m,
                marked_pairs=mark.pairs_marked if mark is not None else 0,
                residual_onset_max=onset_max,
                residual_max=overall_max,
                wall_time=time.perf_counter() - t0,
            )
        )
        run.index_sets.append(current)
        run.clusters.append(cluster)
        run.estimates.append(estimate)

        if stop_reason is not None:
            run.termination_reason = stop_reason
            return run
        current = union(current, mark.marked)
        n += 1


def run_source(
    config: AdaptiveConfig, potential: Potential, rhs: list[SpectralField]
) -> AdaptiveRun:
    """Adaptive source-problem loop.

    Starts from the empty index set with the residual initialized to the
    data itself; estimate / mark / refine / solve per iteration. The
    estimator is exact (finite supports), so the recorded eta_tilde and
    eta_exact coincide.
    """
    if config.mode != "source":
        raise ValueError(f"run_source requires mode 'source', got {config.mode!r}")
    if config.dim != potential.dim:
        raise ValueError("config/potential dimension mismatch")
    if not rhs:
        raise ValueError("source run needs at least one right-hand side")
    run = AdaptiveRun(config=config)
    run.admissible = _check_admissibility(config, potential)

    current = IndexSet(config.dim)
    solutions = [SpectralField.zero(config.dim) for _ in rhs]
    full_radius = potential.support_radius()
    n = 0
    while True:
        t0 = time.perf_counter()
        rs = [source_residual(w, f, potential) for w, f in zip(solutions, rhs)]
        estimate = cluster_estimate(rs, current)
        eta_bar = estimate.total
        onset_max, overall_max = onset_offset_maxima(rs, current)

        stop_reason = None
        if eta_bar < config.tol:
            stop_reason = "tol"
        elif estimate.off_set_sq == 0.0:
            stop_reason = "exact"  # no markable mass left
        elif n >= config.max_iter:
            stop_reason = "max_iter"
        elif len(current) >= config.max_dof:
            stop_reason = "max_dof"

        mark = None
        if stop_reason is None:
            mark = dorfler_mark(
                estimate.per_pair, config.theta_tilde, estimate.off_set_sq, config.dim
            )
            run.marks.append(mark)

        run.records.append(
            IterationRecord(
                n=n,
                index_set_size=len(current),
                dof_delta=len(current),
                values=tuple(a_norm(w, potential) for w in solutions),
                eta_tilde=eta_bar,
                eta_exact=eta_bar,
                zeta_actual=0.0,
                truncation_M=full_radius,
                marked_pairs=mark.pairs_marked if mark is not None else 0,
                residual_onset_max=onset_max,
                residual_max=overall_max,
                wall_time=time.perf_counter() - t0,
            )
        )
        run.index_sets.append(current)
        run.solutions.append(solutions)
        run.estimates.append(estimate)

        if stop_reason is not None:
            run.termination_reason = stop_reason
            return run
        current = union(current, mark.marked)
        solutions = solve_source(current, potential, rhs)
        n += 1
