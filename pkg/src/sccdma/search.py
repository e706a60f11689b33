"""Seeded search over small-world coupling ensembles.

Samples instances of an (L, W, p, c, tau) ensemble, scores each by the
number of density-evolution iterations until the average BER reaches a
target, and reports the instances in ranked order.  Instance seeds
derive from (master_seed, index) through a fixed mixing function, so
results are reproducible and independent of evaluation order or worker
count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Callable

import numpy as np

from .coupling import (
    CouplingGraph,
    TrainingAssignment,
    make_regular,
    sw_rewire,
    to_base_matrix,
)
from .density_evolution import SystemScenario, run_de
from .threshold import (
    DEFAULT_SUCCESS_BER,
    BracketError,
    ThresholdQuery,
    ThresholdResult,
    bp_threshold,
)

__all__ = [
    "EnsembleSpec",
    "InstanceScore",
    "SearchReport",
    "instance_seed",
    "sample_instance",
    "score_instance",
    "ensemble_search",
    "write_search_csv",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FINALIZE_1 = 0xBF58476D1CE4E5B9
_FINALIZE_2 = 0x94D049BB133111EB
_THRESHOLD_FINALISTS = 10


def _mix64(z: int) -> int:
    """splitmix64 finalizer: bijective 64-bit avalanche."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _FINALIZE_1) & _MASK64
    z = ((z ^ (z >> 27)) * _FINALIZE_2) & _MASK64
    return z ^ (z >> 31)


def instance_seed(master_seed: int, index: int) -> int:
    """Seed for sample ``index``: splitmix64 of master_seed + (index+1) * golden gamma."""
    if not 0 <= master_seed <= _MASK64:
        raise ValueError(f"master seed must be a 64-bit unsigned integer, got {master_seed}")
    if index < 0:
        raise ValueError(f"index must be nonnegative, got {index}")
    return _mix64(master_seed + (index + 1) * _GOLDEN)


@dataclass(frozen=True)
class EnsembleSpec:
    """An (L, W, p, c, tau) small-world ensemble plus sampling plan."""

    L: int
    W: int
    p: float
    c: int
    tau: int
    master_seed: int
    n_samples: int

    def __post_init__(self) -> None:
        # Same requirements as sw_rewire, checked up front so a bad spec
        # fails before any sampling starts.
        if self.L < 2 * self.W + 2:
            raise ValueError(f"need L >= 2W+2, got L={self.L}, W={self.W}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"rewiring probability must lie in [0, 1], got {self.p}")
        if self.c < 1 or (self.p > 0.0 and self.c < 2):
            raise ValueError(f"cluster count {self.c} invalid for p={self.p}")
        if self.L % self.c != 0:
            raise ValueError(f"cluster count must divide L: L={self.L}, c={self.c}")
        if self.L // self.c <= 4 * self.W:
            raise ValueError(
                f"cluster windows overlap: need L/c > 4W, got L={self.L}, c={self.c}, W={self.W}"
            )
        if not 1 <= self.tau <= self.L:
            raise ValueError(f"training quota must lie in [1, L={self.L}], got {self.tau}")
        if not 0 <= self.master_seed <= _MASK64:
            raise ValueError(
                f"master seed must be a 64-bit unsigned integer, got {self.master_seed}"
            )
        if self.n_samples < 1:
            raise ValueError(f"need at least one sample, got {self.n_samples}")


@dataclass(frozen=True)
class InstanceScore:
    """Score of one instance: iterations until the average BER reached the target.

    ``iterations_to_target`` is None when the target was never reached
    within the iteration budget.
    """

    instance_seed: int | None
    iterations_to_target: int | None
    final_max_ber: float
    threshold: ThresholdResult | None = None
    index: int | None = None


@dataclass(frozen=True)
class SearchReport:
    """Ranked scores plus the best instance, reproducible from the spec alone."""

    spec: EnsembleSpec
    scenario: SystemScenario
    scores: tuple[InstanceScore, ...]
    best_graph: CouplingGraph
    best_assignment: TrainingAssignment
    failures: tuple[tuple[int, str], ...] = field(default_factory=tuple)


def sample_instance(
    spec: EnsembleSpec, index: int
) -> tuple[CouplingGraph, TrainingAssignment]:
    """Instance ``index`` of the ensemble, independent of evaluation order."""
    if not 0 <= index < spec.n_samples:
        raise ValueError(f"index must lie in [0, {spec.n_samples}), got {index}")
    regular = make_regular(spec.L, spec.W)
    return sw_rewire(
        regular, spec.p, spec.c, spec.tau, instance_seed(spec.master_seed, index)
    )


def score_instance(
    g: CouplingGraph,
    assignment: TrainingAssignment,
    scen: SystemScenario,
    target_ber: float,
    max_iter: int = 1000,
    sir_tol: float = 1e-8,
    mmse_fn: Callable | None = None,
    index: int | None = None,
) -> InstanceScore:
    """Run density evolution and record iterations to the average-BER target.

    The instance's own training assignment supersedes the one in the
    scenario template.
    """
    if not 0.0 < target_ber <= 0.5:
        raise ValueError(f"target BER must lie in (0, 0.5], got {target_ber}")
    traj = run_de(
        to_base_matrix(g),
        replace(scen, training_set=assignment),
        max_iter=max_iter,
        tol=sir_tol,
        mmse_fn=mmse_fn,
    )
    reached = np.flatnonzero(traj.avg_ber <= target_ber)
    return InstanceScore(
        instance_seed=None if g.provenance is None else g.provenance.seed,
        iterations_to_target=int(reached[0]) if reached.size else None,
        final_max_ber=float(traj.ber[-1].max()),
        index=index,
    )


def _rank_key(score: InstanceScore) -> tuple[float, float, int]:
    iters = (
        math.inf
        if score.iterations_to_target is None
        else float(score.iterations_to_target)
    )
    return (iters, score.final_max_ber, score.instance_seed or 0)


def _score_index(args) -> tuple[int, InstanceScore | None, str | None]:
    spec, scen, target_ber, max_iter, sir_tol, mmse_fn, index = args
    try:
        g, assignment = sample_instance(spec, index)
        score = score_instance(
            g, assignment, scen, target_ber, max_iter, sir_tol, mmse_fn, index=index
        )
        return index, score, None
    except Exception as exc:  # recorded per instance, search continues
        return index, None, f"{type(exc).__name__}: {exc}"


def ensemble_search(
    spec: EnsembleSpec,
    scen: SystemScenario,
    target_ber: float = DEFAULT_SUCCESS_BER,
    max_iter: int = 1000,
    with_thresholds: bool = False,
    workers: int = 1,
    sir_tol: float = 1e-8,
    mmse_fn: Callable | None = None,
    alpha_lo: float = 1.0,
    alpha_hi: float = 2.5,
    alpha_tol: float = 1e-4,
    success_ber: float = DEFAULT_SUCCESS_BER,
    threshold_max_iter: int = 10000,
) -> SearchReport:
    """Score every instance of the ensemble and rank them.

    Ranking is ascending by iterations to target (unreached last), then
    final maximum BER, then instance seed.  With ``with_thresholds`` the
    top 10 instances also get a BP-threshold bisection over
    (alpha_lo, alpha_hi).  Instance evaluation may be spread over
    ``workers`` processes; the report does not depend on the worker
    count because every instance derives from its own index.
    """
    if workers < 1:
        raise ValueError(f"worker count must be positive, got {workers}")
    jobs = [
        (spec, scen, target_ber, max_iter, sir_tol, mmse_fn, index)
        for index in range(spec.n_samples)
    ]
    if workers == 1:
        outcomes = [_score_index(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_score_index, jobs, chunksize=8))

    outcomes.sort(key=lambda item: item[0])
    scores = [score for _, score, _ in outcomes if score is not None]
    failures = [(index, err) for index, _, err in outcomes if err is not None]
    if not scores:
        raise RuntimeError(f"all {spec.n_samples} instances failed: {failures[:3]}")
    scores.sort(key=_rank_key)

    if with_thresholds:
        finalists = []
        for score in scores[:_THRESHOLD_FINALISTS]:
            g, assignment = sample_instance(spec, score.index)
            query = ThresholdQuery(
                B=to_base_matrix(g),
                sigma2=scen.sigma2,
                alpha_tr=scen.alpha_tr,
                training_set=assignment,
                alpha_lo=alpha_lo,
                alpha_hi=alpha_hi,
                alpha_tol=alpha_tol,
                success_ber=success_ber,
                max_iter=threshold_max_iter,
                sir_tol=sir_tol,
                mmse_fn=mmse_fn,
            )
            try:
                finalists.append(replace(score, threshold=bp_threshold(query)))
            except BracketError as exc:
                failures.append((score.index, f"BracketError: {exc}"))
                finalists.append(score)
        scores = finalists + scores[_THRESHOLD_FINALISTS:]

    best_graph, best_assignment = sample_instance(spec, scores[0].index)
    return SearchReport(
        spec=spec,
        scenario=scen,
        scores=tuple(scores),
        best_graph=best_graph,
        best_assignment=best_assignment,
        failures=tuple(failures),
    )


def write_search_csv(report: SearchReport, stream: IO[str]) -> None:
    """Ranked table: index,instance_seed,iterations_to_target,final_max_ber[,alpha_bp].

    The alpha_bp column appears only when thresholds were computed;
    unreached targets and missing thresholds leave their fields empty.
    """
    with_thresholds = any(score.threshold is not None for score in report.scores)
    header = "index,instance_seed,iterations_to_target,final_max_ber"
    if with_thresholds:
        header += ",alpha_bp"
    stream.write(header + "\n")
    for score in report.scores:
        iters = "" if score.iterations_to_target is None else str(score.iterations_to_target)
        row = f"{score.index},{score.instance_seed},{iters},{score.final_max_ber:.17g}"
        if with_thresholds:
            row += "," if score.threshold is None else f",{score.threshold.alpha_bp:.17g}"
        stream.write(row + "\n")
