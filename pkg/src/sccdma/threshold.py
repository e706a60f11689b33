"""BP-threshold estimation by bisection over the propagation load.

From the all-zero start the monotone density-evolution recursion
converges to its smallest fixed point.  Below the threshold that point
is the low-BER (near single-user) one; above it a high-interference
fixed point appears underneath and captures the recursion.  A run
"succeeds" when it converges with every position's final BER at or
below ``success_ber``, and the threshold is bracketed by bisection on
that flag.  For the uncoupled (L=1) system the scalar fixed-point
structure can also be enumerated directly as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Callable

import numpy as np

from .coupling import BaseMatrix, TrainingAssignment, average_load
from .density_evolution import SystemScenario, mmse_bpsk, qfunc, run_de

__all__ = [
    "ALPHA_MAP_10DB",
    "DEFAULT_SUCCESS_BER",
    "BracketError",
    "DeEvaluation",
    "ThresholdQuery",
    "ThresholdResult",
    "de_success",
    "bp_threshold",
    "scalar_fixed_points",
    "write_threshold_csv",
    "write_evaluation_log_csv",
]

# The low-BER fixed point does not reach the single-user bound: residual
# multiuser interference leaves its BER slightly above 1e-3 at practical
# SNR (about 1.04e-3 at 10 dB near the uncoupled transition, 1.1e-3 for
# the coupled chains studied here), while the high-interference fixed
# point sits near 1e-1.  The success level must separate the two
# plateaus; 2e-3 keeps roughly a 2x margin below and a 40x margin above.
DEFAULT_SUCCESS_BER = 2e-3

# Optimal-detection load limit at 10 dB.  Coupled BP thresholds approach
# it from below as L and W grow; reference value only, nothing here
# computes it.
ALPHA_MAP_10DB = 1.98267


class BracketError(ValueError):
    """A bisection bracket is inverted or does not straddle the threshold."""


@dataclass(frozen=True)
class DeEvaluation:
    """Outcome of one density-evolution run at a given propagation load."""

    alpha: float
    converged: bool
    max_ber: float
    iterations: int
    success: bool


@dataclass(frozen=True)
class ThresholdQuery:
    """A bisection problem: base matrix, scenario minus the load, and a bracket."""

    B: BaseMatrix
    sigma2: float
    alpha_tr: float
    training_set: TrainingAssignment
    alpha_lo: float
    alpha_hi: float
    alpha_tol: float = 1e-4
    success_ber: float = DEFAULT_SUCCESS_BER
    max_iter: int = 10000
    sir_tol: float = 1e-8
    mmse_fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.sigma2 <= 0.0:
            raise ValueError(f"noise variance must be positive, got {self.sigma2}")
        if self.alpha_tr <= 0.0:
            raise ValueError(f"training load must be positive, got {self.alpha_tr}")
        if self.alpha_lo <= 0.0 or self.alpha_hi <= 0.0:
            raise ValueError(
                f"bracket loads must be positive, got ({self.alpha_lo}, {self.alpha_hi})"
            )
        if self.alpha_lo >= self.alpha_hi:
            raise BracketError(
                f"inverted bracket: alpha_lo={self.alpha_lo} must be below alpha_hi={self.alpha_hi}"
            )
        if self.alpha_tol <= 0.0:
            raise ValueError(f"bracket tolerance must be positive, got {self.alpha_tol}")
        if not 0.0 < self.success_ber < 1.0:
            raise ValueError(f"success level must be a probability, got {self.success_ber}")
        single_user = qfunc(math.sqrt(1.0 / self.sigma2))
        if single_user >= self.success_ber:
            raise ValueError(
                f"success level {self.success_ber} is unreachable: the single-user "
                f"bound at this noise level is {single_user:.6g}"
            )
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be positive, got {self.max_iter}")
        if self.sir_tol <= 0.0:
            raise ValueError(f"sir tolerance must be positive, got {self.sir_tol}")

    def scenario(self, alpha: float) -> SystemScenario:
        return SystemScenario(
            sigma2=self.sigma2,
            alpha_tr=self.alpha_tr,
            alpha=alpha,
            training_set=self.training_set,
        )


@dataclass(frozen=True)
class ThresholdResult:
    """Bisection outcome: conservative estimate, final bracket, evaluation log."""

    alpha_bp: float
    bracket: tuple[float, float]
    de_evaluations: int
    avg_load_at_threshold: float
    success_ber: float
    alpha_tol: float
    log: tuple[DeEvaluation, ...]

    def __post_init__(self) -> None:
        lo, hi = self.bracket
        if not lo <= self.alpha_bp <= hi:
            raise ValueError(f"estimate {self.alpha_bp} outside bracket {self.bracket}")
        if hi - lo > self.alpha_tol * (1.0 + 1e-12):
            raise ValueError(f"bracket {self.bracket} wider than tolerance {self.alpha_tol}")
        if self.de_evaluations != len(self.log):
            raise ValueError("evaluation count does not match the log")


def _evaluate(query: ThresholdQuery, alpha: float) -> DeEvaluation:
    traj = run_de(
        query.B,
        query.scenario(alpha),
        max_iter=query.max_iter,
        tol=query.sir_tol,
        mmse_fn=query.mmse_fn,
    )
    max_ber = float(traj.ber[-1].max())
    return DeEvaluation(
        alpha=alpha,
        converged=traj.converged,
        max_ber=max_ber,
        iterations=traj.iterations_run,
        success=bool(traj.converged and max_ber <= query.success_ber),
    )


def de_success(alpha: float, query: ThresholdQuery) -> bool:
    """Whether density evolution at this load converges with all BERs at or below the success level."""
    if alpha <= 0.0:
        raise ValueError(f"load must be positive, got {alpha}")
    return _evaluate(query, alpha).success


def _check_monotone(log: list[DeEvaluation], new: DeEvaluation) -> None:
    # Success must not reappear above a recorded failure; bisection cannot
    # produce that ordering on its own, so a hit means the success flag is
    # not monotone in alpha and the bracket logic would be meaningless.
    for prior in log:
        inverted = (prior.success and not new.success and new.alpha < prior.alpha) or (
            new.success and not prior.success and new.alpha > prior.alpha
        )
        if inverted:
            bad_lo, bad_hi = sorted((prior, new), key=lambda ev: ev.alpha)
            raise RuntimeError(
                "density-evolution success is not monotone over the bracket: "
                f"failure at alpha={bad_lo.alpha:.9g} below success at "
                f"alpha={bad_hi.alpha:.9g}; refusing to bisect"
            )


def bp_threshold(query: ThresholdQuery) -> ThresholdResult:
    """Bisect the bracket on the density-evolution success flag.

    Requires success at ``alpha_lo`` and failure at ``alpha_hi``.  The
    returned estimate is the final bracket's low end, the last load at
    which the run still succeeded.
    """
    log: list[DeEvaluation] = []
    lo_eval = _evaluate(query, query.alpha_lo)
    log.append(lo_eval)
    hi_eval = _evaluate(query, query.alpha_hi)
    _check_monotone(log, hi_eval)
    log.append(hi_eval)
    if not lo_eval.success or hi_eval.success:
        raise BracketError(
            "bracket does not straddle the threshold: "
            f"alpha_lo={query.alpha_lo} success={lo_eval.success} "
            f"(converged={lo_eval.converged}, max_ber={lo_eval.max_ber:.6g}), "
            f"alpha_hi={query.alpha_hi} success={hi_eval.success} "
            f"(converged={hi_eval.converged}, max_ber={hi_eval.max_ber:.6g})"
        )

    lo, hi = query.alpha_lo, query.alpha_hi
    while hi - lo > query.alpha_tol:
        mid = 0.5 * (lo + hi)
        ev = _evaluate(query, mid)
        _check_monotone(log, ev)
        log.append(ev)
        if ev.success:
            lo = mid
        else:
            hi = mid

    return ThresholdResult(
        alpha_bp=lo,
        bracket=(lo, hi),
        de_evaluations=len(log),
        avg_load_at_threshold=average_load(
            query.alpha_tr, lo, query.training_set.tau, query.B.L
        ),
        success_ber=query.success_ber,
        alpha_tol=query.alpha_tol,
        log=tuple(log),
    )


def scalar_fixed_points(alpha: float, sigma2: float, grid_size: int = 4096) -> list[float]:
    """All fixed points of the uncoupled recursion x = 1 / (sigma2 + alpha * mmse(x)).

    Scans f(x) = x * (sigma2 + alpha * mmse(x)) - 1 for sign changes on
    a uniform grid over (0, 1/sigma2] and refines each bracketed root by
    bisection to 1e-10.  Returns the roots in ascending order; there is
    always at least one because f(0) = -1 and f(1/sigma2) > 0.
    """
    if alpha <= 0.0 or sigma2 <= 0.0:
        raise ValueError(f"parameters must be positive, got alpha={alpha}, sigma2={sigma2}")
    if grid_size < 100:
        raise ValueError(f"grid must have at least 100 cells, got {grid_size}")

    def f(x):
        return x * (sigma2 + alpha * mmse_bpsk(x)) - 1.0

    xs = np.linspace(0.0, 1.0 / sigma2, grid_size + 1)
    fs = f(xs)
    roots: list[float] = []
    for i in range(grid_size):
        a, b = float(xs[i]), float(xs[i + 1])
        fa, fb = float(fs[i]), float(fs[i + 1])
        if fb == 0.0:
            roots.append(b)
            continue
        if fa * fb >= 0.0:
            continue
        while b - a > 1e-10:
            midpoint = 0.5 * (a + b)
            fm = float(f(midpoint))
            if fa * fm <= 0.0:
                b, fb = midpoint, fm
            else:
                a, fa = midpoint, fm
        roots.append(0.5 * (a + b))
    return roots


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def write_threshold_csv(result: ThresholdResult, stream: IO[str]) -> None:
    """Single-row report: alpha_bp,bracket_lo,bracket_hi,avg_load,evaluations,success_ber,alpha_tol."""
    stream.write("alpha_bp,bracket_lo,bracket_hi,avg_load,evaluations,success_ber,alpha_tol\n")
    stream.write(
        f"{_fmt(result.alpha_bp)},{_fmt(result.bracket[0])},{_fmt(result.bracket[1])},"
        f"{_fmt(result.avg_load_at_threshold)},{result.de_evaluations},"
        f"{_fmt(result.success_ber)},{_fmt(result.alpha_tol)}\n"
    )


def write_evaluation_log_csv(result: ThresholdResult, stream: IO[str]) -> None:
    """Evaluation log in bisection order: alpha,converged,max_ber,iterations."""
    stream.write("alpha,converged,max_ber,iterations\n")
    for ev in result.log:
        flag = "true" if ev.converged else "false"
        stream.write(f"{_fmt(ev.alpha)},{flag},{_fmt(ev.max_ber)},{ev.iterations}\n")
