"""Benchmark harness: wall time, exact peak float counts, and scaling fits.

Measures the attention variants over a sweep of position counts, records
the median wall time of repeated runs together with the ledger-observed
peak float count, fits log-log scaling exponents, locates the wall-time
crossover between the pairwise and reassociated orders, and computes the
feasibility frontier under a fixed float budget.

Space is measured as exact logical float counts (see matrixlib), never as
process RSS: the counts are deterministic, portable, and directly
comparable to the closed-form predictions in ``predict_peak_floats``.
Timed execution is single-threaded (BLAS thread pools are pinned to one
thread) so scaling exponents are not contaminated by parallelism.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
import tempfile
import time
from dataclasses import dataclass, asdict

import numpy as np
from threadpoolctl import threadpool_limits

from .matrixlib import AllocationLedger, ContractViolation, Rng, use_ledger
from .projections import init_projections, random_feature_map
from . import attention, gradients

__all__ = [
    "FORWARD",
    "BACKWARD",
    "BenchConfig",
    "BenchRecord",
    "ScalingFit",
    "CSV_COLUMNS",
    "run_sweep",
    "fit_scaling",
    "find_crossover",
    "predict_peak_floats",
    "peak_float_terms",
    "largest_feasible_n",
    "feasibility_frontier",
    "build_report",
    "write_csv",
    "write_json",
]

FORWARD = "forward"
BACKWARD = "backward"
DIRECTIONS = (FORWARD, BACKWARD)

CSV_COLUMNS = (
    "variant",
    "direction",
    "n",
    "c",
    "r",
    "reps",
    "wall_seconds_median",
    "peak_floats",
    "seed",
)


@dataclass
class BenchConfig:
    """One sweep: which variants and directions to run over which N grid."""

    n_values: list[int]
    c: int = 64
    r: int = 8
    reps: int = 5
    warmup: int = 1
    seed: int = 42
    variants: tuple[str, ...] = (attention.VANILLA, attention.LINEAR)
    directions: tuple[str, ...] = DIRECTIONS
    max_floats: int | None = None  # per-run cap; larger predicted runs become infeasible records
    float_budget: int = 2**26  # budget for the feasibility frontier
    csv_path: str | None = None
    json_path: str | None = None

    def validate(self) -> None:
        if not self.n_values:
            raise ContractViolation("n_values must be non-empty")
        if any(n < 1 for n in self.n_values):
            raise ContractViolation("every n must be >= 1")
        if list(self.n_values) != sorted(self.n_values):
            raise ContractViolation("n_values must be ascending")
        if self.c < 1 or self.r < 1 or self.c % self.r != 0:
            raise ContractViolation(f"c={self.c} must be a positive multiple of r={self.r}")
        if self.reps < 5:
            raise ContractViolation(f"reps must be >= 5, got {self.reps}")
        if self.warmup < 1:
            raise ContractViolation(f"warmup must be >= 1, got {self.warmup}")
        for v in self.variants:
            if v not in attention.VARIANTS:
                raise ContractViolation(f"unknown variant {v!r}")
        for d in self.directions:
            if d not in DIRECTIONS:
                raise ContractViolation(f"unknown direction {d!r}")


@dataclass(frozen=True)
class BenchRecord:
    """One observation: variant x direction x N, median wall time and peak floats.

    Infeasible configurations (predicted peak over the cap, or an actual
    MemoryError) are recorded with ``feasible=False``, ``reps=0`` and no
    wall time; ``peak_floats`` still carries the closed-form prediction so
    the record explains *why* the run was refused.
    """

    variant: str
    direction: str
    n: int
    c: int
    r: int
    reps: int
    wall_seconds_median: float | None
    peak_floats: int
    seed: int
    feasible: bool = True


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares slope of log(time) against log(N) for one series."""

    variant: str
    direction: str
    exponent: float
    r_squared: float
    n_range: tuple[int, int]


# ---------------------------------------------------------------------------
# Closed-form allocation predictions
# ---------------------------------------------------------------------------


def peak_float_terms(variant: str, n: int, c: int, r: int, direction: str) -> dict[str, int]:
    """Term-by-term float counts of every matrix the implementation allocates.

    Mirrors the implementations exactly, matrix by matrix; the benchmark
    asserts integer equality between the sum of these terms and the ledger
    observation of a real run. Inputs (x, weights, upstream) are created by
    the caller outside the tracked scope and do not appear here. Backward
    terms include the internal forward recomputation.
    """
    if c % r != 0:
        raise ContractViolation(f"c={c} must be divisible by r={r}")
    if variant not in attention.VARIANTS:
        raise ContractViolation(f"unknown variant {variant!r}")
    if direction not in DIRECTIONS:
        raise ContractViolation(f"unknown direction {direction!r}")
    m = c // r

    terms = {"z": n * m, "y": n * m, "phi": n * c}
    if variant == attention.LINEAR:
        terms["compact_map"] = m * c
    else:
        terms["pairwise_map"] = n * n  # logits normalized in place for vanilla
    terms["out"] = n * c

    if direction == BACKWARD:
        if variant == attention.VANILLA:
            terms["d_map"] = n * n  # upstream @ phi^T
            terms["d_logits"] = n * n  # softmax jacobian applied row-wise
        elif variant == attention.QUADRATIC:
            terms["d_map"] = n * n
        else:
            terms["d_compact_map"] = m * c
        terms["d_z"] = n * m
        terms["d_y"] = n * m
        terms["d_phi"] = n * c
        terms["d_wz"] = c * m
        terms["d_wy"] = c * m
        terms["d_wphi"] = c * c
        # d_x accumulation: three projection back-products plus two pairwise sums
        terms["d_x_parts"] = 5 * n * c
    return terms


def predict_peak_floats(variant: str, n: int, c: int, r: int, direction: str) -> int:
    """Exact peak float count for one run; must equal the ledger observation."""
    return sum(peak_float_terms(variant, n, c, r, direction).values())


def largest_feasible_n(
    variant: str, c: int, r: int, direction: str, budget: int
) -> int:
    """Largest N whose predicted peak stays within ``budget`` floats (0 if none)."""
    if predict_peak_floats(variant, 1, c, r, direction) > budget:
        return 0
    lo, hi = 1, 2
    while predict_peak_floats(variant, hi, c, r, direction) <= budget:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if predict_peak_floats(variant, mid, c, r, direction) <= budget:
            lo = mid
        else:
            hi = mid
    return lo


def feasibility_frontier(config: BenchConfig) -> dict:
    """Largest feasible N per variant under the configured float budget."""
    frontier = {
        variant: largest_feasible_n(variant, config.c, config.r, FORWARD, config.float_budget)
        for variant in config.variants
    }
    return {"float_budget": config.float_budget, "direction": FORWARD, "max_n": frontier}


# ---------------------------------------------------------------------------
# Sweep execution
# ---------------------------------------------------------------------------

_FORWARD_FNS = {
    attention.VANILLA: attention.vanilla_sa_forward,
    attention.QUADRATIC: attention.linear_sa_forward_quadratic,
    attention.LINEAR: attention.linear_sa_forward_linear,
}

_BACKWARD_FNS = {
    attention.VANILLA: gradients.backward_vanilla,
    attention.QUADRATIC: gradients.backward_linear_quadratic_order,
    attention.LINEAR: gradients.backward_linear,
}


def _run_one(variant: str, direction: str, x, p, upstream) -> tuple[float, int]:
    ledger = AllocationLedger()
    start = time.perf_counter()
    with use_ledger(ledger):
        if direction == FORWARD:
            result = _FORWARD_FNS[variant](x, p)
        else:
            result = _BACKWARD_FNS[variant](x, p, upstream)
    elapsed = time.perf_counter() - start
    del result
    return elapsed, ledger.peak_floats


def run_sweep(config: BenchConfig) -> list[BenchRecord]:
    """Execute the configured sweep and return one record per cell.

    Per cell: build seeded inputs (outside the ledger scope), warm up, then
    time ``reps`` runs with a fresh ledger each and report the median wall
    time. The observed peak must equal ``predict_peak_floats`` exactly;
    a mismatch means the accounting model drifted from the implementation
    and raises rather than silently recording bad data.
    """
    config.validate()
    records: list[BenchRecord] = []
    with threadpool_limits(limits=1):
        for n in config.n_values:
            rng = Rng(config.seed)
            p = init_projections(config.c, config.r, rng)
            x = random_feature_map(n, config.c, rng)
            upstream = rng.uniform(n, config.c)
            for variant in config.variants:
                for direction in config.directions:
                    predicted = predict_peak_floats(variant, n, config.c, config.r, direction)
                    if config.max_floats is not None and predicted > config.max_floats:
                        records.append(
                            BenchRecord(
                                variant=variant,
                                direction=direction,
                                n=n,
                                c=config.c,
                                r=config.r,
                                reps=0,
                                wall_seconds_median=None,
                                peak_floats=predicted,
                                seed=config.seed,
                                feasible=False,
                            )
                        )
                        continue
                    try:
                        for _ in range(config.warmup):
                            _run_one(variant, direction, x, p, upstream)
                        times = []
                        peaks = set()
                        for _ in range(config.reps):
                            elapsed, peak = _run_one(variant, direction, x, p, upstream)
                            times.append(elapsed)
                            peaks.add(peak)
                    except MemoryError:
                        records.append(
                            BenchRecord(
                                variant=variant,
                                direction=direction,
                                n=n,
                                c=config.c,
                                r=config.r,
                                reps=0,
                                wall_seconds_median=None,
                                peak_floats=predicted,
                                seed=config.seed,
                                feasible=False,
                            )
                        )
                        continue
                    if peaks != {predicted}:
                        raise RuntimeError(
                            f"allocation model out of sync for {variant}/{direction} at "
                            f"n={n}: predicted {predicted}, observed {sorted(peaks)}"
                        )
                    records.append(
                        BenchRecord(
                            variant=variant,
                            direction=direction,
                            n=n,
                            c=config.c,
                            r=config.r,
                            reps=config.reps,
                            wall_seconds_median=statistics.median(times),
                            peak_floats=predicted,
                            seed=config.seed,
                        )
                    )
    return records


# ---------------------------------------------------------------------------
# Analysis
# ---------------------------------------------------------------------------


def fit_scaling(records: list[BenchRecord]) -> list[ScalingFit]:
    """Ordinary least squares of log(median time) on log(N), per series.

    Requires at least 4 distinct N values spanning a factor of 16 or more
    in every (variant, direction) series present.
    """
    series: dict[tuple[str, str], list[BenchRecord]] = {}
    for rec in records:
        if rec.feasible and rec.wall_seconds_median is not None:
            series.setdefault((rec.variant, rec.direction), []).append(rec)

    fits = []
    for (variant, direction), recs in sorted(series.items()):
        ns = sorted({rec.n for rec in recs})
        if len(ns) < 4:
            raise ContractViolation(
                f"scaling fit for {variant}/{direction} needs >= 4 distinct N values, got {len(ns)}"
            )
        if ns[-1] < 16 * ns[0]:
            raise ContractViolation(
                f"scaling fit for {variant}/{direction} needs an N span of >= 16x, "
                f"got {ns[0]}..{ns[-1]}"
            )
        log_n = np.log([rec.n for rec in recs])
        log_t = np.log([rec.wall_seconds_median for rec in recs])
        slope, intercept = np.polyfit(log_n, log_t, 1)
        predicted = slope * log_n + intercept
        ss_res = float(np.sum((log_t - predicted) ** 2))
        ss_tot = float(np.sum((log_t - log_t.mean()) ** 2))
        if ss_tot == 0.0:
            r2 = 1.0 if ss_res == 0.0 else 0.0
        else:
            r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
        fits.append(
            ScalingFit(
                variant=variant,
                direction=direction,
                exponent=float(slope),
                r_squared=r2,
                n_range=(ns[0], ns[-1]),
            )
        )
    return fits


def find_crossover(records: list[BenchRecord], direction: str = FORWARD) -> int | None:
    """Smallest N from which the linear order stays strictly faster than vanilla.

    Requires both variants measured on a shared grid; returns None when the
    linear order never wins at the largest measured N (ties do not count).
    """
    times: dict[str, dict[int, float]] = {attention.VANILLA: {}, attention.LINEAR: {}}
    for rec in records:
        if rec.direction == direction and rec.variant in times and rec.feasible:
            times[rec.variant][rec.n] = rec.wall_seconds_median
    common = sorted(set(times[attention.VANILLA]) & set(times[attention.LINEAR]))
    crossover = None
    for n in reversed(common):
        if times[attention.LINEAR][n] < times[attention.VANILLA][n]:
            crossover = n
        else:
            break
    return crossover


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def build_report(config: BenchConfig, records: list[BenchRecord]) -> dict:
    """Assemble the machine-readable report: records, fits, crossover, frontier."""
    fits = fit_scaling(records) if _fittable(records) else []
    return {
        "config": {
            "n_values": list(config.n_values),
            "c": config.c,
            "r": config.r,
            "reps": config.reps,
            "warmup": config.warmup,
            "seed": config.seed,
            "variants": list(config.variants),
            "directions": list(config.directions),
        },
        "records": [asdict(rec) for rec in records],
        "fits": [asdict(fit) for fit in fits],
        "crossover": {
            direction: find_crossover(records, direction) for direction in config.directions
        },
        "feasibility_frontier": feasibility_frontier(config),
    }


def _fittable(records: list[BenchRecord]) -> bool:
    series: dict[tuple[str, str], set[int]] = {}
    for rec in records:
        if rec.feasible and rec.wall_seconds_median is not None:
            series.setdefault((rec.variant, rec.direction), set()).add(rec.n)
    return bool(series) and all(
        len(ns) >= 4 and max(ns) >= 16 * min(ns) for ns in series.values()
    )


def _atomic_write(path: str, payload: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(payload)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def write_csv(records: list[BenchRecord], path: str) -> None:
    """Write one record per row (RFC-4180, temp-then-rename)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        wall = "" if rec.wall_seconds_median is None else repr(rec.wall_seconds_median)
        writer.writerow(
            [rec.variant, rec.direction, rec.n, rec.c, rec.r, rec.reps, wall, rec.peak_floats, rec.seed]
        )
    _atomic_write(path, buffer.getvalue())


def write_json(report: dict, path: str) -> None:
    """Write the report dict as JSON (temp-then-rename)."""
    _atomic_write(path, json.dumps(report, indent=2) + "\n")
