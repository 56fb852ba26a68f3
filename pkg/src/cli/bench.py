"""Timing of the explicit and rank-space inside passes across sentence lengths."""

import time
from functools import partial

import numpy as np
import pandas as pd

from src.config.log import get_logger
from src.grammar.materialize import materialize
from src.inference.rank_inside import inside_rank
from src.model.factored import FactoredGrammar
from src.model.kernels import precompute
from src.oracle.inside import inside_explicit

log = get_logger(__name__)

BENCH_LENGTHS = (10, 20, 30, 40)
METHODS = ("rank", "explicit")


def time_call(fn, repeats: int, max_seconds: float) -> list[float]:
    """Wall times in milliseconds; stops early once `max_seconds` is spent (always at least one run)."""
    times = []
    budget_start = time.perf_counter()
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append((time.perf_counter() - start) * 1000.0)
        if time.perf_counter() - budget_start > max_seconds:
            break
    return times


def run_bench(fg: FactoredGrammar, lengths=BENCH_LENGTHS, repeats: int = 5, max_seconds: float = 60.0,
              seed: int = 0, methods=METHODS) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    kernels = precompute(fg)
    explicit = materialize(fg) if "explicit" in methods else None
    rows = []
    for ell in lengths:
        sentence = rng.integers(0, fg.dims.v, size=ell).tolist()
        for method in methods:
            if method == "rank":
                fn = partial(inside_rank, kernels, fg, sentence)
            else:
                fn = partial(inside_explicit, explicit, sentence)
            times = time_call(fn, repeats, max_seconds)
            row = {
                "method": method,
                "length": ell,
                "runs": len(times),
                "median_ms": float(np.median(times)),
                "p95_ms": float(np.percentile(times, 95)),
            }
            log.info("bench_point", **row)
            rows.append(row)
    return pd.DataFrame(rows, columns=["method", "length", "runs", "median_ms", "p95_ms"])
