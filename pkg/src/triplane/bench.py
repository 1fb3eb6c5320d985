"""Forward-pass wall-clock benchmarking on CPU.

Timing is steady-state: a warmup phase populates the engine's buffer pool
(and any lazy caches), after which the timed region performs no pooled
allocations - the harness records the allocation-counter delta so tests
can assert it.  A fixed random input is reused across iterations and the
configuration is identified by a stable hash, so a result row is
attributable and reproducible up to machine noise.  When a single pass is
too fast for the timer, iterations are grouped and the group time divided.
"""

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import engine as E
from .config import ModelConfig
from .errors import ConfigError
from .models import build_model

MIN_ITERS = 10
MIN_WARMUP = 3
MIN_SAMPLE_SECONDS = 1e-3

CSV_COLUMNS = ("label", "config_hash", "variant", "task", "dims", "threads",
               "concurrent", "warmup", "iters", "group", "mean_ms",
               "median_ms", "p95_ms", "throughput_vps", "timed_allocs",
               "timestamp")


def config_hash(cfg: ModelConfig) -> str:
    return hashlib.sha256(cfg.to_json().encode()).hexdigest()[:12]


def default_threads():
    value = os.environ.get("TRIPLANE_THREADS")
    if value is None:
        return None
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigError(f"TRIPLANE_THREADS must be an integer, got {value!r}")


@dataclass
class BenchResult:
    label: str
    config_hash: str
    variant: str
    task: str
    dims: tuple
    threads: int | None
    concurrent: bool
    warmup: int
    iters: int
    group: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    throughput_vps: float
    timed_allocs: int
    timestamp: str

    def to_dict(self):
        out = dict(self.__dict__)
        out["dims"] = list(self.dims)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self):
        d = self.to_dict()
        d["dims"] = "x".join(str(v) for v in self.dims)
        return ",".join(str(d[c]) for c in CSV_COLUMNS)


def _timed_pass(run, group):
    t0 = time.perf_counter_ns()
    for _ in range(group):
        run()
    return (time.perf_counter_ns() - t0) / group / 1e6  # ms per pass


def bench_forward(cfg: ModelConfig, iters: int = 30, warmup: int = 5,
                  threads=None, concurrent: bool = False,
                  label: str | None = None) -> BenchResult:
    """Measure steady-state forward latency for one configuration."""
    if iters < MIN_ITERS:
        raise ConfigError(f"need at least {MIN_ITERS} measured iterations")
    if warmup < MIN_WARMUP:
        raise ConfigError(f"need at least {MIN_WARMUP} warmup iterations")
    if threads is None:
        threads = default_threads()

    model = build_model(cfg)
    rng = np.random.default_rng(cfg.seed)
    x = E.Tensor(rng.random((cfg.in_channels,) + cfg.dims, dtype=np.float64)
                 .astype(np.float32))

    executor = ThreadPoolExecutor(max_workers=2) if concurrent else None
    arena = None if concurrent else E.Arena()

    if concurrent:
        def run():
            model.forward_concurrent(x, executor)
    else:
        def run():
            arena.reset()
            model(x)

    limit = threadpool_limits(limits=threads) if threads else None
    try:
        scope = E.arena_scope(arena) if arena is not None else _null_context()
        with scope:
            for _ in range(warmup):
                run()
            probe_ms = _timed_pass(run, 1)
            group = max(1, int(np.ceil(MIN_SAMPLE_SECONDS * 1e3 / max(probe_ms, 1e-6))))
            allocs_before = E.alloc_count()
            latencies = np.array([_timed_pass(run, group) for _ in range(iters)])
            timed_allocs = E.alloc_count() - allocs_before
    finally:
        if limit is not None:
            limit.unregister()
        if executor is not None:
            executor.shutdown()

    mean_ms = float(latencies.mean())
    return BenchResult(
        label=label or f"{cfg.variant}/{cfg.task}",
        config_hash=config_hash(cfg),
        variant=cfg.variant,
        task=cfg.task,
        dims=cfg.dims,
        threads=threads,
        concurrent=concurrent,
        warmup=warmup,
        iters=iters,
        group=group,
        mean_ms=mean_ms,
        median_ms=float(np.median(latencies)),
        p95_ms=float(np.percentile(latencies, 95)),
        throughput_vps=1000.0 / mean_ms,
        timed_allocs=int(timed_allocs),
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"),
    )


class _null_context:
    def __enter__(self):
        return None

    def __exit__(self, *exc):
        return False


def append_csv(path, result: BenchResult) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a", encoding="utf-8") as fh:
        if new:
            fh.write(",".join(CSV_COLUMNS) + "\n")
        fh.write(result.csv_row() + "\n")
