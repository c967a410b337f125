"""Derivative-free training of ``(w1, w2, b)``.

Latin-hypercube (or random) starting points are each refined by a
Nelder-Mead search. The cost is 2*pi periodic in every parameter, so the
simplex moves freely in R^3 and points are wrapped onto [0, 2*pi)^3 before
evaluation. Reported parameters are therefore always wrapped.

Seeds: ``train`` draws from ``SeedSequence(config.seed)``. ``train_all``
gives the function at position ``i`` of ``FUNCTION_ORDER`` the stream
``SeedSequence(config.seed, spawn_key=(i,))``, so one function's result does
not depend on which other functions are trained alongside it.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .noise import DeviceNoiseModel
from .qnn import EXACT, FUNCTION_ORDER, ActivationVariant, Mode, cost, default_workers, get_function

TWO_PI = 2 * math.pi
MIN_EVALS_PER_RESTART = 10
INIT_METHODS = ("lhs", "random", "fixed")


@dataclass(frozen=True)
class OptimizerConfig:
    budget: int = 500
    restarts: int = 8
    init: str = "lhs"
    # starting point for init="fixed"; later restarts fall back to random points
    start: tuple[float, float, float] | None = None
    step: float = math.pi / 2  # initial simplex edge
    reflect: float = 1.0
    expand: float = 2.0
    contract: float = 0.5
    shrink: float = 0.5
    tol: float = 1e-4  # stop once the simplex cost spread falls below this
    seed: int = 0

    def __post_init__(self):
        if self.init not in INIT_METHODS:
            raise ValueError(f"init must be one of {INIT_METHODS}")
        if self.init == "fixed" and self.start is None:
            raise ValueError("init='fixed' needs a start point")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.budget < 20:
            raise ValueError("budget must be >= 20")
        if self.budget < self.restarts * MIN_EVALS_PER_RESTART:
            raise ValueError(f"budget {self.budget} too small for {self.restarts} restarts "
                             f"(need {MIN_EVALS_PER_RESTART} evaluations each)")
        if self.step <= 0 or self.tol < 0:
            raise ValueError("step must be positive and tol non-negative")
        if not (self.reflect > 0 and self.expand > 1 and 0 < self.contract < 1 and 0 < self.shrink < 1):
            raise ValueError("invalid Nelder-Mead coefficients")

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["start"] = list(self.start) if self.start is not None else None
        return d


@dataclass(frozen=True)
class TraceRecord:
    step: int
    w1: float
    w2: float
    b: float
    cost: float
    n_rts: float

    @property
    def params(self) -> tuple[float, float, float]:
        return (self.w1, self.w2, self.b)


@dataclass
class TrainingTrace:
    records: list[TraceRecord] = field(default_factory=list)
    best_index: int = -1

    def __len__(self):
        return len(self.records)

    @property
    def best(self) -> TraceRecord:
        return self.records[self.best_index]

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate([r.cost for r in self.records])

    def add(self, rec: TraceRecord) -> None:
        self.records.append(rec)
        # strict comparison: ties keep the first minimum found
        if self.best_index < 0 or rec.cost < self.best.cost:
            self.best_index = len(self.records) - 1

    def rows(self) -> list[list]:
        """CSV rows: step, w1_deg, w2_deg, b_deg, C, n_rts, is_best."""
        out = []
        for i, r in enumerate(self.records):
            out.append([r.step, *(repr(math.degrees(v)) for v in r.params),
                        repr(r.cost), repr(r.n_rts), int(i == self.best_index)])
        return out


TRACE_HEADER = ["step", "w1_deg", "w2_deg", "b_deg", "C", "n_rts", "is_best"]


@dataclass
class TrainingResult:
    function: str
    params: tuple[float, float, float]
    cost: float
    trace: TrainingTrace

    def __iter__(self):
        # unpacks as (params, cost, trace)
        return iter((self.params, self.cost, self.trace))


def wrap(x) -> np.ndarray:
    return np.mod(np.asarray(x, dtype=float), TWO_PI)


class _BudgetExhausted(Exception):
    pass


def nelder_mead(fun: Callable[[np.ndarray], float], x0: np.ndarray, config: OptimizerConfig,
                budget: int, threshold: float) -> None:
    """Minimize ``fun`` from ``x0`` using at most ``budget`` calls.

    Results are collected by ``fun`` itself; this returns nothing.
    """
    calls = 0

    def f(x):
        nonlocal calls
        if calls >= budget:
            raise _BudgetExhausted
        calls += 1
        return fun(x)

    n = len(x0)
    try:
        pts = [np.array(x0, dtype=float)]
        for i in range(n):
            p = pts[0].copy()
            p[i] += config.step
            pts.append(p)
        vals = [f(p) for p in pts]
        while True:
            order = np.argsort(vals, kind="stable")
            pts = [pts[i] for i in order]
            vals = [vals[i] for i in order]
            if vals[-1] - vals[0] < threshold:
                return
            centroid = np.mean(pts[:-1], axis=0)
            worst = pts[-1]
            xr = centroid + config.reflect * (centroid - worst)
            fr = f(xr)
            if fr < vals[0]:
                xe = centroid + config.expand * (xr - centroid)
                fe = f(xe)
                pts[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
                continue
            if fr < vals[-2]:
                pts[-1], vals[-1] = xr, fr
                continue
            if fr < vals[-1]:
                xc = centroid + config.contract * (xr - centroid)
            else:
                xc = centroid + config.contract * (worst - centroid)
            fc = f(xc)
            if fc < min(fr, vals[-1]):
                pts[-1], vals[-1] = xc, fc
                continue
            for i in range(1, n + 1):
                pts[i] = pts[0] + config.shrink * (pts[i] - pts[0])
                vals[i] = f(pts[i])
    except _BudgetExhausted:
        return


def _start_points(config: OptimizerConfig, rng: np.random.Generator) -> np.ndarray:
    k = config.restarts
    if config.init == "lhs":
        return qmc.LatinHypercube(d=3, seed=rng).random(k) * TWO_PI
    pts = rng.uniform(0, TWO_PI, size=(k, 3))
    if config.init == "fixed":
        pts[0] = config.start
    return pts


def noise_floor(mode: Mode) -> float:
    """Largest binomial standard error of a sampled cost."""
    return 0.0 if mode.exact else 0.5 / math.sqrt(mode.shots)


def _train(f: str, variant, model: DeviceNoiseModel | None, mode: Mode, config: OptimizerConfig,
           seq: np.random.SeedSequence) -> TrainingResult:
    f = get_function(f).name
    rng = np.random.default_rng(seq)
    trace = TrainingTrace()
    threshold = max(config.tol, noise_floor(mode))

    def objective(x):
        p = wrap(x)
        m = mode if mode.exact else mode.with_seed(int(rng.integers(2**63)))
        c, n_rts = cost(f, p, variant, model, m)
        trace.add(TraceRecord(len(trace) + 1, *(float(v) for v in p), c, n_rts))
        return c

    starts = _start_points(config, rng)
    base, extra = divmod(config.budget, config.restarts)
    for i, x0 in enumerate(starts):
        nelder_mead(objective, x0, config, base + (1 if i < extra else 0), threshold)
    best = trace.best
    return TrainingResult(f, best.params, best.cost, trace)


def train(f, variant: ActivationVariant | str = ActivationVariant.RUS_SIGMOID,
          model: DeviceNoiseModel | None = None, mode: Mode = EXACT,
          config: OptimizerConfig = OptimizerConfig()) -> TrainingResult:
    """Minimize the cost of ``f``. Unpacks as ``(params, cost, trace)``."""
    return _train(f, variant, model, mode, config, np.random.SeedSequence(config.seed))


def _train_job(args):
    return _train(*args)


def train_all(variant: ActivationVariant | str = ActivationVariant.RUS_SIGMOID,
              model: DeviceNoiseModel | None = None, mode: Mode = EXACT,
              config: OptimizerConfig = OptimizerConfig(), functions: Sequence[str] = FUNCTION_ORDER,
              workers: int | None = 1) -> dict[str, TrainingResult]:
    """Train each function independently, in parallel when ``workers > 1``."""
    names = [get_function(f).name for f in functions]
    jobs = [(n, variant, model, mode, config,
             np.random.SeedSequence(config.seed, spawn_key=(FUNCTION_ORDER.index(n),))) for n in names]
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) < 2:
        results = [_train_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            results = list(ex.map(_train_job, jobs))
    return dict(zip(names, results))


__all__ = ["OptimizerConfig", "TraceRecord", "TrainingTrace", "TrainingResult", "TRACE_HEADER",
           "nelder_mead", "noise_floor", "train", "train_all", "wrap"]
