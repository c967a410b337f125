"""Two-input quantum neural network built on the gearbox neuron.

Register order is ``(I1, I2, A, O)``. The inputs are put in uniform
superposition, the neuron rotates ``O`` by ``g(k w1 + l w2 + b)``, the
ancilla is reused to hold ``f(k, l)`` from a Boolean oracle, the parity of
``A`` and ``O`` is copied onto ``A``, and ``A`` is measured. The cost is the
probability of reading 1 on that final measurement, i.e. the fraction of
inputs on which the network disagrees with ``f``.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .circuit import Moment, RUSProgram, compile_program, cz, run_exact, run_sampled, rx, ry
from .gearbox import GearboxParams, correction_moments, gearbox_body
from .noise import DeviceNoiseModel

QNN_QUBITS = ("I1", "I2", "A", "O")
RABI_QUBITS = ("I1", "I2", "A")


@dataclass(frozen=True)
class BooleanFunction:
    name: str
    truth_table: tuple[int, int, int, int]  # outputs for inputs 00, 01, 10, 11 (I1 I2)
    definition: str = ""

    def __call__(self, k: int, l: int) -> int:
        return self.truth_table[2 * k + l]

    @property
    def category(self) -> str:
        ones = sum(self.truth_table)
        if ones in (0, 4):
            return "constant"
        if ones == 2:
            return "balanced"
        return "unbalanced"

    @property
    def complement(self) -> "BooleanFunction":
        flipped = tuple(1 - t for t in self.truth_table)
        return next(f for f in FUNCTIONS.values() if f.truth_table == flipped)

    @property
    def anf(self) -> tuple[int, int, int, int]:
        """Algebraic normal form ``f = c ^ a*I1 ^ b*I2 ^ d*I1*I2`` as ``(c, a, b, d)``."""
        f00, f01, f10, f11 = self.truth_table
        return f00, f00 ^ f10, f00 ^ f01, f00 ^ f01 ^ f10 ^ f11


_TABLE = [
    ("NULL", (0, 0, 0, 0), "0"),
    ("IDENTITY", (1, 1, 1, 1), "1"),
    ("TRANSFER1", (0, 0, 1, 1), "I1"),
    ("NOT1", (1, 1, 0, 0), "not I1"),
    ("TRANSFER2", (0, 1, 0, 1), "I2"),
    ("NOT2", (1, 0, 1, 0), "not I2"),
    ("XOR", (0, 1, 1, 0), "I1 xor I2"),
    ("XNOR", (1, 0, 0, 1), "not (I1 xor I2)"),
    ("AND", (0, 0, 0, 1), "I1 and I2"),
    ("NAND", (1, 1, 1, 0), "not (I1 and I2)"),
    ("NOR", (1, 0, 0, 0), "not (I1 or I2)"),
    ("OR", (0, 1, 1, 1), "I1 or I2"),
    ("INHIBITION2", (0, 1, 0, 0), "not I1 and I2"),
    ("IMPLICATION1", (1, 0, 1, 1), "I1 or not I2"),
    ("INHIBITION1", (0, 0, 1, 0), "I1 and not I2"),
    ("IMPLICATION2", (1, 1, 0, 1), "not I1 or I2"),
]

FUNCTIONS: dict[str, BooleanFunction] = {n: BooleanFunction(n, t, d) for n, t, d in _TABLE}

# Constant, balanced, unbalanced; every function sits next to its complement.
FUNCTION_ORDER = ("NULL", "IDENTITY", "TRANSFER1", "NOT1", "TRANSFER2", "NOT2", "XOR", "XNOR",
                  "AND", "NAND", "NOR", "OR", "INHIBITION2", "IMPLICATION1", "INHIBITION1", "IMPLICATION2")


def get_function(name: str | BooleanFunction) -> BooleanFunction:
    if isinstance(name, BooleanFunction):
        return name
    key = name.upper().replace(" ", "").replace("_", "")
    try:
        return FUNCTIONS[key]
    except KeyError:
        raise KeyError(f"unknown Boolean function {name!r}; valid names: {', '.join(FUNCTION_ORDER)}") from None


class ActivationVariant(enum.Enum):
    RUS_SIGMOID = "rus"
    SINGLE_PASS_NO_CORRECTION = "no-correction"
    RABI_SINUSOIDAL = "rabi"

    @classmethod
    def parse(cls, v) -> "ActivationVariant":
        if isinstance(v, cls):
            return v
        for m in cls:
            if v in (m.value, m.name, m.name.lower()):
                return m
        raise ValueError(f"unknown variant {v!r}; use one of {[m.value for m in cls]}")


# --- native sub-circuits -----------------------------------------------------


def cnot_moments(control: str, target: str, parked: tuple[str, ...] = ()) -> list[Moment]:
    return [Moment((ry(target, -np.pi / 2),)), Moment((cz(control, target),), parked),
            Moment((ry(target, np.pi / 2),))]


def cc_ix_circuit(controls: Sequence[str], target: str) -> list[Moment]:
    """CC-iX: ``|11>|x> -> i|11> X|x>``, identity on the other control states.

    Built from the commuting product of ``exp(i pi/8 X)``, ``exp(-i pi/8 Z_a X)``,
    ``exp(-i pi/8 Z_b X)`` and ``exp(i pi/8 Z_a Z_b X)`` on the target, each
    Z-string realized by CZ conjugation; adjacent CZ pairs cancel.
    """
    a, b = controls
    if len({a, b, target}) != 3:
        raise ValueError("controls and target must be distinct")
    q = np.pi / 4
    return [
        Moment((rx(target, -q),)),
        Moment((cz(a, target),)),
        Moment((rx(target, q),)),
        Moment((cz(b, target),)),
        Moment((rx(target, -q),)),
        Moment((cz(a, target),)),
        Moment((rx(target, q),)),
        Moment((cz(b, target),)),
    ]


def oracle_circuit(f: str | BooleanFunction, inputs: Sequence[str] = ("I1", "I2"),
                   ancilla: str = "A") -> list[Moment]:
    """``|k l a> -> |k l, a xor f(k,l)>`` with any extra phase depending on ``k, l`` only."""
    f = get_function(f)
    i1, i2 = inputs
    c, a, b, d = f.anf
    ms: list[Moment] = []
    if c:
        ms.append(Moment((rx(ancilla, np.pi),)))
    if a:
        ms.extend(cnot_moments(i1, ancilla, (i2,)))
    if b:
        ms.extend(cnot_moments(i2, ancilla, (i1,)))
    if d:
        ms.extend(cc_ix_circuit((i1, i2), ancilla))
    return ms


def _controlled_rx(control: str, target: str, angle: float, parked: tuple[str, ...]) -> list[Moment]:
    return [Moment((rx(target, angle / 2),)), Moment((cz(control, target),), parked),
            Moment((rx(target, -angle / 2),)), Moment((cz(control, target),), parked)]


def qnn_program(f: str | BooleanFunction, w1: float, w2: float, b: float,
                variant: ActivationVariant | str = ActivationVariant.RUS_SIGMOID, *,
                refocus: bool = True, max_iterations: int = 30) -> RUSProgram:
    f = get_function(f)
    variant = ActivationVariant.parse(variant)
    for v in (w1, w2, b):
        if not np.isfinite(v):
            raise ValueError("parameters must be finite")
    prep = Moment((ry("I1", np.pi / 2), ry("I2", np.pi / 2)))
    if variant is ActivationVariant.RABI_SINUSOIDAL:
        neuron = (_controlled_rx("I1", "A", w1, ("I2",)) + _controlled_rx("I2", "A", w2, ("I1",))
                  + [Moment((rx("A", b),))])
        return RUSProgram(
            qubits=RABI_QUBITS,
            prologue=(prep, *neuron),
            epilogue=tuple(oracle_circuit(f, ("I1", "I2"), "A")),
            final_measure="A",
            phase_qubit=None,
        )
    body = gearbox_body(("I1", "I2"), GearboxParams((w1, w2), b), "A", "O", refocus)
    epilogue = tuple(oracle_circuit(f, ("I1", "I2"), "A")) + tuple(cnot_moments("O", "A"))
    no_corr = variant is ActivationVariant.SINGLE_PASS_NO_CORRECTION
    return RUSProgram(
        qubits=QNN_QUBITS,
        prologue=(prep,),
        body=body,
        ancilla="A",
        correction=() if no_corr else correction_moments("A", "O"),
        epilogue=epilogue,
        max_iterations=1 if no_corr else max_iterations,
        final_measure="A",
        accept_failure=no_corr,
    )


# --- cost and its sweeps -----------------------------------------------------


@dataclass(frozen=True)
class Mode:
    """``Mode()`` is exact; ``Mode("sampled", shots, seed)`` draws trajectories."""

    kind: str = "exact"
    shots: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("exact", "sampled"):
            raise ValueError(f"unknown mode {self.kind!r}")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")

    @property
    def exact(self) -> bool:
        return self.kind == "exact"

    def with_seed(self, seed: int) -> "Mode":
        return Mode(self.kind, self.shots, seed)

    def to_json(self) -> dict:
        return {"kind": self.kind} if self.exact else {"kind": self.kind, "shots": self.shots, "seed": self.seed}


EXACT = Mode()


def cost(f: str | BooleanFunction, params: Sequence[float],
         variant: ActivationVariant | str = ActivationVariant.RUS_SIGMOID,
         model: DeviceNoiseModel | None = None, mode: Mode = EXACT, **kwargs) -> tuple[float, float]:
    """``(<C>, <N_RTS>)`` for one parameter triple ``(w1, w2, b)``."""
    w1, w2, b = params
    prog = qnn_program(f, w1, w2, b, variant, **kwargs)
    model = model or DeviceNoiseModel.ideal()
    if mode.exact:
        res = run_exact(prog, model)
    else:
        res = run_sampled(prog, model, mode.shots, mode.seed)
    return float(res.p_one), float(res.n_rts_mean)


def default_workers() -> int:
    env = os.environ.get("QNN_SIM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _cost_job(args):
    f, p, variant, model, mode = args
    return cost(f, p, variant, model, mode)


def evaluate_many(jobs: Iterable[tuple], workers: int | None = None) -> list[tuple[float, float]]:
    """Evaluate ``(f, params, variant, model, mode)`` tuples, in order."""
    jobs = list(jobs)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) < 2:
        return [_cost_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_cost_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


PARAM_NAMES = ("w1", "w2", "b")


@dataclass
class Landscape:
    axes: tuple[str, str]
    fixed: tuple[str, float]
    x: np.ndarray  # values of axes[0] (radians), columns of the grids
    y: np.ndarray  # values of axes[1] (radians), rows of the grids
    cost: np.ndarray  # shape (len(y), len(x))
    n_rts: np.ndarray

    @property
    def minimum(self) -> tuple[float, float, float]:
        """``(x, y, <C>)`` at the first grid minimum in row-major order."""
        i = int(np.argmin(self.cost))
        r, c = divmod(i, self.cost.shape[1])
        return float(self.x[c]), float(self.y[r]), float(self.cost[r, c])

    def params_at(self, r: int, c: int) -> tuple[float, float, float]:
        p = {self.axes[0]: self.x[c], self.axes[1]: self.y[r], self.fixed[0]: self.fixed[1]}
        return tuple(float(p[k]) for k in PARAM_NAMES)


def landscape_slice(f: str | BooleanFunction, fixed: tuple[str, float], resolution: int = 41,
                    span: tuple[float, float] = (0.0, 2 * np.pi),
                    variant: ActivationVariant | str = ActivationVariant.RUS_SIGMOID,
                    model: DeviceNoiseModel | None = None, mode: Mode = EXACT,
                    workers: int | None = 1) -> Landscape:
    """2-D grid of ``<C>`` and ``<N_RTS>`` with one parameter held at ``fixed``."""
    name, value = fixed
    if name not in PARAM_NAMES:
        raise ValueError(f"fixed parameter must be one of {PARAM_NAMES}")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    axes = tuple(p for p in PARAM_NAMES if p != name)
    grid = np.linspace(span[0], span[1], resolution)
    f = get_function(f)
    model = model or DeviceNoiseModel.ideal()
    land = Landscape(axes, (name, float(value)), grid, grid.copy(),
                     np.zeros((resolution, resolution)), np.zeros((resolution, resolution)))
    jobs = []
    for r in range(resolution):
        for c in range(resolution):
            jobs.append((f.name, land.params_at(r, c), variant, model, mode))
    results = evaluate_many(jobs, workers)
    for k, (cval, nval) in enumerate(results):
        r, c = divmod(k, resolution)
        land.cost[r, c] = cval
        land.n_rts[r, c] = nval
    return land


def specificity_matrix(trained: dict[str, Sequence[float]],
                       variant: ActivationVariant | str = ActivationVariant.RUS_SIGMOID,
                       model: DeviceNoiseModel | None = None, mode: Mode = EXACT,
                       workers: int | None = 1, order: Sequence[str] = FUNCTION_ORDER) -> np.ndarray:
    """``M[i, j]`` is the cost of the parameters trained for ``order[j]`` against oracle ``order[i]``."""
    missing = [n for n in order if n not in trained]
    if missing:
        raise KeyError(f"no trained parameters for: {', '.join(missing)}")
    model = model or DeviceNoiseModel.ideal()
    jobs = [(g, tuple(trained[f]), variant, model, mode) for g in order for f in order]
    vals = evaluate_many(jobs, workers)
    return np.array([c for c, _ in vals]).reshape(len(order), len(order))
