"""Circuit IR with timed moments and repeat-until-success control flow.

A program runs ``prologue``, then loops over ``body`` followed by a
measurement of ``ancilla``. On declared success the state continues through
``epilogue``; on declared failure ``correction`` is applied and the body is
re-run, up to ``max_iterations`` attempts.

Two executors are provided. :func:`run_exact` carries both measurement
branches as unnormalized density matrices and sums the success branches
incoherently. :func:`run_sampled` draws trajectories branch by branch.

Noise is folded in when a segment of moments is compiled against a
:class:`~rusqnn.noise.DeviceNoiseModel`: gate deformations first, then
idle decoherence on every qubit for the moment's duration.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import dm
from .dm import QuantumState
from .gates import (
    CZ_ROLES,
    CZPhaseModel,
    cross_resonant_rotation,
    cz_matrix,
    cz_phase_diagonal,
    nonlinear_drive_angle,
    rotation_matrix,
    wrap_angle,
    zz_phase,
)
from .noise import DeviceNoiseModel, idle_channel, init_with_residual_excitation

ANCILLA = "A"
OUTPUT = "O"

RNG_ALGORITHM = "numpy.random.PCG64"


class TruncationWarning(UserWarning):
    """Too much probability left in the failure branch at the iteration cap."""


@dataclass(frozen=True)
class Gate:
    name: str  # rx, ry, rz or cz
    qubits: tuple[str, ...]
    angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        arity = 2 if self.name == "cz" else 1
        if self.name not in ("rx", "ry", "rz", "cz"):
            raise ValueError(f"unknown gate {self.name!r}")
        if len(self.qubits) != arity or len(set(self.qubits)) != arity:
            raise ValueError(f"{self.name} needs {arity} distinct qubits, got {self.qubits}")
        if not math.isfinite(self.angle):
            raise ValueError("gate angle must be finite")

    def __str__(self):
        if self.name == "cz":
            return f"cz {self.qubits[0]},{self.qubits[1]}"
        return f"{self.name}({math.degrees(self.angle):.6g}) {self.qubits[0]}"


def rx(q: str, angle: float) -> Gate:
    return Gate("rx", (q,), angle)


def ry(q: str, angle: float) -> Gate:
    return Gate("ry", (q,), angle)


def rz(q: str, angle: float) -> Gate:
    return Gate("rz", (q,), angle)


def cz(a: str, b: str) -> Gate:
    return Gate("cz", (a, b))


@dataclass(frozen=True)
class Moment:
    """Gates executed in parallel. ``parked`` qubits are flux-pulsed spectators."""

    gates: tuple[Gate, ...]
    parked: tuple[str, ...] = ()
    duration: float | None = None  # microseconds; None derives it from the model

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "parked", tuple(self.parked))
        seen: set[str] = set()
        for g in self.gates:
            for q in g.qubits:
                if q in seen:
                    raise ValueError(f"qubit {q} appears twice in one moment")
                seen.add(q)
        if seen & set(self.parked):
            raise ValueError("a parked qubit cannot also be driven")

    @property
    def qubits(self) -> set[str]:
        return {q for g in self.gates for q in g.qubits}

    def resolved_duration(self, model: DeviceNoiseModel) -> float:
        if self.duration is not None:
            return self.duration
        names = {g.name for g in self.gates}
        if "cz" in names:
            return model.durations.cz
        if names & {"rx", "ry"}:
            return model.durations.sq
        return 0.0

    def __str__(self):
        s = " | ".join(str(g) for g in self.gates) or "idle"
        if self.parked:
            s += f" ; park {','.join(self.parked)}"
        if self.duration is not None:
            s += f" ; {self.duration * 1e3:g}ns"
        return s


def moments(*layers) -> tuple[Moment, ...]:
    """Build moments from gates or gate tuples; a bare Moment passes through."""
    out = []
    for layer in layers:
        if isinstance(layer, Moment):
            out.append(layer)
        elif isinstance(layer, Gate):
            out.append(Moment((layer,)))
        else:
            out.append(Moment(tuple(layer)))
    return tuple(out)


@dataclass(frozen=True)
class RUSProgram:
    qubits: tuple[str, ...]
    prologue: tuple[Moment, ...] = ()
    body: tuple[Moment, ...] = ()
    ancilla: str | None = None
    correction: tuple[Moment, ...] = ()
    epilogue: tuple[Moment, ...] = ()
    max_iterations: int = 30
    final_measure: str | None = None
    # After the last attempt, send the declared-failure branch on to the
    # epilogue uncorrected instead of truncating it.
    accept_failure: bool = False
    phase_qubit: str | None = OUTPUT

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("qubit names must be unique")
        if not 1 <= len(self.qubits) <= dm.MAX_QUBITS:
            raise ValueError("register size out of range")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for part in ("prologue", "body", "correction", "epilogue"):
            ms = tuple(getattr(self, part))
            object.__setattr__(self, part, ms)
            for m in ms:
                unknown = (m.qubits | set(m.parked)) - set(self.qubits)
                if unknown:
                    raise ValueError(f"{part} uses qubits outside the register: {sorted(unknown)}")
        if self.ancilla is not None and self.ancilla not in self.qubits:
            raise ValueError(f"ancilla {self.ancilla} not in register")
        if self.ancilla is None and (self.body or self.correction):
            raise ValueError("a loop body needs an ancilla to measure")
        if self.final_measure is not None and self.final_measure not in self.qubits:
            raise ValueError(f"final measurement qubit {self.final_measure} not in register")

    def index(self, name: str) -> int:
        return self.qubits.index(name)

    @property
    def has_loop(self) -> bool:
        return self.ancilla is not None

    def dump(self) -> str:
        """Text rendering of the IR, one moment per line."""
        lines = [f"register {' '.join(self.qubits)}"]
        for part in ("prologue", "body", "correction", "epilogue"):
            for i, m in enumerate(getattr(self, part)):
                lines.append(f"{part}[{i}] {m}")
            if part == "body" and self.ancilla is not None:
                lines.append(f"measure {self.ancilla}")
        lines.append(f"max_iterations {self.max_iterations}")
        if self.accept_failure:
            lines.append("accept_failure")
        if self.final_measure is not None:
            lines.append(f"final_measure {self.final_measure}")
        return "\n".join(lines)


# --- compilation -------------------------------------------------------------


@dataclass
class Propagator:
    """A compiled segment: a unitary or, once noise enters, a superoperator."""

    dim: int
    unitary: np.ndarray | None = None
    superop: np.ndarray | None = None

    def apply(self, rho: np.ndarray) -> np.ndarray:
        if self.unitary is not None:
            u = self.unitary
            return u @ rho @ u.conj().T
        if self.superop is not None:
            return (self.superop @ rho.reshape(-1)).reshape(self.dim, self.dim)
        return rho


def _gate_unitary(gate: Gate, qubits: Sequence[str], model: DeviceNoiseModel) -> tuple[np.ndarray, tuple[int, ...]]:
    idx = tuple(qubits.index(q) for q in gate.qubits)
    if gate.name == "cz":
        err = model.cz_error(*gate.qubits)
        if err is None or err.is_zero() or not set(qubits) <= set(CZ_ROLES):
            return cz_matrix(), idx
        pm = CZPhaseModel.ideal_cz(*gate.qubits) + err
        return np.diag(cz_phase_diagonal(pm, qubits)), tuple(range(len(qubits)))
    axis = gate.name[1]
    angle = gate.angle
    if gate.name != "rz" and gate.qubits[0] == ANCILLA:
        angle = nonlinear_drive_angle(wrap_angle(angle), model.f_nl)
        if model.cross_resonance_alpha1 and OUTPUT in qubits:
            op = cross_resonant_rotation(axis, angle, idx[0], qubits.index(OUTPUT), model.cross_resonance_alpha1)
            return op.matrix, op.targets
    return rotation_matrix(axis, angle), idx


def moment_unitary(moment: Moment, qubits: Sequence[str], model: DeviceNoiseModel) -> np.ndarray:
    """Full-register unitary of one moment, including coherent errors."""
    n = len(qubits)
    u = np.eye(2**n, dtype=complex)
    names = {g.name for g in moment.gates}
    driven = {g.qubits[0] for g in moment.gates if g.name in ("rx", "ry")}
    if (model.zz_coupling_ao and ANCILLA in qubits and OUTPUT in qubits
            and driven & {ANCILLA, OUTPUT} and "cz" not in names):
        t = moment.resolved_duration(model)
        u = dm.embed(zz_phase(model.zz_coupling_ao, t), (qubits.index(ANCILLA), qubits.index(OUTPUT)), n) @ u
    # drive on the ancilla goes first: its cross-resonance depends on the output state
    ordered = sorted(moment.gates, key=lambda g: g.qubits[0] != ANCILLA)
    for g in ordered:
        mat, targets = _gate_unitary(g, qubits, model)
        u = dm.embed(mat, targets, n) @ u
    return u


@lru_cache(maxsize=256)
def _idle_superop(t1: float, t2: float, duration: float, suppression: float) -> np.ndarray:
    from .noise import QubitNoiseParams

    return idle_channel(QubitNoiseParams(t1, t2), duration, suppression).superop()


def moment_channels(moment: Moment, qubits: Sequence[str], model: DeviceNoiseModel,
                    duration: float | None = None, skip: Sequence[str] = ()) -> list[tuple[int, np.ndarray]]:
    """Per-qubit idle superoperators for a moment (or an explicit idle ``duration``)."""
    t = moment.resolved_duration(model) if duration is None else duration
    if t <= 0:
        return []
    pulsed = {q for g in moment.gates if g.name == "cz" for q in g.qubits} | set(moment.parked)
    out = []
    for i, q in enumerate(qubits):
        if q in skip:
            continue
        p = model.qubit(q)
        if not p.has_decoherence:
            continue
        s = model.t2_suppression if q in pulsed else 1.0
        out.append((i, _idle_superop(p.t1, p.t2, t, s)))
    return out


def compile_segment(ms: Sequence[Moment], qubits: Sequence[str], model: DeviceNoiseModel,
                    trailing_idle: float = 0.0, idle_skip: Sequence[str] = ()) -> Propagator:
    """Compose a run of moments (plus an optional idle period) into one propagator."""
    n = len(qubits)
    d = 2**n
    u = np.eye(d, dtype=complex)
    stack = None
    steps = [(m, None) for m in ms]
    if trailing_idle > 0:
        steps.append((Moment(()), trailing_idle))
    for m, idle in steps:
        if m.gates:
            mu = moment_unitary(m, qubits, model)
            if stack is None:
                u = mu @ u
            else:
                stack = dm._stack_unitary(stack, mu)
        chans = moment_channels(m, qubits, model, duration=idle, skip=idle_skip if idle else ())
        if chans and stack is None:
            # basis stack: stack[:, c, :] is the image of the c-th matrix unit
            basis = np.eye(d * d, dtype=complex).reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d, d * d, d)
            stack = dm._stack_unitary(np.ascontiguousarray(basis), u)
        if chans:
            stack = dm._stack_channels(stack, chans, n)
    if stack is None:
        return Propagator(d, unitary=u)
    return Propagator(d, superop=np.ascontiguousarray(stack.transpose(0, 2, 1).reshape(d * d, d * d)))


@dataclass
class CompiledProgram:
    program: RUSProgram
    model: DeviceNoiseModel
    prologue: Propagator
    body: Propagator
    correction: Propagator
    epilogue: Propagator
    initial: np.ndarray

    @property
    def n(self) -> int:
        return len(self.program.qubits)


def compile_program(program: RUSProgram, model: DeviceNoiseModel) -> CompiledProgram:
    q = program.qubits
    meas_idle = model.durations.meas + model.durations.feedback if program.has_loop else 0.0
    skip = (program.ancilla,) if program.ancilla else ()
    init = init_with_residual_excitation([model.qubit(name).residual_excitation for name in q])
    return CompiledProgram(
        program=program,
        model=model,
        prologue=compile_segment(program.prologue, q, model),
        body=compile_segment(program.body, q, model, trailing_idle=meas_idle, idle_skip=skip),
        correction=compile_segment(program.correction, q, model),
        epilogue=compile_segment(program.epilogue, q, model),
        initial=init.matrix,
    )


# --- execution ---------------------------------------------------------------


@dataclass(frozen=True)
class ShotRecord:
    outcome: int | None  # declared final bit; None if the shot hit the iteration cap
    n_rts: int


@dataclass
class RunResult:
    p_one: float | None
    state: QuantumState | None
    success_weights: tuple[float, ...]
    truncated_weight: float
    n_rts_mean: float
    shots: list[ShotRecord] | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def expectations(self) -> dict[str, float]:
        out = {}
        if self.p_one is not None:
            out["p_one"] = self.p_one
            out["z"] = 1 - 2 * self.p_one
        return out

    @property
    def stderr(self) -> float | None:
        """Binomial standard error of ``p_one`` for sampled runs."""
        if self.shots is None or self.p_one is None:
            return None
        m = sum(1 for s in self.shots if s.outcome is not None)
        return math.sqrt(max(self.p_one * (1 - self.p_one), 0.0) / max(m, 1))


def _split(rho: np.ndarray, qubit: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    m0, m1 = dm.projectors(qubit, n)
    return rho * np.outer(m0, m0), rho * np.outer(m1, m1)


def _phase_kicks(cp: CompiledProgram) -> tuple[np.ndarray | None, np.ndarray | None]:
    prog, model = cp.program, cp.model
    if prog.phase_qubit is None or prog.phase_qubit not in prog.qubits:
        return None, None
    i = prog.index(prog.phase_qubit)
    out = []
    for phi in (model.meas_phase_0, model.meas_phase_1):
        out.append(None if phi == 0 else dm.embed(rotation_matrix("z", phi), (i,), cp.n))
    return out[0], out[1]


def _kick(rho: np.ndarray, u: np.ndarray | None) -> np.ndarray:
    return rho if u is None else u @ rho @ u.conj().T


def _final_p_one(cp: CompiledProgram, rho: np.ndarray) -> float | None:
    """Probability of declaring 1 on the final measurement of a normalized state."""
    prog = cp.program
    if prog.final_measure is None:
        return None
    _, m1 = dm.projectors(prog.index(prog.final_measure), cp.n)
    p1 = float(np.real(np.sum(np.diag(rho)[m1])))
    p1 = min(max(p1, 0.0), 1.0)
    flip = cp.model.qubit(prog.final_measure).readout_misclassification
    return (1 - flip) * p1 + flip * (1 - p1)


def _default_threshold(model: DeviceNoiseModel) -> float:
    return 1e-4 if model.is_ideal else 1e-2


def run_exact(program: RUSProgram, model: DeviceNoiseModel | None = None, *,
              truncation_threshold: float | None = None, tail_cutoff: float = 1e-16,
              compiled: CompiledProgram | None = None) -> RunResult:
    """Deterministic branch-sum execution.

    Success branches from every attempt are summed incoherently. Whatever
    weight is still in the failure branch after ``max_iterations`` attempts
    (or once it drops below ``tail_cutoff``) is reported as
    ``truncated_weight`` and excluded from expectations.
    """
    model = model or DeviceNoiseModel.ideal()
    cp = compiled or compile_program(program, model)
    n = cp.n
    rho = cp.prologue.apply(cp.initial)
    if not program.has_loop:
        out = cp.epilogue.apply(rho)
        tr = float(np.real(np.trace(out)))
        state = QuantumState(n, out / tr)
        return RunResult(_final_p_one(cp, state.matrix), state, (tr,), 0.0, 1.0)

    a = program.index(program.ancilla)
    flip = model.qubit(program.ancilla).readout_misclassification
    k0, k1 = _phase_kicks(cp)
    acc = np.zeros_like(rho)
    weights = []
    fail = rho
    for it in range(1, program.max_iterations + 1):
        r0, r1 = _split(cp.body.apply(fail), a, n)
        r0, r1 = _kick(r0, k0), _kick(r1, k1)
        succ = (1 - flip) * r0 + flip * r1
        fail = (1 - flip) * r1 + flip * r0
        if it == program.max_iterations and program.accept_failure:
            succ, fail = succ + fail, np.zeros_like(fail)
        weights.append(float(np.real(np.trace(succ))))
        acc = acc + succ
        tail = float(np.real(np.trace(fail)))
        if it == program.max_iterations or tail < tail_cutoff:
            break
        fail = cp.correction.apply(fail)
    truncated = max(tail, 0.0)
    total = sum(weights)
    threshold = _default_threshold(model) if truncation_threshold is None else truncation_threshold
    if truncated > threshold:
        warnings.warn(f"{truncated:.3g} of the probability remains in the failure branch after "
                      f"{len(weights)} attempts", TruncationWarning, stacklevel=2)
    if total <= 0:
        return RunResult(None, None, tuple(weights), truncated, float("nan"))
    # the epilogue is linear, so one application covers every attempt
    state = QuantumState(n, cp.epilogue.apply(acc) / total)
    n_rts = sum((i + 1) * w for i, w in enumerate(weights)) / total
    return RunResult(_final_p_one(cp, state.matrix), state, tuple(weights), truncated, n_rts)


def run_sampled(program: RUSProgram, model: DeviceNoiseModel | None, shots: int, seed: int, *,
                compiled: CompiledProgram | None = None) -> RunResult:
    """Monte-Carlo execution, one trajectory per shot.

    At every mid-circuit measurement the collapse outcome is drawn with
    probability given by the branch trace, the state is renormalized, and the
    declared outcome is flipped with the readout misclassification
    probability. Deterministic evolution between draws is cached per
    measurement history, so the cost per shot is a handful of draws.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    model = model or DeviceNoiseModel.ideal()
    cp = compiled or compile_program(program, model)
    rng = np.random.Generator(np.random.PCG64(seed))
    n = cp.n
    root = cp.prologue.apply(cp.initial)
    meta = {"rng": RNG_ALGORITHM, "seed": seed, "shots": shots}

    if not program.has_loop:
        p_final = _final_p_one(cp, cp.epilogue.apply(root))
        records = [ShotRecord(int(rng.random() < p_final) if p_final is not None else 0, 1) for _ in range(shots)]
        p = sum(r.outcome for r in records) / shots if p_final is not None else None
        return RunResult(p, None, (1.0,), 0.0, 1.0, records, meta)

    a = program.index(program.ancilla)
    flip = model.qubit(program.ancilla).readout_misclassification
    k0, k1 = _phase_kicks(cp)

    # history -> (p1 of collapse, normalized branch states)
    split_cache: dict[tuple[int, ...], tuple[float, np.ndarray, np.ndarray]] = {}
    final_cache: dict[tuple[int, ...], float | None] = {}
    retry_cache: dict[tuple[int, ...], np.ndarray] = {(): root}

    def branches(hist):
        if hist not in split_cache:
            r0, r1 = _split(cp.body.apply(retry_cache[hist]), a, n)
            t0, t1 = float(np.real(np.trace(r0))), float(np.real(np.trace(r1)))
            p1 = t1 / (t0 + t1)
            r0 = _kick(r0 / t0, k0) if t0 > 0 else r0
            r1 = _kick(r1 / t1, k1) if t1 > 0 else r1
            split_cache[hist] = (p1, r0, r1)
        return split_cache[hist]

    def final_p(hist, rho):
        if hist not in final_cache:
            final_cache[hist] = _final_p_one(cp, cp.epilogue.apply(rho))
        return final_cache[hist]

    records = []
    for _ in range(shots):
        hist: tuple[int, ...] = ()
        record = None
        for it in range(1, program.max_iterations + 1):
            p1, r0, r1 = branches(hist)
            actual = int(rng.random() < p1)
            declared = actual ^ int(rng.random() < flip)
            key = hist + (actual,)
            if declared == 0 or (it == program.max_iterations and program.accept_failure):
                pf = final_p(key, r1 if actual else r0)
                bit = int(rng.random() < pf) if pf is not None else 0
                record = ShotRecord(bit, it)
                break
            if it == program.max_iterations:
                record = ShotRecord(None, it)
                break
            if key not in retry_cache:
                retry_cache[key] = cp.correction.apply(r1 if actual else r0)
            hist = key
        records.append(record)

    done = [r for r in records if r.outcome is not None]
    truncated = (len(records) - len(done)) / shots
    counts = np.bincount([r.n_rts for r in done], minlength=program.max_iterations + 1)[1:]
    weights = tuple(float(c) / shots for c in counts)
    if not done:
        return RunResult(None, None, weights, truncated, float("nan"), records, meta)
    p = sum(r.outcome for r in done) / len(done) if program.final_measure is not None else None
    n_rts = sum(r.n_rts for r in done) / len(done)
    return RunResult(p, None, weights, truncated, n_rts, records, meta)


def single_pass(program: RUSProgram, model: DeviceNoiseModel | None = None) -> tuple[QuantumState, QuantumState]:
    """Run prologue and one body pass; return declared (success, failure) states, unnormalized.

    The measurement-induced phase and readout misclassification are applied
    exactly as in the loop executors.
    """
    if not program.has_loop:
        raise ValueError("program has no measured body")
    model = model or DeviceNoiseModel.ideal()
    cp = compile_program(program, model)
    n = cp.n
    a = program.index(program.ancilla)
    flip = model.qubit(program.ancilla).readout_misclassification
    k0, k1 = _phase_kicks(cp)
    r0, r1 = _split(cp.body.apply(cp.prologue.apply(cp.initial)), a, n)
    r0, r1 = _kick(r0, k0), _kick(r1, k1)
    return QuantumState(n, (1 - flip) * r0 + flip * r1), QuantumState(n, (1 - flip) * r1 + flip * r0)


def run_moments(ms: Sequence[Moment], qubits: Sequence[str], state: QuantumState,
                model: DeviceNoiseModel | None = None) -> QuantumState:
    """Apply moments one at a time through the state-level kernel (no compilation)."""
    model = model or DeviceNoiseModel.ideal()
    qubits = tuple(qubits)
    for m in ms:
        if m.gates:
            state = dm.apply_unitary(state, dm.UnitaryOp(tuple(range(len(qubits))), moment_unitary(m, qubits, model)))
        for q, sop in moment_channels(m, qubits, model):
            state = QuantumState(state.num_qubits, dm._channel_local(state.matrix, sop, q, len(qubits)))
    return state
