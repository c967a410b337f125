"""Conditional gearbox circuit: builder, analytic activation, conditional tomography.

On success the circuit rotates the output about x by ``g(theta)`` where
``theta = sum_i k_i w_i + b`` for input bits ``k_i``. On failure it applies
``R_x(-pi/2)`` to the output regardless of the inputs, which the correction
sub-circuit undoes before the next attempt.

Native compilation used here, per input qubit ``i``::

    R_y(b + w_i/2)_A  CZ(i, A)  R_y(-w_i/2)_A  CZ(i, A)     controlled R_y(w_i)
    R_y(-pi/2)_O  CZ(A, O)  R_y(pi/2)_O R_z(-pi/2)_A        controlled (-iX) onto output
    ... the controlled R_y blocks again, reversed, undoing theta on A ...

With ``refocus=True`` every controlled-R_y block carries an ``R_x(pi)`` on
the output between its two CZs. The pulses come in pairs, so they compile
to the identity in the ideal case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import ANCILLA, OUTPUT, Moment, RUSProgram, cz, rx, ry, rz, single_pass
from .dm import pauli_and_purity
from .noise import DeviceNoiseModel


def activation_g(theta):
    """``2 arctan(tan^2(theta/2))``, continuous through odd multiples of pi."""
    half = np.asarray(theta, dtype=float) / 2
    out = 2 * np.arctan2(np.sin(half) ** 2, np.cos(half) ** 2)
    return float(out) if np.ndim(out) == 0 else out


def success_probability(theta):
    half = np.asarray(theta, dtype=float) / 2
    out = np.cos(half) ** 4 + np.sin(half) ** 4
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GearboxParams:
    weights: tuple[float, ...]
    bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not 1 <= len(self.weights) <= 2:
            raise ValueError("the gearbox takes one or two input weights")
        if not all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ValueError("angles must be finite")

    def theta(self, bits: Sequence[int]) -> float:
        return float(sum(k * w for k, w in zip(bits, self.weights)) + self.bias)


def _controlled_ry(control: str, ancilla: str, angle: float, parked: tuple[str, ...],
                   refocus: str | None, reverse: bool = False) -> list[Moment]:
    mid = [ry(ancilla, -angle / 2 if not reverse else angle / 2)]
    if refocus:
        mid.append(rx(refocus, np.pi))
    out = [Moment((cz(control, ancilla),), parked), Moment(tuple(mid)), Moment((cz(control, ancilla),), parked)]
    return out


def gearbox_body(inputs: Sequence[str], params: GearboxParams, ancilla: str = ANCILLA,
                 output: str = OUTPUT, refocus: bool = True) -> tuple[Moment, ...]:
    inputs = tuple(inputs)
    if len(inputs) != len(params.weights):
        raise ValueError("one weight per input qubit")
    roles = inputs + (ancilla, output)
    if len(set(roles)) != len(roles):
        raise ValueError(f"qubit roles collide: {roles}")
    pulse = output if refocus else None

    def parked(i):
        return tuple(q for q in inputs if q != i)

    ms: list[Moment] = []
    # forward: theta onto the ancilla
    lead = params.bias
    for i, w in zip(inputs, params.weights):
        ms.append(Moment((ry(ancilla, lead + w / 2),)))
        ms.extend(_controlled_ry(i, ancilla, w, parked(i), pulse))
        lead = 0.0
    # controlled -iX from ancilla onto output
    ms.append(Moment((ry(output, -np.pi / 2),)))
    ms.append(Moment((cz(ancilla, output),)))
    ms.append(Moment((ry(output, np.pi / 2), rz(ancilla, -np.pi / 2))))
    # reverse: undo theta on the ancilla
    rev = list(zip(inputs, params.weights))[::-1]
    for j, (i, w) in enumerate(rev):
        ms.extend(_controlled_ry(i, ancilla, w, parked(i), pulse, reverse=True))
        tail = -w / 2 - (params.bias if j == len(rev) - 1 else 0.0)
        ms.append(Moment((ry(ancilla, tail),)))
    return tuple(ms)


def correction_moments(ancilla: str = ANCILLA, output: str = OUTPUT) -> tuple[Moment, ...]:
    return (Moment((rx(ancilla, np.pi), rx(output, np.pi / 2))),)


_PREP = {
    "0": (),
    "1": (("rx", np.pi),),
    "plus": (("ry", np.pi / 2),),
}


def prep_moments(preps: dict[str, str]) -> tuple[Moment, ...]:
    """One moment preparing each named qubit in ``0``, ``1`` or ``plus``."""
    gates = []
    for q, label in preps.items():
        try:
            steps = _PREP[label]
        except KeyError:
            raise ValueError(f"unknown input preparation {label!r}; use one of {sorted(_PREP)}") from None
        for axis, angle in steps:
            gates.append((rx if axis == "rx" else ry)(q, angle))
    return (Moment(tuple(gates)),) if gates else ()


def build_gearbox(inputs: Sequence[str], ancilla: str, output: str, params: GearboxParams, *,
                  input_prep: dict[str, str] | None = None, refocus: bool = True,
                  max_iterations: int = 30) -> RUSProgram:
    inputs = tuple(inputs)
    body = gearbox_body(inputs, params, ancilla, output, refocus)
    return RUSProgram(
        qubits=inputs + (ancilla, output),
        prologue=prep_moments(input_prep or {}),
        body=body,
        ancilla=ancilla,
        correction=correction_moments(ancilla, output),
        max_iterations=max_iterations,
        phase_qubit=output,
    )


@dataclass(frozen=True)
class BranchTomography:
    probability: float
    x: float
    y: float
    z: float
    purity: float


def conditional_tomography(params: GearboxParams, input_prep: str | dict[str, str] = "1",
                           model: DeviceNoiseModel | None = None, *, inputs: Sequence[str] = ("I1",),
                           ancilla: str = ANCILLA, output: str = OUTPUT, refocus: bool = True,
                           allow_empty: bool = False) -> dict[str, BranchTomography]:
    """Output-qubit Bloch vector and purity after one pass, per declared branch.

    With ``allow_empty`` a branch of vanishing weight reports NaN components
    instead of raising.
    """
    inputs = tuple(inputs)
    preps = {q: input_prep for q in inputs} if isinstance(input_prep, str) else dict(input_prep)
    prog = build_gearbox(inputs, ancilla, output, params, input_prep=preps, refocus=refocus, max_iterations=1)
    succ, fail = single_pass(prog, model)
    o = prog.index(output)
    out = {}
    for name, st in (("success", succ), ("failure", fail)):
        p = st.trace
        if p < 1e-14:
            if not allow_empty:
                raise ValueError(f"{name} branch has vanishing weight {p:.3g}")
            out[name] = BranchTomography(p, *(float("nan"),) * 4)
            continue
        out[name] = BranchTomography(p, *pauli_and_purity(st, o))
    return out
