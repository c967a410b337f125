"""Native gates (R_x, R_y, R_z, CZ) and the coherent imperfections that deform them."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dm import PAULI_X, PAULI_Y, PAULI_Z, UnitaryOp

_GENERATORS = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}

# Register roles of the CZ phase model, in the order its terms are written.
CZ_ROLES = ("A", "I2", "I1", "O")


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    try:
        gen = _GENERATORS[axis]
    except KeyError:
        raise ValueError(f"unknown rotation axis {axis!r}") from None
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * gen


def rotation_gate(axis: str, angle: float, qubit: int) -> UnitaryOp:
    return UnitaryOp((qubit,), rotation_matrix(axis, angle))


def cz_matrix() -> np.ndarray:
    return np.diag([1, 1, 1, -1]).astype(complex)


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    w = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    return float(np.pi if w == -np.pi else w)


def _term_key(term) -> frozenset:
    if isinstance(term, str):
        names = [t.strip() for t in term.replace("+", ",").split(",") if t.strip()]
    else:
        names = list(term)
    key = frozenset(names)
    if not key or not key <= set(CZ_ROLES) or len(key) != len(names):
        raise ValueError(f"invalid Z-string term {term!r}; use roles from {CZ_ROLES}")
    return key


def all_terms() -> list[frozenset]:
    """The fifteen Z-strings over the four roles (singles, pairs, triples, all four)."""
    out = []
    for r in range(1, 5):
        out.extend(frozenset(c) for c in itertools.combinations(CZ_ROLES, r))
    return out


@dataclass(frozen=True)
class CZPhaseModel:
    """Phase angles (radians) of the fifteen commuting Z-string exponentials.

    ``angles`` maps a frozenset of roles to its angle; missing terms are zero.
    """

    angles: Mapping[frozenset, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for k, v in dict(self.angles).items():
            key = _term_key(k)
            if not np.isfinite(v):
                raise ValueError(f"angle for {sorted(key)} is not finite")
            clean[key] = clean.get(key, 0.0) + float(v)
        object.__setattr__(self, "angles", clean)

    @classmethod
    def from_terms(cls, **kwargs) -> "CZPhaseModel":
        """``CZPhaseModel.from_terms(A_O=0.1, O=-0.2)`` style constructor."""
        return cls({frozenset(k.split("_")): v for k, v in kwargs.items()})

    @classmethod
    def ideal_cz(cls, a: str, b: str) -> "CZPhaseModel":
        """Angles reproducing diag(1, 1, 1, -1) on roles ``a``, ``b`` up to global phase."""
        return cls({frozenset([a]): -np.pi / 2, frozenset([b]): -np.pi / 2, frozenset([a, b]): np.pi / 2})

    def __add__(self, other: "CZPhaseModel") -> "CZPhaseModel":
        out = dict(self.angles)
        for k, v in other.angles.items():
            out[k] = out.get(k, 0.0) + v
        return CZPhaseModel(out)

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.angles.values())


def cz_phase_diagonal(model: CZPhaseModel, roles: Sequence[str]) -> np.ndarray:
    """Diagonal of the phase unitary over the qubits named in ``roles``.

    Roles of the model that are absent from ``roles`` are taken to sit in
    ``|0>`` (Z eigenvalue +1), so their factors drop out of every term.
    """
    n = len(roles)
    idx = np.arange(2**n)
    z = {r: 1 - 2 * ((idx >> (n - 1 - i)) & 1) for i, r in enumerate(roles)}
    phase = np.zeros(2**n)
    for term, theta in model.angles.items():
        zs = np.ones(2**n)
        for r in term:
            if r in z:
                zs = zs * z[r]
        phase += theta * zs
    return np.exp(-0.5j * phase)


def cz_from_phase_model(model: CZPhaseModel, targets: Sequence[int] = (0, 1, 2, 3),
                        roles: Sequence[str] = CZ_ROLES) -> UnitaryOp:
    return UnitaryOp(tuple(targets), np.diag(cz_phase_diagonal(model, roles)))


def nonlinear_drive_angle(theta: float, f_nl: float | None) -> float:
    """Effective rotation angle under the third-order drive non-linearity.

    ``f_nl=None`` (or infinity) is the ideal, linear drive.
    """
    if f_nl is None or np.isinf(f_nl):
        return float(theta)
    if f_nl <= 1:
        raise ValueError(f"non-linearity factor must exceed 1, got {f_nl}")
    return float(np.pi * np.sin(theta / f_nl) / np.sin(np.pi / f_nl))


def cross_resonant_rotation(axis: str, angle: float, target: int, spectator: int,
                            alpha1: float, alpha0: float = 0.0) -> UnitaryOp:
    """Rotation on ``target`` whose angle is scaled by ``1 + alpha_k`` with ``k`` the spectator bit.

    The returned op acts on ``(spectator, target)`` so its matrix is block
    diagonal in the spectator state.
    """
    if axis not in ("x", "y"):
        raise ValueError("cross-resonance scaling only applies to x and y rotations")
    u = np.zeros((4, 4), dtype=complex)
    u[:2, :2] = rotation_matrix(axis, angle * (1 + alpha0))
    u[2:, 2:] = rotation_matrix(axis, angle * (1 + alpha1))
    return UnitaryOp((spectator, target), u)


def zz_phase(j_coupling: float, duration: float) -> np.ndarray:
    return np.diag([1, 1, 1, np.exp(-1j * j_coupling * duration)])


def zz_coupled_gate(gate: UnitaryOp, partner: int, j_coupling: float, duration: float) -> UnitaryOp:
    """First-order Trotter product of ``gate`` with ``exp(-i J t |11><11|)``.

    ``gate`` may act on one qubit or on the pair itself; the result acts on
    ``(qubit, partner)`` for single-qubit gates and on ``gate.targets`` otherwise.
    The ZZ factor is applied first, then the gate.
    """
    if j_coupling < 0 or duration < 0:
        raise ValueError("coupling and duration must be non-negative")
    if len(gate.targets) == 1:
        targets = (gate.targets[0], partner)
        g = np.kron(gate.matrix, np.eye(2))
    elif len(gate.targets) == 2 and partner in gate.targets:
        targets = gate.targets
        g = gate.matrix
    else:
        raise ValueError("gate must act on one qubit of the coupled pair, or on the pair")
    return UnitaryOp(targets, g @ zz_phase(j_coupling, duration))

