"""Dense density-matrix kernel.

Qubit 0 is the most significant bit of the computational-basis label, so a
register ``(q0, q1, q2)`` in state ``|1 0 0>`` has matrix index 4.

All rotations follow ``R_a(theta) = exp(-i theta sigma_a / 2)``.

States may be unnormalized: the trace of a post-measurement branch is the
probability of the measurement history that produced it.

The ``_stack_*`` kernels act on a (d, B, d) stack of B matrices at once. The
executor pushes a whole operator basis through a circuit segment this way to
compile it into a superoperator.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_QUBITS = 5

HERMITIAN_ATOL = 1e-12
PSD_ATOL = 1e-10
TP_ATOL = 1e-10
UNITARY_ATOL = 1e-10

# PSD checks need an eigensolve per state; only run them when asked.
DEBUG = os.environ.get("RUSQNN_DEBUG", "") not in ("", "0")

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class QuantumState:
    num_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise ValueError(f"register size must be in 1..{MAX_QUBITS}, got {self.num_qubits}")
        dim = 2**self.num_qubits
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match {self.num_qubits} qubits")
        if DEBUG:
            validate(self)

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    @classmethod
    def zero(cls, num_qubits: int) -> "QuantumState":
        dim = 2**num_qubits
        m = np.zeros((dim, dim), dtype=complex)
        m[0, 0] = 1.0
        return cls(num_qubits, m)

    @classmethod
    def from_vector(cls, psi) -> "QuantumState":
        psi = np.asarray(psi, dtype=complex).ravel()
        n = int(round(np.log2(psi.size)))
        return cls(n, np.outer(psi, psi.conj()))

    @classmethod
    def product(cls, single_qubit: Sequence[np.ndarray]) -> "QuantumState":
        m = np.ones((1, 1), dtype=complex)
        for r in single_qubit:
            m = np.kron(m, np.asarray(r, dtype=complex))
        return cls(len(single_qubit), m)

    def normalized(self) -> "QuantumState":
        tr = self.trace
        if tr < 1e-14:
            raise ValueError("cannot normalize a state with vanishing trace")
        return QuantumState(self.num_qubits, self.matrix / tr)

    def scaled(self, factor: float) -> "QuantumState":
        return QuantumState(self.num_qubits, self.matrix * factor)

    def __add__(self, other: "QuantumState") -> "QuantumState":
        if other.num_qubits != self.num_qubits:
            raise ValueError("register size mismatch")
        return QuantumState(self.num_qubits, self.matrix + other.matrix)


@dataclass(frozen=True)
class UnitaryOp:
    targets: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        _check_targets(self.targets)
        dim = 2 ** len(self.targets)
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"matrix shape {self.matrix.shape} does not fit {len(self.targets)} targets")
        err = np.max(np.abs(self.matrix.conj().T @ self.matrix - np.eye(dim)))
        if err > UNITARY_ATOL:
            raise ValueError(f"matrix is not unitary (max deviation {err:.2e})")

    def dagger(self) -> "UnitaryOp":
        return UnitaryOp(self.targets, self.matrix.conj().T)


@dataclass(frozen=True)
class KrausChannel:
    targets: tuple[int, ...]
    operators: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "operators", tuple(np.asarray(k, dtype=complex) for k in self.operators))
        _check_targets(self.targets)
        dim = 2 ** len(self.targets)
        if not self.operators:
            raise ValueError("channel needs at least one Kraus operator")
        acc = np.zeros((dim, dim), dtype=complex)
        for k in self.operators:
            if k.shape != (dim, dim):
                raise ValueError(f"Kraus operator shape {k.shape} does not fit {len(self.targets)} targets")
            acc += k.conj().T @ k
        err = np.max(np.abs(acc - np.eye(dim)))
        if err > TP_ATOL:
            raise ValueError(f"channel is not trace preserving (max deviation {err:.2e})")

    def superop(self) -> np.ndarray:
        """Local superoperator ``L[i, j, k, l]`` with ``out_ij = sum L_ijkl in_kl``."""
        return superop_from_kraus(self.operators)

    def compose(self, other: "KrausChannel") -> "KrausChannel":
        """Channel applying ``self`` first, then ``other`` (same targets)."""
        if other.targets != self.targets:
            raise ValueError("can only compose channels on identical targets")
        return KrausChannel(self.targets, tuple(b @ a for a in self.operators for b in other.operators))


@dataclass(frozen=True)
class MeasurementSplit:
    outcome0: QuantumState
    outcome1: QuantumState

    @property
    def p0(self) -> float:
        return self.outcome0.trace

    @property
    def p1(self) -> float:
        return self.outcome1.trace


def _check_targets(targets: tuple[int, ...]) -> None:
    if len(set(targets)) != len(targets):
        raise ValueError(f"targets must be distinct: {targets}")
    if any(t < 0 for t in targets):
        raise ValueError(f"negative target in {targets}")


def _check_range(targets: Sequence[int], n: int) -> None:
    for t in targets:
        if not 0 <= t < n:
            raise IndexError(f"qubit {t} outside register of {n} qubits")


# --- array kernels -----------------------------------------------------------


def _apply_on_axes(t: np.ndarray, op: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    k = len(axes)
    opt = op.reshape((2,) * (2 * k))
    out = np.tensordot(opt, t, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def _unitary_local(rho: np.ndarray, u: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    dim = 2**n
    batch = rho.shape[2:]
    t = rho.reshape((2,) * (2 * n) + batch)
    t = _apply_on_axes(t, u, targets)
    t = _apply_on_axes(t, u.conj(), [n + q for q in targets])
    return t.reshape((dim, dim) + batch)


def _unitary_full(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    return u @ rho @ u.conj().T


def _stack_unitary(stack: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``U X U^dagger`` for every ``X = stack[:, b, :]`` of a (d, B, d) stack."""
    d, b, _ = stack.shape
    out = (u @ stack.reshape(d, b * d)).reshape(d * b, d) @ u.conj().T
    return out.reshape(d, b, d)


def _local_superop_apply(t: np.ndarray, superop: np.ndarray, row_ax: int, col_ax: int) -> np.ndarray:
    """Apply a one-qubit superoperator to the (row_ax, col_ax) index pair of ``t``.

    Works through strided slices and skips zero entries, which for the
    sparse idle channels is far cheaper than a full tensor contraction.
    """
    def sl(r, c):
        idx = [slice(None)] * t.ndim
        idx[row_ax], idx[col_ax] = r, c
        return tuple(idx)

    src = {(k, l): t[sl(k, l)] for k in (0, 1) for l in (0, 1)}
    out = np.empty_like(t)
    for r in (0, 1):
        for c in (0, 1):
            acc = None
            for (k, l), v in src.items():
                coef = superop[r, c, k, l]
                if coef == 0:
                    continue
                term = v if coef == 1 else coef * v
                acc = term.copy() if acc is None else acc + term
            out[sl(r, c)] = 0 if acc is None else acc
    return out


def _channel_local(rho: np.ndarray, superop: np.ndarray, qubit: int, n: int) -> np.ndarray:
    dim = 2**n
    t = rho.reshape((2,) * (2 * n))
    return _local_superop_apply(t, superop, qubit, n + qubit).reshape(dim, dim)


def _stack_channel(stack: np.ndarray, superop: np.ndarray, qubit: int, n: int) -> np.ndarray:
    d, b, _ = stack.shape
    t = stack.reshape((2,) * n + (b,) + (2,) * n)
    return _local_superop_apply(t, superop, qubit, n + 1 + qubit).reshape(d, b, d)


def _is_damping_form(superop: np.ndarray) -> bool:
    """True when the only cross-element term moves population from |1> to |0>."""
    mask = np.zeros((2, 2, 2, 2), dtype=bool)
    for r, c in ((0, 0), (0, 1), (1, 0), (1, 1)):
        mask[r, c, r, c] = True
    mask[0, 0, 1, 1] = True
    return not np.any(superop[~mask])


def _stack_channels(stack: np.ndarray, channels: Sequence[tuple[int, np.ndarray]], n: int) -> np.ndarray:
    """Apply one-qubit channels on distinct qubits to a (d, B, d) stack.

    Channels of damping form split into a transfer ``00 += g * 11`` and an
    elementwise scaling. Scalings on different qubits commute with each other
    and with the transfers, so all of them fold into a single mask multiply.
    Any other channel is applied up front through the generic slice kernel.
    """
    if len({q for q, _ in channels}) != len(channels):
        raise ValueError("channels must act on distinct qubits")
    damping = []
    for q, sop in channels:
        if _is_damping_form(sop):
            damping.append((q, sop))
        else:
            stack = _stack_channel(stack, sop, q, n)
    if not damping:
        return stack
    d, b, _ = stack.shape
    shape = (2,) * n + (b,) + (2,) * n
    out = stack.reshape(shape).copy()
    scale = np.ones((2,) * n + (1,) + (2,) * n, dtype=complex)
    for q, sop in damping:
        g = sop[0, 0, 1, 1]
        if g != 0:
            dst = [slice(None)] * len(shape)
            src = list(dst)
            dst[q], dst[n + 1 + q] = 0, 0
            src[q], src[n + 1 + q] = 1, 1
            out[tuple(dst)] += g * out[tuple(src)]
        local = np.array([[sop[0, 0, 0, 0], sop[0, 1, 0, 1]], [sop[1, 0, 1, 0], sop[1, 1, 1, 1]]])
        view = [1] * len(shape)
        view[q], view[n + 1 + q] = 2, 2
        scale = scale * local.reshape(view)
    out *= scale
    return out.reshape(d, b, d)


def superop_from_kraus(operators: Sequence[np.ndarray]) -> np.ndarray:
    k0 = operators[0]
    dim = k0.shape[0]
    acc = np.zeros((dim, dim, dim, dim), dtype=complex)
    for k in operators:
        acc += np.einsum("ik,jl->ijkl", k, k.conj())
    return acc


def embed(matrix: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Full ``2^n x 2^n`` matrix acting as ``matrix`` on ``targets``."""
    _check_range(targets, n)
    dim = 2**n
    eye = np.eye(dim, dtype=complex).reshape((2,) * (2 * n))
    return _apply_on_axes(eye, matrix, targets).reshape(dim, dim)


# --- state operations --------------------------------------------------------


def apply_unitary(state: QuantumState, op: UnitaryOp) -> QuantumState:
    n = state.num_qubits
    _check_range(op.targets, n)
    m = _unitary_local(state.matrix, op.matrix, op.targets, n)
    return QuantumState(n, m)


def apply_kraus(state: QuantumState, channel: KrausChannel) -> QuantumState:
    n = state.num_qubits
    _check_range(channel.targets, n)
    m = np.zeros_like(state.matrix)
    for k in channel.operators:
        m = m + _unitary_local(state.matrix, k, channel.targets, n)
    return QuantumState(n, m)


def projectors(qubit: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals (as boolean masks) of ``|0><0|`` and ``|1><1|`` on ``qubit``."""
    idx = np.arange(2**n)
    bit = (idx >> (n - 1 - qubit)) & 1
    return bit == 0, bit == 1


def measure_split(state: QuantumState, qubit: int) -> MeasurementSplit:
    n = state.num_qubits
    _check_range([qubit], n)
    m0, m1 = projectors(qubit, n)
    r0 = state.matrix * np.outer(m0, m0)
    r1 = state.matrix * np.outer(m1, m1)
    return MeasurementSplit(QuantumState(n, r0), QuantumState(n, r1))


def partial_trace(state: QuantumState, keep: Sequence[int]) -> QuantumState:
    n = state.num_qubits
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must be nonempty")
    _check_range(keep, n)
    drop = [q for q in range(n) if q not in keep]
    t = state.matrix.reshape((2,) * (2 * n))
    # trace out from the highest axis down so lower axis numbers stay valid
    cur = n
    for q in sorted(drop, reverse=True):
        t = np.trace(t, axis1=q, axis2=q + cur)
        cur -= 1
    k = len(keep)
    return QuantumState(k, t.reshape(2**k, 2**k))


def pauli_and_purity(state: QuantumState, qubit: int) -> tuple[float, float, float, float]:
    """Bloch components and purity of one qubit after normalizing the state."""
    tr = state.trace
    if tr < 1e-14:
        raise ValueError("state has vanishing trace (empty branch)")
    red = partial_trace(state, [qubit]).matrix / tr
    x = float(np.real(np.trace(red @ PAULI_X)))
    y = float(np.real(np.trace(red @ PAULI_Y)))
    z = float(np.real(np.trace(red @ PAULI_Z)))
    purity = float(np.real(np.trace(red @ red)))
    return x, y, z, purity


def validate(state: QuantumState) -> None:
    """Raise if the state violates hermiticity, PSD or trace bounds."""
    m = state.matrix
    herm = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if herm > HERMITIAN_ATOL:
        raise AssertionError(f"state not hermitian (deviation {herm:.2e})")
    tr = np.real(np.trace(m))
    if tr < -1e-12 or tr > 1 + 1e-12:
        raise AssertionError(f"state trace {tr} outside [0, 1]")
    evmin = np.min(np.linalg.eigvalsh((m + m.conj().T) / 2))
    if evmin < -PSD_ATOL:
        raise AssertionError(f"state not positive semidefinite (min eigenvalue {evmin:.2e})")
