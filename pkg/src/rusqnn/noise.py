"""Device noise model: decoherence, initialization, readout and coherent error parameters.

Times are in microseconds internally, angles in radians. The JSON schema
uses the lab units (``*_us``, ``*_ns``, MHz, degrees) and is converted on load.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .dm import KrausChannel, MeasurementSplit, QuantumState, UnitaryOp
from .gates import CZPhaseModel, rotation_matrix

T2_SLACK = 1e-9

# Gate pairs that may carry a CZ phase-error model, keyed "A-O" style.
CZ_PAIRS = ("A-O", "A-I1", "A-I2")


class NoiseModelError(ValueError):
    pass


def _is_inf(t) -> bool:
    return t is None or math.isinf(t)


@dataclass(frozen=True)
class QubitNoiseParams:
    t1: float = math.inf
    t2: float = math.inf
    residual_excitation: float = 0.0
    readout_misclassification: float = 0.0

    def __post_init__(self):
        t1 = math.inf if self.t1 is None else float(self.t1)
        t2 = math.inf if self.t2 is None else float(self.t2)
        object.__setattr__(self, "t1", t1)
        object.__setattr__(self, "t2", t2)
        if t1 <= 0 or t2 <= 0:
            raise NoiseModelError("T1 and T2 must be positive")
        if t2 > 2 * t1 + T2_SLACK:
            raise NoiseModelError(f"T2 = {t2} us exceeds 2*T1 = {2 * t1} us")
        for name in ("residual_excitation", "readout_misclassification"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise NoiseModelError(f"{name} = {v} is not a probability")

    @property
    def is_ideal(self) -> bool:
        return (math.isinf(self.t1) and math.isinf(self.t2)
                and self.residual_excitation == 0 and self.readout_misclassification == 0)

    @property
    def has_decoherence(self) -> bool:
        return not (math.isinf(self.t1) and math.isinf(self.t2))


@dataclass(frozen=True)
class Durations:
    """Operation durations in microseconds."""

    sq: float = 0.020
    cz: float = 0.060
    meas: float = 0.500
    feedback: float = 0.980

    def __post_init__(self):
        for k in ("sq", "cz", "meas", "feedback"):
            if not getattr(self, k) > 0:
                raise NoiseModelError(f"duration {k} must be positive")


IDEAL_QUBIT = QubitNoiseParams()


@dataclass(frozen=True)
class DeviceNoiseModel:
    qubits: Mapping[str, QubitNoiseParams] = field(default_factory=dict)
    zz_coupling_ao: float = 0.0  # rad/us
    cross_resonance_alpha1: float = 0.0
    f_nl: float | None = None  # None is a perfectly linear drive
    cz_phase_errors: Mapping[str, CZPhaseModel] = field(default_factory=dict)
    t2_suppression: float = 1.0
    meas_phase_0: float = 0.0
    meas_phase_1: float = math.radians(10.0)
    durations: Durations = field(default_factory=Durations)

    def __post_init__(self):
        object.__setattr__(self, "qubits", dict(self.qubits))
        object.__setattr__(self, "cz_phase_errors", dict(self.cz_phase_errors))
        if self.f_nl is not None and math.isinf(self.f_nl):
            object.__setattr__(self, "f_nl", None)
        if self.f_nl is not None and self.f_nl <= 1:
            raise NoiseModelError("f_nl must exceed 1")
        if self.t2_suppression < 1:
            raise NoiseModelError("t2_suppression must be >= 1")
        if self.zz_coupling_ao < 0:
            raise NoiseModelError("ZZ coupling must be non-negative")
        for pair in self.cz_phase_errors:
            if pair not in CZ_PAIRS:
                raise NoiseModelError(f"unknown CZ pair {pair!r}; expected one of {CZ_PAIRS}")

    @classmethod
    def ideal(cls) -> "DeviceNoiseModel":
        return cls(meas_phase_0=0.0, meas_phase_1=0.0)

    def qubit(self, name: str) -> QubitNoiseParams:
        return self.qubits.get(name, IDEAL_QUBIT)

    def cz_error(self, a: str, b: str) -> CZPhaseModel | None:
        for key in (f"{a}-{b}", f"{b}-{a}"):
            if key in self.cz_phase_errors:
                return self.cz_phase_errors[key]
        return None

    @property
    def has_decoherence(self) -> bool:
        return any(q.has_decoherence for q in self.qubits.values())

    @property
    def is_ideal(self) -> bool:
        return (all(q.is_ideal for q in self.qubits.values())
                and self.zz_coupling_ao == 0 and self.cross_resonance_alpha1 == 0
                and self.f_nl is None and all(m.is_zero() for m in self.cz_phase_errors.values())
                and self.meas_phase_0 == 0 and self.meas_phase_1 == 0)

    def with_qubit(self, name: str, **kwargs) -> "DeviceNoiseModel":
        qubits = dict(self.qubits)
        qubits[name] = replace(self.qubit(name), **kwargs)
        return replace(self, qubits=qubits)

    def to_json(self) -> dict:
        def t(v):
            return None if math.isinf(v) else v

        return {
            "qubits": {
                name: {
                    "t1_us": t(q.t1),
                    "t2_us": t(q.t2),
                    "residual_excitation": q.residual_excitation,
                    "readout_misclassification": q.readout_misclassification,
                }
                for name, q in sorted(self.qubits.items())
            },
            "zz_coupling_ao_mhz": self.zz_coupling_ao / (2 * math.pi),
            "cross_resonance_alpha1": self.cross_resonance_alpha1,
            "f_nl": self.f_nl,
            "cz_phases": {
                pair: {",".join(r for r in ("A", "I2", "I1", "O") if r in term): math.degrees(v)
                       for term, v in sorted(m.angles.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))}
                for pair, m in sorted(self.cz_phase_errors.items())
            },
            "t2_suppression": self.t2_suppression,
            "meas_phase_deg": [math.degrees(self.meas_phase_0), math.degrees(self.meas_phase_1)],
            "durations_ns": {k: getattr(self.durations, k) * 1e3 for k in ("sq", "cz", "meas", "feedback")},
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_TOP_KEYS = {"qubits", "zz_coupling_ao_mhz", "cross_resonance_alpha1", "f_nl", "cz_phases",
             "t2_suppression", "meas_phase_deg", "durations_ns"}
_QUBIT_KEYS = {"t1_us", "t2_us", "residual_excitation", "readout_misclassification"}
_DURATION_KEYS = {"sq", "cz", "meas", "feedback"}


def _reject_unknown(d: Mapping, allowed: set, where: str) -> None:
    if not isinstance(d, Mapping):
        raise NoiseModelError(f"{where} must be an object")
    extra = set(d) - allowed
    if extra:
        raise NoiseModelError(f"unknown keys in {where}: {sorted(extra)}")


def model_from_dict(doc: Mapping) -> DeviceNoiseModel:
    _reject_unknown(doc, _TOP_KEYS, "noise model")
    try:
        qubits = {}
        for name, q in doc.get("qubits", {}).items():
            _reject_unknown(q, _QUBIT_KEYS, f"qubits.{name}")
            qubits[name] = QubitNoiseParams(
                t1=q.get("t1_us"),
                t2=q.get("t2_us"),
                residual_excitation=float(q.get("residual_excitation", 0.0)),
                readout_misclassification=float(q.get("readout_misclassification", 0.0)),
            )
        cz = {}
        for pair, terms in doc.get("cz_phases", {}).items():
            if not isinstance(terms, Mapping):
                raise NoiseModelError(f"cz_phases.{pair} must be an object")
            cz[pair] = CZPhaseModel({k: math.radians(float(v)) for k, v in terms.items()})
        kwargs = {}
        if "meas_phase_deg" in doc:
            p0, p1 = doc["meas_phase_deg"]
            kwargs["meas_phase_0"] = math.radians(float(p0))
            kwargs["meas_phase_1"] = math.radians(float(p1))
        if "durations_ns" in doc:
            _reject_unknown(doc["durations_ns"], _DURATION_KEYS, "durations_ns")
            kwargs["durations"] = Durations(**{k: float(v) * 1e-3 for k, v in doc["durations_ns"].items()})
        f_nl = doc.get("f_nl")
        return DeviceNoiseModel(
            qubits=qubits,
            zz_coupling_ao=2 * math.pi * float(doc.get("zz_coupling_ao_mhz", 0.0)),
            cross_resonance_alpha1=float(doc.get("cross_resonance_alpha1", 0.0)),
            f_nl=None if f_nl is None else float(f_nl),
            cz_phase_errors=cz,
            t2_suppression=float(doc.get("t2_suppression", 1.0)),
            **kwargs,
        )
    except NoiseModelError:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise NoiseModelError(str(exc)) from exc


def load_model(path: str | Path) -> DeviceNoiseModel:
    with open(path) as fh:
        doc = json.load(fh)
    return model_from_dict(doc)


def profile(name: str) -> DeviceNoiseModel:
    """Load a shipped profile: ``ideal``, ``plausible_device`` or ``moderate``."""
    if name == "ideal":
        return DeviceNoiseModel.ideal()
    try:
        text = resources.files("rusqnn.profiles").joinpath(f"{name}.json").read_text()
    except FileNotFoundError:
        raise NoiseModelError(f"no shipped profile named {name!r}") from None
    return model_from_dict(json.loads(text))


def resolve_model(name: str | None) -> DeviceNoiseModel:
    """A shipped profile name, a path to a JSON file, or ``None`` for ideal."""
    if name is None or name == "ideal":
        return DeviceNoiseModel.ideal()
    if Path(name).suffix == ".json" or Path(name).exists():
        return load_model(name)
    return profile(name)


# --- channels ----------------------------------------------------------------


def idle_channel(params: QubitNoiseParams, duration: float, t2_suppression: float = 1.0) -> KrausChannel:
    """Amplitude damping followed by pure dephasing over ``duration`` microseconds."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    t1, t2 = params.t1, params.t2 / t2_suppression
    gamma = 0.0 if math.isinf(t1) else -math.expm1(-duration / t1)
    rate_phi = (0.0 if math.isinf(t2) else 1 / t2) - (0.0 if math.isinf(t1) else 1 / (2 * t1))
    rate_phi = max(rate_phi, 0.0)
    d = math.exp(-duration * rate_phi)
    damp = (np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex),
            np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex))
    dephase = (math.sqrt((1 + d) / 2) * np.eye(2, dtype=complex),
               math.sqrt((1 - d) / 2) * np.diag([1, -1]).astype(complex))
    ops = tuple(b @ a for a in damp for b in dephase)
    return KrausChannel((0,), tuple(k for k in ops if np.any(k)))


def init_with_residual_excitation(r: list[float]) -> QuantumState:
    for v in r:
        if not 0 <= v <= 1:
            raise ValueError(f"residual excitation {v} is not a probability")
    return QuantumState.product([np.diag([1 - v, v]).astype(complex) for v in r])


def misclassify_mix(split: MeasurementSplit, p: float) -> tuple[QuantumState, QuantumState]:
    """Declared-success and declared-failure states under readout flip probability ``p``."""
    if not 0 <= p <= 1:
        raise ValueError(f"misclassification {p} is not a probability")
    r0, r1 = split.outcome0.matrix, split.outcome1.matrix
    n = split.outcome0.num_qubits
    succ = QuantumState(n, (1 - p) * r0 + p * r1)
    fail = QuantumState(n, (1 - p) * r1 + p * r0)
    return succ, fail


def measurement_phase(model: DeviceNoiseModel, outcome: int, qubit: int = 0) -> UnitaryOp:
    """Z rotation on the output qubit induced by the ancilla collapsing to ``outcome``."""
    if outcome not in (0, 1):
        raise ValueError("outcome must be 0 or 1")
    phi = model.meas_phase_0 if outcome == 0 else model.meas_phase_1
    return UnitaryOp((qubit,), rotation_matrix("z", phi))
