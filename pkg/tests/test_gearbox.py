import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rusqnn import dm
from rusqnn.circuit import run_exact, single_pass
from rusqnn.gates import rotation_matrix
from rusqnn.gearbox import (
    GearboxParams,
    activation_g,
    build_gearbox,
    conditional_tomography,
    gearbox_body,
    prep_moments,
    success_probability,
)
from rusqnn.noise import DeviceNoiseModel


def output_branch_maps(params, bits, refocus=True):
    """Unnormalized (success, failure) states of O after one pass from computational inputs."""
    inputs = tuple(f"I{i + 1}" for i in range(len(bits)))
    prep = {q: str(b) for q, b in zip(inputs, bits)}
    prog = build_gearbox(inputs, "A", "O", params, input_prep=prep, refocus=refocus, max_iterations=1)
    succ, fail = single_pass(prog)
    o = prog.index("O")
    return [dm.partial_trace(s, [o]).matrix for s in (succ, fail)]


def expected_maps(theta):
    zero = np.diag([1, 0]).astype(complex)
    ps = success_probability(theta)
    us = rotation_matrix("x", activation_g(theta))
    uf = rotation_matrix("x", -math.pi / 2)
    return ps * us @ zero @ us.conj().T, (1 - ps) * uf @ zero @ uf.conj().T


class TestActivation:
    def test_anchor_values(self):
        assert activation_g(0.0) == 0.0
        np.testing.assert_allclose(activation_g(math.pi / 2), math.pi / 2, atol=1e-15)
        np.testing.assert_allclose(activation_g(math.pi), math.pi, atol=1e-15)
        np.testing.assert_allclose(success_probability([0, math.pi / 2, math.pi]), [1, 0.5, 1], atol=1e-15)

    def test_closed_form(self):
        t = np.linspace(-3, 3, 31)
        t = t[np.abs(np.cos(t / 2)) > 1e-3]
        np.testing.assert_allclose(activation_g(t), 2 * np.arctan(np.tan(t / 2) ** 2), atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-20, 20))
    def test_reflection_symmetry(self, t):
        np.testing.assert_allclose(activation_g(t) + activation_g(math.pi - t), math.pi, atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-20, 20))
    def test_success_probability_bounds(self, t):
        p = success_probability(t)
        assert 0.5 - 1e-15 <= p <= 1 + 1e-15

    def test_sigmoid_is_monotone_on_half_period(self):
        t = np.linspace(0, math.pi, 200)
        assert np.all(np.diff(activation_g(t)) > 0)

    def test_returns_array_for_array_input(self):
        assert isinstance(activation_g(np.zeros(3)), np.ndarray)
        assert isinstance(activation_g(0.1), float)


class TestParams:
    def test_theta(self):
        p = GearboxParams((0.5, 0.25), 0.1)
        assert p.theta((1, 1)) == 0.85
        assert p.theta((0, 1)) == 0.35

    def test_validation(self):
        with pytest.raises(ValueError):
            GearboxParams((), 0.0)
        with pytest.raises(ValueError):
            GearboxParams((1.0, 2.0, 3.0))
        with pytest.raises(ValueError):
            GearboxParams((float("nan"),))


class TestCircuit:
    @pytest.mark.parametrize("refocus", [True, False])
    def test_single_input_maps(self, refocus):
        rng = np.random.default_rng(4)
        for _ in range(5):
            w, b = rng.uniform(0, 2 * math.pi, 2)
            p = GearboxParams((w,), b)
            for k in (0, 1):
                got = output_branch_maps(p, (k,), refocus)
                for g, e in zip(got, expected_maps(p.theta((k,)))):
                    np.testing.assert_allclose(g, e, atol=1e-12)

    def test_two_input_maps(self):
        p = GearboxParams((1.1, -0.7), 0.4)
        for bits in itertools.product((0, 1), repeat=2):
            got = output_branch_maps(p, bits)
            for g, e in zip(got, expected_maps(p.theta(bits))):
                np.testing.assert_allclose(g, e, atol=1e-12)

    def test_ancilla_is_disentangled_basis_state(self):
        prog = build_gearbox(("I1",), "A", "O", GearboxParams((0.9,), 0.2), input_prep={"I1": "1"},
                             max_iterations=1)
        succ, fail = single_pass(prog)
        a = prog.index("A")
        # success leaves A in |0>, failure in |1>, with nothing else mixed in
        for s, bit in ((succ, 0), (fail, 1)):
            red = dm.partial_trace(s, [a]).matrix / s.trace
            np.testing.assert_allclose(red[bit, bit], 1.0, atol=1e-12)

    def test_refocus_pulse_count(self):
        body = gearbox_body(("I1", "I2"), GearboxParams((1.0, 2.0), 0.5))
        pulses = [g for m in body for g in m.gates if g.name == "rx" and g.qubits == ("O",)]
        assert len(pulses) == 4
        body = gearbox_body(("I1",), GearboxParams((1.0,), 0.5), refocus=False)
        assert not [g for m in body for g in m.gates if g.name == "rx"]

    def test_role_checks(self):
        with pytest.raises(ValueError):
            gearbox_body(("A",), GearboxParams((1.0,)))
        with pytest.raises(ValueError):
            gearbox_body(("I1", "I2"), GearboxParams((1.0,)))

    def test_prep_moments(self):
        assert prep_moments({"I1": "0"}) == ()
        (m,) = prep_moments({"I1": "1", "I2": "plus"})
        assert {g.name for g in m.gates} == {"rx", "ry"}
        with pytest.raises(ValueError):
            prep_moments({"I1": "minus"})

    @pytest.mark.parametrize("theta", [0.4, 1.0, math.pi / 2, 2.2])
    def test_rus_attempts_follow_success_probability(self, theta):
        prog = build_gearbox(("I1",), "A", "O", GearboxParams((theta,), 0.0), input_prep={"I1": "1"},
                             max_iterations=60)
        res = run_exact(prog)
        np.testing.assert_allclose(res.n_rts_mean, 1 / success_probability(theta), rtol=1e-9)

    def test_rus_output_is_the_success_rotation(self):
        # after correction the loop restarts from the initial output state
        theta = 1.3
        prog = build_gearbox(("I1",), "A", "O", GearboxParams((theta,), 0.0), input_prep={"I1": "1"},
                             max_iterations=60)
        res = run_exact(prog)
        x, y, z, purity = dm.pauli_and_purity(res.state, prog.index("O"))
        g = activation_g(theta)
        np.testing.assert_allclose([x, y, z, purity], [0, -math.sin(g), math.cos(g), 1], atol=1e-9)


class TestTomography:
    def test_ideal_branches(self):
        w = 1.0
        t = conditional_tomography(GearboxParams((w,), 0.0))
        g = activation_g(w)
        s, f = t["success"], t["failure"]
        np.testing.assert_allclose([s.probability, s.x, s.y, s.z, s.purity],
                                   [success_probability(w), 0, -math.sin(g), math.cos(g), 1], atol=1e-12)
        np.testing.assert_allclose([f.x, f.y, f.z, f.purity], [0, 1, 0, 1], atol=1e-12)

    def test_input_zero_ignores_weight(self):
        t = conditional_tomography(GearboxParams((2.0,), 0.3), input_prep="0")
        np.testing.assert_allclose(t["success"].probability, success_probability(0.3), atol=1e-12)

    def test_empty_branch(self):
        p = GearboxParams((0.0,), 0.0)
        with pytest.raises(ValueError):
            conditional_tomography(p)
        t = conditional_tomography(p, allow_empty=True)
        assert math.isnan(t["failure"].x)
        np.testing.assert_allclose(t["success"].probability, 1.0)

    def test_measurement_phase_tilts_failure_branch(self):
        model = DeviceNoiseModel(meas_phase_0=0.0, meas_phase_1=math.radians(10))
        f = conditional_tomography(GearboxParams((1.0,), 0.0), model=model)["failure"]
        # R_z(10 deg) applied to the +y Bloch vector
        np.testing.assert_allclose([f.x, f.y], [-math.sin(math.radians(10)), math.cos(math.radians(10))], atol=1e-12)
