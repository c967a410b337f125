import math

import numpy as np
import pytest

from rusqnn.qnn import Mode, cost
from rusqnn.training import (
    TRACE_HEADER,
    OptimizerConfig,
    TraceRecord,
    TrainingTrace,
    nelder_mead,
    noise_floor,
    train,
    train_all,
    wrap,
)


class TestConfig:
    def test_defaults(self):
        c = OptimizerConfig()
        assert c.budget == 500 and c.init == "lhs"

    @pytest.mark.parametrize("kw", [
        dict(budget=19),
        dict(budget=50, restarts=6),
        dict(restarts=0),
        dict(init="grid"),
        dict(init="fixed"),
        dict(step=0.0),
        dict(contract=1.5),
        dict(expand=0.9),
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            OptimizerConfig(**kw)

    def test_json_echo(self):
        d = OptimizerConfig(init="fixed", start=(1.0, 2.0, 3.0)).to_json()
        assert d["start"] == [1.0, 2.0, 3.0]


class TestNelderMead:
    def test_quadratic(self):
        target = np.array([0.3, -1.2, 2.0])
        seen = []

        def f(x):
            v = float(np.sum((x - target) ** 2))
            seen.append((v, x.copy()))
            return v

        nelder_mead(f, np.zeros(3), OptimizerConfig(step=1.0), budget=400, threshold=1e-14)
        best = min(seen, key=lambda t: t[0])
        np.testing.assert_allclose(best[1], target, atol=1e-4)

    def test_budget_is_exact(self):
        calls = []
        nelder_mead(lambda x: calls.append(1) or float(np.sum(np.sin(3 * x))), np.zeros(3),
                    OptimizerConfig(), budget=37, threshold=0.0)
        assert len(calls) == 37

    def test_converged_simplex_stops(self):
        calls = []
        nelder_mead(lambda x: calls.append(1) or 1.0, np.zeros(3), OptimizerConfig(), budget=100, threshold=1e-4)
        assert len(calls) == 4


class TestTrace:
    def test_best_keeps_first_of_ties(self):
        t = TrainingTrace()
        for i, c in enumerate([0.5, 0.2, 0.2, 0.3]):
            t.add(TraceRecord(i + 1, 0, 0, 0, c, 1.0))
        assert t.best_index == 1
        np.testing.assert_array_equal(t.best_so_far(), [0.5, 0.2, 0.2, 0.2])

    def test_rows(self):
        t = TrainingTrace()
        t.add(TraceRecord(1, math.pi, 0.0, math.pi / 2, 0.1, 1.5))
        (row,) = t.rows()
        assert len(row) == len(TRACE_HEADER)
        assert float(row[1]) == 180.0 and float(row[3]) == 90.0 and row[-1] == 1


class TestTrain:
    def test_xor(self):
        params, c, trace = train("XOR", config=OptimizerConfig(budget=300))
        assert c <= 1e-3
        assert len(trace) <= 300

    def test_null(self):
        _, c, _ = train("NULL", config=OptimizerConfig(budget=100))
        assert c <= 1e-3

    def test_trace_invariants(self):
        res = train("AND", config=OptimizerConfig(budget=120, restarts=4, seed=3))
        params = np.array(res.params)
        assert np.all((params >= 0) & (params < 2 * math.pi))
        # the reported cost is reproduced at the reported parameters
        assert cost("AND", res.params)[0] == pytest.approx(res.cost, abs=1e-12)
        assert res.trace.best.cost == res.cost
        assert np.all(np.diff(res.trace.best_so_far()) <= 0)
        for r in res.trace.records:
            assert all(0 <= v < 2 * math.pi for v in r.params)

    def test_deterministic(self):
        cfg = OptimizerConfig(budget=60, restarts=2, seed=11)
        a = train("OR", config=cfg)
        b = train("OR", config=cfg)
        assert a.params == b.params
        assert [r.cost for r in a.trace.records] == [r.cost for r in b.trace.records]

    def test_fixed_start(self):
        start = (1.0, 2.0, 3.0)
        res = train("NOR", config=OptimizerConfig(budget=40, restarts=1, init="fixed", start=start))
        np.testing.assert_allclose(res.trace.records[0].params, start)

    def test_random_init(self):
        res = train("NOR", config=OptimizerConfig(budget=40, restarts=2, init="random"))
        assert len(res.trace) <= 40

    def test_train_all_seed_splitting(self):
        cfg = OptimizerConfig(budget=40, restarts=2, seed=5)
        one = train_all(config=cfg, functions=["XOR"])
        two = train_all(config=cfg, functions=["AND", "XOR"], workers=2)
        assert one["XOR"].params == two["XOR"].params
        assert set(two) == {"AND", "XOR"}

    @pytest.mark.parametrize("seed", range(5))
    def test_sampled_training_completes(self, seed):
        mode = Mode("sampled", 200, seed)
        res = train("NAND", mode=mode, config=OptimizerConfig(budget=30, restarts=2, seed=seed))
        assert 0 < len(res.trace) <= 30
        assert 0.0 <= res.cost <= 1.0

    def test_noise_floor(self):
        assert noise_floor(Mode()) == 0.0
        np.testing.assert_allclose(noise_floor(Mode("sampled", 10_000)), 0.005)

    def test_wrap(self):
        np.testing.assert_allclose(wrap([-0.5, 7.0]), [2 * math.pi - 0.5, 7.0 - 2 * math.pi])
