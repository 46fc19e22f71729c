import json
import math

import numpy as np
import pytest

from matinfo.measures import joint_entropy, renyi_entropy
from matinfo.verify import PROPERTIES, random_kernel, run_suite, suite_report

from oracles import random_unit_kernel, renyi_mp


def by_name(results):
    return {r.name: r for r in results}


class TestRandomKernel:
    def test_unit_diagonal_psd(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 7, 16):
            k = random_kernel(rng, n)
            np.testing.assert_array_equal(np.diag(k.data), np.ones(n))
            assert k.spectrum.eigenvalues.min() >= 0

    def test_requested_rank(self):
        k = random_kernel(np.random.default_rng(1), 8, rank=3)
        assert np.count_nonzero(k.spectrum.eigenvalues > 1e-8 * 8) == 3


class TestSuite:
    def test_smoke_exercises_every_property(self):
        results = run_suite(trials=1, sizes=(2,))
        assert [r.name for r in results] == [p.name for p in PROPERTIES]
        assert all(r.trials == 1 for r in results)

    def test_properties_pass_on_moderate_run(self):
        results = by_name(run_suite(trials=120, seed=3))
        for name, r in results.items():
            if name == "prop_4_3_joint_entropy_upper":
                continue
            assert r.passed, (name, r.max_violation)

    def test_deterministic(self):
        a = suite_report(run_suite(trials=20, seed=5))
        b = suite_report(run_suite(trials=20, seed=5))
        assert json.dumps(a) == json.dumps(b)

    def test_injected_non_psd_is_rejected(self):
        results = by_name(run_suite(trials=1, sizes=(2,), inject_non_psd=True))
        r = results["injected_non_psd_rejection"]
        assert r.passed and "NotPSD" in r.note

    def test_report_is_json(self):
        report = suite_report(run_suite(trials=2, sizes=(2, 4)), elapsed=0.5)
        json.dumps(report)
        assert set(report) == {"passed", "properties", "elapsed_seconds"}


class TestJointEntropyUpperChain:
    """Subadditivity of the joint entropy holds for orders 1/2 and 1, not for 2."""

    @pytest.mark.parametrize("alpha", [0.5, 1.0])
    def test_holds_for_low_orders(self, alpha):
        results = by_name(run_suite(trials=300, alphas=(alpha,), only={"prop_4_3_joint_entropy_upper"}))
        assert results["prop_4_3_joint_entropy_upper"].max_violation <= 1e-7

    def test_order_two_counterexample(self):
        rng = np.random.default_rng(2645)
        k1, k2 = random_unit_kernel(rng, 4, 2), random_unit_kernel(rng, 4, 2)
        gap = joint_entropy(k1, k2, 2).value - renyi_entropy(k1, 2).value - renyi_entropy(k2, 2).value
        assert gap > 0.04
        # confirmed at 40 digits, so the violation is not roundoff
        exact = renyi_mp(k1 * k2, 2) - renyi_mp(k1, 2) - renyi_mp(k2, 2)
        assert exact == pytest.approx(gap, abs=1e-12)
        assert gap <= math.log(4)
