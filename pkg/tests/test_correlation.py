import numpy as np
import pytest

from tdc import correlation
from tdc.correlation import Measurement, grouped_tau, kendall_tau

from conftest import philox


def brute_force_tau(a, p):
    m = len(a)
    k = d = 0
    for i in range(m):
        for j in range(i + 1, m):
            s = (a[i] - a[j]) * (p[i] - p[j])
            if s > 0:
                k += 1
            elif s < 0:
                d += 1
    return 2.0 * (k - d) / (m * (m - 1))


class TestKendallTau:
    def test_perfect_agreement(self):
        assert kendall_tau([1, 2, 3], [1, 2, 3]) == 1.0

    def test_perfect_reversal(self):
        assert kendall_tau([1, 2, 3], [3, 2, 1]) == -1.0

    def test_hand_enumerated_example(self):
        # pairs of [1,2,3,4] vs [1,3,2,4]: 5 concordant, 1 discordant
        tau, counts = correlation.kendall_tau_with_counts([1, 2, 3, 4], [1, 3, 2, 4])
        assert counts.concordant == 5 and counts.discordant == 1 and counts.total_pairs == 6
        assert tau == pytest.approx(2.0 / 3.0)

    def test_ties_count_as_neither(self):
        tau, counts = correlation.kendall_tau_with_counts([1, 1, 2], [1, 2, 3])
        assert counts.concordant == 2 and counts.discordant == 0 and counts.total_pairs == 3
        assert tau == pytest.approx(2.0 / 3.0)

    def test_matches_brute_force_on_random_sequences(self):
        g = philox(77)
        for _ in range(200):
            m = int(g.integers(2, 51))
            a = g.integers(0, 10, m)
            p = g.integers(0, 10, m)
            assert kendall_tau(a, p) == brute_force_tau(a, p)

    def test_invariant_under_monotone_transform(self, rng):
        a = rng.standard_normal(20)
        p = rng.standard_normal(20)
        base = kendall_tau(a, p)
        assert kendall_tau(np.exp(a), p) == base
        assert kendall_tau(a, 3.0 * p + 7.0) == base

    def test_symmetric_and_antisymmetric(self, rng):
        a = rng.standard_normal(15)
        p = rng.standard_normal(15)
        assert kendall_tau(a, p) == kendall_tau(p, a)
        assert kendall_tau(a, -p) == -kendall_tau(a, p)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            kendall_tau([1, 2], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(ValueError):
            kendall_tau([1], [1])


def synth_measurements(layers, methods, fractions, seeds, error_fn, p_fn):
    ms = []
    for li, layer in enumerate(layers):
        for mi, method in enumerate(methods):
            for c in fractions:
                for s in seeds:
                    err = error_fn(li, mi, c, s)
                    ms.append(Measurement(
                        layer_id=layer, method=method, retained_fraction=c, seed=s,
                        errors={"weight_relative": err},
                        p=p_fn(err, li, mi, c, s),
                    ))
    return ms


class TestGroupedTau:
    def test_two_concordant_hypotheses(self):
        ms = [
            Measurement("l1", "cp", 0.5, 0, {"weight_relative": 0.1}, p=0.2),
            Measurement("l2", "cp", 0.5, 0, {"weight_relative": 0.3}, p=0.4),
        ]
        [summary] = grouped_tau(ms, "weight_relative", "p", "all")
        assert summary.mean_tau == 1.0
        assert summary.per_run_taus == [1.0]

    @pytest.mark.parametrize("grouping", correlation.GROUPINGS)
    def test_monotone_construction_gives_tau_one(self, grouping):
        g = philox(5)
        ms = synth_measurements(
            ["a", "b", "c"], ["cp", "tucker"], [0.25, 0.5, 0.75], [0, 1, 2],
            error_fn=lambda li, mi, c, s: float(g.random()) + 1e-6,
            p_fn=lambda err, *rest: 1.0 - 1.0 / (1.0 + err),  # strictly increasing in err
        )
        for summary in grouped_tau(ms, "weight_relative", "p", grouping):
            assert summary.mean_tau == pytest.approx(1.0)
            assert summary.std_tau == pytest.approx(0.0)
            assert not summary.skipped

    def test_all_produces_one_tau_per_run(self):
        g = philox(6)
        seeds = [0, 1, 2, 3, 4]
        ms = synth_measurements(["a", "b"], ["cp"], [0.5], seeds,
                                lambda *a: float(g.random()), lambda e, *a: float(g.random()))
        [summary] = grouped_tau(ms, "weight_relative", "p", "all")
        assert len(summary.per_run_taus) == len(seeds)
        assert summary.mean_tau == pytest.approx(np.mean(summary.per_run_taus))
        assert summary.std_tau == pytest.approx(np.std(summary.per_run_taus))

    def test_matches_brute_force_regrouping_oracle(self):
        g = philox(7)
        layers = [f"l{i}" for i in range(5)]
        methods = ["cp", "tucker", "tt"]
        fractions = [0.25, 0.5, 0.9]
        seeds = list(range(5))
        ms = synth_measurements(layers, methods, fractions, seeds,
                                lambda *a: float(g.random()), lambda e, *a: float(g.random()))
        rows = {(m.layer_id, m.method, m.retained_fraction, m.seed): m for m in ms}

        # all
        [summary] = grouped_tau(ms, "weight_relative", "p", "all")
        expected = []
        for s in seeds:
            pts = [(rows[(l, m, c, s)].errors["weight_relative"], rows[(l, m, c, s)].p)
                   for l in layers for m in methods for c in fractions]
            expected.append(brute_force_tau([p[0] for p in pts], [p[1] for p in pts]))
        assert summary.per_run_taus == pytest.approx(expected, abs=1e-12)

        # by_compression
        summaries = grouped_tau(ms, "weight_relative", "p", "by_compression")
        assert [s.label for s in summaries] == [f"c={c:g}" for c in fractions]
        for c, summary in zip(fractions, summaries):
            expected = []
            for s in seeds:
                pts = [(rows[(l, m, c, s)].errors["weight_relative"], rows[(l, m, c, s)].p)
                       for l in layers for m in methods]
                expected.append(brute_force_tau([p[0] for p in pts], [p[1] for p in pts]))
            assert summary.per_run_taus == pytest.approx(expected, abs=1e-12)

        # layers_only: per (method, fraction) slice, averaged within run
        [summary] = grouped_tau(ms, "weight_relative", "p", "layers_only")
        expected = []
        for s in seeds:
            slice_taus = []
            for m in methods:
                for c in fractions:
                    pts = [(rows[(l, m, c, s)].errors["weight_relative"], rows[(l, m, c, s)].p)
                           for l in layers]
                    slice_taus.append(brute_force_tau([p[0] for p in pts], [p[1] for p in pts]))
            expected.append(np.mean(slice_taus))
        assert summary.per_run_taus == pytest.approx(expected, abs=1e-12)
        assert len(summary.per_slice) == len(methods) * len(fractions)

        # methods_only: per (layer, fraction) slice
        [summary] = grouped_tau(ms, "weight_relative", "p", "methods_only")
        expected = []
        for s in seeds:
            slice_taus = []
            for l in layers:
                for c in fractions:
                    pts = [(rows[(l, m, c, s)].errors["weight_relative"], rows[(l, m, c, s)].p)
                           for m in methods]
                    slice_taus.append(brute_force_tau([p[0] for p in pts], [p[1] for p in pts]))
            expected.append(np.mean(slice_taus))
        assert summary.per_run_taus == pytest.approx(expected, abs=1e-12)

    def test_small_slices_skipped_and_reported(self):
        ms = [Measurement("l1", "cp", 0.5, 0, {"weight_relative": 0.1}, p=0.2)]
        [summary] = grouped_tau(ms, "weight_relative", "p", "all")
        assert summary.mean_tau is None
        assert summary.skipped

    def test_missing_perf_values_skip_run(self):
        ms = [
            Measurement("l1", "cp", 0.5, 0, {"weight_relative": 0.1}, p=None),
            Measurement("l2", "cp", 0.5, 0, {"weight_relative": 0.3}, p=None),
            Measurement("l1", "cp", 0.5, 1, {"weight_relative": 0.1}, p=0.1),
            Measurement("l2", "cp", 0.5, 1, {"weight_relative": 0.3}, p=0.2),
        ]
        [summary] = grouped_tau(ms, "weight_relative", "p", "all")
        assert summary.per_run_taus == [1.0]
        assert len(summary.skipped) == 1

    def test_unknown_grouping(self):
        with pytest.raises(ValueError):
            grouped_tau([], "weight_relative", "p", "bogus")
