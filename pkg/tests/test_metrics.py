import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotrain.adversarial import fgsm, transfer_rate
from cotrain.data import two_moons
from cotrain.errors import ConfigError, ParseError
from cotrain.metrics import (
    MetricsRecord,
    MetricsSink,
    agreement_rate,
    collapse_score,
    header,
    probe_subset,
    read_metrics,
    transfer_matrix,
)
from cotrain.nn_core import init_view, predict

PROBE = two_moons(256, 0.1, seed=5).features


def brute_collapse(views, x, eps):
    """Double loop over ordered pairs and rows, recounting flips one row at a time."""
    n = len(views)
    total = 0.0
    for i in range(n):
        adv = fgsm(views[i], x, None, eps).x_adv
        for j in range(n):
            if i == j:
                continue
            flips = 0
            for r in range(len(x)):
                flips += int(predict(views[j], adv[r : r + 1])[0] != predict(views[j], x[r : r + 1])[0])
            total += flips / len(x)
    return total / (n * (n - 1))


class TestCollapse:
    def test_identical_copies_equal_self_attack(self):
        # this seed puts a decision boundary inside the probe region
        v = init_view([2, 16, 2], 4)
        self_rate = transfer_rate(v, v, PROBE, 0.1)
        assert self_rate > 0
        for k in (2, 3, 4):
            assert collapse_score([v.copy() for _ in range(k)], PROBE, 0.1) == pytest.approx(self_rate, abs=1e-15)

    def test_matches_brute_force(self):
        views = [init_view([2, 8, 8, 2], s) for s in range(4)]
        fast = collapse_score(views, PROBE[:64], 0.08)
        assert fast == pytest.approx(brute_collapse(views, PROBE[:64], 0.08), abs=1e-12)

    def test_matrix_entries_match_pairwise_rate(self):
        views = [init_view([2, 8, 2], s) for s in range(3)]
        m = transfer_matrix(views, PROBE, 0.05)
        for i in range(3):
            for j in range(3):
                assert m[i, j] == transfer_rate(views[i], views[j], PROBE, 0.05)

    def test_constant_victim_contributes_zero(self):
        attacker = init_view([2, 8, 2], 0)
        victim = init_view([2, 8, 2], 1)
        for layer in victim.layers:
            layer.weight.data[:] = 0.0
        victim.layers[-1].bias.data[:] = [1.0, 0.0]
        m = transfer_matrix([attacker, victim], PROBE, 0.2)
        assert m[0, 1] == 0.0

    def test_single_view_rejected(self):
        with pytest.raises(ConfigError):
            collapse_score([init_view([2, 2], 0)], PROBE, 0.1)

    def test_precomputed_matrix(self):
        views = [init_view([2, 2], s) for s in range(3)]
        m = np.arange(9.0).reshape(3, 3) / 10
        assert collapse_score(views, PROBE, 0.1, matrix=m) == pytest.approx((3.6 - 1.2) / 6)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000), st.floats(0.0, 0.5))
    def test_in_unit_interval(self, seed, eps):
        views = [init_view([2, 4, 2], seed), init_view([2, 4, 2], seed + 1)]
        c = collapse_score(views, PROBE[:32], eps)
        assert 0.0 <= c <= 1.0


class TestAgreement:
    def test_identical(self):
        v = init_view([2, 8, 2], 0)
        assert agreement_rate([v, v.copy(), v.copy()], PROBE) == 1.0

    def test_counts_rows(self):
        a = init_view([2, 8, 2], 0)
        b = init_view([2, 8, 2], 1)
        expected = np.mean(predict(a, PROBE) == predict(b, PROBE))
        assert agreement_rate([a, b], PROBE) == expected


def _record(epoch, n, rng):
    errs = list(rng.random(n))
    return MetricsRecord(epoch, errs, float(np.mean(errs)), *rng.random(8).tolist())


class TestMetricsFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        recs = [_record(e, 4, rng) for e in range(10)]
        recs[3].l_dif = 1e-300
        recs[4].lr = 0.1 + 0.2
        sink = MetricsSink(tmp_path / "m.csv", 4)
        for r in recs:
            sink.write(r)
        assert read_metrics(tmp_path / "m.csv") == recs

    def test_header_only(self, tmp_path):
        MetricsSink(tmp_path / "m.csv", 2)
        assert read_metrics(tmp_path / "m.csv") == []
        first = (tmp_path / "m.csv").read_text().splitlines()[0]
        assert first.split(",") == header(2)

    def test_header_columns(self):
        assert header(2) == ["epoch", "mean_err", "err_v0", "err_v1", "l_sup", "l_cot", "l_dif",
                             "agreement", "collapse", "lr", "lambda_cot", "lambda_dif"]

    def test_missing_column(self, tmp_path):
        path = tmp_path / "m.csv"
        sink = MetricsSink(path, 2)
        sink.write(_record(0, 2, np.random.default_rng(1)))
        lines = path.read_text().splitlines()
        cols = lines[0].split(",")
        k = cols.index("collapse")
        cut = [",".join(c for i, c in enumerate(l.split(",")) if i != k) for l in lines]
        path.write_text("\n".join(cut) + "\n")
        with pytest.raises(ParseError, match="collapse"):
            read_metrics(path)

    def test_bad_value_line_number(self, tmp_path):
        path = tmp_path / "m.csv"
        sink = MetricsSink(path, 2)
        rng = np.random.default_rng(2)
        sink.write(_record(0, 2, rng))
        sink.write(_record(1, 2, rng))
        lines = path.read_text().splitlines()
        lines[2] = lines[2].replace(",", ",x", 1)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as info:
            read_metrics(path)
        assert info.value.line == 3

    def test_view_count_mismatch(self, tmp_path):
        sink = MetricsSink(tmp_path / "m.csv", 2)
        with pytest.raises(ConfigError):
            sink.write(_record(0, 3, np.random.default_rng(0)))

    def test_nan_survives(self, tmp_path):
        rec = _record(0, 2, np.random.default_rng(0))
        rec.l_cot = math.nan
        MetricsSink(tmp_path / "m.csv", 2).write(rec)
        (back,) = read_metrics(tmp_path / "m.csv")
        assert math.isnan(back.l_cot)


def test_probe_subset_fixed():
    data = two_moons(1000, 0.1, seed=0)
    a = probe_subset(data, 256, 3)
    b = probe_subset(data, 256, 3)
    assert len(a) == 256 and np.array_equal(a.features, b.features)
    assert probe_subset(data, 5000, 3) is data
