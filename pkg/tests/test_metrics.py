import csv
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairgame.errors import DomainError, SchemaError
from fairgame.metrics import (
    LOG_COLUMNS,
    EpisodeMetrics,
    emit_plot_data,
    gini,
    rolling_aggregate,
)

DATA = Path(__file__).parent / "data"

nonneg_vectors = st.lists(
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False), min_size=1, max_size=12
)


class TestGini:
    def test_even_distribution(self):
        assert gini([1, 1, 1, 1]) == 0.0

    def test_one_hot_seven_agents(self):
        assert gini([1, 0, 0, 0, 0, 0, 0]) == pytest.approx(6 / 7)

    def test_hand_computed(self):
        assert gini([1, 2, 3]) == pytest.approx(8 / 36)

    def test_zero_total_convention(self):
        assert gini([0.0, 0.0, 0.0]) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            gini([1.0, -0.5])

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            gini([])

    @settings(max_examples=300, deadline=None)
    @given(nonneg_vectors, st.floats(min_value=1e-3, max_value=1e3))
    def test_scale_invariance(self, values, k):
        assert gini([k * v for v in values]) == pytest.approx(gini(values), abs=1e-9)

    @settings(max_examples=300, deadline=None)
    @given(nonneg_vectors, st.randoms())
    def test_permutation_invariance(self, values, rng):
        shuffled = list(values)
        rng.shuffle(shuffled)
        assert gini(shuffled) == pytest.approx(gini(values), abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(nonneg_vectors)
    def test_bounds(self, values):
        n = len(values)
        assert -1e-15 <= gini(values) <= (n - 1) / n + 1e-12

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(min_value=0.0, max_value=100.0), min_size=2, max_size=8),
        st.floats(min_value=0.0, max_value=1.0),
    )
    def test_pigou_dalton_transfer(self, values, fraction):
        arr = np.asarray(values)
        if arr.sum() == 0.0:
            return
        rich = int(np.argmax(arr))
        poor = int(np.argmin(arr))
        if arr[rich] == arr[poor]:
            return
        delta = fraction * (arr[rich] - arr[poor]) / 2.0
        transferred = arr.copy()
        transferred[rich] -= delta
        transferred[poor] += delta
        assert gini(transferred) <= gini(arr) + 1e-12


class TestEpisodeMetrics:
    def test_from_consumptions(self):
        metrics = EpisodeMetrics.from_consumptions([2.0, 4.0], episode=3, step=700)
        assert metrics.total == 6.0
        assert metrics.gini == pytest.approx(gini([2.0, 4.0]))
        assert metrics.episode == 3 and metrics.step == 700


class TestRollingAggregate:
    def test_window_one_is_identity(self):
        series = [3.0, 1.0, 2.0]
        mean, low, high = rolling_aggregate(series, 1)
        assert mean.tolist() == series
        assert low.tolist() == series
        assert high.tolist() == series

    def test_constant_series(self):
        mean, low, high = rolling_aggregate([5.0] * 7, 3)
        assert np.all(mean == 5.0) and np.all(low == 5.0) and np.all(high == 5.0)

    def test_hand_computed(self):
        mean, low, high = rolling_aggregate([1.0, 2.0, 3.0], 2)
        assert mean.tolist() == [1.0, 1.5, 2.5]
        assert low.tolist() == [1.0, 1.0, 2.0]
        assert high.tolist() == [1.0, 2.0, 3.0]

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            rolling_aggregate([], 3)

    def test_bad_window_rejected(self):
        with pytest.raises(DomainError):
            rolling_aggregate([1.0], 0)


def write_log(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def synthetic_rows() -> list[dict]:
    rows = []
    for episode in range(6):
        for agent in range(2):
            rows.append(
                {
                    "step": (episode + 1) * 100,
                    "episode": episode,
                    "agent": agent,
                    "return": 10.0 + episode,
                    "apples": float(episode * (agent + 1)),
                    "gini": round(episode / 10.0, 3),
                    "actor_loss": 0.1,
                    "critic_loss": 0.2,
                    "entropy": 0.6,
                    "floor_hits": 0,
                }
            )
    return rows


class TestEmitPlotData:
    def test_empty_log_produces_empty_panels(self, tmp_path):
        log = tmp_path / "log.csv"
        write_log(log, [])
        written = emit_plot_data(log, tmp_path / "panels")
        names = {p.name for p in written}
        assert names == {
            "panel_total.csv",
            "panel_total.svg",
            "panel_per_agent.csv",
            "panel_per_agent.svg",
            "panel_gini.csv",
            "panel_gini.svg",
        }
        rows = (tmp_path / "panels" / "panel_total.csv").read_text().splitlines()
        assert rows == ["step,mean,min,max"]

    def test_single_run_min_equals_max(self, tmp_path):
        log = tmp_path / "log.csv"
        write_log(log, synthetic_rows())
        emit_plot_data(log, tmp_path / "panels", window=1)
        with open(tmp_path / "panels" / "panel_total.csv") as handle:
            rows = list(csv.DictReader(handle))
        for row in rows:
            assert row["min"] == row["max"] == row["mean"]

    def test_totals_sum_agents(self, tmp_path):
        log = tmp_path / "log.csv"
        write_log(log, synthetic_rows())
        emit_plot_data(log, tmp_path / "panels", window=1)
        with open(tmp_path / "panels" / "panel_total.csv") as handle:
            rows = list(csv.DictReader(handle))
        # episode e has apples e and 2e for the two agents
        assert [float(r["mean"]) for r in rows] == [3.0 * e for e in range(6)]

    def test_missing_columns_rejected(self, tmp_path):
        log = tmp_path / "log.csv"
        log.write_text("step,episode\n1,0\n")
        with pytest.raises(SchemaError):
            emit_plot_data(log, tmp_path / "panels")

    def test_golden_svg_byte_stable(self, tmp_path):
        log = tmp_path / "log.csv"
        write_log(log, synthetic_rows())
        emit_plot_data(log, tmp_path / "panels", window=2)
        produced = (tmp_path / "panels" / "panel_gini.svg").read_bytes()
        golden = (DATA / "panel_gini_golden.svg").read_bytes()
        assert produced == golden
