import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from loadveil.traces import (
    ApplianceModel,
    MedianFilter,
    PowerTrace,
    StateTrace,
    aggregate,
    load_models_json,
    load_traces_csv,
    median_filter,
    save_models_json,
    states_from_power,
    synthesize,
    synthesize_household,
    synthetic_household,
    write_traces_csv,
)

HOUSEHOLD_NAMES = ["TV", "coffee machine", "dishwasher", "fridge", "hoover", "water kettle",
                "washing machine"]
HOUSEHOLD_POWERS = {
    "TV": (0, 10, 160),
    "coffee machine": (0, 1280),
    "dishwasher": (0, 1900),
    "fridge": (0, 8, 80, 230),
    "hoover": (0, 1200),
    "water kettle": (0, 1700),
    "washing machine": (0, 130, 240, 1920),
}


def kettle(p_switch=0.01):
    return ApplianceModel("kettle", [0, 1700], [[1 - p_switch, p_switch], [p_switch, 1 - p_switch]])


power_lists = st.lists(st.floats(0, 5000, allow_nan=False), min_size=1, max_size=60)


# --- data model -------------------------------------------------------------

def test_power_trace_rejects_negative_and_bad_step():
    with pytest.raises(ValueError, match="negative"):
        PowerTrace([1.0, -0.5])
    with pytest.raises(ValueError, match="step_seconds"):
        PowerTrace([1.0], step_seconds=0)
    with pytest.raises(ValueError):
        PowerTrace([])


def test_power_trace_is_read_only():
    tr = PowerTrace([1.0, 2.0])
    with pytest.raises(ValueError):
        tr.samples[0] = 5


@pytest.mark.parametrize("powers, matrix, msg", [
    ([5, 10], [[1, 0], [0, 1]], "OFF"),
    ([0, 10], [[0.5, 0.4], [0, 1]], "sums to"),
    ([0, 10], [[1.2, -0.2], [0, 1]], "nonnegative"),
    ([0, 10], [[1]], "2x2"),
])
def test_appliance_model_invariants(powers, matrix, msg):
    with pytest.raises(ValueError, match=msg):
        ApplianceModel("x", powers, matrix)


def test_on_states_are_powered_states():
    m = ApplianceModel("fridge", [0, 8, 80, 230], np.eye(4))
    assert m.on_states == {1, 2, 3}


def test_synthetic_household_power_levels():
    models = synthetic_household()
    assert [m.name for m in models] == HOUSEHOLD_NAMES
    for m in models:
        assert m.state_powers == tuple(float(p) for p in HOUSEHOLD_POWERS[m.name])


def test_synthetic_household_off_shares():
    # stationary OFF share chosen per appliance; checked against the eigen-solution
    expected = {"TV": 0.60, "coffee machine": 0.92, "dishwasher": 0.95, "fridge": 0.52,
                "hoover": 0.88, "water kettle": 0.98, "washing machine": 0.43}
    for m in synthetic_household():
        pi = m.stationary_distribution()
        assert pi[0] == pytest.approx(expected[m.name], abs=0.005)


def test_from_dwell_times_mean_dwell():
    m = ApplianceModel.from_dwell_times("k", [0, 1], [50, 20], [[0, 1], [1, 0]])
    assert m.transition_matrix[0, 0] == pytest.approx(1 - 1 / 50)
    assert m.transition_matrix[1, 0] == pytest.approx(1 / 20)
    # two-state chain: pi_on = p01 / (p01 + p10) = 20 / 70
    assert m.stationary_distribution()[1] == pytest.approx(20 / 70)


# --- CSV / JSON -------------------------------------------------------------

def write(path, text):
    path.write_text(text)
    return str(path)


def test_load_two_columns(tmp_path):
    p = write(tmp_path / "t.csv", "a,b\n0,0\n10,5\n")
    traces = load_traces_csv(p)
    assert list(traces) == ["a", "b"]
    np.testing.assert_array_equal(traces["a"].samples, [0, 10])
    np.testing.assert_array_equal(traces["b"].samples, [0, 5])
    assert traces["a"].step_seconds == 1.0


def test_load_negative_cell_names_row(tmp_path):
    p = write(tmp_path / "t.csv", "a,b\n0,0\n10,-5\n")
    with pytest.raises(ValueError, match=r"row 3.*'b'"):
        load_traces_csv(p)


def test_load_non_numeric_cell(tmp_path):
    p = write(tmp_path / "t.csv", "a\n1\nfoo\n")
    with pytest.raises(ValueError, match=r"row 3.*not a number"):
        load_traces_csv(p)


def test_load_ragged_and_missing(tmp_path):
    p = write(tmp_path / "t.csv", "a,b\n1,2\n3\n")
    with pytest.raises(ValueError, match="row 3 has 1 cells"):
        load_traces_csv(p)
    with pytest.raises(FileNotFoundError):
        load_traces_csv(str(tmp_path / "absent.csv"))


def test_load_skips_timestamp_and_honours_schema(tmp_path):
    p = write(tmp_path / "t.csv", "timestamp,a,b\n1000,1,2\n1001,3,4\n")
    assert list(load_traces_csv(p)) == ["a", "b"]
    assert list(load_traces_csv(p, schema=["b"])) == ["b"]
    with pytest.raises(ValueError, match="not found"):
        load_traces_csv(p, schema=["c"])


def test_load_household_csv_round_trip(tmp_path):
    traces, _ = synthesize_household(synthetic_household(), 50, seed=3)
    path = str(tmp_path / "house.csv")
    write_traces_csv(traces, path)
    loaded = load_traces_csv(path)
    assert list(loaded) == HOUSEHOLD_NAMES
    for name in HOUSEHOLD_NAMES:
        assert loaded[name] == traces[name]


def test_models_json_round_trip(tmp_path):
    models = synthetic_household()
    path = tmp_path / "m.json"
    save_models_json(models, path)
    back = load_models_json(path)
    assert [m.name for m in back] == [m.name for m in models]
    for a, b in zip(models, back):
        assert a.state_powers == b.state_powers
        np.testing.assert_array_equal(a.transition_matrix, b.transition_matrix)
    doc = json.loads(path.read_text())
    assert set(doc[0]) == {"name", "state_powers", "transition_matrix"}


# --- synthesize -------------------------------------------------------------

def test_off_only_model_gives_zero_trace():
    m = ApplianceModel("dead", [0], [[1.0]])
    power, states = synthesize(m, 100, seed=0)
    assert np.all(power.samples == 0) and np.all(states.states == 0)


def test_identity_matrix_stays_off():
    m = ApplianceModel("stuck", [0, 50, 100], np.eye(3))
    power, _ = synthesize(m, 1000, seed=4)
    assert np.all(power.samples == 0)


def test_kettle_on_fraction_matches_stationary():
    # symmetric 2-state chain -> stationary ON share 1/2
    power, states = synthesize(kettle(), 100_000, seed=0)
    assert abs(np.mean(states.states == 1) - 0.5) <= 0.02


def test_synthesize_power_follows_state():
    for m in synthetic_household():
        power, states = synthesize(m, 5000, seed=1)
        assert len(power) == len(states) == 5000
        assert states.states[0] == 0
        np.testing.assert_array_equal(power.samples, np.asarray(m.state_powers)[states.states])


def test_synthesize_determinism():
    m = kettle()
    a, sa = synthesize(m, 2000, seed=11)
    b, sb = synthesize(m, 2000, seed=11)
    c, _ = synthesize(m, 2000, seed=12)
    assert a == b and np.array_equal(sa.states, sb.states)
    assert not np.array_equal(a.samples, c.samples)


def test_synthesize_rejects_empty():
    with pytest.raises(ValueError):
        synthesize(kettle(), 0, seed=0)


def test_states_from_power_nearest_level():
    m = ApplianceModel("fridge", [0, 8, 80, 230], np.eye(4))
    st_ = states_from_power(PowerTrace([0, 7, 90, 240, 3]), m)
    np.testing.assert_array_equal(st_.states, [0, 1, 2, 3, 0])


def test_state_trace_validation():
    with pytest.raises(ValueError):
        StateTrace("x", [0, -1])
    assert StateTrace("x", [0, 2]).on_mask().tolist() == [False, True]


# --- aggregate --------------------------------------------------------------

def test_aggregate_examples():
    assert aggregate([PowerTrace([1, 2]), PowerTrace([3, 4])]).samples.tolist() == [4, 6]
    assert aggregate([PowerTrace([230.0]), PowerTrace([160.0])]).samples.tolist() == [390.0]
    t = PowerTrace([1.5, 2.5])
    assert aggregate([t]) == t


def test_aggregate_errors():
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError, match="samples"):
        aggregate([PowerTrace([1, 2]), PowerTrace([1])])
    with pytest.raises(ValueError, match="step"):
        aggregate([PowerTrace([1]), PowerTrace([1], step_seconds=2)])


@given(st.lists(power_lists.filter(lambda x: len(x) == 8) | st.just([0.0] * 8),
                min_size=2, max_size=6), st.integers(1, 5))
def test_aggregate_exact_and_linear(cols, split):
    traces = [PowerTrace(np.asarray(c[:8] + [0.0] * (8 - len(c)))) for c in cols]
    total = aggregate(traces)
    exact = np.zeros(8)
    for t in traces:
        exact = exact + t.samples
    np.testing.assert_array_equal(total.samples, exact)
    split = min(split, len(traces) - 1)
    a, b = traces[:split], traces[split:]
    np.testing.assert_allclose(aggregate([aggregate(a), aggregate(b)]).samples, total.samples,
                               rtol=1e-12, atol=1e-9)


# --- median filter ----------------------------------------------------------

def test_median_filter_examples():
    const = PowerTrace([7.0] * 9)
    assert median_filter(const) == const
    spike = PowerTrace([0, 0, 100, 0, 0])
    assert median_filter(spike, 5).samples.tolist() == [0, 0, 0, 0, 0]
    t = PowerTrace([3, 1, 4, 1, 5])
    assert median_filter(t, 1) == t


@pytest.mark.parametrize("order", [0, 2, 4, -3, 2.5])
def test_median_filter_rejects_bad_order(order):
    with pytest.raises(ValueError):
        median_filter(PowerTrace([1, 2, 3]), order)


def test_median_filter_replicates_edges():
    # window at index 0 is [5, 5, 5, 1, 1] with edge replication
    out = median_filter(PowerTrace([5, 1, 1, 9, 9]), 5)
    assert out.samples[0] == 5
    assert len(out) == 5


@given(power_lists, st.sampled_from([1, 3, 5, 7]))
@settings(max_examples=60)
def test_median_filter_stays_within_window(samples, order):
    x = np.asarray(samples)
    y = median_filter(PowerTrace(x), order).samples
    h = order // 2
    padded = np.concatenate([np.full(h, x[0]), x, np.full(h, x[-1])])
    for i in range(len(x)):
        win = padded[i:i + order]
        assert win.min() <= y[i] <= win.max()


@given(power_lists)
def test_median_filter_order_one_idempotent(samples):
    t = PowerTrace(samples)
    assert median_filter(median_filter(t, 1), 1) == t


def test_median_filter_estimator():
    mf = MedianFilter(order=5)
    X = np.array([0, 0, 100, 0, 0], dtype=float)
    np.testing.assert_array_equal(mf.fit_transform(X), np.zeros(5))
    assert clone(mf).get_params() == {"order": 5}
    np.testing.assert_array_equal(mf.transform(X.reshape(-1, 1)), np.zeros(5))
    with pytest.raises(ValueError):
        MedianFilter(order=4).fit(X)
