import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from cfrca.errors import EventParseError, ValidationError
from cfrca.events import (
    CountPanel,
    EventLog,
    EventRecord,
    count_transform,
    default_bins,
    mutual_information,
    parse_event_log,
    periodicity_score,
    read_panel_csv,
    relevance_filter,
    window_to_failure,
    write_event_log,
    write_panel_csv,
)


def _log(pairs):
    return EventLog(tuple(EventRecord(t, f"e{i}", ch) for i, (t, ch) in enumerate(pairs)))


# -- parsing ---------------------------------------------------------------


def test_parse_empty():
    assert len(parse_event_log("")) == 0


def test_parse_sorts_by_timestamp():
    log = parse_event_log("5,a,X\n1,b,X\n3,c,Y\n")
    assert [r.timestamp for r in log.records] == [1.0, 3.0, 5.0]


def test_parse_header_is_optional():
    assert parse_event_log("timestamp,event_id,channel\n2,a,X\n") == parse_event_log("2,a,X\n")


def test_parse_wrong_arity_reports_line():
    with pytest.raises(EventParseError) as exc:
        parse_event_log("abc,x\n")
    assert exc.value.lineno == 1
    assert "line 1" in str(exc.value)


def test_parse_bad_timestamp_line_number():
    with pytest.raises(EventParseError, match="line 2"):
        parse_event_log("1,a,X\nnope,b,X\n")


def test_parse_negative_timestamp_rejected():
    with pytest.raises(EventParseError):
        parse_event_log("-1,a,X\n")


def test_ties_keep_input_order():
    log = parse_event_log("1,first,X\n1,second,X\n0,zero,X\n")
    assert [r.event_id for r in log.records] == ["zero", "first", "second"]


@given(st.lists(st.tuples(st.floats(0, 1e6, allow_nan=False), st.sampled_from("ABC")), max_size=40))
def test_event_log_roundtrip(pairs):
    log = _log(sorted(pairs, key=lambda p: p[0]))
    buf = io.StringIO()
    write_event_log(log, buf)
    assert parse_event_log(buf.getvalue()) == log


# -- counting --------------------------------------------------------------


def test_single_slot_tally():
    panel = count_transform(_log([(0.5, "A"), (0.7, "A")]), 1.0, ["A"])
    assert panel["A"].tolist() == [2]


def test_boundary_event_goes_to_later_slot():
    panel = count_transform(_log([(1.0, "A")]), 1.0, ["A"], start_time=0.0, n_slots=2)
    assert panel["A"].tolist() == [0, 1]


def test_start_time_floors_to_slot_width():
    panel = count_transform(_log([(7.3, "A"), (9.9, "A")]), 2.0, ["A"])
    assert panel.start_time == 6.0
    assert panel["A"].tolist() == [1, 1]


def test_unknown_channels_are_ignored_and_absent_ones_are_zero():
    panel = count_transform(_log([(0.1, "A"), (0.2, "Z")]), 1.0, ["A", "B"])
    assert panel["A"].tolist() == [1] and panel["B"].tolist() == [0]


def test_conservation_on_poisson_events():
    rng = np.random.default_rng(3)
    n = 1000
    times = np.sort(rng.uniform(0, 200, n))
    chans = rng.choice(["A", "B", "C"], n)
    log = _log(list(zip(times.tolist(), chans.tolist())))
    panel = count_transform(log, 1.0, ["A", "B", "C"], start_time=0.0, n_slots=200)
    for ch in "ABC":
        assert panel[ch].sum() == int(np.sum(chans == ch))


@given(
    st.lists(st.floats(0, 500, allow_nan=False), min_size=1, max_size=60),
    st.floats(0.1, 20, allow_nan=False),
)
def test_counts_conserved_property(times, width):
    panel = count_transform(_log([(t, "A") for t in times]), width, ["A"])
    assert panel["A"].sum() == len(times)
    # every event falls in [start + k w, start + (k+1) w)
    for t in times:
        k = math.floor((t - panel.start_time) / width)
        assert panel["A"][k] >= 1


def test_bad_slot_width():
    with pytest.raises(ValidationError):
        count_transform(_log([(1, "A")]), 0.0, ["A"])


# -- panels ----------------------------------------------------------------


def _panel(n=100, n_vars=2):
    counts = np.arange(n * n_vars, dtype=np.int64).reshape(n_vars, n) % 17
    return CountPanel(tuple(f"V{i}" for i in range(n_vars)), counts)


def test_window_full_identity():
    p = _panel()
    assert window_to_failure(p, 99, 100) == p


def test_window_index_arithmetic():
    w = window_to_failure(_panel(), 50, 10)
    assert w.first_slot == 41 and w.n_slots == 10
    assert np.array_equal(w.counts, _panel().counts[:, 41:51])


def test_window_too_long():
    with pytest.raises(ValidationError, match="only 6 slots available"):
        window_to_failure(_panel(), 5, 10)


@given(st.integers(0, 99), st.integers(1, 100))
def test_window_never_keeps_future(failure, hist):
    p = _panel()
    if hist > failure + 1:
        with pytest.raises(ValidationError):
            window_to_failure(p, failure, hist)
        return
    w = window_to_failure(p, failure, hist)
    assert w.first_slot + w.n_slots - 1 == failure
    assert w.n_slots == hist


def test_panel_validation():
    with pytest.raises(ValidationError):
        CountPanel(("A",), np.array([[1, -1]]))
    with pytest.raises(ValidationError):
        CountPanel(("A", "A"), np.zeros((2, 3)))


@given(st.integers(0, 30), st.integers(1, 4), st.integers(0, 50))
def test_panel_csv_roundtrip(n, n_vars, first):
    counts = np.random.default_rng(n).integers(0, 40, (n_vars, n))
    p = CountPanel(tuple(f"V{i}" for i in range(n_vars)), counts, first_slot=first, start_time=float(first))
    buf = io.StringIO()
    write_panel_csv(p, buf)
    q = read_panel_csv(buf.getvalue())
    if n:
        assert q == p
    else:
        assert q.n_slots == 0


# -- mutual information ----------------------------------------------------


def test_default_bins_clamped():
    assert default_bins(10) == 2
    assert default_bins(500) == 10
    assert default_bins(10_000) == 16


def test_mi_perfect_binary_is_ln2():
    a = np.array([0, 1] * 50)
    mi, p = mutual_information(a, a.copy(), bins=2)
    assert mi == pytest.approx(math.log(2), abs=1e-12)
    assert p < 0.05


def test_mi_self_information_equals_binned_entropy():
    x = np.random.default_rng(0).normal(size=200)
    mi, p = mutual_information(x, x)
    bins = default_bins(200)
    codes = np.searchsorted(np.unique(np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])), x, side="right")
    freq = np.bincount(codes) / x.size
    freq = freq[freq > 0]
    assert mi == pytest.approx(-np.sum(freq * np.log(freq)), abs=1e-12)
    assert p < 0.05


def test_mi_constant_series():
    assert mutual_information(np.ones(50), np.arange(50)) == (0.0, 1.0)


@given(st.integers(0, 10_000))
def test_mi_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.poisson(5, 40), rng.poisson(5, 40)
    assert mutual_information(a, b, n_perm=19)[0] == mutual_information(b, a, n_perm=19)[0]


def test_mi_permutation_pvalues_calibrated():
    pvals = []
    for seed in range(200):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=100)
        pvals.append(mutual_information(a, rng.permutation(a), seed=seed)[1])
    assert stats.kstest(pvals, "uniform").statistic < 0.15


# -- periodicity -----------------------------------------------------------


def test_square_wave_is_periodic():
    wave = np.tile([1, 1, 1, 1, 0, 0, 0, 0], 16)
    assert periodicity_score(wave) > 0.6


def test_white_noise_not_periodic():
    scores = [periodicity_score(np.random.default_rng(s).poisson(10, 256)) for s in range(100)]
    assert np.percentile(scores, 95) < 0.3


def test_constant_series_scores_zero():
    assert periodicity_score(np.full(64, 7)) == 0.0


# -- relevance filter ------------------------------------------------------


def _filter_panel(seed=0, n=300):
    rng = np.random.default_rng(seed)
    x1 = rng.poisson(10, n)
    y = rng.poisson(0.5 * x1)
    x4 = np.tile([5, 0], n // 2)  # timer
    x5 = rng.poisson(10, n)  # independent noise
    return CountPanel(("X1", "X4", "X5", "Y"), np.vstack([x1, x4, x5, y]))


def test_filter_keeps_cause_drops_timer():
    r = relevance_filter(_filter_panel(), "Y")
    assert "X1" in r.retained_names
    assert [v for v, _ in r.dropped_periodic] == ["X4"]
    assert r.retained_names[0] == "Y"


def test_filter_disabled_keeps_everything_ranked():
    r = relevance_filter(_filter_panel(), "Y", alpha=1.0, periodicity_threshold=1.0)
    assert sorted(r.retained_names) == ["X1", "X4", "X5", "Y"]
    mis = [mi for _, mi, _ in r.retained[1:]]
    assert mis == sorted(mis, reverse=True)


def test_filter_single_variable_panel():
    p = CountPanel(("Y",), np.random.default_rng(0).poisson(3, (1, 50)))
    assert relevance_filter(p, "Y").retained_names == ["Y"]


def test_filter_unknown_target():
    with pytest.raises(ValidationError):
        relevance_filter(_filter_panel(), "nope")
