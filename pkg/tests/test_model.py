import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circascade import (
    CascadeSpec,
    EventStream,
    NonFiniteRate,
    NonPositiveRate,
    RatesLengthMismatch,
    StreamInvariantViolation,
    SubsetSpec,
    EmptySubset,
    ZeroLevels,
    trace_index,
    validate,
)


def test_validate_canonical_spec():
    validate(CascadeSpec(3, (1.0, 1.0, 1.0)))  # no exception


def test_validate_zero_levels():
    with pytest.raises(ZeroLevels):
        validate(CascadeSpec(0, ()))


def test_validate_negative_rate():
    with pytest.raises(NonPositiveRate):
        validate(CascadeSpec(2, (1.0, -0.5)))


def test_validate_zero_rate():
    with pytest.raises(NonPositiveRate):
        validate(CascadeSpec(2, (1.0, 0.0)))


def test_validate_nonfinite_rate():
    with pytest.raises(NonFiniteRate):
        validate(CascadeSpec(2, (1.0, float("inf"))))
    with pytest.raises(NonFiniteRate):
        validate(CascadeSpec(2, (float("nan"), 1.0)))


def test_validate_length_mismatch():
    with pytest.raises(RatesLengthMismatch):
        validate(CascadeSpec(3, (1.0, 2.0)))


def test_trace_index_examples():
    assert trace_index(1, 1, 6) == 1       # autocorrelation class
    assert trace_index(2, 1, 6) == 0       # contiguous cascade class
    assert trace_index(0, 5, 6) == 0       # cyclic wraparound


@given(st.integers(2, 40), st.integers(0, 39))
def test_trace_index_autocorrelation_is_class_one(n, m):
    assert trace_index(m % n, m % n, n) == 1


@given(st.integers(1, 40), st.integers(-50, 50), st.integers(-50, 50), st.integers(-50, 50))
def test_trace_index_rotation_invariant(n, m, k, r):
    assert trace_index((m + r) % n, (k + r) % n, n) == trace_index(m % n, k % n, n)


@given(
    st.integers(-1, 6),
    st.lists(
        st.one_of(
            st.floats(min_value=1e-6, max_value=1e6),
            st.sampled_from([0.0, -1.0, float("inf"), float("nan")]),
        ),
        max_size=6,
    ),
)
@settings(max_examples=200)
def test_validate_accepts_iff_invariants_hold(n, rates):
    spec = CascadeSpec(n, tuple(rates))
    should_pass = (
        n >= 1
        and len(rates) == n
        and all(np.isfinite(r) and r > 0 for r in rates)
    )
    if should_pass:
        validate(spec)
    else:
        with pytest.raises(Exception):
            validate(spec)


def test_spec_json_round_trip():
    spec = CascadeSpec(3, (1.0, 2.5, 0.125))
    again = CascadeSpec.from_json(spec.to_json())
    assert again == spec
    payload = json.loads(spec.to_json())
    assert payload == {"n_levels": 3, "rates": [1.0, 2.5, 0.125]}


def test_spec_json_rejects_length_mismatch():
    with pytest.raises(RatesLengthMismatch):
        CascadeSpec.from_json('{"n_levels": 3, "rates": [1.0, 2.0]}')


def test_equal_rate_predicate():
    assert CascadeSpec.equal(4, 2.0).is_equal_rate()
    assert not CascadeSpec(2, (1.0, 1.0 + 1e-6)).is_equal_rate()
    # relative spread right at the threshold stays equal-rate
    assert CascadeSpec(2, (1.0, 1.0 + 1e-13)).is_equal_rate()


def test_cycle_current_matches_harmonic_sum():
    spec = CascadeSpec(3, (1.0, 2.0, 4.0))
    assert spec.cycle_current == pytest.approx(4.0 / 7.0)


def test_subset_spec_validation():
    s = SubsetSpec((2, 1))
    assert s.members == (1, 2)
    assert s.n_s == 2
    with pytest.raises(EmptySubset):
        SubsetSpec(())
    with pytest.raises(EmptySubset):
        SubsetSpec((1, 1))
    with pytest.raises(EmptySubset):
        SubsetSpec((0, 7)).check_against(6)


def _stream_from_merged(times, labels, n, total):
    times = np.asarray(times, float)
    labels = np.asarray(labels)
    return EventStream(
        tuple(times[labels == l] for l in range(n)), total
    )


def test_event_stream_accepts_valid_cycle():
    # labels must step down cyclically: 2, 1, 0, 2, 1, 0, ...
    stream = _stream_from_merged(
        [0.3, 0.9, 1.4, 2.2, 3.0, 3.1], [2, 1, 0, 2, 1, 0], 3, 4.0
    )
    stream.check()
    assert stream.counts == (2, 2, 2)
    assert stream.n_events == 6


def test_event_stream_rejects_broken_cycling():
    stream = _stream_from_merged([0.3, 0.9, 1.4], [2, 0, 1], 3, 2.0)
    with pytest.raises(StreamInvariantViolation):
        stream.check()


def test_event_stream_rejects_ties():
    stream = _stream_from_merged([0.3, 0.3, 0.9], [2, 1, 0], 3, 2.0)
    with pytest.raises(StreamInvariantViolation):
        stream.check()


def test_event_stream_count_spread_of_one_is_fine():
    stream = _stream_from_merged(
        [0.1, 0.5, 0.8, 1.2, 1.9], [1, 0, 1, 0, 1], 2, 3.0
    )
    stream.check()
    assert stream.counts == (2, 3)


def test_event_stream_rejects_imbalanced_channels():
    # channel 0 fires three times in a row: cycling and balance both break
    with pytest.raises(StreamInvariantViolation):
        EventStream((np.array([0.1, 0.5, 0.9]), np.array([2.0])), 3.0).check()


def test_event_stream_span_must_fit_window():
    stream = _stream_from_merged([0.1, 1.5], [1, 0], 2, 1.0)
    with pytest.raises(StreamInvariantViolation):
        stream.check()
