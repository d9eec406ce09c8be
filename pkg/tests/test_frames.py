import numpy as np
import pytest
from hypothesis import given, strategies as st

from ckd.data.events import EventStream
from ckd.data.frames import event_counts, integrate_frames, static_to_frames, value_channel
from oracles import random_records


def _stream(records, w=6, h=5):
    return EventStream.from_records(w, h, records)


def test_empty_and_single():
    assert not integrate_frames(_stream([]), 4, 5, 6).any()
    f = integrate_frames(_stream([(10, 2, 3, 1)]), 4, 5, 6)
    assert f.sum() == 1.0 and f[0, 1, 3, 2] == 1.0


def test_equal_duration_bins():
    # span 0..100 over T=4: bin width 25
    recs = [(0, 0, 0, 0), (24, 0, 0, 0), (25, 1, 0, 0), (74, 2, 0, 1), (75, 3, 0, 1), (100, 4, 0, 1)]
    c = event_counts(_stream(recs), 4, 5, 6)
    assert [c[t].sum() for t in range(4)] == [2, 1, 1, 2]
    assert c[3, 1, 0, 4] == 1  # t_max lands in the last bin


def test_single_timestamp_goes_to_bin_zero():
    c = event_counts(_stream([(7, 0, 0, 0), (7, 1, 1, 1)]), 3, 5, 6)
    assert c[0].sum() == 2 and c[1:].sum() == 0


@given(st.integers(0, 300), st.integers(1, 12), st.integers(0, 2**31))
def test_count_conservation_and_range(n, steps, seed):
    s = _stream(random_records(np.random.default_rng(seed), 6, 5, n))
    c = event_counts(s, steps, 5, 6)
    assert c.sum() == n
    f = integrate_frames(s, steps, 5, 6)
    assert f.min() >= 0.0 and f.max() <= 1.0
    if n:
        assert f.max() == 1.0


def test_errors():
    with pytest.raises(ValueError):
        integrate_frames(_stream([]), 0, 5, 6)
    with pytest.raises(ValueError):
        integrate_frames(_stream([]), 2, 6, 6)


def test_value_channel_examples():
    img = np.zeros((2, 2, 3), np.uint8)
    img[0, 0] = (255, 0, 0)
    img[1, 1] = (77, 77, 77)
    v = value_channel(img)
    assert v[0, 0] == 1.0 and v[1, 1] == pytest.approx(77 / 255) and v[0, 1] == 0.0


@given(st.integers(1, 6), st.integers(0, 2**31))
def test_static_frames_constant_in_time(steps, seed):
    img = np.random.default_rng(seed).integers(0, 256, (4, 5, 3), dtype=np.uint8)
    f = static_to_frames(img, steps)
    assert f.shape == (steps, 2, 4, 5)
    assert np.all(f == f[0, 0])
    np.testing.assert_array_equal(f[0, 0], img.max(axis=2) / 255.0)
