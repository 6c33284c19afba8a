import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crackling_kzm import event_io
from crackling_kzm.event_io import AnalysisConfig, ConfigError, EventFormatError, EventRecord


def make(n=4, t=64, seed=0, **kw):
    return EventRecord("ev", 5e-8, np.random.default_rng(seed).standard_normal((n, t)), **kw)


def test_sixteen_channel_event(tmp_path):
    ev = EventRecord("lab", 50e-9, np.random.default_rng(0).standard_normal((16, 40000)))
    path = event_io.save_event(ev, tmp_path / "lab.kzme")
    back = event_io.load_event(path)
    assert back.channel_count == 16 and back.n_samples == 40000
    assert back.sample_interval == 50e-9


def test_two_channels_rejected(tmp_path):
    with pytest.raises(EventFormatError, match="N >= 3 violated"):
        EventRecord("x", 1e-7, np.zeros((2, 10)))
    path = tmp_path / "two.csv"
    path.write_text("# kzm-event v1\n# channels: 2\n# samples: 2\n# sample_interval: 1e-7\n1,2\n3,4\n")
    with pytest.raises(EventFormatError, match="N >= 3"):
        event_io.load_event(path)


def test_nan_sample_names_channel_and_index(tmp_path):
    x = np.zeros((3, 5))
    x[1, 3] = np.nan
    with pytest.raises(EventFormatError, match="channel 1 at index 3") as info:
        EventRecord("x", 1e-7, x)
    assert info.value.column == 1
    path = tmp_path / "nan.csv"
    path.write_text("# kzm-event v1\n# channels: 3\n# samples: 2\n# sample_interval: 1e-7\n1,2,3\n4,nan,6\n")
    with pytest.raises(EventFormatError, match="channel 1 at index 1"):
        event_io.load_event(path)


def test_duplicate_angle_rejected(tmp_path):
    with pytest.raises(EventFormatError, match="duplicate angle at position 2"):
        make(n=4, node_angles=[0.0, 1.0, 1.0, 2.0])
    with pytest.raises(EventFormatError, match="non-increasing"):
        make(n=4, node_angles=[0.0, 2.0, 1.0, 3.0])
    with pytest.raises(EventFormatError, match=r"\[0, 2\*pi\)"):
        make(n=3, node_angles=[0.0, 1.0, 7.0])


def test_default_angles_uniform():
    ev = make(n=8)
    assert np.allclose(ev.node_angles, 2 * np.pi * np.arange(8) / 8)


def test_arrays_read_only():
    ev = make()
    with pytest.raises(ValueError):
        ev.samples[0, 0] = 1.0


def test_normalize_constant_channel():
    x = np.array([[1.0, 1, 1, 1], [0.0, 1, 2, 3], [5.0, 1, 0, 2]])
    out = event_io.normalize_channels(EventRecord("c", 1.0, x))
    assert out.samples[0].tolist() == [0.0, 0.0, 0.0, 0.0]
    assert out.metadata["constant_channels"] == [0]


def test_normalize_two_points():
    x = np.array([[0.0, 2.0], [1.0, 5.0], [3.0, -1.0]])
    out = event_io.normalize_channels(EventRecord("c", 1.0, x))
    assert out.samples[0].tolist() == [-1.0, 1.0]


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 50), elements=st.floats(-1e3, 1e3)))
def test_normalize_moments_and_idempotence(x):
    ev = EventRecord("h", 1.0, x)
    once = event_io.normalize_channels(ev)
    twice = event_io.normalize_channels(once)
    assert np.allclose(once.samples, twice.samples, rtol=0, atol=1e-12)
    live = [i for i in range(3) if i not in once.metadata.get("constant_channels", [])]
    for i in live:
        assert abs(once.samples[i].mean()) < 1e-12
        assert abs(once.samples[i].std() - 1.0) < 1e-12


def test_random_channel_moments():
    out = event_io.normalize_channels(make(n=5, t=1000, seed=3))
    assert np.all(np.abs(out.samples.mean(axis=1)) < 1e-12)
    assert np.all(np.abs(out.samples.std(axis=1) - 1) < 1e-12)


@pytest.mark.parametrize("suffix", [".kzme", ".csv"])
def test_load_normalize_save_roundtrip(tmp_path, suffix):
    ev = make(n=5, t=200, seed=4, metadata={"source": "unit"})
    first = event_io.load_event(event_io.save_event(ev, tmp_path / f"a{suffix}"))
    norm = event_io.normalize_channels(first)
    back = event_io.load_event(event_io.save_event(norm, tmp_path / f"b{suffix}"))
    if suffix == ".kzme":
        assert np.array_equal(back.samples, norm.samples)
    else:
        assert np.allclose(back.samples, norm.samples, rtol=0, atol=1e-12)
    assert back.event_id == "ev" and back.metadata["source"] == "unit"
    assert np.array_equal(back.node_angles, ev.node_angles)


def test_binary_layout(tmp_path):
    import struct

    ev = make(n=3, t=4)
    data = event_io.save_event(ev, tmp_path / "x.kzme").read_bytes()
    assert data[:4] == b"KZME"
    version, n, t, dt = struct.unpack_from("<HIQd", data, 4)
    assert (version, n, t, dt) == (1, 3, 4, 5e-8)
    off = 4 + struct.calcsize("<HIQd") + 8 * 3
    first_row = np.frombuffer(data, "<f8", 3, off)
    assert np.array_equal(first_row, ev.samples[:, 0])


def test_truncated_binary(tmp_path):
    path = event_io.save_event(make(), tmp_path / "x.kzme")
    path.write_bytes(path.read_bytes()[:100])
    with pytest.raises(EventFormatError, match="truncated"):
        event_io.load_event(path)


def test_csv_row_count_mismatch(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# kzm-event v1\n# channels: 3\n# samples: 3\n# sample_interval: 1e-7\n1,2,3\n4,5,6\n")
    with pytest.raises(EventFormatError, match="declares 3 samples"):
        event_io.load_event(path)


def test_csv_unparsable_value_position(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# kzm-event v1\n# channels: 3\n# samples: 2\n# sample_interval: 1e-7\n1,2,3\n4,x,6\n")
    with pytest.raises(EventFormatError) as info:
        event_io.load_event(path)
    assert info.value.row == 6 and info.value.column == 1


def test_unknown_header(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("hello\n")
    with pytest.raises(EventFormatError, match="unrecognized"):
        event_io.load_event(path)


def test_config_file(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("# analysis settings\nwindow_length = 64\nsimilarity-threshold = 0.6  # stricter\n")
    cfg = event_io.load_config(path)
    assert cfg.window_length == 64 and cfg.similarity_threshold == 0.6 and cfg.stride == 128


def test_config_unknown_key(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("windowlength = 64\n")
    with pytest.raises(ConfigError, match="unknown key"):
        event_io.load_config(path)


def test_config_validation():
    with pytest.raises(ConfigError):
        AnalysisConfig(smoothing_width=4)
    with pytest.raises(ConfigError):
        AnalysisConfig(similarity_threshold=1.0)


def test_atomic_write_leaves_no_temp(tmp_path):
    event_io.atomic_write(tmp_path / "sub" / "f.txt", "abc")
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.txt"]
