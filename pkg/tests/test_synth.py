import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rfgesture.evaluate import misdetection_stats
from rfgesture.ingest import load_dataset
from rfgesture.synth import (
    PRESETS,
    PRIMITIVES,
    ChannelConfig,
    DropoutConfig,
    TrajectoryModel,
    channel_sample,
    epc_codes,
    generate_dataset,
    generate_sample,
    primitive,
    write_dataset,
)

UNIT = ChannelConfig(tx_power_dbm=0.0, antenna_gain_dbic=0.0, n_paths=1, noise_var=0.0)
NO_DROP = DropoutConfig(frame_drop=(0.0,) * 8, reading_drop=0.0)


def test_unit_gain_distance_gives_zero_db():
    lam = UNIT.wavelength
    rss, _ = channel_sample([lam / (4 * math.pi)], UNIT)
    assert rss == pytest.approx(0.0, abs=1e-12)


def test_doubling_distance_loses_six_db():
    a, _ = channel_sample([2.0], UNIT)
    b, _ = channel_sample([4.0], UNIT)
    assert a - b == pytest.approx(20 * math.log10(2), abs=1e-12)
    assert a - b == pytest.approx(6.02, abs=5e-3)


def test_dominant_phase_closed_form():
    cfg = ChannelConfig(wavelength=0.3466, n_paths=1, noise_var=0.0)
    _, phase = channel_sample([1.5], cfg)
    assert phase == pytest.approx(math.fmod(4 * math.pi * 1.5 / 0.3466, 2 * math.pi), abs=1e-9)


def test_default_wavelength_and_amplitude():
    cfg = ChannelConfig()
    assert cfg.wavelength == pytest.approx(0.3466, abs=1e-4)
    # 30 dBm and 9 dBiC: sqrt(1000 mW) * 10**(9/20)
    assert cfg.amplitude == pytest.approx(math.sqrt(1000) * 10 ** 0.45)


def test_noiseless_channel_is_deterministic():
    cfg = ChannelConfig(noise_var=0.0, seed=3)
    d = np.array([[2.0, 5.0, 7.0], [2.1, 4.0, 9.0]])
    a = channel_sample(d, cfg)
    b = channel_sample(d, cfg)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


@given(st.lists(st.floats(0.05, 50.0), min_size=2, max_size=20))
def test_single_path_rss_monotone_in_distance(ds):
    ds = np.sort(ds)
    rss, phase = channel_sample(ds[:, None], UNIT)
    assert np.all(np.diff(rss) <= 1e-12)
    assert np.all((phase >= 0) & (phase < 2 * math.pi))


def test_channel_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        channel_sample([0.0], UNIT)
    with pytest.raises(ValueError):
        ChannelConfig(n_paths=0)
    with pytest.raises(ValueError):
        DropoutConfig(reading_drop=1.5)


@pytest.mark.parametrize("name", PRIMITIVES)
def test_primitives_are_bounded_and_continuous(name):
    s = np.linspace(0, 1, 2001)
    for tempo in (1, 2):
        y = primitive(name, s, tempo)
        assert np.all(np.abs(y) <= 1 + 1e-12)
        assert np.max(np.abs(np.diff(y))) < 0.05
    with pytest.raises(ValueError):
        primitive("wave", s)


def test_dataset_counts_and_metadata():
    samples = generate_dataset(2, 3, drop=NO_DROP)
    assert len(samples) == 126
    assert [s.sample_id for s in samples] == list(range(126))
    assert sorted({s.subject for s in samples}) == [1, 2]
    assert all(sum(s.label == c for s in samples) == 6 for c in range(1, 22))
    # no dropout: every EPC present in every sample
    assert all(set(np.unique(s.epcs)) == set(range(1, 9)) for s in samples)


def test_sequential_inventory_one_epc_per_timestamp():
    s = generate_sample(3, 1, 0, drop=NO_DROP)
    assert np.all(np.diff(s.timestamps) > 0)
    assert np.all((s.phase >= 0) & (s.phase < 2 * math.pi))
    counts = np.bincount(s.epcs, minlength=9)[1:]
    assert counts.max() - counts.min() <= 1  # round robin


def test_generation_is_deterministic_and_order_free():
    a = generate_sample(5, 2, 4, seed=9)
    b = generate_dataset(3, 5, seed=9)[(2 - 1) * 21 * 5 + (5 - 1) * 5 + 4]
    assert (b.label, b.subject) == (5, 2)
    for col in ("timestamps", "epcs", "rss", "phase"):
        assert getattr(a, col).tobytes() == getattr(b, col).tobytes()


def test_generated_distances_are_positive():
    traj = TrajectoryModel()
    s = generate_sample(1, 1, 0, traj=traj, ch=ChannelConfig(noise_var=0.0), distance_m=0.5)
    assert np.all(np.isfinite(s.rss))


def test_write_parse_roundtrip(tmp_path):
    samples = generate_dataset(1, 2, seed=5, classes=4)
    manifest = write_dataset(tmp_path, samples)
    back = load_dataset(manifest)
    assert len(back) == len(samples)
    for a, b in zip(samples, back):
        assert (a.sample_id, a.label, a.subject, a.environment, a.distance_m) == (
            b.sample_id, b.label, b.subject, b.environment, b.distance_m
        )
        for col in ("timestamps", "epcs", "rss", "phase"):
            assert getattr(a, col).tobytes() == getattr(b, col).tobytes()


def test_epc_codes_unique():
    codes = epc_codes()
    assert len(set(codes.values())) == 8 and codes[6].endswith("0006")


def test_presets_exist():
    assert set(PRESETS) == {"realistic", "separable", "confusable"}
    traj, _ = PRESETS["separable"]
    w = np.asarray(traj.tag_weight)
    assert w[[2, 3, 6, 7]].min() > w[[0, 1, 4, 5]].max()  # arm tags move most


def test_pair_dropout_is_independent():
    samples = generate_dataset(40, 10, ch=ChannelConfig(noise_var=0.0), classes=5, drop=DropoutConfig(reading_drop=0.0))
    stats = misdetection_stats(samples)
    n = stats["n_samples"]
    for (a, b), joint in stats["pair"].items():
        expect = stats["epc"][a] * stats["epc"][b]
        sd = math.sqrt(max(expect * (1 - expect), 1e-4) / n)
        assert abs(joint - expect) <= 4 * sd + 1e-3
        assert joint <= min(stats["epc"][a], stats["epc"][b])
