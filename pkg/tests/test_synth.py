import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phaseid.network import Device
from phaseid.synth.mapping import (aepl, classify_loads, classify_mapping_balance, find_mapping, mapping_statistics,
                                   phase_loads, random_phase_mapping)
from phaseid.synth.panel import (VoltagePanel, consumer_series, inject_noise, multiplicative_noise, read_panel_binary,
                                 read_panel_csv, write_panel_binary, write_panel_csv)
from phaseid.synth.profiles import (HOURS_PER_YEAR, diurnal_shape, generate_load_profiles, kw_to_pu, read_profiles_csv,
                                    write_profiles_csv)

HOMES = tuple(Device(2, "household", kwh) for kwh in (3000.0, 4500.0, 6000.0, 2500.0))


def test_diurnal_shape_unit_mean_two_peaks():
    s = diurnal_shape()
    assert s.mean() == pytest.approx(1.0)
    assert s.argmax() in range(18, 21)
    assert s[7] > s[3] and s[7] > s[12]


def test_profiles_carry_annual_energy():
    T = 24 * 30
    loads = generate_load_profiles(HOMES, T, 1, 100e3)
    for k, d in enumerate(HOMES):
        assert loads.p[k].sum() == pytest.approx(kw_to_pu(d.annual_kwh * T / HOURS_PER_YEAR, 100e3))
    assert np.all(loads.q >= 0)


def test_profiles_independent_of_device_order():
    a = generate_load_profiles(HOMES, 48, 3, 100e3)
    b = generate_load_profiles(HOMES[:2], 48, 3, 100e3)
    assert np.array_equal(a.p[:2], b.p)


def test_correlated_profiles_are_scaled_copies():
    loads = generate_load_profiles(HOMES, 48, 3, 100e3, correlated=True)
    ratio = loads.p[1] / loads.p[0]
    assert np.allclose(ratio, ratio[0])


def test_pv_injects():
    pv = (Device(2, "pv", 0.0, p_avail=0.05),)
    p = generate_load_profiles(pv, 48, 0, 100e3).p[0]
    assert p.max() <= 0 and p.min() < 0 and p[0] == 0


def test_short_horizon_rejected():
    with pytest.raises(ValueError):
        generate_load_profiles(HOMES, 12, 0, 100e3)


def test_profiles_csv_round_trip(tmp_path):
    loads = generate_load_profiles(HOMES, 24, 2, 100e3)
    ids = [f"h{k}" for k in range(len(HOMES))]
    write_profiles_csv(loads, tmp_path / "p.csv", ids)
    back = read_profiles_csv(tmp_path / "p.csv", ids)
    assert back == loads


def test_profiles_csv_gap_rejected(tmp_path):
    f = tmp_path / "p.csv"
    f.write_text("device_id,t,p_pu,q_pu\na,1,0.1,0\na,3,0.1,0\n")
    with pytest.raises(ValueError, match="time index"):
        read_profiles_csv(f)


def test_random_mapping_frequencies_and_determinism():
    devs = tuple(Device(2, "household", 1.0) for _ in range(30_000))
    m = random_phase_mapping(devs, 4)
    freq = np.bincount(list(m.phases.values()), minlength=3) / len(devs)
    assert np.all(np.abs(freq - 1 / 3) < 0.01)
    assert random_phase_mapping(devs, 4).phases == m.phases


def test_balance_classes():
    assert classify_loads([100, 101, 99]) == "C1"
    assert classify_loads([100, 105, 95]) == "C2"
    assert classify_loads([100, 130, 70]) == "C3"
    for cls in ("C1", "C2", "C3"):
        devs = tuple(Device(2, "household", 1000.0 + 37 * k) for k in range(30))
        m = find_mapping(devs, cls, 0)
        assert classify_mapping_balance(m, devs) == cls


def test_aepl_and_phase_loads():
    devs = (Device(2, "household", 300.0), Device(2, "household", 600.0), Device(2, "other", 900.0, "3"))
    m = random_phase_mapping(devs, 0)
    m = type(m)({0: 0, 1: 1}, 0)
    assert aepl(m, devs) == pytest.approx(200.0)
    assert np.allclose(phase_loads(m, devs), [600, 900, 300])


def test_mapping_statistics_keys():
    st_ = mapping_statistics(HOMES, 2000, 0)
    assert abs(sum(st_["phase_frequency"]) - 1) < 1e-12
    assert st_["aepl"] > 0


def test_noise_statistics():
    tau = 0.02
    r = multiplicative_noise((100_000,), tau, np.random.default_rng(0))
    assert abs(r.std() / (tau / 3) - 1) < 0.05
    assert abs(np.mean(np.abs(r - 1) <= tau) - 0.9973) < 0.002
    assert np.array_equal(multiplicative_noise((3,), 0.0, None), np.ones(3))
    with pytest.raises(ValueError):
        multiplicative_noise((3,), -0.1, np.random.default_rng(0))


def test_noise_ratio_between_seeds_zero_mean():
    base = np.full((200, 50), 1.02)
    a = inject_noise(base, 0.01, 1)
    b = inject_noise(base, 0.01, 2)
    d = a / b - 1
    assert abs(d.mean()) < 3 * d.std() / np.sqrt(d.size)


def test_inject_noise_panel_keeps_type():
    p = VoltagePanel(np.ones((4, 2, 3)))
    assert inject_noise(p, 0.0, 0) is p
    assert isinstance(inject_noise(p, 0.01, 0), VoltagePanel)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 30), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_panel_io_round_trip(tmp_path_factory, T, N, seed):
    d = tmp_path_factory.mktemp("panel")
    p = VoltagePanel(np.random.default_rng(seed).uniform(0.9, 1.1, (T, N, 3)))
    write_panel_csv(p, d / "p.csv")
    write_panel_binary(p, d / "p.bin")
    assert read_panel_csv(d / "p.csv") == p
    assert read_panel_binary(d / "p.bin") == p


def test_panel_binary_rejects_garbage(tmp_path):
    f = tmp_path / "x.bin"
    f.write_bytes(b"NOTPNL" + bytes(10))
    with pytest.raises(ValueError):
        read_panel_binary(f)


def test_consumer_series_picks_own_phase(feeder):
    mags = np.random.default_rng(0).uniform(0.9, 1.1, (5, feeder.n_buses, 3))
    panel = VoltagePanel(mags)
    m = random_phase_mapping(feeder.devices, 1)
    devs = feeder.single_phase_devices()[:4]
    out = consumer_series(panel, feeder, m, devs)
    for j, k in enumerate(devs):
        assert np.array_equal(out[:, j], mags[:, feeder.devices[k].bus_id - 1, m.phases[k]])
