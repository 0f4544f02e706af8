"""Propagation model: pathloss, delays, fading, impairments, noise."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srsloc import channel as ch


def _ue(**kw):
    base = dict(
        ue_id="u", position_m=(100.0, 0.0, 1.5), band_id=0, shift=0,
        antenna_gain_dbi=0.0,
    )
    base.update(kw)
    return ch.UeProfile(**base)


def _los_model(**kw):
    base = dict(
        name="los", pathloss_exponent=2.0, rician_k_db=None,
        n_reflections=0, reflection_power_db=-18.0, reflection_decay_db=3.0,
        excess_delay_scale_s=2e-7,
    )
    base.update(kw)
    return ch.PropagationModel(**base)


ISO_UAV = ch.UavState(
    position_m=(0.0, 0.0, 25.0),
    antennas=(ch.Antenna(peak_gain_dbi=0.0), ch.Antenna(offset_m=(0.3, 0, 0), peak_gain_dbi=0.0)),
)


class TestPathloss:
    def test_free_space_matches_friis(self):
        # FSPL(d, f) = 20 log10(4 pi d f / c)
        f = 866e6
        for d in (1.0, 10.0, 1000.0):
            expect = 20 * math.log10(4 * math.pi * d * f / ch.SPEED_OF_LIGHT)
            assert ch.pathloss_db(d, f, 2.0) == pytest.approx(expect, abs=1e-9)

    def test_exponent_scales_distance_term_only(self):
        f = 866e6
        base = ch.pathloss_db(1.0, f, 3.0)
        assert ch.pathloss_db(10.0, f, 3.0) - base == pytest.approx(30.0, abs=1e-9)

    def test_rejects_nonpositive_distance(self):
        with pytest.raises(ch.ChannelError):
            ch.pathloss_db(0.0, 866e6)


class TestGeometry:
    def test_direct_path_amplitude_and_delay(self):
        """Without fading/reflections the direct tap is pure geometry."""
        rng = np.random.default_rng(0)
        ue = _ue()
        paths = ch.geometry_paths(ue, ISO_UAV, _los_model(), 866e6, rng)
        assert len(paths) == 2  # one list per antenna
        for ant, plist in zip(ISO_UAV.antennas, paths):
            assert len(plist) == 1
            vec = np.array(ue.position_m) - (
                np.array(ISO_UAV.position_m) + np.array(ant.offset_m)
            )
            dist = np.linalg.norm(vec)
            assert plist[0].delay_s == pytest.approx(dist / ch.SPEED_OF_LIGHT, rel=1e-12)
            gain_db = (
                -ch.pathloss_db(dist, 866e6, 2.0)
                + ch.antenna_gain_db(ant, vec / dist)
                + ue.antenna_gain_dbi
            )
            assert abs(plist[0].gain) == pytest.approx(10 ** (gain_db / 20), rel=1e-9)

    def test_reflections_arrive_after_direct(self):
        rng = np.random.default_rng(1)
        model = _los_model(n_reflections=4)
        for _ in range(20):
            for plist in ch.geometry_paths(_ue(), ISO_UAV, model, 866e6, rng):
                delays = [p.delay_s for p in plist]
                assert delays == sorted(delays)
                assert len(plist) == 5

    def test_rician_k_controls_fade_spread(self):
        """Higher K concentrates |direct gain| around its mean."""
        rng = np.random.default_rng(2)
        spreads = {}
        for k_db in (3.0, 20.0):
            model = _los_model(rician_k_db=k_db)
            amps = [
                abs(ch.geometry_paths(_ue(), ISO_UAV, model, 866e6, rng)[0][0].gain)
                for _ in range(400)
            ]
            spreads[k_db] = np.std(amps) / np.mean(amps)
        assert spreads[20.0] < 0.5 * spreads[3.0]

    def test_blockage_attenuates_sometimes(self):
        rng = np.random.default_rng(3)
        model = _los_model(blockage_prob=0.5, blockage_db=20.0)
        amps = np.array(
            [
                abs(ch.geometry_paths(_ue(), ISO_UAV, model, 866e6, rng)[0][0].gain)
                for _ in range(300)
            ]
        )
        ref = np.median(amps)
        frac_blocked = np.mean(amps < ref * 10 ** (-10 / 20))
        assert 0.3 < frac_blocked < 0.7

    def test_doppler_from_velocity(self):
        rng = np.random.default_rng(4)
        uav = ch.UavState(
            position_m=(0.0, 0.0, 25.0),
            velocity_mps=(10.0, 0.0, 0.0),
            antennas=(ch.Antenna(peak_gain_dbi=0.0),),
        )
        ue = _ue(position_m=(1000.0, 0.0, 25.0))  # straight ahead
        p = ch.geometry_paths(ue, uav, _los_model(), 866e6, rng)[0][0]
        assert p.doppler_hz == pytest.approx(866e6 / ch.SPEED_OF_LIGHT * 10.0, rel=1e-6)

    def test_coincident_ue_rejected(self):
        rng = np.random.default_rng(5)
        ue = _ue(position_m=(0.0, 0.0, 25.0))
        uav = ch.UavState(position_m=(0.0, 0.0, 25.0), antennas=(ch.Antenna(),))
        with pytest.raises(ch.ChannelError):
            ch.geometry_paths(ue, uav, _los_model(), 866e6, rng)


class TestFractionalDelay:
    def test_integer_shift_is_exact(self):
        x = np.arange(10, dtype=np.complex128)
        np.testing.assert_array_equal(ch.fractional_delay(x, 3.0)[3:], x[:-3])
        np.testing.assert_array_equal(ch.fractional_delay(x, 3.0)[:3], 0)
        np.testing.assert_array_equal(ch.fractional_delay(x, -2.0)[:-2], x[2:])

    def test_fractional_shift_on_bandlimited_signal(self):
        """Windowed-sinc delay tracks the analytic shift of a tone.

        The 33-tap Kaiser interpolator carries ~0.3% passband ripple, so
        the bound is loose; sub-percent amplitude error is far below any
        channel effect it models.
        """
        n = np.arange(512)
        for f in (0.03, 0.11):
            x = np.exp(2j * np.pi * f * n)
            y = ch.fractional_delay(x, 0.37)
            expect = np.exp(2j * np.pi * f * (n - 0.37))
            err = np.max(np.abs(y[40:-40] - expect[40:-40]))
            assert err < 8e-3, f"f={f}: err={err}"

    def test_roundtrip_cancels(self):
        rng = np.random.default_rng(6)
        # bandlimit the noise so the interpolator is within its passband
        x = rng.standard_normal(512) + 1j * rng.standard_normal(512)
        spec = np.fft.fft(x)
        spec[120:-120] = 0
        x = np.fft.ifft(spec)
        y = ch.fractional_delay(ch.fractional_delay(x, 0.41), -0.41)
        assert np.max(np.abs(y[50:-50] - x[50:-50])) < 2e-2


class TestPropagate:
    def test_single_path_delay_and_gain(self):
        fs = 3.84e6
        x = np.zeros(256, dtype=np.complex128)
        x[64] = 1.0
        tx = ch.IqCapture(samples=x, sample_rate_hz=fs)
        path = ch.ChannelPath(gain=0.5j, delay_s=10 / fs, doppler_hz=0.0)
        out = ch.propagate(tx, [path], _ue()).samples
        assert out[74] == pytest.approx(0.5j, rel=1e-9)

    def test_timing_advance_cancels_delay(self):
        fs = 3.84e6
        x = np.zeros(256, dtype=np.complex128)
        x[64] = 1.0
        tx = ch.IqCapture(samples=x, sample_rate_hz=fs)
        path = ch.ChannelPath(gain=1.0, delay_s=10 / fs, doppler_hz=0.0)
        out = ch.propagate(tx, [path], _ue(timing_advance_s=10 / fs)).samples
        assert abs(out[64]) == pytest.approx(1.0, rel=1e-9)

    def test_cfo_is_pure_rotation(self):
        fs = 3.84e6
        rng = np.random.default_rng(7)
        x = rng.standard_normal(128) + 1j * rng.standard_normal(128)
        tx = ch.IqCapture(samples=x, sample_rate_hz=fs)
        path = ch.ChannelPath(gain=1.0, delay_s=0.0, doppler_hz=0.0)
        out = ch.propagate(tx, [path], _ue(cfo_hz=500.0)).samples
        t = np.arange(128) / fs
        np.testing.assert_allclose(out, x * np.exp(2j * np.pi * 500.0 * t), atol=1e-9)

    def test_drift_sawtooth_resets_each_interval(self):
        ue = _ue(clock_drift_ppm=0.05, drift_correction_interval_s=1.0)
        assert ue.drift_delay_s(0.0) == 0.0
        assert ue.drift_delay_s(0.5) == pytest.approx(0.05e-6 * 0.5)
        assert ue.drift_delay_s(1.25) == pytest.approx(0.05e-6 * 0.25)
        free = _ue(clock_drift_ppm=0.05, drift_correction_interval_s=None)
        assert free.drift_delay_s(100.0) == pytest.approx(0.05e-6 * 100.0)

    def test_empty_path_list_rejected(self):
        tx = ch.IqCapture(samples=np.zeros(8, dtype=complex), sample_rate_hz=1.0)
        with pytest.raises(ch.ChannelError):
            ch.propagate(tx, [], _ue())


class TestNoise:
    def test_noise_power_matches_ktb(self):
        """Measured noise power equals kT0 * fs * NF."""
        fs, nf = 3.84e6, 7.0
        rng = np.random.default_rng(8)
        cap = ch.IqCapture(samples=np.zeros(200_000, dtype=complex), sample_rate_hz=fs)
        out = ch.add_noise(cap, nf, rng)
        measured = np.mean(np.abs(out.samples) ** 2)
        expect = ch.noise_power_w(fs, nf)
        assert measured == pytest.approx(expect, rel=0.02)

    def test_superpose_checks_grids(self):
        a = ch.IqCapture(samples=np.ones(8, dtype=complex), sample_rate_hz=1.0)
        b = ch.IqCapture(samples=np.ones(8, dtype=complex), sample_rate_hz=2.0)
        with pytest.raises(ch.ChannelError):
            ch.superpose([a, b])
        s = ch.superpose([a, a, a])
        np.testing.assert_array_equal(s.samples, 3 * np.ones(8))

    def test_tx_amplitude_sets_body_power(self):
        """Unit-energy body scaled by tx_amplitude averages the dBm target."""
        from srsloc import waveform as wf

        cfg = wf.SrsConfig()
        body = wf.synthesize_symbol(cfg, 0).samples[cfg.cp_len :]
        amp = ch.tx_amplitude(cfg.n_fft, 23.0)
        p_w = np.mean(np.abs(amp * body) ** 2)
        assert 10 * math.log10(p_w) + 30 == pytest.approx(23.0, abs=1e-9)


class TestAntennaPattern:
    def test_dipole_null_on_axis_peak_broadside(self):
        ant = ch.Antenna(axis=(1.0, 0.0, 0.0), peak_gain_dbi=2.15)
        on_axis = ch.antenna_gain_db(ant, np.array([1.0, 0.0, 0.0]))
        broadside = ch.antenna_gain_db(ant, np.array([0.0, 1.0, 0.0]))
        assert broadside == pytest.approx(2.15, abs=1e-9)
        assert on_axis < broadside - 30.0


@settings(max_examples=40, deadline=None)
@given(
    d=st.floats(1.0, 5000.0),
    f=st.floats(100e6, 6e9),
    exp=st.floats(1.6, 4.0),
)
def test_pathloss_monotone_in_distance(d, f, exp):
    assert ch.pathloss_db(d * 1.5, f, exp) > ch.pathloss_db(d, f, exp)
