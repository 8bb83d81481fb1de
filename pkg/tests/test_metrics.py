import csv

import numpy as np
import pytest

from hmmse.analysis import F0Track, MelCepstrumSequence
from hmmse.dsp import FrameConfig, Spectrogram, Waveform, spectrogram
from hmmse.errors import EmptyBand, LengthMismatch
from hmmse.metrics import (
    FORMANT_BANDS_HZ,
    band_energy,
    compare_report,
    detect_spikes,
    export_spectrogram,
    f0_metrics,
    mcd,
    render_f0_comparison_png,
    render_spectrogram_png,
    spectral_flux,
    write_spectrogram_pgm,
)

SR = 16000


def seq(frames, order=None):
    frames = np.asarray(frames, dtype=np.float64)
    order = frames.shape[1] - 1 if order is None else order
    return MelCepstrumSequence(order, 0.42, 80, frames)


class TestMcd:
    def test_identity_is_zero(self):
        a = seq(np.random.default_rng(0).normal(0, 1, (10, 13)))
        assert mcd(a, a) == 0.0

    def test_closed_form_single_difference(self):
        a = seq(np.zeros((1, 3)))
        frames = np.zeros((1, 3))
        frames[0, 1] = 0.7
        b = seq(frames)
        expected = (10.0 / np.log(10.0)) * np.sqrt(2.0) * 0.7
        assert mcd(a, b) == pytest.approx(expected, rel=1e-12)

    def test_homogeneity(self):
        a = seq(np.zeros((4, 5)))
        frames = np.zeros((4, 5))
        frames[:, 2] = 0.3
        one = mcd(a, seq(frames))
        two = mcd(a, seq(2 * frames))
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_gain_coefficient_excluded(self):
        a = seq(np.zeros((3, 4)))
        frames = np.zeros((3, 4))
        frames[:, 0] = 100.0
        assert mcd(a, seq(frames)) == 0.0

    def test_pseudometric_properties(self):
        rng = np.random.default_rng(1)
        x, y, z = (seq(rng.normal(0, 1, (6, 8))) for _ in range(3))
        assert mcd(x, y) == pytest.approx(mcd(y, x), abs=1e-12)
        assert mcd(x, z) <= mcd(x, y) + mcd(y, z) + 1e-9

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            mcd(seq(np.zeros((3, 4))), seq(np.zeros((4, 4))))


class TestF0Metrics:
    def track(self, voiced, f0_hz):
        voiced = np.asarray(voiced, dtype=bool)
        log_f0 = np.where(voiced, np.log(f0_hz), np.nan)
        return F0Track(80, voiced, log_f0)

    def test_identical(self):
        t = self.track([True] * 5 + [False] * 5, 120.0)
        assert f0_metrics(t, t) == (0.0, 0.0)

    def test_flag_flip_percentage(self):
        a = self.track([True] * 10, 120.0)
        flags = [True] * 9 + [False]
        b = self.track(flags, 120.0)
        _, vuv = f0_metrics(a, b)
        assert vuv == pytest.approx(10.0)

    def test_constant_offset_rmse(self):
        a = self.track([True] * 8, 120.0)
        b = self.track([True] * 8, 121.0)
        rmse, vuv = f0_metrics(a, b)
        assert rmse == pytest.approx(1.0, abs=1e-9)
        assert vuv == 0.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            f0_metrics(self.track([True], 100.0), self.track([True, True], 100.0))


class TestBandEnergy:
    def flat_spec(self, db=-100.0, frames=4, bins=257):
        return Spectrogram(np.full((frames, bins), db), SR / 512, 80)

    def test_flat_floor(self):
        assert band_energy(self.flat_spec(), 0, 8000) == -100.0

    def test_empty_band(self):
        with pytest.raises(EmptyBand):
            band_energy(self.flat_spec(), 10.0, 11.0)

    def test_formant_band_report(self):
        spec = self.flat_spec(-40.0)
        for lo, hi in FORMANT_BANDS_HZ:
            assert band_energy(spec, lo, hi) == -40.0

    def test_gain_scaling_shifts_band_by_constant(self):
        rng = np.random.default_rng(2)
        wf = Waveform(0.2 * rng.standard_normal(SR), SR)
        cfg = FrameConfig(400, 80)
        a = spectrogram(wf, cfg, 512)
        b = spectrogram(Waveform(wf.samples * 2.0, SR), cfg, 512)
        for lo, hi in ((200, 800), (1000, 3000)):
            assert band_energy(b, lo, hi) - band_energy(a, lo, hi) == pytest.approx(
                20 * np.log10(2.0), abs=1e-9
            )

    def test_spectral_flux_measures_modulation(self):
        steady = self.flat_spec(-40.0, frames=10)
        assert spectral_flux(steady, 0, 1000) == 0.0


class TestDetectSpikes:
    def test_clean_sine_no_events(self):
        t = np.arange(SR) / SR
        wf = Waveform(0.5 * np.sin(2 * np.pi * 220 * t), SR)
        assert detect_spikes(wf) == []

    def test_single_spike_detected(self):
        t = np.arange(SR) / SR
        x = 0.05 * np.sin(2 * np.pi * 220 * t)
        x[8000] = 1.0
        events = detect_spikes(Waveform(x, SR), window=160)
        assert len(events) == 1
        assert abs(events[0] - 8000) <= 80

    def test_all_zero_no_events(self):
        assert detect_spikes(Waveform(np.zeros(SR), SR)) == []

    def test_shift_equivariance(self):
        t = np.arange(SR) / SR
        x = 0.05 * np.sin(2 * np.pi * 220 * t)
        x[4000] = 0.9
        a = detect_spikes(Waveform(x, SR), window=160)
        s = 333
        y = np.concatenate([np.zeros(s), x])
        b = detect_spikes(Waveform(y, SR), window=160)
        assert [e - s for e in b] == a

    def test_window_validation(self):
        with pytest.raises(ValueError):
            detect_spikes(Waveform(np.zeros(100), SR), window=8)


class TestExport:
    def test_pgm_linear_map_round_half_up(self, tmp_path):
        spec = Spectrogram(np.array([[-100.0, -50.0], [0.0, -100.0]]), SR / 512, 80)
        base = tmp_path / "s"
        export_spectrogram(spec, base)
        raw = (tmp_path / "s.pgm").read_bytes()
        header, pixels = raw.split(b"255\n", 1)
        assert header == b"P5\n2 2\n"
        # columns are frames, rows top-down from high frequency:
        # frame0=(-100,-50), frame1=(0,-100) -> top row (bin1): 128, 0
        assert list(pixels) == [128, 0, 0, 255]

    def test_csv_reparse(self, tmp_path):
        rng = np.random.default_rng(3)
        mat = np.maximum(rng.normal(-50, 20, (5, 7)), -100.0)
        spec = Spectrogram(mat, SR / 512, 80)
        export_spectrogram(spec, tmp_path / "x")
        with open(tmp_path / "x.csv") as handle:
            rows = [[float(v) for v in row] for row in csv.reader(handle)]
        assert np.allclose(np.array(rows), mat, atol=1e-5)

    def test_empty_spectrogram(self, tmp_path):
        spec = Spectrogram(np.zeros((0, 0)), SR / 512, 80)
        write_spectrogram_pgm(spec, tmp_path / "e.pgm")
        assert (tmp_path / "e.pgm").read_bytes() == b"P5\n0 0\n255\n"

    def test_png_figures_render(self, tmp_path):
        rng = np.random.default_rng(4)
        wf = Waveform(0.3 * rng.standard_normal(SR), SR)
        spec = spectrogram(wf, FrameConfig(400, 80), 512)
        render_spectrogram_png(spec, tmp_path / "fig.png")
        assert (tmp_path / "fig.png").stat().st_size > 500
        voiced = np.ones(50, dtype=bool)
        track = F0Track(80, voiced, np.full(50, np.log(130.0)))
        render_f0_comparison_png(track, track, SR, tmp_path / "f0.png")
        assert (tmp_path / "f0.png").stat().st_size > 500


class TestCompareReport:
    def test_report_fields(self):
        rng = np.random.default_rng(5)
        wf = Waveform(0.3 * rng.standard_normal(SR), SR)
        spec = spectrogram(wf, FrameConfig(400, 80), 512)
        mc = seq(rng.normal(0, 1, (10, 13)))
        track = F0Track(80, np.ones(10, bool), np.full(10, np.log(120.0)))
        report = compare_report(mc, mc, track, track, spec, wf)
        assert report.mcd_db == 0.0
        assert report.f0_rmse_hz == 0.0
        assert report.vuv_error_pct == 0.0
        assert len(report.band_energies_db) == 3
        d = report.to_dict()
        assert set(d) == {
            "mcd_db", "f0_rmse_hz", "vuv_error_pct", "band_energies_db", "spikes",
        }
