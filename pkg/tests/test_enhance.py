import numpy as np
import pytest

import toy
from hmmse.analysis import AnalysisConfig, F0Track, estimate_f0
from hmmse.dsp import Waveform, write_wav
from hmmse.enhance import (
    EnhanceResult,
    InterferenceSpec,
    add_interference,
    enhance_with_side_info,
    make_rir,
    oracle_components,
    synthesize_from_text,
    validate_corpus,
)
from hmmse.errors import (
    FrameCountMismatch,
    IoError,
    LengthMismatch,
    MissingCompetingSignal,
)
from hmmse.labels import PhoneLabel
from hmmse.metrics import f0_metrics, mcd
from hmmse.vocoder import ExcitationConfig, make_excitation, mlsa_filter, resynthesize

SR = 16000


def measured_snr_db(clean, noisy):
    noise = noisy.samples - clean.samples
    return 10 * np.log10(np.mean(clean.samples**2) / np.mean(noise**2))


@pytest.fixture(scope="module")
def one_utt():
    return toy.build_corpus(n_utterances=2, seed=21)


class TestOracleComponents:
    def test_equal_frame_counts(self, one_utt):
        f0, mc = oracle_components(one_utt.utterances[0].waveform, one_utt.config)
        assert len(f0) == len(mc)

    def test_composition_identity_with_resynthesize(self, one_utt):
        wf = one_utt.utterances[0].waveform
        cfg = one_utt.config
        f0, mc = oracle_components(wf, cfg)
        ex = ExcitationConfig(seed=5)
        direct = resynthesize(wf, cfg, ex)
        composed = mlsa_filter(mc, make_excitation(f0, SR, ex))
        assert np.array_equal(direct.samples, composed.samples)

    def test_silence_gives_unvoiced_track(self):
        f0, mc = oracle_components(Waveform(np.zeros(SR), SR), AnalysisConfig())
        assert not np.any(f0.voiced)


class TestAddInterference:
    def test_noise_snr_exact(self, one_utt):
        clean = one_utt.utterances[0].waveform
        for snr in (-5.0, 0.0, 10.0, 20.0):
            out = add_interference(clean, InterferenceSpec("additive_noise", snr, seed=3))
            assert measured_snr_db(clean, out) == pytest.approx(snr, abs=0.1)

    def test_high_snr_is_near_identity(self, one_utt):
        clean = one_utt.utterances[0].waveform
        out = add_interference(clean, InterferenceSpec("additive_noise", 60.0, seed=4))
        diff = out.samples - clean.samples
        rel = np.sqrt(np.mean(diff**2) / np.mean(clean.samples**2))
        assert rel < 0.002

    def test_rir_decay_matches_rt60(self):
        rt60 = 0.3
        rir = make_rir(rt60, SR, seed=5)
        # regression of smoothed log energy against time gives the decay rate
        window = 64
        energy = np.convolve(rir**2, np.ones(window) / window, mode="valid")
        t = np.arange(len(energy)) / SR
        keep = energy > 0
        slope_db_per_s = np.polyfit(t[keep], 10 * np.log10(energy[keep]), 1)[0]
        decay_time = -60.0 / slope_db_per_s
        assert decay_time == pytest.approx(rt60, rel=0.10)

    def test_reverb_shape_and_peak(self, one_utt):
        clean = one_utt.utterances[0].waveform
        out = add_interference(clean, InterferenceSpec("reverberation", rt60_seconds=0.3, seed=6))
        assert len(out.samples) == len(clean.samples)
        assert np.max(np.abs(out.samples)) == pytest.approx(np.max(np.abs(clean.samples)))

    def test_competing_speaker_mixed_at_snr(self, one_utt):
        clean = one_utt.utterances[0].waveform
        other = one_utt.utterances[1].waveform
        out = add_interference(
            clean, InterferenceSpec("competing_speaker", 5.0, seed=7), other
        )
        assert measured_snr_db(clean, out) == pytest.approx(5.0, abs=0.1)

    def test_competing_speaker_shorter_is_padded(self, one_utt):
        clean = one_utt.utterances[0].waveform
        other = Waveform(one_utt.utterances[1].waveform.samples[: len(clean.samples) // 2], SR)
        out = add_interference(
            clean, InterferenceSpec("competing_speaker", 0.0, seed=8), other
        )
        assert len(out.samples) == len(clean.samples)

    def test_competing_speaker_missing(self, one_utt):
        clean = one_utt.utterances[0].waveform
        with pytest.raises(MissingCompetingSignal):
            add_interference(clean, InterferenceSpec("competing_speaker", 0.0))
        with pytest.raises(LengthMismatch):
            add_interference(
                clean,
                InterferenceSpec("competing_speaker", 0.0),
                Waveform(np.zeros(0), SR),
            )

    def test_determinism(self, one_utt):
        clean = one_utt.utterances[0].waveform
        spec = InterferenceSpec("additive_noise", 0.0, seed=11)
        a = add_interference(clean, spec)
        b = add_interference(clean, spec)
        assert np.array_equal(a.samples, b.samples)


class TestSynthesizeFromText:
    def test_duration_contract_and_determinism(self, one_utt):
        gen = toy.build_generating_model()
        ex = ExcitationConfig(seed=9)
        out1 = synthesize_from_text(gen, "ban sea", one_utt.lexicon, None, ex)
        out2 = synthesize_from_text(gen, "ban sea", one_utt.lexicon, None, ex)
        assert np.array_equal(out1.samples, out2.samples)
        from hmmse.labels import expand_context, text_to_phonemes
        from hmmse.pargen import predict_durations

        contexts = expand_context(text_to_phonemes("ban sea", one_utt.lexicon))
        seq = predict_durations(gen, contexts)
        assert len(out1.samples) == seq.total_frames * toy.FRAME_SHIFT

    def test_output_pitch_tracks_model_means(self, one_utt):
        gen = toy.build_generating_model()
        out = synthesize_from_text(
            gen, "ban", one_utt.lexicon, None, ExcitationConfig(seed=10)
        )
        f0, _ = toy.reanalyze(out, one_utt.config)
        # voiced states of "aa"/"n" have means near log(190); generated
        # pitch must stay within 10 Hz RMSE of the state means
        from hmmse.labels import expand_context, text_to_phonemes
        from hmmse.pargen import predict_durations, mlpg

        contexts = expand_context(text_to_phonemes("ban", one_utt.lexicon))
        seq = predict_durations(gen, contexts)
        _, target_log_f0, target_voiced = mlpg(seq)
        n = min(len(f0), len(target_voiced))
        both = f0.voiced[:n] & target_voiced[:n]
        assert both.sum() > 20
        err = np.exp(f0.log_f0[:n][both]) - np.exp(target_log_f0[:n][both])
        assert np.sqrt(np.mean(err**2)) < 10.0


class TestEnhanceWithSideInfo:
    def test_output_length_follows_side_info(self, one_utt, trained_small):
        model = trained_small
        utt = one_utt.utterances[0]
        side = estimate_f0(utt.waveform, one_utt.config)
        result = enhance_with_side_info(
            model, utt.phones, utt.waveform, side, None, ExcitationConfig(seed=12),
            one_utt.config,
        )
        assert len(result.waveform.samples) == len(side) * toy.FRAME_SHIFT

    def test_injected_pitch_survives(self, one_utt, trained_small):
        model = trained_small
        utt = one_utt.utterances[0]
        side = estimate_f0(utt.waveform, one_utt.config)
        result = enhance_with_side_info(
            model, utt.phones, utt.waveform, side, None, ExcitationConfig(seed=13),
            one_utt.config,
        )
        out_f0, _ = toy.reanalyze(result.waveform, one_utt.config)
        n = min(len(out_f0), len(side))
        rmse, _ = f0_metrics(
            F0Track(80, side.voiced[:n], side.log_f0[:n]),
            F0Track(80, out_f0.voiced[:n], out_f0.log_f0[:n]),
        )
        assert rmse < 5.0

    def test_frame_count_mismatch_rejected(self, one_utt, trained_small):
        utt = one_utt.utterances[0]
        side = estimate_f0(utt.waveform, one_utt.config)
        short = F0Track(80, side.voiced[:-10], side.log_f0[:-10])
        with pytest.raises(FrameCountMismatch):
            enhance_with_side_info(
                trained_small, utt.phones, utt.waveform, short, None,
                ExcitationConfig(seed=14), one_utt.config,
            )

    def test_wrong_sentence_still_aligns_with_lower_likelihood(self, one_utt, trained_small):
        utt = one_utt.utterances[0]
        side = estimate_f0(utt.waveform, one_utt.config)
        ex = ExcitationConfig(seed=15)
        right = enhance_with_side_info(
            trained_small, utt.phones, utt.waveform, side, None, ex, one_utt.config
        )
        # different-length nonsense label sequence for the same audio
        wrong_phones = [PhoneLabel(p) for p in ("sil", "s", "uw", "sh", "eh", "sil")]
        wrong = enhance_with_side_info(
            trained_small, wrong_phones, utt.waveform, side, None, ex, one_utt.config
        )
        assert isinstance(wrong, EnhanceResult)
        assert wrong.alignment_log_likelihood < right.alignment_log_likelihood

    def test_perfect_model_degenerates_to_resynthesis(self, one_utt):
        # stationary utterance + a model whose states reproduce its cepstra
        cfg = one_utt.config
        gen = toy.build_generating_model()
        state = gen.backoff["aa"].states[2]
        T = 120
        frames = np.tile(state.spectral.mean[: toy.ORDER + 1], (T, 1))
        from hmmse.analysis import MelCepstrumSequence

        true_mgc = MelCepstrumSequence(toy.ORDER, toy.ALPHA, 80, frames)
        true_f0 = F0Track(80, np.ones(T, bool), np.full(T, state.pitch.mean[0]))
        ex = ExcitationConfig(seed=16)
        clean = toy.pad_for_analysis(mlsa_filter(true_mgc, make_excitation(true_f0, SR, ex)))

        side, clean_mc = oracle_components(clean, cfg)
        from hmmse.model import PhoneHmm, VoiceModel

        perfect_states = []
        mean_static = clean_mc.frames.mean(axis=0)
        for _ in range(5):
            st = state.copy()
            st.spectral.mean = np.concatenate([mean_static, np.zeros(2 * (toy.ORDER + 1))])
            st.spectral.variance = np.full(3 * (toy.ORDER + 1), 1e-4)
            st.pitch.voiced_weight = 0.95
            perfect_states.append(st)
        model = VoiceModel(
            {}, {"aa": PhoneHmm(perfect_states), "sil": gen.backoff["sil"].copy()},
            dict(gen.metadata), "average",
        )

        result = enhance_with_side_info(
            model, [PhoneLabel("aa")], clean, side, None, ex, cfg
        )
        reference = resynthesize(clean, cfg, ex)
        n = min(len(result.waveform.samples), len(reference.samples))
        enh_f0, enh_mc = toy.reanalyze(result.waveform, cfg)
        ref_f0, ref_mc = toy.reanalyze(reference, cfg)
        m = min(len(enh_mc), len(ref_mc))
        enh_mc.frames, ref_mc.frames = enh_mc.frames[:m], ref_mc.frames[:m]
        assert mcd(ref_mc, enh_mc) < 0.5


class TestValidateCorpus:
    def build_fixture(self, tmp_path, one_utt):
        audio = tmp_path / "audio"
        labels = tmp_path / "labels"
        audio.mkdir()
        labels.mkdir()
        utt = one_utt.utterances[0]

        def put(stem, wf=None, label_text=None):
            if wf is not None:
                write_wav(wf, audio / f"{stem}.wav")
            if label_text is not None:
                (labels / f"{stem}.lab").write_text(label_text)

        from hmmse.labels import format_labels

        good_labels = format_labels(utt.timed)
        put("clean", utt.waveform, good_labels)
        put("noaudio", None, good_labels)
        put("nolabel", utt.waveform, None)
        put("emptylab", utt.waveform, "")
        half = [
            PhoneLabel(l.phoneme, l.start // 2, l.end // 2) for l in utt.timed
        ]
        put("durmismatch", utt.waveform, format_labels(half))
        overdriven = np.clip(3.0 * utt.waveform.samples, -1.0, 1.0)
        put("clipping", Waveform(overdriven, SR), good_labels)
        put(
            "quiet",
            Waveform(0.001 * utt.waveform.samples, SR),
            good_labels,
        )
        rng = np.random.default_rng(0)
        noisy = utt.waveform.samples + 0.5 * rng.standard_normal(len(utt.waveform.samples))
        put("lowsnr", Waveform(np.clip(noisy, -1, 1), SR), good_labels)
        return audio, labels

    def test_findings(self, tmp_path, one_utt):
        audio, labels = self.build_fixture(tmp_path, one_utt)
        report = validate_corpus(audio, labels, one_utt.config)
        kinds = {stem: {f.kind for f in fs} for stem, fs in report.findings.items()}
        assert kinds["clean"] == set()
        assert "missing_audio" in kinds["noaudio"]
        assert "missing_label" in kinds["nolabel"]
        assert "empty_label" in kinds["emptylab"]
        assert "duration_mismatch" in kinds["durmismatch"]
        assert "clipping" in kinds["clipping"]
        assert "inaudible" in kinds["quiet"]
        assert "low_snr" in kinds["lowsnr"]

    def test_every_stem_exactly_once(self, tmp_path, one_utt):
        audio, labels = self.build_fixture(tmp_path, one_utt)
        report = validate_corpus(audio, labels, one_utt.config)
        stems = {p.stem for p in audio.glob("*.wav")} | {
            p.stem for p in labels.glob("*.lab")
        }
        assert set(report.findings) == stems

    def test_unreadable_directory(self, tmp_path):
        with pytest.raises(IoError):
            validate_corpus(tmp_path / "missing", tmp_path / "missing2")
