"""Batch command-line front end.

Exit codes: 0 success, 1 configuration/usage error, 2 processing error.
Diagnostics go to stderr; results go to files or stdout.  Every stochastic
step is driven by an explicit seed, so repeated invocations with the same
inputs produce bit-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import align as align_mod
from . import enhance as enhance_mod
from . import featfile, hmm, metrics, pargen, vocoder
from .analysis import estimate_f0, mgc_analysis
from .config import RunConfig, load_config, parse_assignments
from .dsp import Waveform, highpass, read_wav, spectrogram, write_wav
from .errors import ConfigError, HmmseError
from .labels import Lexicon, expand_context, parse_label_file, write_label_file
from .model import load_model, save_model
from .pargen import GvTarget


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_common(parser):
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument(
        "--set",
        dest="assignments",
        action="append",
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="seed for stochastic steps")


def build_parser() -> _Parser:
    parser = _Parser(prog="hmmse", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    p = sub.add_parser("analyze", help="extract pitch track and mel-cepstra")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-f0", required=True)
    p.add_argument("--out-mgc", required=True)

    p = sub.add_parser("resynth", help="analysis-synthesis round trip")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train an average voice model")
    _add_common(p)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--label-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--monophone-only", action="store_true")
    p.add_argument("--workers", type=int, help="feature-extraction thread count")

    p = sub.add_parser("adapt", help="adapt a model to a speaker")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--label-dir", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("align", help="forced alignment to timed labels")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="synthesize speech from text")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-gv", action="store_true")

    p = sub.add_parser("enhance", help="re-synthesize with side information")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--observed", required=True)
    p.add_argument("--side-f0", help="pitch feature file with the side information")
    p.add_argument(
        "--side-from-observed",
        action="store_true",
        help="extract the side pitch track from the observed signal instead",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write a JSON run report here")
    p.add_argument("--no-gv", action="store_true")

    p = sub.add_parser("corpus-check", help="scan a corpus for flaws")
    _add_common(p)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--label-dir", required=True)
    p.add_argument("--out", help="JSON report path (default stdout)")

    p = sub.add_parser("metrics", help="objective comparison of two signals")
    _add_common(p)
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", help="JSON report path (default stdout)")
    p.add_argument("--figure", help="render spectrogram PNG of the test signal")
    p.add_argument("--f0-figure", help="render an F0 overlay PNG")

    p = sub.add_parser("spectrogram", help="export spectrogram CSV + PGM (+ PNG)")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output basename for .csv/.pgm")
    p.add_argument("--png", help="additionally render a PNG figure")

    return parser


def _config_from_args(args) -> RunConfig:
    overrides = parse_assignments(args.assignments)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    return load_config(args.config, overrides)


def _load_audio(path, cfg: RunConfig, filtered: bool) -> Waveform:
    wf = read_wav(path)
    if filtered and cfg.highpass_hz > 0:
        wf = highpass(wf, cfg.highpass_hz)
    return wf


def _corpus_features(audio_dir, label_dir, cfg: RunConfig):
    """Paired (Observation, ContextLabel list) corpus from directories.

    Utterances are independent, so extraction fans out over cfg.workers
    threads; results always merge in stem order, keeping training
    bit-reproducible regardless of the worker count.
    """
    audio = {p.stem: p for p in sorted(Path(audio_dir).glob("*.wav"))}
    labels = {p.stem: p for p in sorted(Path(label_dir).glob("*.lab"))}
    stems = sorted(set(audio) & set(labels))
    if not stems:
        raise ConfigError("no paired .wav/.lab files found")
    acfg = cfg.analysis_config()

    def extract(stem):
        wf = _load_audio(audio[stem], cfg, filtered=True)
        f0 = estimate_f0(wf, acfg)
        mc = mgc_analysis(wf, acfg)
        obs = hmm.make_observation(f0, mc)
        phones = parse_label_file(labels[stem])
        contexts = expand_context(phones, cfg.context_width)
        return obs, contexts, mc.frames

    if cfg.workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            extracted = list(pool.map(extract, stems))
    else:
        extracted = [extract(stem) for stem in stems]
    corpus = [(obs, contexts) for obs, contexts, _ in extracted]
    statics = [frames for _, _, frames in extracted]
    return corpus, statics


def _model_gv(model, cfg: RunConfig) -> GvTarget | None:
    stored = model.metadata.get("gv_target")
    if not stored:
        return None
    return GvTarget(np.array(stored), cfg.gv_weight, cfg.gv_iterations, cfg.gv_step)


def cmd_analyze(args, cfg: RunConfig) -> int:
    wf = read_wav(args.input)
    acfg = cfg.analysis_config()
    featfile.write_f0(args.out_f0, estimate_f0(wf, acfg))
    featfile.write_mgc(args.out_mgc, mgc_analysis(wf, acfg))
    return 0


def cmd_resynth(args, cfg: RunConfig) -> int:
    wf = read_wav(args.input)
    out = vocoder.resynthesize(wf, cfg.analysis_config(), cfg.excitation_config())
    write_wav(out, args.out)
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    corpus, statics = _corpus_features(args.audio_dir, args.label_dir, cfg)
    phones = sorted({ctx.center for _, labels in corpus for ctx in labels})
    metadata = {
        "alpha": cfg.alpha,
        "order": cfg.order,
        "frame_shift": cfg.frame_shift,
        "sample_rate": cfg.sample_rate,
        "context_width": cfg.context_width,
    }
    model = hmm.flat_start(corpus, phones, metadata)
    model, history = hmm.baum_welch(model, corpus, cfg.iterations)
    if not args.monophone_only:
        model = hmm.clone_contexts(model, corpus)
        model, more = hmm.baum_welch(model, corpus, max(1, cfg.iterations // 2))
        history = history + more
        model = hmm.tie_backoff(model, cfg.min_occupancy)
    gv = pargen.model_gv_stats(statics)
    model.metadata["gv_target"] = gv.target.tolist()
    save_model(model, args.out)
    for i, value in enumerate(history, start=1):
        print(f"iteration {i}: log-likelihood {value:.3f}", file=sys.stderr)
    return 0


def cmd_adapt(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    corpus, _ = _corpus_features(args.audio_dir, args.label_dir, cfg)
    adapted = hmm.adapt_mllr(model, corpus)
    save_model(adapted, args.out)
    return 0


def cmd_align(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    wf = _load_audio(args.input, cfg, filtered=True)
    acfg = cfg.analysis_config()
    features = hmm.make_observation(estimate_f0(wf, acfg), mgc_analysis(wf, acfg))
    phones = parse_label_file(args.labels)
    result = align_mod.viterbi_align(model, phones, features)
    timed = align_mod.alignment_to_labels(result, cfg.frame_shift, cfg.sample_rate)
    write_label_file(timed, args.out)
    print(f"alignment log-likelihood {result.log_likelihood:.3f}", file=sys.stderr)
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    lexicon = Lexicon.from_file(args.lexicon)
    gv = None if args.no_gv else _model_gv(model, cfg)
    out = enhance_mod.synthesize_from_text(
        model, args.text, lexicon, gv, cfg.excitation_config(), cfg.rate
    )
    write_wav(out, args.out)
    return 0


def cmd_enhance(args, cfg: RunConfig) -> int:
    if bool(args.side_f0) == bool(args.side_from_observed):
        raise ConfigError("give exactly one of --side-f0 or --side-from-observed")
    model = load_model(args.model)
    observed = read_wav(args.observed)
    acfg = cfg.analysis_config()
    if args.side_from_observed:
        side = estimate_f0(observed, acfg)
    else:
        side = featfile.read_f0(args.side_f0)
    phones = parse_label_file(args.labels)
    gv = None if args.no_gv else _model_gv(model, cfg)
    observed_in = (
        highpass(observed, cfg.highpass_hz) if cfg.highpass_hz > 0 else observed
    )
    result = enhance_mod.enhance_with_side_info(
        model, phones, observed_in, side, gv, cfg.excitation_config(), acfg
    )
    write_wav(result.waveform, args.out)
    if args.report:
        report = {
            "alignment_log_likelihood": result.alignment_log_likelihood,
            "observed_frames": result.observed_frames,
            "side_frames": result.side_frames,
            "output_samples": len(result.waveform.samples),
        }
        Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_corpus_check(args, cfg: RunConfig) -> int:
    report = enhance_mod.validate_corpus(args.audio_dir, args.label_dir, cfg.analysis_config())
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def cmd_metrics(args, cfg: RunConfig) -> int:
    acfg = cfg.analysis_config()
    ref = read_wav(args.ref)
    test = read_wav(args.test)
    ref_f0, ref_mc = estimate_f0(ref, acfg), mgc_analysis(ref, acfg)
    test_f0, test_mc = estimate_f0(test, acfg), mgc_analysis(test, acfg)
    frames = min(len(ref_mc), len(test_mc))
    for seq in (ref_mc, test_mc):
        seq.frames = seq.frames[:frames]
    for track in (ref_f0, test_f0):
        track.voiced = track.voiced[:frames]
        track.log_f0 = track.log_f0[:frames]
    test_spec = spectrogram(test, cfg.frame_config(), cfg.fft_size, normalize=True)
    report = metrics.compare_report(
        ref_mc, test_mc, ref_f0, test_f0, test_spec, test,
        cfg.spike_window, cfg.spike_k,
    )
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    if args.figure:
        metrics.render_spectrogram_png(test_spec, args.figure)
    if args.f0_figure:
        metrics.render_f0_comparison_png(ref_f0, test_f0, cfg.sample_rate, args.f0_figure)
    return 0


def cmd_spectrogram(args, cfg: RunConfig) -> int:
    wf = read_wav(args.input)
    spec = spectrogram(wf, cfg.frame_config(), cfg.fft_size, normalize=True)
    metrics.export_spectrogram(spec, args.out)
    if args.png:
        metrics.render_spectrogram_png(spec, args.png)
    return 0


_COMMANDS = {
    "analyze": cmd_analyze,
    "resynth": cmd_resynth,
    "train": cmd_train,
    "adapt": cmd_adapt,
    "align": cmd_align,
    "synth": cmd_synth,
    "enhance": cmd_enhance,
    "corpus-check": cmd_corpus_check,
    "metrics": cmd_metrics,
    "spectrogram": cmd_spectrogram,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr)
        return 1
    try:
        cfg = _config_from_args(args)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"hmmse {args.command}: configuration error: {exc}", file=sys.stderr)
        return 1
    except HmmseError as exc:
        print(f"hmmse {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
