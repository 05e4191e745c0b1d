"""Command-line surface.

Every subcommand is a file-to-file transformation built from the library
calls, so chaining subcommands reproduces the in-process pipeline
bit for bit. Exit codes: 0 on success, 1 on runtime errors, 2 on usage
errors (argparse's convention).
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import formats
from .decoder import DecoderConfig, search_corpus
from .generator import GenConfig, default_plants, gen_corpus
from .lattice import LatticeError, sort_hits
from .posteriors import PosteriorConfig, compute_frame_posteriors
from .scoring import ScoringConfig, fuse_lists, score_hits, sto_normalize
from .smoothing import SmoothingConfig, estimate_confusion_model, smooth


def _write(path: str | Path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _read(path: str | Path) -> str:
    return Path(path).read_text()


def _matrix_path(out_dir: Path, utt_id: str, binary: bool) -> Path:
    return out_dir / f"{utt_id}.{'bin' if binary else 'ppb'}"


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_gen(args) -> int:
    cfg = GenConfig(
        seed=args.seed,
        num_utterances=args.num_utterances,
        frames_per_utterance=args.frames,
        num_phones=args.num_phones,
        keywords=default_plants(args.num_keywords, args.occurrences),
        confusion_noise=args.confusion_noise,
        branching=args.branching,
        frame_shift=args.frame_shift,
    )
    corpus = gen_corpus(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "phones.txt", formats.serialize_phone_set(corpus.phones))
    _write(out / "lattices.lat", formats.serialize_lattices(corpus.lattices))
    _write(out / "keywords.lex", formats.serialize_keywords(corpus.lexicon, corpus.phones))
    _write(out / "refs.tsv", formats.serialize_refs(corpus.refs))
    print(
        f"wrote {len(corpus.lattices)} lattices, {len(corpus.lexicon.entries)} keywords, "
        f"{len(corpus.refs)} references, {corpus.total_speech_seconds:.1f} s of audio to {out}"
    )
    return 0


def cmd_posteriors(args) -> int:
    phones = formats.parse_phone_set(_read(args.phones))
    lats = formats.parse_lattices(_read(args.lattices), phones)
    cfg = PosteriorConfig(acoustic_scale=getattr(args, "lambda"))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(lat) -> None:
        m = compute_frame_posteriors(lat, cfg, phones)
        formats.save_posteriors(_matrix_path(out_dir, lat.utt_id, args.binary), m)

    ordered = sorted(lats, key=lambda l: l.utt_id)
    if args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(run_one, ordered))
    else:
        for lat in ordered:
            run_one(lat)
    print(f"wrote {len(lats)} posterior matrices to {out_dir}")
    return 0


def cmd_confusion_model(args) -> int:
    mats = formats.load_posteriors_dir(args.posteriors)
    if not mats:
        raise LatticeError(f"no posterior matrices under {args.posteriors}")
    cm = estimate_confusion_model(mats, mats[0].num_phones)
    _write(args.out, formats.serialize_confusion_model(cm))
    print(f"estimated confusion model over {len(mats)} matrices -> {args.out}")
    return 0


def cmd_smooth(args) -> int:
    cm = formats.parse_confusion_model(_read(args.model))
    cfg = SmoothingConfig(alpha=args.alpha, epsilon=args.epsilon, emit_log=args.log)
    mats = formats.load_posteriors_dir(args.posteriors)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for m in mats:
        formats.save_posteriors(_matrix_path(out_dir, m.utt_id, args.binary), smooth(m, cm, cfg))
    print(f"smoothed {len(mats)} matrices -> {out_dir}")
    return 0


def _decoder_config(args) -> DecoderConfig:
    return DecoderConfig(
        spawn_threshold=args.theta_start,
        beam_threshold=args.theta_beam,
        hit_threshold=args.theta_hit,
        min_phone_frames=args.min_phone_frames,
        max_phone_frames=args.max_phone_frames,
    )


def cmd_search(args) -> int:
    phones = formats.parse_phone_set(_read(args.phones))
    lexicon = formats.parse_keywords(_read(args.keywords), phones)
    mats = formats.load_posteriors_dir(args.posteriors)
    result = search_corpus(lexicon, mats, _decoder_config(args), jobs=args.jobs)
    hits = sort_hits([h for hs in result.hits.values() for h in hs])
    _write(args.out, formats.serialize_hits(hits))
    if args.rtf_report:
        _write(args.rtf_report, formats.serialize_rtf_report(result.rtf_rows))
    print(f"found {len(hits)} hits for {len(lexicon.entries)} keywords -> {args.out}")
    return 0


def cmd_normalize(args) -> int:
    hits = formats.parse_hits(_read(args.hits))
    _write(args.out, formats.serialize_hits(sto_normalize(hits, gamma=args.gamma)))
    print(f"normalized {len(hits)} hits -> {args.out}")
    return 0


def cmd_score(args) -> int:
    hits = formats.parse_hits(_read(args.hits))
    refs = formats.parse_refs(_read(args.refs))
    cfg = ScoringConfig(
        total_speech_seconds=args.speech_seconds,
        beta=args.beta,
        align_tolerance_seconds=args.tolerance,
    )
    report = score_hits(hits, refs, cfg)
    if args.curve:
        _write(args.curve, formats.serialize_twv_curve(
            report.thresholds, report.twvs, report.mtwv, report.best_threshold))
    if args.per_keyword:
        lines = [
            f"{k}\t{formats.fmt_float(pm)}\t{formats.fmt_float(pf)}"
            for k, (pm, pf) in sorted(report.per_keyword.items())
        ]
        _write(args.per_keyword, "\n".join(lines) + ("\n" if lines else ""))
    if args.plot:
        from .plots import plot_twv_curve

        plot_twv_curve(report, args.plot)
    print(f"MTWV {formats.fmt_float(report.mtwv)} {formats.fmt_float(report.best_threshold)}")
    return 0


def _parse_named(pairs: list[str], what: str, cast=str) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise LatticeError(f"{what} must look like NAME=VALUE, got {pair!r}")
        name, value = pair.split("=", 1)
        out[name] = cast(value)
    return out


def cmd_fuse(args) -> int:
    inputs = _parse_named(args.input, "--input")
    if not inputs:
        raise LatticeError("fusion needs at least one --input NAME=PATH")
    weights = _parse_named(args.weights or [], "--weights", float)
    lists = {name: formats.parse_hits(_read(path)) for name, path in inputs.items()}
    fused = fuse_lists(lists, weights or None, tolerance=args.tolerance)
    _write(args.out, formats.serialize_hits(fused))
    print(f"fused {len(lists)} lists into {len(fused)} hits -> {args.out}")
    return 0


def cmd_sweep(args) -> int:
    phones = formats.parse_phone_set(_read(args.phones))
    lexicon = formats.parse_keywords(_read(args.keywords), phones)
    refs = formats.parse_refs(_read(args.refs))
    mats = formats.load_posteriors_dir(args.posteriors)
    scoring = ScoringConfig(
        total_speech_seconds=args.speech_seconds,
        beta=args.beta,
        align_tolerance_seconds=args.tolerance,
    )
    values = np.linspace(getattr(args, "from"), args.to, args.steps)
    cm = formats.parse_confusion_model(_read(args.model)) if args.model else None

    mtwvs = []
    for v in values:
        v = float(v)
        if args.param == "theta_hit":
            dec = DecoderConfig(
                spawn_threshold=args.theta_start,
                beam_threshold=min(args.theta_beam, v),
                hit_threshold=v,
                min_phone_frames=args.min_phone_frames,
                max_phone_frames=args.max_phone_frames,
            )
            search_mats = mats
        else:  # alpha
            if cm is None:
                raise LatticeError("sweeping alpha needs --model (raw posteriors in, confusion model)")
            smo = SmoothingConfig(alpha=v, epsilon=args.epsilon, emit_log=False)
            search_mats = [smooth(m, cm, smo) for m in mats]
            dec = _decoder_config(args)
        result = search_corpus(lexicon, search_mats, dec, jobs=args.jobs)
        hits = sto_normalize([h for hs in result.hits.values() for h in hs])
        mtwvs.append(score_hits(hits, refs, scoring).mtwv)

    lines = [f"{formats.fmt_float(float(v))}\t{formats.fmt_float(m)}" for v, m in zip(values, mtwvs)]
    best = int(np.argmax(mtwvs))
    lines.append(f"BEST {formats.fmt_float(float(values[best]))} {formats.fmt_float(mtwvs[best])}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(args.out, text)
    if args.plot:
        from .plots import plot_sweep

        plot_sweep(args.param, [float(v) for v in values], mtwvs, args.plot)
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_decoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta-start", type=float, default=0.05, help="hypothesis spawn threshold")
    p.add_argument("--theta-beam", type=float, default=0.1, help="running-average pruning threshold")
    p.add_argument("--theta-hit", type=float, default=0.3, help="final acceptance threshold")
    p.add_argument("--min-phone-frames", type=int, default=2)
    p.add_argument("--max-phone-frames", type=int, default=50)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppbkws",
        description="Out-of-vocabulary keyword search over lattice-derived phoneme posteriorgrams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--num-utterances", type=int, default=50)
    p.add_argument("--frames", type=int, default=1000)
    p.add_argument("--num-phones", type=int, default=30)
    p.add_argument("--num-keywords", type=int, default=20)
    p.add_argument("--occurrences", type=int, default=3)
    p.add_argument("--confusion-noise", type=float, default=0.1)
    p.add_argument("--branching", type=int, default=3)
    p.add_argument("--frame-shift", type=float, default=0.01)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("posteriors", help="lattices -> raw posterior matrices")
    p.add_argument("--lattices", required=True)
    p.add_argument("--phones", required=True)
    p.add_argument("--lambda", type=float, default=12.0,
                   help="divisor applied to acoustic log-likelihoods")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--binary", action="store_true", help="write float32 .bin matrices")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_posteriors)

    p = sub.add_parser("confusion-model", help="estimate the phone confusion model")
    p.add_argument("--posteriors", required=True, help="directory of raw matrices")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_confusion_model)

    p = sub.add_parser("smooth", help="raw matrices -> smoothed matrices")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--epsilon", type=float, default=1e-42)
    p.add_argument("--log", action="store_true", help="emit log-smoothed matrices")
    p.add_argument("--binary", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("search", help="decode keywords over smoothed matrices")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--keywords", required=True)
    p.add_argument("--phones", required=True)
    _add_decoder_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--rtf-report", help="write per-keyword real-time factors here")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("normalize", help="sum-to-one normalization per keyword")
    p.add_argument("--hits", required=True)
    p.add_argument("--gamma", type=float, default=1.0, help="score exponent before normalizing")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("score", help="term-weighted value against references")
    p.add_argument("--hits", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--speech-seconds", type=float, required=True)
    p.add_argument("--beta", type=float, default=999.9)
    p.add_argument("--tolerance", type=float, default=0.5)
    p.add_argument("--curve", help="write the threshold/TWV curve TSV here")
    p.add_argument("--per-keyword", help="write per-keyword miss/FA rates at the MTWV point")
    p.add_argument("--plot", help="render the TWV curve to this image file")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("fuse", help="weighted list-level fusion of hit lists")
    p.add_argument("--input", action="append", default=[], metavar="NAME=PATH", required=True)
    p.add_argument("--weights", action="append", default=[], metavar="NAME=W")
    p.add_argument("--tolerance", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("sweep", help="MTWV across a decoder/smoothing parameter grid")
    p.add_argument("--param", choices=["theta_hit", "alpha"], required=True,
                   help="theta_hit re-runs the search per value (clamping the beam "
                        "threshold below it); alpha re-smooths raw matrices per value")
    p.add_argument("--from", type=float, required=True, dest="from")
    p.add_argument("--to", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--posteriors", required=True,
                   help="smoothed matrices for theta_hit, raw matrices for alpha")
    p.add_argument("--keywords", required=True)
    p.add_argument("--phones", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--speech-seconds", type=float, required=True)
    p.add_argument("--model", help="confusion model (required for --param alpha)")
    p.add_argument("--epsilon", type=float, default=1e-42)
    p.add_argument("--beta", type=float, default=999.9)
    p.add_argument("--tolerance", type=float, default=0.5)
    _add_decoder_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LatticeError, formats.ParseError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
