"""
Command-line front end.

    aurafeat extract --kind dogspec in.wav -o out.afm1
    aurafeat extract-all corpus/ -o features/
    aurafeat filterbank --type gammatone -o gamm.csv
    aurafeat mask-threshold in.wav -o theta.csv
    aurafeat probe --kinds logmelspec,dogspec --snrs 30,20,10 in.wav
    aurafeat metrics --ref ref.txt --hyp hyp.txt
    aurafeat config --dump
"""
import argparse
import concurrent.futures
import logging
import os
from pathlib import Path
import sys
import typing as ty

from aurafeat import audio_io, features, masking, probe
from aurafeat.audio_io import MatrixFormat
from aurafeat.features import FeatureConfig, FeatureKind
from aurafeat.filterbank import FilterKind
from aurafeat.probe import Transcript


logger = logging.getLogger(__name__)

THREADS_ENV = 'AURAFEAT_THREADS'

FILTERBANK_TYPES = {
    'mel': FilterKind.MEL,
    'gammatone': FilterKind.GAMMATONE_NORM,
    'gammatone-sq': FilterKind.GAMMATONE_SQNORM,
    'dog': FilterKind.DOG,
}


class UsageError(ValueError):
    """ Invalid command line. """


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> ty.NoReturn:
        raise UsageError(message)


def _kind_list(text: str) -> ty.List[FeatureKind]:
    return [FeatureKind.parse(name.strip()) for name in text.split(',') if name.strip()]


def _float_list(text: str) -> ty.List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'invalid number list: {text!r}') from None


def _feature_kind(text: str) -> FeatureKind:
    try:
        return FeatureKind.parse(text)
    except ValueError as ex:
        raise argparse.ArgumentTypeError(str(ex)) from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument(
        '--config', type=Path,
        help='JSON feature config; missing keys take defaults.'
    )
    common.add_argument(
        '--paper-literal', action='store_true',
        help='Use the literal spread-function sign and mu_t = 2.'
    )
    common.add_argument(
        '--threads', type=int,
        help=f'Worker count over input files (default: ${THREADS_ENV} or 1).'
    )
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', '-v', action='store_true')
    verbosity.add_argument('--quiet', '-q', action='store_true')

    parser = _Parser(prog='aurafeat', description='Auditory feature extraction.')
    commands = parser.add_subparsers(dest='command', required=True)

    extract = commands.add_parser(
        'extract', parents=[common], help='Extract one feature kind.'
    )
    extract.add_argument('inputs', nargs='+', type=Path, help='WAV files or directories.')
    extract.add_argument('--kind', '-k', type=_feature_kind, required=True)
    _add_matrix_output(extract)
    extract.set_defaults(handler=_extract)

    extract_all = commands.add_parser(
        'extract-all', parents=[common], help='Extract all nine feature kinds.'
    )
    extract_all.add_argument('inputs', nargs='+', type=Path)
    _add_matrix_output(extract_all)
    extract_all.set_defaults(handler=_extract_all)

    bank = commands.add_parser(
        'filterbank', parents=[common], help='Dump a filterbank as CSV.'
    )
    bank.add_argument('--type', '-t', choices=sorted(FILTERBANK_TYPES), default='mel')
    bank.add_argument('--output', '-o', type=Path)
    bank.set_defaults(handler=_filterbank)

    thresholds = commands.add_parser(
        'mask-threshold', parents=[common],
        help='Dump per-frame masking thresholds as CSV.'
    )
    thresholds.add_argument('input', type=Path)
    thresholds.add_argument('--output', '-o', type=Path)
    thresholds.set_defaults(handler=_mask_threshold)

    probe_cmd = commands.add_parser(
        'probe', parents=[common],
        help='Measure feature distortion under seeded white noise.'
    )
    probe_cmd.add_argument('input', type=Path)
    probe_cmd.add_argument(
        '--kinds', type=_kind_list, default=list(FeatureKind),
        help='Comma separated feature kinds (default: all).'
    )
    probe_cmd.add_argument(
        '--snrs', type=_float_list, default=[30.0, 20.0, 10.0, 0.0],
        help='Comma separated target SNRs in dB.'
    )
    probe_cmd.add_argument('--seed', type=int, default=0)
    probe_cmd.add_argument(
        '--save-noisy', type=Path, metavar='DIR',
        help='Write the noisy inputs here as WAV.'
    )
    probe_cmd.add_argument('--output', '-o', type=Path)
    probe_cmd.set_defaults(handler=_probe)

    metrics = commands.add_parser(
        'metrics', parents=[common], help='WER, WERD, NWERD and SNR.'
    )
    metrics.add_argument('--ref', type=Path, help='Reference transcripts, one per line.')
    metrics.add_argument('--hyp', type=Path, help='Hypotheses on the evaluated data.')
    metrics.add_argument('--clean-hyp', type=Path, help='Hypotheses on clean data (WERD).')
    metrics.add_argument('--quality', type=Path, help='utterance-id,score CSV (NWERD).')
    metrics.add_argument(
        '--with-ids', action='store_true',
        help='The first token of every transcript line is its utterance id.'
    )
    metrics.add_argument('--strip-punct', action='store_true')
    metrics.add_argument('--clean-wav', type=Path)
    metrics.add_argument('--perturbed-wav', type=Path)
    metrics.set_defaults(handler=_metrics)

    config = commands.add_parser(
        'config', parents=[common], help='Print the resolved configuration.'
    )
    config.add_argument('--dump', action='store_true', help='Print as JSON (default).')
    config.set_defaults(handler=_config)
    return parser


def _add_matrix_output(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        '--output', '-o', type=Path,
        help='Output file (single input) or directory. Defaults to '
             'next to each input.'
    )
    parser.add_argument(
        '--format', '-f', choices=[f.value for f in MatrixFormat],
        help='Matrix format (default: from the output suffix, else afm1).'
    )


# Shared plumbing.


def resolve_config(args: argparse.Namespace) -> FeatureConfig:
    cfg = audio_io.load_config(args.config) if args.config else FeatureConfig()
    if args.paper_literal:
        cfg = audio_io.paper_literal(cfg)
        for notice in audio_io.config_notices(cfg):
            logger.warning(notice)
    return cfg


def thread_count(args: argparse.Namespace) -> int:
    threads = args.threads
    if threads is None:
        env = os.environ.get(THREADS_ENV, '').strip()
        try:
            threads = int(env) if env else 1
        except ValueError:
            raise UsageError(f'{THREADS_ENV} must be an integer, got {env!r}') from None
    if threads < 1:
        raise UsageError(f'Thread count must be >= 1: {threads}')
    return threads


def expand_inputs(paths: ty.Iterable[Path]) -> ty.List[Path]:
    """
    Replaces directories by the WAV files below them, in lexicographic
    order. Explicit files are kept as passed.

    :raise FileNotFoundError for a path that does not exist.
    """
    found: ty.List[Path] = []
    for path in paths:
        if path.is_dir():
            found.extend(sorted(
                p for p in path.rglob('*')
                if p.suffix.lower() == '.wav' and p.is_file()
            ))
        elif path.is_file():
            found.append(path)
        else:
            raise FileNotFoundError(f'No such file or directory: {path}')
    if not found:
        raise UsageError('No WAV inputs found.')
    return found


def _matrix_format(args: argparse.Namespace) -> MatrixFormat:
    if args.format:
        return MatrixFormat(args.format)
    if args.output is not None and args.output.suffix.lower() == '.csv':
        return MatrixFormat.CSV
    return MatrixFormat.AFM1


def _output_dir(args: argparse.Namespace, to_file: bool) -> ty.Optional[Path]:
    if args.output is None or to_file:
        return None
    args.output.mkdir(parents=True, exist_ok=True)
    return args.output


def output_path(
        src: Path, out_dir: ty.Optional[Path], kind: FeatureKind, fmt: MatrixFormat
) -> Path:
    """ <stem>.<kind>.<ext>, in out_dir or next to the input. """
    name = f'{src.stem}.{kind.cli_name}.{fmt.value}'
    return Path(out_dir, name) if out_dir is not None else src.with_name(name)


def _check_unique(targets: ty.Sequence[Path]) -> None:
    seen: ty.Set[Path] = set()
    for target in targets:
        if target in seen:
            raise UsageError(f'Several inputs would be written to {target}')
        seen.add(target)


def _run_parallel(
        job: ty.Callable[[Path], None], inputs: ty.Sequence[Path], threads: int
) -> None:
    if threads == 1:
        for path in inputs:
            job(path)
        return
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        # Results are consumed in input order so the first error is that
        # of the earliest failing input.
        for _ in pool.map(job, inputs):
            pass


def _emit(text: str, output: ty.Optional[Path]) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        audio_io.write_text_atomic(output, text)
        logger.info('Wrote %s', output)


# Subcommands.


def _extract(args: argparse.Namespace) -> int:
    cfg = resolve_config(args).with_kind(args.kind)
    inputs = expand_inputs(args.inputs)
    fmt = _matrix_format(args)
    to_file = (
        len(inputs) == 1 and args.inputs[0].is_file()
        and args.output is not None and not args.output.is_dir()
    )
    out_dir = _output_dir(args, to_file)
    targets = {
        src: args.output if to_file else output_path(src, out_dir, cfg.kind, fmt)
        for src in inputs
    }
    _check_unique(list(targets.values()))

    def job(src: Path) -> None:
        matrix = features.extract(audio_io.read_wav(src), cfg)
        audio_io.write_feature_matrix(matrix, targets[src], fmt)
        logger.info('%s -> %s (%d x %d)', src, targets[src], *matrix.data.shape)

    _run_parallel(job, inputs, thread_count(args))
    return 0


def _extract_all(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    inputs = expand_inputs(args.inputs)
    fmt = _matrix_format(args)
    out_dir = _output_dir(args, to_file=False)
    _check_unique([
        output_path(src, out_dir, kind, fmt) for src in inputs for kind in FeatureKind
    ])

    def job(src: Path) -> None:
        matrices = features.extract_all(audio_io.read_wav(src), cfg)
        for kind, matrix in matrices.items():
            audio_io.write_feature_matrix(
                matrix, output_path(src, out_dir, kind, fmt), fmt
            )
        logger.info('%s: wrote %d feature files', src, len(matrices))

    _run_parallel(job, inputs, thread_count(args))
    return 0


def _filterbank(args: argparse.Namespace) -> int:
    fb = features.filterbank_for(FILTERBANK_TYPES[args.type], resolve_config(args))
    _emit(audio_io.format_filterbank_csv(fb), args.output)
    return 0


def _mask_threshold(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    spec = features.spectrogram(audio_io.read_wav(args.input), cfg, emphasized=False)
    thresholds = masking.masking_thresholds(spec, cfg.mask, cfg.stft.win_length)
    _emit(audio_io.format_thresholds_csv(thresholds), args.output)
    return 0


def _probe(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if not args.kinds:
        raise UsageError('--kinds names no feature kind')
    if not args.snrs:
        raise UsageError('--snrs names no SNR')
    clean = audio_io.read_wav(args.input)
    if args.save_noisy is not None:
        args.save_noisy.mkdir(parents=True, exist_ok=True)

    def job(kind: FeatureKind) -> ty.List[probe.ProbeReport]:
        return probe.probe_feature(
            clean, cfg.with_kind(kind), args.snrs, args.seed, args.save_noisy
        )

    threads = thread_count(args)
    if threads == 1:
        results = [job(kind) for kind in args.kinds]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, args.kinds))
    reports = [report for result in results for report in result]
    _emit(probe.format_probe_csv(reports), args.output)
    return 0


def read_transcripts(
        path: Path, with_ids: bool, strip_punctuation: bool
) -> ty.List[ty.Tuple[str, Transcript]]:
    """
    One transcript per line. Without ids, utterances are keyed by their
    line number.
    """
    rows = []
    lines = Path(path).read_text(encoding='utf-8').splitlines()
    for line_no, line in enumerate(lines, start=1):
        key = str(line_no)
        if with_ids:
            parts = line.split(None, 1)
            if not parts:
                raise ValueError(f'{path}:{line_no}: missing utterance id')
            key = parts[0]
            line = parts[1] if len(parts) > 1 else ''
        rows.append((key, Transcript.from_text(line, strip_punctuation)))
    return rows


def _paired(
        reference: ty.List[ty.Tuple[str, Transcript]],
        hypothesis: ty.List[ty.Tuple[str, Transcript]],
        what: str,
) -> ty.List[ty.Tuple[Transcript, Transcript]]:
    if len(reference) != len(hypothesis):
        raise ValueError(
            f'{what} has {len(hypothesis)} utterances, reference has '
            f'{len(reference)}'
        )
    for (ref_id, _), (hyp_id, _) in zip(reference, hypothesis):
        if ref_id != hyp_id:
            raise ValueError(f'{what} utterance {hyp_id!r} does not match reference {ref_id!r}')
    return [(ref, hyp) for (_, ref), (_, hyp) in zip(reference, hypothesis)]


def _metrics(args: argparse.Namespace) -> int:
    has_text = args.ref is not None or args.hyp is not None
    has_audio = args.clean_wav is not None or args.perturbed_wav is not None
    if not has_text and not has_audio:
        raise UsageError('metrics needs --ref/--hyp or --clean-wav/--perturbed-wav')
    if has_text:
        if args.ref is None or args.hyp is None:
            raise UsageError('--ref and --hyp must be given together')
        if args.quality is not None and not (args.clean_hyp and args.with_ids):
            raise UsageError('--quality requires --clean-hyp and --with-ids')
        _text_metrics(args)
    if has_audio:
        if args.clean_wav is None or args.perturbed_wav is None:
            raise UsageError('--clean-wav and --perturbed-wav must be given together')
        snr = probe.perturbation_snr_db(
            audio_io.read_wav(args.clean_wav), audio_io.read_wav(args.perturbed_wav)
        )
        print(f'SNR {snr:.4f} dB')
    return 0


def _text_metrics(args: argparse.Namespace) -> None:
    def read(path: Path) -> ty.List[ty.Tuple[str, Transcript]]:
        return read_transcripts(path, args.with_ids, args.strip_punct)

    reference = read(args.ref)
    noisy = _paired(reference, read(args.hyp), 'Hypothesis')
    noisy_wer = probe.corpus_wer(noisy)
    print(f'WER {noisy_wer:.4f}')
    if args.clean_hyp is None:
        return
    clean = _paired(reference, read(args.clean_hyp), 'Clean hypothesis')
    print(f'WERD {probe.werd(probe.corpus_wer(clean), noisy_wer):.4f}')
    if args.quality is None:
        return
    scores = probe.read_quality_scores(args.quality)
    rows = []
    for (utt_id, _), (ref, hyp), (_, clean_hyp) in zip(reference, noisy, clean):
        if utt_id not in scores:
            raise ValueError(f'{args.quality}: no quality score for {utt_id!r}')
        change = probe.werd(probe.wer(ref, clean_hyp), probe.wer(ref, hyp))
        rows.append((change, scores[utt_id]))
    print(f'NWERD {probe.mean_nwerd(rows):.4f}')


def _config(args: argparse.Namespace) -> int:
    sys.stdout.write(audio_io.dump_config(resolve_config(args)))
    return 0


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.WARNING
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.ERROR
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
    package_logger = logging.getLogger('aurafeat')
    package_logger.handlers[:] = [handler]
    package_logger.setLevel(level)


def main(argv: ty.Optional[ty.Sequence[str]] = None) -> int:
    """ Main entry point for aurafeat. """
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args)
        return args.handler(args)
    except OSError as ex:
        message, code = str(ex), 2
    except ValueError as ex:
        message, code = str(ex), 1
    print(f'aurafeat: error: {" ".join(message.split())}', file=sys.stderr)
    return code


if __name__ == '__main__':
    exit(main())
