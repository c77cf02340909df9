"""
Command-line entry point: python -m src.main <subcommand> ...

    generate           write a digit file from a generator
    select             apply a selection rule to a digit file
    analyze            block-frequency report for a digit file
    verify-automaton   check transitivity and measure preservation
    pipeline           run a whole experiment from a config file
"""
import argparse
import sys
from pathlib import Path

from src import config
from src.automata import build_automaton, read_automaton_file
from src.digits import SOURCES, open_stream, read_digit_file, write_digit_file
from src.logging_utils import log_artifact, log_error, log_info, log_success, set_quiet
from src.pipeline import ExperimentPipeline, verify_automaton
from src.report_generator import summarize_report, write_census_csv, write_json
from src.rules import RuleError, expected_density, parse_rule, select, write_index_file
from src.schemas import load_pipeline_config, parse_thresholds
from src.stats import census, report
from src.utils import ValidationError, file_digest


def cmd_generate(args) -> int:
    stream = open_stream(args.source, base=args.base, count=args.count, seed=args.seed,
                         digit=args.digit, pattern=args.pattern, path=args.path)
    if not stream.finite:
        raise ValidationError("generate needs --count")
    written = write_digit_file(stream, args.out)
    log_artifact(args.out, file_digest(args.out))
    log_info(f"{written} base-{stream.base} digits from {stream.source}")
    return config.EXIT_OK


def cmd_select(args) -> int:
    stream = read_digit_file(args.input)
    if args.base is not None and args.base != stream.base:
        raise RuleError(f"{args.input} holds base {stream.base} digits, --base says {args.base}")
    rule = parse_rule(args.rule, stream.base)
    selection = select(rule, stream)
    write_digit_file(selection.output, args.out)
    log_artifact(args.out, file_digest(args.out))
    indices = args.indices or str(Path(args.out).with_suffix('.indices'))
    write_index_file(selection.indices, indices)
    log_artifact(indices, file_digest(indices))
    log_success(f"{rule.descriptor()}: selected {selection.count} of {selection.input_positions_scanned} "
                f"positions, output base {rule.output_base}")
    return config.EXIT_OK


def cmd_analyze(args) -> int:
    stream = read_digit_file(args.input)
    thresholds = parse_thresholds(args.thresholds) if args.thresholds else None
    selection, density = None, None
    if args.rule:
        rule = parse_rule(args.rule, stream.base)
        selection = select(rule, stream)
        stream, density = selection.output, expected_density(rule)
    block_census = census(stream, args.kmax)
    result = report(block_census, selection=selection, thresholds=thresholds, expected_density=density)
    summarize_report(result, args.input if selection is None else f"{args.input} | {args.rule}")
    write_json(result, args.out)
    if args.csv:
        write_census_csv(block_census, args.csv)
    if args.strict and result.verdict == 'non-normal':
        return config.EXIT_VERDICT_FAILURE
    return config.EXIT_OK


def cmd_verify_automaton(args) -> int:
    if args.file:
        automaton = read_automaton_file(args.file)
    elif args.builder:
        if args.base is None:
            raise ValidationError("--builder needs --base")
        automaton = build_automaton(args.builder, args.base, args.k, N=args.N, L=args.L)
    else:
        raise ValidationError("verify-automaton needs --builder or --file")
    result = verify_automaton(automaton, certificates=args.certificates, audit=args.audit)
    write_json(result, args.out)
    if result.transitive and result.measure_preserved:
        log_success(f"{automaton.name}: {result.state_count} states, transitive and measure-preserving")
    else:
        log_error(f"{automaton.name}: transitive={result.transitive}, measure_preserved={result.measure_preserved}")
        if args.strict:
            return config.EXIT_VERDICT_FAILURE
    return config.EXIT_OK


def cmd_pipeline(args) -> int:
    pipeline_config = load_pipeline_config(args.config)
    overrides = {}
    if args.output_dir:
        overrides['output_dir'] = args.output_dir
    if args.strict:
        overrides['strict'] = True
    if overrides:
        pipeline_config = pipeline_config.model_copy(update=overrides)
    return ExperimentPipeline(pipeline_config).run()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='normsel', description="Normality-preserving selection rules on digit streams")
    parser.add_argument('--quiet', action='store_true', help="Only print warnings and errors")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('generate', help="Write a digit file")
    p.add_argument('--source', choices=SOURCES, required=True)
    p.add_argument('--base', type=int, default=None)
    p.add_argument('--count', type=int, default=None)
    p.add_argument('--seed', type=int, default=config.DEFAULT_SEED)
    p.add_argument('--digit', type=int, default=None, help="Digit for --source constant")
    p.add_argument('--pattern', default=None, help="'12' or '1,2' for --source periodic")
    p.add_argument('--path', default=None, help="Input digit file for --source file")
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser('select', help="Apply a selection rule")
    p.add_argument('--rule', required=True, help="e.g. leap:n1=1, modulo:L=0,N=3, remove_top, dfa:<path>")
    p.add_argument('--in', dest='input', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--indices', default=None, help="Index file (default: <out>.indices)")
    p.add_argument('--base', type=int, default=None, help="Expected input base")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser('analyze', help="Block-frequency report")
    p.add_argument('--in', dest='input', required=True)
    p.add_argument('--kmax', type=int, default=config.DEFAULT_KMAX)
    p.add_argument('--thresholds', default=None, help="e.g. 1:0.01,2:0.02")
    p.add_argument('--rule', default=None, help="Analyze the output of this rule instead of the input")
    p.add_argument('--out', default=None, help="Report JSON (default: stdout)")
    p.add_argument('--csv', default=None, help="Block table CSV")
    p.add_argument('--strict', action='store_true', help="Exit 1 on a non-normal verdict")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser('verify-automaton', help="Check transitivity and measure preservation")
    p.add_argument('--builder', choices=('leap', 'remove', 'modulo'), default=None)
    p.add_argument('--file', default=None, help="Automaton file instead of a builder")
    p.add_argument('--base', type=int, default=None)
    p.add_argument('--k', type=int, default=1)
    p.add_argument('--N', type=int, default=None)
    p.add_argument('--L', type=int, default=None)
    p.add_argument('--certificates', action='store_true', help="Attach a shortest traversing string for every pair")
    p.add_argument('--audit', action='store_true', help="Check the explicit traversing-string formula on every pair")
    p.add_argument('--out', default=None, help="Report JSON (default: stdout)")
    p.add_argument('--strict', action='store_true', help="Exit 1 when a check fails")
    p.set_defaults(func=cmd_verify_automaton)

    p = sub.add_parser('pipeline', help="Run a full experiment")
    p.add_argument('--config', required=True, help="key = value experiment file")
    p.add_argument('--output-dir', default=None)
    p.add_argument('--strict', action='store_true')
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    set_quiet(args.quiet)
    try:
        return args.func(args)
    except ValidationError as e:
        log_error(str(e))
        return config.EXIT_USAGE
    except OSError as e:
        log_error(f"{e.filename or ''}: {e.strerror or e}")
        return config.EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
