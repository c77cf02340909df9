from pathlib import Path
from typing import Optional

import numpy as np

from src import config
from src.automata import (
    AugmentedAutomaton, AutomatonError, audit_formula, automaton_for_rule, check_measure_preservation,
    check_transitivity, label_token, lead_in, run_with_automaton,
)
from src.digits import open_stream, write_digit_file
from src.logging_utils import log_artifact, log_info, log_success, log_warning
from src.report_generator import summarize_cross_check, summarize_report, write_json
from src.rules import expected_density, parse_rule, select, write_index_file
from src.schemas import AutomatonReport, ConfigError, Manifest, PipelineConfig
from src.stats import BlockCensus, census, cross_check_ratio, report
from src.utils import file_digest

AUDITED_BUILDERS = ('leap', 'remove', 'modulo')


def verify_automaton(automaton: AugmentedAutomaton, certificates: bool = False, audit: bool = False) -> AutomatonReport:
    """Transitivity and measure preservation, plus optional witnesses and formula audit."""
    transitivity = check_transitivity(automaton, certificates=certificates)
    measure = check_measure_preservation(automaton)
    formula_audit = None
    if audit and automaton.name in AUDITED_BUILDERS:
        result = audit_formula(automaton)
        formula_audit = {
            'pairs': result['pairs'],
            'sources': result['sources'],
            'formula_failures': [[label_token(a), label_token(b)] for a, b in result['formula_failures']],
        }
    certs = None
    if certificates and transitivity.certificates is not None:
        certs = [
            {'from': label_token(c.from_label), 'to': label_token(c.to_label),
             'string': list(c.string), 'source': c.source}
            for _, c in sorted(transitivity.certificates.items())
        ]
    pair = transitivity.unreachable_pair
    return AutomatonReport(
        automaton=automaton.name,
        base=automaton.base,
        transitive=transitivity.transitive,
        unreachable_pair=None if pair is None else [label_token(pair[0]), label_token(pair[1])],
        measure_preserved=measure.preserved,
        violating_state=None if measure.violating_state is None else label_token(measure.violating_state),
        state_count=automaton.n_states,
        selection_count=len(automaton.selection_set),
        in_degree_criterion=measure.in_degree_criterion,
        formula_audit=formula_audit,
        certificates=certs,
    )


class ExperimentPipeline:
    """
    generate -> analyze input -> select -> analyze output -> automaton checks
    and cross-check, every artifact written under `output_dir` and listed with
    its sha256 in manifest.json.
    """

    def __init__(self, pipeline_config: PipelineConfig):
        self.config = pipeline_config
        self.output_dir = Path(pipeline_config.output_dir)
        self.stream = None
        self.rule = None
        self.automaton = None
        self.output_census = None
        self.artifacts = {}
        self.verdicts = {}
        self.cross_check_ok = None

    def _log(self, message):
        log_info(f"[pipeline] {message}")

    def _record(self, name: str, digest: Optional[str] = None):
        path = self.output_dir / name
        self.artifacts[name] = digest or file_digest(path)
        if digest is None:
            log_artifact(path, self.artifacts[name])

    def validate(self):
        """Checks every stage's inputs before anything is written."""
        cfg = self.config
        if cfg.source != 'file' and cfg.count is None:
            raise ConfigError(f"source '{cfg.source}' needs a finite count")
        if cfg.source == 'file' and cfg.path is None:
            raise ConfigError("source 'file' needs a path")
        self.stream = open_stream(cfg.source, base=cfg.base, count=cfg.count, seed=cfg.seed,
                                  digit=cfg.digit, pattern=cfg.pattern, path=cfg.path)
        if cfg.base is not None and cfg.base != self.stream.base:
            raise ConfigError(f"config base {cfg.base} does not match source base {self.stream.base}")
        if len(self.stream) == 0:
            raise ConfigError(f"source '{self.stream.source}' yields no digits; nothing to analyze")
        BlockCensus(base=self.stream.base, kmax=cfg.kmax)
        if cfg.rule:
            self.rule = parse_rule(cfg.rule, self.stream.base)
            BlockCensus(base=self.rule.output_base, kmax=max(cfg.kmax, cfg.cross_check_k))
            try:
                self.automaton = automaton_for_rule(self.rule, cfg.cross_check_k)
            except AutomatonError as e:
                log_warning(f"No cross-check for {self.rule.descriptor()}: {e}")
                self.automaton = None

    def run(self) -> int:
        self.validate()
        cfg = self.config
        self._log(f"Writing results to {self.output_dir}")

        self._log(f"Generating {self.stream.describe()}")
        write_digit_file(self.stream, self.output_dir / 'input.digits')
        self._record('input.digits')

        self._log("Analyzing input")
        input_report = report(census(self.stream, cfg.kmax), thresholds=cfg.thresholds)
        summarize_report(input_report, 'input')
        self._record('input_report.json', write_json(input_report, self.output_dir / 'input_report.json'))
        self.verdicts['input'] = input_report.verdict

        selection = None
        if self.rule is not None:
            selection = self._select()
        if self.automaton is not None and selection is not None:
            self._cross_check(selection)

        manifest = Manifest(
            config=cfg.model_dump(mode='json'),
            input=self.stream.describe(),
            rule=None if self.rule is None else self.rule.descriptor(),
            output_base=None if self.rule is None else self.rule.output_base,
            selection_count=None if selection is None else selection.count,
            verdicts=self.verdicts,
            cross_check_within_bound=self.cross_check_ok,
            artifacts=dict(sorted(self.artifacts.items())),
        )
        write_json(manifest, self.output_dir / 'manifest.json')

        failed = 'non-normal' in self.verdicts.values() or self.cross_check_ok is False
        if failed and cfg.strict:
            log_warning("Strict mode: a verdict or the cross-check failed")
            return config.EXIT_VERDICT_FAILURE
        log_success("Pipeline finished")
        return config.EXIT_OK

    def _select(self):
        cfg = self.config
        self._log(f"Selecting with {self.rule.descriptor()}")
        selection = select(self.rule, self.stream)
        write_digit_file(selection.output, self.output_dir / 'output.digits')
        self._record('output.digits')
        write_index_file(selection.indices, self.output_dir / 'output.indices')
        self._record('output.indices')
        if selection.count == 0:
            log_warning("Rule selected no digits; output is not analyzed")
            return selection
        self._log("Analyzing output")
        self.output_census = census(selection.output, max(cfg.kmax, cfg.cross_check_k))
        output_report = report(self.output_census, selection=selection, thresholds=cfg.thresholds,
                               expected_density=expected_density(self.rule))
        summarize_report(output_report, 'output')
        self._record('output_report.json', write_json(output_report, self.output_dir / 'output_report.json'))
        self.verdicts['output'] = output_report.verdict
        return selection

    def _cross_check(self, selection):
        cfg = self.config
        self._log(f"Checking the {self.automaton.name} automaton ({self.automaton.n_states} states)")
        automaton_report = verify_automaton(self.automaton)
        self._record('automaton.json', write_json(automaton_report, self.output_dir / 'automaton.json'))
        if not (automaton_report.transitive and automaton_report.measure_preserved):
            log_warning(f"{self.automaton.name} automaton fails a hypothesis of the transfer theorem")

        run = run_with_automaton(self.automaton, self.stream, skip=lead_in(self.rule))
        if not np.array_equal(run.selected_steps, selection.indices):
            log_warning("Automaton selection steps differ from the rule's indices")
        if selection.count < cfg.cross_check_k:
            log_warning(f"Only {selection.count} selections; cross-check needs at least {cfg.cross_check_k}")
            return
        result = cross_check_ratio(self.output_census, run, k=cfg.cross_check_k)
        summarize_cross_check(result)
        self._record('cross_check.json', write_json(result, self.output_dir / 'cross_check.json'))
        self.cross_check_ok = result.within_bound
