"""
Command-line interface for facestab
"""
import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
from rich.console import Console
from rich.panel import Panel
from tabulate import tabulate

from controllers.entropic import leakage_mass, screen_and_certify, solution_record, solve_entropic
from controllers.experiments import (
    ABLATION_COLUMNS,
    SCALING_COLUMNS,
    ablation_experiment,
    map_ordered,
    scaling_experiment,
)
from controllers.geometry import (
    ORACLE_MAX_ATOMS,
    brute_force_projection,
    face_gap,
    kkt_residual,
    project_onto_hull,
    tangent_basis,
)
from controllers.instances import (
    build_adversarial_cache,
    build_planted_cache,
    build_tie_cache,
    generate_instance,
)
from controllers.paged_attention import (
    decode_with_fallback,
    dense_decode,
    leakage_bound,
    read_cache,
    write_cache,
)
from controllers.verify import (
    check_face_invariance,
    check_fw_certificate,
    check_leakage_rate,
    check_main_bound,
    check_prescription,
    check_second_order,
    check_smr_lipschitz,
    degenerate_leakage_demo,
    gap_statistic_mc,
    summarize,
)
from models.dictionary import is_defined
from models.entropic import EntropicConfig
from models.errors import FacestabError, ParameterError
from models.paged_cache import RoutingConfig, SparseObjective
from models.reports import CheckStatus
from models.run_config import PRESETS, Command, RunConfig
from utils.helpers import (
    SUMMARY_NAME,
    ensure_output_dir,
    read_dictionary,
    setup_logging,
    write_csv,
    write_json,
    write_manifest,
)

logger = logging.getLogger(__name__)

# Initialize Rich console
console = Console()

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_SKIPPED_ONLY = 2
EXIT_INTERRUPTED = 130

_GLOBAL_KEYS = ('seed', 'output_dir', 'threads', 'preset', 'input_path')


@dataclass
class CommandResult:
    """Artifacts and outcome counts of one command"""
    artifacts: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    passed: int = 0
    failed: int = 0
    skipped: int = 0

    def count(self, statuses):
        for status in statuses:
            if status is CheckStatus.PASS:
                self.passed += 1
            elif status is CheckStatus.FAIL:
                self.failed += 1
            elif status is CheckStatus.SKIPPED_DEGENERATE:
                self.skipped += 1

    @property
    def exit_status(self):
        if self.failed > 0:
            return EXIT_FAILED
        if self.passed == 0 and self.skipped > 0:
            return EXIT_SKIPPED_ONLY
        return EXIT_OK


class Run:
    """Context shared by the command handlers: config, output directory and progress flag"""

    def __init__(self, config, quiet=False):
        self.config = config
        self.params = config.parameters
        self.quiet = quiet
        self.output_dir = ensure_output_dir(config.output_dir)

    def path(self, name):
        return os.path.join(self.output_dir, name)

    def write_csv(self, result, name, rows, columns=None):
        write_csv(self.path(name), rows, columns)
        result.artifacts.append(name)

    def write_json(self, result, name, data):
        write_json(self.path(name), data)
        result.artifacts.append(name)

    def map(self, func, items, desc):
        return map_ordered(func, items, self.config.threads, desc, self.quiet)


def _planted(params, index, seed, **extra):
    keys = ('m', 'd', 'k', 'gap', 'spread', 'offset')
    overrides = {key: params[key] for key in keys}
    overrides.update(extra)
    return generate_instance("planted-face", overrides, seed=seed, index=index)


def _planted_instances(run, desc, **extra):
    """Planted-face instances 0..instances-1 on the run seed"""
    params, seed = run.params, run.config.seed
    return run.map(lambda index: _planted(params, index, seed, **extra), range(params['instances']), desc)


def _single_instance(run):
    """Dictionary and query from --input / --query, or a generated instance"""
    params = run.params
    if run.config.input_path:
        dictionary = read_dictionary(run.config.input_path)
        if params['query'] is None:
            raise ParameterError("query", "required with --input (comma-separated coordinates)")
        return dictionary, np.asarray(params['query'], dtype=float), os.path.basename(run.config.input_path)
    kind = params['kind']
    overrides = {
        'gaussian': {'m': params['m'], 'd': params['d'], 'scale': params['scale']},
        'planted-face': {'m': params['m'], 'd': params['d'], 'k': min(3, params['d'], params['m'] - 1)},
        'tie': {},
    }[kind]
    instance = generate_instance(kind, overrides, seed=run.config.seed)
    query = instance.query if params['query'] is None else np.asarray(params['query'], dtype=float)
    return instance.dictionary, query, instance.instance_id


def cmd_project(run):
    """Exact projection, KKT certificate and (small M) the enumeration oracle"""
    dictionary, query, instance_id = _single_instance(run)
    solution = project_onto_hull(dictionary, query, tol=run.params['tol'])
    gap = face_gap(dictionary, solution)
    residual = kkt_residual(dictionary, query, solution)
    record = solution.to_dict()
    record.update({'instance_id': instance_id, 'face_gap': float(gap) if is_defined(gap) else str(gap),
                   'kkt_residual': residual})
    if solution.residual.any() and is_defined(gap):
        record['face_geometry'] = tangent_basis(dictionary, solution.active_set, alpha=solution.alpha).to_dict()

    oracle_distance = math.nan
    if run.params['oracle'] and dictionary.m_count <= ORACLE_MAX_ATOMS:
        oracle = brute_force_projection(dictionary, query)
        oracle_distance = float(np.linalg.norm(oracle.readout - solution.readout))
        record['oracle_distance'] = oracle_distance

    result = CommandResult()
    run.write_json(result, "projection.json", record)
    passed = residual <= 1e-8 and (math.isnan(oracle_distance) or oracle_distance <= 1e-7)
    result.count([CheckStatus.PASS if passed else CheckStatus.FAIL])
    result.summary.append({
        'instance_id': instance_id, 'm_count': dictionary.m_count, 'face_size': len(solution.active_set),
        'gap': record['face_gap'], 'objective': solution.objective, 'fw_gap': solution.fw_gap,
        'kkt_residual': residual, 'oracle_distance': oracle_distance,
    })
    return result


def cmd_entropic(run):
    """Entropic solve at one epsilon, with leakage off the exact face"""
    params = run.params
    dictionary, query, instance_id = _single_instance(run)
    config = EntropicConfig(epsilon=params['epsilon'], solver=params['solver'],
                            max_iters=params['max_iters'], gap_tol=params['gap_tol'])
    solution = solve_entropic(dictionary, query, config)
    exact = project_onto_hull(dictionary, query)
    leak = leakage_mass(solution, exact.active_set)
    record = solution.to_dict()
    record.update(solution_record(solution, leak))
    record.update({'instance_id': instance_id, 'face': exact.active_set,
                   'readout_error': float(np.linalg.norm(solution.readout - exact.readout))})

    result = CommandResult()
    run.write_json(result, "entropic.json", record)
    result.count([CheckStatus.PASS if solution.converged else CheckStatus.FAIL])
    result.summary.append({key: record[key] for key in
                           ('instance_id', 'epsilon', 'iters', 'dual_gap', 'leakage_mass', 'readout_error',
                            'converged')})
    return result


def _eps_grid(instance, fractions):
    return [instance.gap / f for f in fractions]


def cmd_verify_bounds(run):
    """Main bound and face invariance on planted instances"""
    params, seed = run.params, run.config.seed
    instances = _planted_instances(run, "instances")

    def check(instance):
        grid = _eps_grid(instance, params['eps_fractions'])
        bounds = check_main_bound(instance.dictionary, instance.query, grid, instance.instance_id, seed=seed)
        invariance = check_face_invariance(instance.dictionary, instance.query, grid, instance.instance_id)
        return bounds, invariance

    outcomes = run.map(check, instances, "verify-bounds")
    bounds = [report for reports, _ in outcomes for report in reports]
    invariance = [report for _, report in outcomes]

    result = CommandResult()
    run.write_csv(result, "bounds.csv", [report.to_row() for report in bounds])
    run.write_csv(result, "invariance.csv", [report.to_row() for report in invariance])
    result.count(report.status for report in bounds)
    result.count(report.status for report in invariance)
    result.summary.extend([summarize(bounds, "main-bound"), summarize(invariance, "face-invariance")])
    return result


def cmd_second_order(run):
    params = run.params
    instances = _planted_instances(run, "instances", symmetric=params['symmetric'])
    reports = run.map(lambda inst: check_second_order(inst.dictionary, inst.query, params['epsilons'],
                                                      inst.instance_id), instances, "second-order")
    result = CommandResult()
    run.write_csv(result, "expansion.csv", [report.to_row() for report in reports])
    result.count(report.status for report in reports)
    result.summary.append(summarize(reports, "second-order"))
    return result


def gap_stat_status(report):
    """Analytic mean 2 / sqrt(pi) at M = 2, scaled mean in [0.7, 1.3] for M >= 256"""
    if report.m_count == 2:
        expected = 2.0 / math.sqrt(math.pi)
        return CheckStatus.PASS if abs(report.mean_gap - expected) <= 0.03 * expected else CheckStatus.FAIL
    if report.m_count >= 256:
        return CheckStatus.PASS if 0.7 <= report.mean_scaled_gap <= 1.3 else CheckStatus.FAIL
    return CheckStatus.VACUOUS


def cmd_gap_stats(run):
    """Top-two gap statistic of Gaussian scores for each M"""
    params, seed = run.params, run.config.seed
    sizes = sorted(set(params['m']))
    reports = run.map(lambda m: gap_statistic_mc(m, params['trials'], seed), sizes, "gap-stats")
    statuses = [gap_stat_status(report) for report in reports]
    means = [report.mean_gap for report in reports]
    monotone = all(a > b for a, b in zip(means, means[1:]))

    rows = []
    for report, status in zip(reports, statuses):
        row = report.to_dict()
        row['status'] = status.value
        rows.append(row)
    result = CommandResult()
    run.write_json(result, "gapstats.json", {'results': rows, 'mean_gap_decreasing': monotone})
    run.write_csv(result, "gapstats.csv", rows)
    result.count(statuses)
    if not monotone:
        logger.warning("E[gap] is not decreasing in M: %s", means)
        result.failed += 1
    result.summary.extend({key: row[key] for key in ('m_count', 'mean_scaled_gap', 'ks_distance', 'mean_gap',
                                                    'method', 'status')} for row in rows)
    return result


def cmd_degenerate(run):
    params = run.params
    reports = degenerate_leakage_demo(params['epsilons'], params['deltas'])
    result = CommandResult()
    run.write_csv(result, "degenerate.csv", [report.to_row() for report in reports])
    result.count(report.status for report in reports)
    result.summary.append(summarize(reports, "degenerate"))
    return result


def cmd_fw_certify(run):
    """Frank-Wolfe distance certificates and the screen-then-certify loop"""
    params, seed = run.params, run.config.seed
    instances = _planted_instances(run, "instances")

    def check(instance):
        epsilon = instance.gap / params['eps_fraction']
        report = check_fw_certificate(instance.dictionary, instance.query, epsilon, instance.instance_id,
                                      gap_tol=params['gap_tol'], seed=seed)
        screening = screen_and_certify(instance.dictionary, instance.query, initial_size=params['screen_initial'],
                                       gap_tol=params['gap_tol'])
        row = {
            'instance_id': instance.instance_id,
            'screened_size': len(screening.support),
            'enlargements': screening.enlargements,
            'certified': screening.certified,
            'full_gap': screening.full_gap,
            'face_recovered': screening.face == instance.face,
            'distance_bound': screening.certificate.distance_bound,
        }
        return report, row

    outcomes = run.map(check, instances, "fw-certify")
    reports = [report for report, _ in outcomes]
    result = CommandResult()
    run.write_csv(result, "fw_certificate.csv", [report.to_row() for report in reports])
    run.write_csv(result, "screening.csv", [row for _, row in outcomes])
    result.count(report.status for report in reports)
    result.summary.append(summarize(reports, "fw-certificate"))
    return result


def cmd_leakage_rate(run):
    """Per-atom leakage decay rates and the multiplier Lipschitz ratio"""
    params = run.params
    instances = _planted_instances(run, "instances")

    def check(instance):
        grid = _eps_grid(instance, params['eps_fractions'])
        return (check_leakage_rate(instance.dictionary, instance.query, grid, instance.instance_id),
                check_smr_lipschitz(instance.dictionary, instance.query, grid, instance.instance_id))

    outcomes = run.map(check, instances, "leakage-rate")
    rates = [rate for rate, _ in outcomes]
    lipschitz = [lip for _, lip in outcomes]
    result = CommandResult()
    run.write_csv(result, "leakage.csv", [report.to_row() for report in rates])
    run.write_csv(result, "lipschitz.csv", [report.to_row() for report in lipschitz])
    result.count(report.status for report in rates)
    result.summary.extend([summarize(rates, "leakage-rate"), summarize(lipschitz, "multiplier-lipschitz")])
    return result


def cmd_prescribe(run):
    """Prescribed epsilon meets the accuracy target on at least required_rate of the instances"""
    params, seed = run.params, run.config.seed
    instances = _planted_instances(run, "instances")
    reports = run.map(lambda inst: check_prescription(inst.dictionary, inst.query, params['eta'],
                                                      inst.instance_id, seed=seed), instances, "prescribe")
    result = CommandResult()
    run.write_csv(result, "prescription.csv", [report.to_row() for report in reports])
    summary = summarize(reports, "prescription")
    decided = summary['pass'] + summary['fail']
    summary['pass_rate'] = summary['pass'] / decided if decided else math.nan
    result.summary.append(summary)
    result.passed = summary['pass']
    result.skipped = summary['skipped_degenerate']
    if decided and summary['pass_rate'] < params['required_rate']:
        result.failed = summary['fail']
    return result


def _decode_cache(run):
    params, seed = run.params, run.config.seed
    if run.config.input_path:
        cache = read_cache(run.config.input_path, params['block_size'])
        if params['query'] is None:
            raise ParameterError("query", "required with --input (comma-separated coordinates)")
        return cache, np.asarray(params['query'], dtype=float), {'face_tokens': [], 'page': None}
    builder = {'planted': build_planted_cache, 'tie': build_tie_cache, 'adversarial': build_adversarial_cache}
    cache, query, info = builder[params['cache']](params['context'], params['d'], params['d_v'],
                                                  params['block_size'], params['gap'], seed=seed)
    if params['query'] is not None:
        query = np.asarray(params['query'], dtype=float)
    return cache, query, info


def cmd_decode(run):
    """One decode step through routing, candidate solve and the dense fallback"""
    params = run.params
    cache, query, info = _decode_cache(run)
    config = RoutingConfig(
        pages_p=params['pages'], candidates_kc=params['candidates'], solver=params['solver'],
        epsilon=params['epsilon'], solver_iters=params['solver_iters'],
        fallback_tau=None if params['tau'] < 0 else params['tau'],
        policy=params['policy'], objective=params['objective'],
        adaptive_epsilon=params['adaptive_epsilon'], target_leakage=params['target_leakage'],
    )
    output = decode_with_fallback(cache, query, config)
    # the dense reference runs at the temperature the decode actually used
    epsilon = output.stats.epsilon
    dense = dense_decode(cache, query, epsilon)
    deviation = float(np.linalg.norm(output.readout - dense.readout))
    face_routed = set(info['face_tokens']) <= set(output.token_indices.tolist())
    bound = leakage_bound(cache, query, output.token_indices, epsilon)

    note = ""
    if output.stats.used_fallback:
        status = CheckStatus.PASS if np.array_equal(output.readout, dense.readout) else CheckStatus.FAIL
    elif config.objective is SparseObjective.LINEAR and face_routed:
        status = CheckStatus.PASS if deviation <= bound + 1e-8 else CheckStatus.FAIL
    else:
        status = CheckStatus.VACUOUS
        note = "face not routed" if not face_routed else "quadratic objective: deviation reported only"

    record = {
        'output': output.to_dict(),
        'dense_stats': dense.stats.to_dict(),
        'readout_dev': deviation,
        'leakage_bound': bound,
        'face_routed': face_routed,
        'planted_page': info['page'],
        'status': status.value,
        'note': note,
    }
    row = output.stats.to_dict()
    row.update({'readout_dev': deviation, 'leakage_bound': bound, 'face_routed': face_routed,
                'dense_token_reads': dense.stats.token_key_reads, 'status': status.value})

    result = CommandResult()
    run.write_json(result, "decode.json", record)
    run.write_csv(result, "decode.csv", [row])
    if params['export_cache']:
        write_cache(run.path("cache.fstb"), cache)
        result.artifacts.append("cache.fstb")
    result.count([status])
    result.summary.append({key: row[key] for key in ('mode', 'used_fallback', 'gap_diag', 'token_key_reads',
                                                    'value_reads', 'readout_dev', 'leakage_bound', 'status')})
    return result


def _sweep_routing(params, pages, candidates, solver, solver_iters):
    return RoutingConfig(pages_p=pages, candidates_kc=candidates, solver=solver, epsilon=params['epsilon'],
                         solver_iters=solver_iters, objective=params['objective'],
                         adaptive_epsilon=params['adaptive_epsilon'], target_leakage=params['target_leakage'])


def cmd_sweep_scaling(run):
    """Read counts over the context grid; sparse reads must not depend on T"""
    params = run.params
    config = _sweep_routing(params, params['pages'], params['candidates'], params['solver'], params['solver_iters'])
    rows = scaling_experiment(params['contexts'], config, seed=run.config.seed, d=params['d'], d_v=params['d_v'],
                              block_size=params['block_size'], gap=params['gap'],
                              memory_budget=params['memory_budget'], threads=run.config.threads, quiet=run.quiet)
    constant = len({(row['sparse_token_reads'], row['sparse_value_reads']) for row in rows}) == 1
    dense_exact = all(row['dense_token_reads'] == row['context'] for row in rows)

    result = CommandResult()
    run.write_csv(result, "scaling.csv", rows, SCALING_COLUMNS)
    result.count([CheckStatus.PASS if constant and dense_exact else CheckStatus.FAIL])
    result.summary.extend({key: row[key] for key in ('context', 'dense_token_reads', 'sparse_token_reads',
                                                    'sparse_value_reads', 'summary_reads', 'readout_dev')}
                          for row in rows)
    return result


def cmd_sweep_ablation(run):
    """Read counts and solver effort over the (P, K_c, solver) grid; reads must not depend on the solver"""
    params = run.params
    config = _sweep_routing(params, params['pages'][0], params['candidates'][0], params['solvers'][0],
                            params['solver_iters'][0])
    rows = ablation_experiment(params['pages'], params['candidates'], params['solvers'], params['context'], config,
                               seed=run.config.seed, d=params['d'], d_v=params['d_v'],
                               block_size=params['block_size'], gap=params['gap'],
                               solver_iters=params['solver_iters'], memory_budget=params['memory_budget'],
                               threads=run.config.threads, quiet=run.quiet)
    reads = {}
    for row in rows:
        reads.setdefault((row['P'], row['Kc']), set()).add((row['token_reads'], row['value_reads']))
    solver_free = all(len(counts) == 1 for counts in reads.values())

    result = CommandResult()
    run.write_csv(result, "ablation.csv", rows, ABLATION_COLUMNS)
    result.count([CheckStatus.PASS if solver_free else CheckStatus.FAIL])
    result.summary.extend(rows)
    return result


COMMANDS = {
    Command.PROJECT: cmd_project,
    Command.ENTROPIC: cmd_entropic,
    Command.VERIFY_BOUNDS: cmd_verify_bounds,
    Command.SECOND_ORDER: cmd_second_order,
    Command.GAP_STATS: cmd_gap_stats,
    Command.DEGENERATE: cmd_degenerate,
    Command.FW_CERTIFY: cmd_fw_certify,
    Command.LEAKAGE_RATE: cmd_leakage_rate,
    Command.PRESCRIBE: cmd_prescribe,
    Command.DECODE: cmd_decode,
    Command.SWEEP_SCALING: cmd_sweep_scaling,
    Command.SWEEP_ABLATION: cmd_sweep_ablation,
}


def print_header(title):
    """Print a header with the given title"""
    console.print(Panel(f"[bold white]{title}[/bold white]", width=80, style="blue"))


def print_summary(rows):
    """Plain-text summary table of a command"""
    if rows:
        console.print(tabulate(rows, headers="keys", floatfmt=".6g"), markup=False, highlight=False)


def print_error(message):
    """Print an error message"""
    console.print(f"[bold red]✗ {message}[/bold red]", highlight=False)


def run(config, quiet=False):
    """
    Dispatch one command, write its artifacts, summary.json and the manifest

    Args:
        config (RunConfig): Command, seed, paths and resolved parameters
        quiet (bool): Suppress progress bars and console tables

    Returns:
        int: 0 when every asserted check passed, 2 when checks were only skipped, 1 on failure
    """
    context = Run(config, quiet)
    logger.info("%s: seed %d, output %s", config.command.value, config.seed, context.output_dir)
    result = COMMANDS[config.command](context)
    write_json(context.path(SUMMARY_NAME), {
        'command': config.command.value,
        'summary': result.summary,
        'passed': result.passed,
        'failed': result.failed,
        'skipped': result.skipped,
        'exit_status': result.exit_status,
    })
    write_manifest(context.output_dir, config.command.value, config.seed, config.parameters,
                   result.artifacts + [SUMMARY_NAME])
    if not quiet:
        print_header(f"facestab {config.command.value}")
        print_summary(result.summary)
        console.print(f"passed {result.passed}, failed {result.failed}, skipped {result.skipped}; "
                      f"artifacts in {context.output_dir}", highlight=False)
    return result.exit_status


def build_parser():
    """Global flags; every other --key value pair is a command parameter"""
    parser = argparse.ArgumentParser(
        prog="facestab",
        allow_abbrev=False,
        description="Face-stability checks for entropic projections and a paged sparse-decode simulator.",
        epilog="Command parameters are passed as --key value (lists comma-separated).",
    )
    parser.add_argument("command", choices=[c.value for c in Command], help="Command to run")
    parser.add_argument("--seed", type=int, default=None, help="Run seed (default 0)")
    parser.add_argument("--input", dest="input_path", default=None, help="Dictionary (CSV/FSTB) or cache (FSTB)")
    parser.add_argument("--output-dir", default=None, help="Artifact directory (default $FACESTAB_OUTPUT_DIR or ./results)")
    parser.add_argument("--config", default=None, help="JSON file with global settings and parameters")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for independent instances")
    parser.add_argument("--preset", default=None, choices=sorted(PRESETS), help="Named parameter preset")
    parser.add_argument("--quiet", action="store_true", help="Only warnings, no progress or tables")
    parser.add_argument("--log-level", default="INFO", help="Log level (DEBUG, INFO, WARNING)")
    return parser


def parse_overrides(tokens):
    """
    Turn ['--key', 'value', '--flag', '--other=1'] into a parameter dict

    A key followed by another --key (or nothing) is a boolean flag set to true.
    """
    overrides = {}
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--") or len(token) == 2:
            raise ParameterError(token, "expected --key value")
        name = token[2:]
        if "=" in name:
            name, value = name.split("=", 1)
            i += 1
        elif i + 1 < len(tokens) and not tokens[i + 1].startswith("--"):
            value = tokens[i + 1]
            i += 2
        else:
            value = "true"
            i += 1
        overrides[name.replace("-", "_")] = value
    return overrides


def load_config_file(path):
    """Global settings and parameters from a JSON file; unknown top-level keys are parameters"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ParameterError("config", f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ParameterError("config", f"cannot read {path}: {exc.strerror}") from exc
    if not isinstance(data, dict):
        raise ParameterError("config", f"{path}: expected a JSON object")
    settings = {key: data.pop(key) for key in _GLOBAL_KEYS if key in data}
    data.pop('command', None)
    parameters = dict(data.pop('parameters', {}))
    parameters.update(data)
    return settings, parameters


def make_run_config(argv):
    """
    Parse argv into a RunConfig

    Precedence: command defaults, then preset, then the JSON file, then flags.

    Returns:
        tuple: (RunConfig, argparse.Namespace)
    """
    args, extra = build_parser().parse_known_args(argv)
    settings, parameters = load_config_file(args.config) if args.config else ({}, {})
    parameters.update(parse_overrides(extra))
    for key in _GLOBAL_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    config = RunConfig(command=args.command, parameters=parameters, **settings)
    return config, args


def main(argv=None):
    """Entry point: parse, set up logging, run, map errors to exit codes"""
    argv = sys.argv[1:] if argv is None else argv
    try:
        setup_logging(level=_peek_log_level(argv), quiet="--quiet" in argv)
        config, args = make_run_config(argv)
        return run(config, quiet=args.quiet)
    except FacestabError as exc:
        print_error(str(exc))
        return EXIT_FAILED
    except KeyboardInterrupt:
        print_error("interrupted")
        return EXIT_INTERRUPTED
    except Exception:
        logger.exception("unexpected error")
        return EXIT_FAILED


def _peek_log_level(argv):
    for i, token in enumerate(argv):
        if token == "--log-level" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--log-level="):
            return token.split("=", 1)[1]
    return "INFO"
