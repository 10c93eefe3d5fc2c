"""
Command-line driver.

``opdomain run CONFIG`` (or ``--example NAME``) validates a job, runs the
matching pipeline and writes ``report.json`` plus curve CSVs. ``opdomain
examples`` lists the bundled instances.

Exit codes: 0 every check passed, 1 some check failed, 2 inconclusive only,
3 configuration or input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from opdomain import __version__
from opdomain.approx_unit import (
    UnitFamily,
    domination_check,
    komcond_adjoint_symmetry,
    komintro_check,
    lemma_bound_check,
    sqrt3_inequality_check,
    wot_convergence_check,
)
from opdomain.config import JobConfig, UnitConfig, load_config
from opdomain.core import Window
from opdomain.diffop_criteria import (
    certify_formally_normal,
    certify_graph_norm_domain,
    check_poly_domination,
)
from opdomain.errors import ConfigError, OpdomainError
from opdomain.matrix_criteria import certify_h_selfadjoint
from opdomain.oracle import (
    CLASSICAL,
    finite_h_symmetry_residual,
    graph_norm_ratio_probe,
    jacobi_limit_point_probe,
    jacobi_sequences,
    resolvent_commute_check,
)
from opdomain.report import CheckReport, CheckResult, Verdict, config_sha256
from utility.display import (
    configure_logging,
    show_error,
    show_examples,
    show_job_intro,
    show_report,
)
from utility.open_file import example_path, list_examples

logger = logging.getLogger(__name__)

EXIT_CONFIG = 3

# (checks, conclusion lines, assumptions)
Outcome = Tuple[List[CheckResult], List[str], List[str]]


def run_check_matrix(cfg: JobConfig) -> Outcome:
    modakl = None if cfg.modakl is None else (cfg.modakl.d, cfg.modakl.s, cfg.modakl.alpha)
    result = certify_h_selfadjoint(
        cfg.operator, cfg.pairing, cfg.diagonal,
        m=None if modakl else cfg.m,
        modakl=modakl,
        ladder=cfg.ladder,
        n_values=cfg.n_values,
        schur=cfg.schur,
        schur_weights=cfg.schur_weights,
        tolerances=cfg.tolerances,
        seed=cfg.seed,
    )
    return result.checks, [result.conclusion], list(result.assumptions)


def run_approx_unit(cfg: JobConfig) -> Outcome:
    unit = cfg.unit
    if unit is None:
        unit = UnitConfig()
    a, c = cfg.operator, cfg.diagonal
    family = UnitFamily(unit.kind, c, unit.m or cfg.m or 1, cfg.n_values)
    curve = komintro_check(family, a, cfg.ladder, tolerances=cfg.tolerances, seed=cfg.seed)
    checks = [curve.to_check()]

    if unit.sqrt3 is not None:
        checks.append(sqrt3_inequality_check(c, *unit.sqrt3, seed=cfg.seed))

    wot_window = Window.leading(unit.wot_window)
    vectors = []
    for index in unit.wot_vectors:
        if index > wot_window.size:
            raise ConfigError(f'test vector e_{index} lies outside the WOT window', field='unit.wot_vectors')
        e = np.zeros(wot_window.size, dtype=np.complex128)
        e[index - 1] = 1.0
        vectors.append(e)
    checks.append(wot_convergence_check(family, vectors, wot_window, tolerances=cfg.tolerances))

    if unit.lemma is not None:
        windows = [Window.leading(size) for size in unit.lemma.windows]
        for power in unit.lemma.powers:
            checks.append(lemma_bound_check(a, c, unit.lemma.z, power, windows,
                                            tolerances=cfg.tolerances, seed=cfg.seed))
    if unit.komcond_window is not None:
        w = Window.leading(unit.komcond_window)
        t = family.unit(max(family.n_values), w)
        checks.append(komcond_adjoint_symmetry(t, a, w))
    checks.append(domination_check(c, a, unit.domination_sizes, tolerances=cfg.tolerances, seed=cfg.seed))

    if curve.verdict is Verdict.PASS:
        conclusion = (f'{unit.kind} family is an approximate unit for ad(., A) '
                      f'(sup {curve.sup:.6g})')
    else:
        conclusion = f'{unit.kind} family: commutator bound {curve.verdict.value} ({curve.note})'
    return checks, [conclusion], family.assumptions()


def run_check_diffop(cfg: JobConfig) -> Outcome:
    d = cfg.diffop
    if d.kind == 'dirac':
        result = certify_formally_normal(d.alphas, d.q, cfg.grid, radii=d.holder_radii,
                                         tolerances=cfg.tolerances, seed=cfg.seed)
    else:
        result = certify_graph_norm_domain(d.coefficients, cfg.grid, tolerances=cfg.tolerances)
    checks = list(result.checks)
    conclusions = [result.conclusion]
    for p1, p2 in d.domination:
        check = check_poly_domination(p1, p2, cfg.grid, tolerances=cfg.tolerances)
        checks.append(check)
        conclusions.append(f'{check.label}: {check.note}')
    return checks, conclusions, list(result.assumptions)


def run_oracle(cfg: JobConfig) -> Outcome:
    probes = cfg.probes
    checks: List[CheckResult] = []
    conclusions: List[str] = []
    assumptions: List[str] = []
    if probes.h_symmetry is not None:
        checks.append(finite_h_symmetry_residual(cfg.operator, cfg.pairing, probes.h_symmetry,
                                                 tolerances=cfg.tolerances))
    if probes.limit_point is not None:
        lp = probes.limit_point
        diag, offdiag = (lp.diag, lp.offdiag) if lp.diag is not None else jacobi_sequences(cfg.operator)
        probe = jacobi_limit_point_probe(diag, offdiag, lp.z, lp.sizes, tolerances=cfg.tolerances)
        checks.append(probe.to_check())
        conclusions.append(probe.conclusion)
        assumptions.append(CLASSICAL)
    if probes.graph_norm is not None:
        checks.append(graph_norm_ratio_probe(cfg.operator, probes.graph_norm, seed=cfg.seed).to_check())
    if probes.resolvents is not None:
        rp = probes.resolvents
        probe = resolvent_commute_check(cfg.operator, cfg.diagonal, rp.z, rp.sizes, spectral_point=rp.w,
                                        tolerances=cfg.tolerances, seed=cfg.seed)
        checks.append(probe.to_check())
        conclusions.append(probe.conclusion)
    overall = Verdict.combine(c.verdict for c in checks)
    conclusions.insert(0, f'oracle probes: {overall.value}')
    return checks, conclusions, assumptions


def run_all(cfg: JobConfig) -> Outcome:
    checks: List[CheckResult] = []
    conclusions: List[str] = []
    assumptions: List[str] = []
    stages = []
    if cfg.operator is not None and cfg.diagonal is not None and (cfg.m is not None or cfg.modakl is not None):
        stages.append(run_check_matrix)
    if cfg.unit is not None and cfg.operator is not None and cfg.diagonal is not None:
        stages.append(run_approx_unit)
    if cfg.diffop is not None:
        stages.append(run_check_diffop)
    if not cfg.probes.empty:
        stages.append(run_oracle)
    if not stages:
        raise ConfigError('nothing to run for job "all"', field='job')
    for stage in stages:
        logger.info('running %s', stage.__name__)
        more, lines, extra = stage(cfg)
        checks.extend(more)
        conclusions.extend(lines)
        assumptions.extend(a for a in extra if a not in assumptions)
    return checks, conclusions, assumptions


RUNNERS = {
    'check-matrix': run_check_matrix,
    'approx-unit': run_approx_unit,
    'check-diffop': run_check_diffop,
    'oracle': run_oracle,
    'all': run_all,
}


def run_job(cfg: JobConfig) -> CheckReport:
    """Run the pipeline of ``cfg.job`` and assemble its report."""
    checks, conclusions, assumptions = RUNNERS[cfg.job](cfg)
    return CheckReport(
        job=cfg.echo(),
        checks=checks,
        conclusion='\n'.join(conclusions),
        assumptions=assumptions,
        timestamp=cfg.timestamp,
        config_sha256=config_sha256(cfg.document),
    )


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='opdomain',
        description='Finite-section verification of domain criteria for infinite matrices '
                    'and first-order differential operators.',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='run a job from a JSON config')
    run.add_argument('config', nargs='?', type=Path, help='path to the job config')
    run.add_argument('--example', metavar='NAME', help='run a bundled example instead of a file')
    run.add_argument('--out', type=Path, help='output directory (overrides the config)')
    run.add_argument('--seed', type=int, help='random seed (overrides the config)')
    run.add_argument('--max-window', type=int, dest='max_window',
                     help='cap every window at this size (default 20000)')
    run.add_argument('-v', '--verbose', action='count', default=0, help='-v info, -vv debug')
    run.add_argument('-q', '--quiet', action='store_true', help='write the report without printing it')

    sub.add_parser('examples', help='list bundled examples')
    return parser


def _run(args: argparse.Namespace) -> int:
    configure_logging(args.verbose)
    if (args.config is None) == (args.example is None):
        show_error('usage', 'give either a config path or --example NAME')
        return EXIT_CONFIG
    try:
        path = args.config if args.config is not None else example_path(args.example)
        if args.max_window is not None and args.max_window < 1:
            raise ConfigError('must be >= 1', field='--max-window')
        cfg = load_config(path, seed=args.seed, max_window=args.max_window, output=args.out)
        if not args.quiet:
            show_job_intro(cfg.name, cfg.description or cfg.job)
        report = run_job(cfg)
    except FileNotFoundError as exc:
        show_error('file not found', str(exc))
        return EXIT_CONFIG
    except ConfigError as exc:
        show_error('invalid configuration', str(exc))
        return EXIT_CONFIG
    except OpdomainError as exc:
        show_error(type(exc).__name__, str(exc))
        return EXIT_CONFIG
    report.write(cfg.output)
    if not args.quiet:
        show_report(report.to_dict(), str(cfg.output))
    return report.exit_code()


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == 'examples':
        try:
            show_examples(list_examples())
        except ConfigError as exc:
            show_error('invalid example', str(exc))
            return EXIT_CONFIG
        return 0
    return _run(args)


if __name__ == '__main__':
    sys.exit(main())
