"""
Console rendering for the command-line tool: panels, verdict tables and
log setup. Report files never go through here.
"""

from __future__ import annotations

import logging
from typing import Any, Dict, Iterable, Mapping, Optional

from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

console = Console()
err_console = Console(stderr=True)

VERDICT_STYLE = {
    'pass': 'bold green',
    'fail': 'bold red',
    'inconclusive': 'bold yellow',
}


def configure_logging(verbosity: int = 0) -> None:
    """
    Route ``opdomain`` logging through a single Rich handler on stderr.

    :param verbosity: 0 warnings, 1 info, 2 or more debug.
    """
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logger = logging.getLogger('opdomain')
    logger.handlers.clear()
    logger.addHandler(RichHandler(console=err_console, show_path=False, markup=False))
    logger.setLevel(level)
    logger.propagate = False


def show_job_intro(title: str, description: str) -> None:
    """Standard header panel for a job."""
    console.print(Panel(
        Text.from_markup(
            f'[bold cyan]== [bold white]{title}[/bold white] [bold cyan]==\n'
            f'{description}'
        ),
        border_style='bright_blue',
        padding=(1, 2),
    ))


def _short(evidence: Mapping[str, Any], limit: int = 3) -> str:
    shown = []
    for key, value in evidence.items():
        if isinstance(value, (dict, list)):
            continue
        if isinstance(value, float):
            value = f'{value:.6g}'
        shown.append(f'{key}={value}')
        if len(shown) == limit:
            break
    return ', '.join(shown)


def verdict_table(checks: Iterable[Dict[str, Any]]) -> Table:
    """One row per check: label, coloured verdict, key evidence, witness."""
    table = Table(show_lines=False, header_style='bold')
    table.add_column('condition')
    table.add_column('verdict')
    table.add_column('evidence')
    table.add_column('witness')
    for check in checks:
        verdict = check['verdict']
        label = check['label'] + (' *' if check.get('heuristic') else '')
        witness = check.get('witness')
        table.add_row(
            label,
            Text(verdict, style=VERDICT_STYLE.get(verdict, '')),
            _short(check.get('evidence', {})),
            '' if witness is None else str(witness),
        )
    return table


def show_report(report: Dict[str, Any], out_dir: Optional[str] = None) -> None:
    """Print the verdict table and the conclusion panel of a report document."""
    console.print(verdict_table(report['checks']))
    overall = report['overall']
    body = report['conclusion']
    if out_dir:
        body += f'\n\nreport written to {out_dir}'
    console.print(Panel(
        Text(body),
        title=f'overall: {overall}',
        border_style=VERDICT_STYLE.get(overall, 'white').split()[-1],
        padding=(1, 2),
    ))
    if any(c.get('heuristic') for c in report['checks']):
        console.print('[dim]* heuristic evidence (sampled, not certified)[/dim]')


def show_error(title: str, message: str) -> None:
    err_console.print(Panel(message, title=title, style='red'))


def show_examples(catalogue: Iterable[Dict[str, Any]]) -> None:
    table = Table(header_style='bold')
    table.add_column('example')
    table.add_column('job')
    table.add_column('conditions')
    table.add_column('description')
    for entry in catalogue:
        table.add_row(entry['name'], entry['job'], ', '.join(entry['conditions']), entry['description'])
    console.print(table)
