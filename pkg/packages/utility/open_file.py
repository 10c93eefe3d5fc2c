"""
Locating and loading JSON documents and the bundled example catalogue.

Bundled instances live under ``data/examples`` at the repository root, or
next to a frozen executable.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from opdomain.errors import ConfigError

EXAMPLES_DIR = Path('data') / 'examples'


def _examples_dir() -> Path:
    """
    Resolve the bundled examples directory.

    Dev (non-frozen):
        packages/utility/open_file.py -> repo root two levels above 'utility'
        Looks for: <repo_root>/data/examples

    Frozen (PyInstaller):
        Looks for (in order):
            1) <exe_dir>/data/examples
            2) <exe_dir>/../data/examples

    :return: The first existing candidate, or the preferred path so callers
             can report a clear error.
    """
    candidates: list[Path] = []

    if getattr(sys, 'frozen', False):
        exe_dir = Path(sys.executable).resolve().parent
        candidates.append(exe_dir / EXAMPLES_DIR)
        candidates.append(exe_dir.parent / EXAMPLES_DIR)
    else:
        repo_root = Path(__file__).resolve().parent.parent.parent
        script_root = Path(sys.argv[0]).resolve().parent.parent
        candidates.append(repo_root / EXAMPLES_DIR)
        candidates.append(script_root / EXAMPLES_DIR)

    for p in candidates:
        if p.is_dir():
            return p

    return candidates[0]


def load_json_document(path: str | Path) -> Dict[str, Any]:
    """
    Read a UTF-8 JSON object.

    :raises FileNotFoundError: The file does not exist.
    :raises ConfigError: Invalid JSON (with line number) or not an object.
    """
    file_path = Path(path)
    text = file_path.read_text(encoding='utf-8')
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f'{file_path.name}: {exc.msg}', line=exc.lineno, column=exc.colno) from None
    if not isinstance(document, dict):
        raise ConfigError(f'{file_path.name}: top level must be a JSON object')
    return document


def example_path(name: str, directory: Optional[Path] = None) -> Path:
    """
    Path of a bundled example by name.

    :raises ConfigError: No example of that name.
    """
    directory = directory or _examples_dir()
    path = directory / f'{name}.json'
    if not path.is_file():
        known = ', '.join(e['name'] for e in list_examples(directory)) or 'none'
        raise ConfigError(f'unknown example {name!r}; bundled: {known}')
    return path


def list_examples(directory: Optional[Path] = None) -> List[Dict[str, Any]]:
    """Name, description and exercised conditions of every bundled example."""
    directory = directory or _examples_dir()
    if not directory.is_dir():
        return []
    catalogue = []
    for path in sorted(directory.glob('*.json')):
        document = load_json_document(path)
        catalogue.append({
            'name': path.stem,
            'job': document.get('job', ''),
            'description': document.get('description', ''),
            'conditions': list(document.get('conditions', [])),
        })
    return catalogue
