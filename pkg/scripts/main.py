#!/usr/bin/env python3
"""
Run opdomain from a checkout without installing it.

    ./scripts/main.py run --example jacobi_h_identity
    ./scripts/main.py examples
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / 'packages'))
from opdomain import cli  # noqa: E402
from utility.display import err_console  # noqa: E402


if __name__ == '__main__':
    try:
        sys.exit(cli.main())
    except KeyboardInterrupt:
        err_console.print('\n[red]Interrupted. Exiting.[/red]')
        sys.exit(130)
