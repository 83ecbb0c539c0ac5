#!/usr/bin/env python3
"""
Ghost Optics runner

Runs straight from a source checkout; equivalent to the installed ``ghost-optics`` script.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent / "src"))

from ghost_optics.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
