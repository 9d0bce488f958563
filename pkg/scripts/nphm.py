#!/usr/bin/env python3
"""
NPHM launcher

Runs the ``nphm`` command line from a source checkout without installing
the package:

    ./scripts/nphm.py gen --subjects 8 --expressions 2 --out data
    ./scripts/nphm.py train --stage identity --config configs/desk_scale.json
"""

import sys
from pathlib import Path

# Add the parent directory to sys.path to import headmodel
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))
from headmodel.cli import main

if __name__ == "__main__":
    sys.exit(main())
