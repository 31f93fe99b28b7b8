"""
Module entry point for running cdinet as a module.

Usage:
    python -m cdinet train --config exp.json --data-root data --datasets NLPR,NJUD --out runs/a
    python -m cdinet eval --pred preds/NLPR --gt data/NLPR/GT --out report.json
"""

import sys

from cdinet.cli import main

if __name__ == "__main__":
    sys.exit(main())
