#!/usr/bin/env python3
"""
carbospec - Soil Carbonate Prediction from NIR Spectra
======================================================

Entry point for the carbospec command line:

    python main.py ingest   --format lucas lucas_wide.csv -o lucas.csv
    python main.py train    merged.csv --kind mlp -o models/mlp.cspc
    python main.py evaluate --pairs table1
    python main.py predict  local.csv --model models/mlp.cspc -o predictions.csv

Run `python main.py --help` for every sub-command and flag.
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
