# main.py
"""Entry point for the ISL recognizer: `python main.py <command> ...` (see isl_recognizer/cli.py)."""
import sys

from isl_recognizer.cli import main

if __name__ == "__main__":
    sys.exit(main())
