"""Write every data table behind the figures into one directory.

    python scripts/reproduce_figures.py [OUT_DIR] [--format json]
"""
import sys

from photonsub.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    out = args.pop(0) if args and not args[0].startswith("-") else "results/figures"
    sys.exit(main(["figures", "--out", out, *args]))
