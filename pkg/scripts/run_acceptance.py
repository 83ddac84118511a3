"""Run the acceptance suite and print one line per criterion.

    python scripts/run_acceptance.py            # all ten, about 30 minutes
    python scripts/run_acceptance.py --quick    # skip the long energy run
"""
import argparse
import sys
from pathlib import Path

import pytest


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="deselect the slow criterion")
    args = ap.parse_args()
    target = str(Path(__file__).resolve().parents[1] / "tests" / "test_acceptance.py")
    argv = [target, "-q", "-p", "no:cacheprovider"]
    if args.quick:
        argv += ["-m", "not slow"]
    return int(pytest.main(argv))


if __name__ == "__main__":
    sys.exit(main())
