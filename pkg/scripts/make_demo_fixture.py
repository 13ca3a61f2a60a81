"""Regenerate the scripted end-to-end fixture.

Runs the demo policy against a real interpreter sandbox and records every
model reply and program output, so tests can replay them offline.

    python3 scripts/make_demo_fixture.py [OUT_DIR]
"""

import argparse
from pathlib import Path

from tabagent.demo import write_fixture

DEFAULT_OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "e2e"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", nargs="?", default=DEFAULT_OUT, type=Path)
    out = write_fixture(ap.parse_args().out)
    for p in sorted(out.iterdir()):
        print(f"{p.stat().st_size:>8}  {p}")


if __name__ == "__main__":
    main()
