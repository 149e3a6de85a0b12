"""Regenerate the bundled three-page demo corpus (default: tests/fixtures/demo_corpus)."""

import argparse
from pathlib import Path

from semchunk.demo import build_demo_corpus

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", nargs="?", default=Path(__file__).resolve().parent.parent / "tests/fixtures/demo_corpus")
    out = build_demo_corpus(ap.parse_args().out)
    print(f"wrote demo corpus to {out}")
