#!/usr/bin/env python3
"""Regenerate the committed golden outputs for the end-to-end run.

The golden pipeline is: synth fixture -> score -> selective, all with the
seeds and settings fixed below. Outputs are byte-stable for a fixed numpy
major line (the generator streams are PCG64). Run from the repo root:

    python scripts/regenerate_golden.py
"""

import shutil
import sys
from pathlib import Path

from epuc.cli import main

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"

SYNTH = [
    "synth", "--kind", "class-dirichlet", "--n", "60", "--s", "16", "--k", "4",
    "--seed", "11", "--alpha0", "2.0", "--boost", "6.0", "--labels",
]
SCORE = ["score", "--critical", "2,3", "--threshold", "0.3"]
SELECTIVE = [
    "selective", "--critical", "2,3", "--seed", "0",
    "--resamples", "200", "--grid-size", "200",
]


def run(workdir: Path) -> None:
    workdir.mkdir(parents=True, exist_ok=True)
    fixture = workdir / "fixture.jsonl"
    for argv in (
        SYNTH + ["--out", str(fixture)],
        SCORE + ["--input", str(fixture), "--out-dir", str(workdir)],
        SELECTIVE + ["--input", str(fixture), "--out-dir", str(workdir)],
    ):
        code = main(argv)
        if code != 0:
            raise SystemExit(f"command failed ({code}): {argv}")


if __name__ == "__main__":
    if GOLDEN.exists():
        shutil.rmtree(GOLDEN)
    run(GOLDEN)
    n = len(list(GOLDEN.iterdir()))
    print(f"wrote {n} golden files to {GOLDEN}", file=sys.stderr)
