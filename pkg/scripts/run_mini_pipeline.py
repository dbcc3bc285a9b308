"""Build the miniature fixture and drive the whole pipeline over it.

Handy as a smoke check and as a worked example of the CLI stages:

    python3 scripts/run_mini_pipeline.py --dest /tmp/mini
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from build_mini_fixture import build_all

from ehr2sql import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dest", default="mini_run", help="fixture + output directory")
    args = parser.parse_args()
    dest = Path(args.dest)
    started = time.perf_counter()
    config_path = build_all(dest)
    print(f"fixture built under {dest}")
    for stage in ("generate", "ensemble", "score", "ablate", "export-raft"):
        print(f"--- {stage}")
        code = cli.main([stage, "-c", str(config_path)])
        if code != 0:
            print(f"stage {stage} failed", file=sys.stderr)
            return code
    print(f"--- done in {time.perf_counter() - started:.1f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
