#!/usr/bin/env python3
"""Run the full MovieLens pipeline: top-N table, rating MAE and the sparsity sweep.

    python scripts/fetch_movielens.py --out data/ml-100k
    python scripts/reproduce.py

Outputs land in runs/topn and runs/converged.
"""
import argparse
import sys

from prefnet.cli import EXIT_OK, main


def run(config: str, commands) -> int:
    for cmd in commands:
        code = main([cmd, "--config", config])
        if code != EXIT_OK:
            print(f"{cmd} with {config} exited with {code}", file=sys.stderr)
            return code
    return EXIT_OK


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--skip-sweep", action="store_true", help="skip the sparsity sweep (about 5 minutes)")
    args = p.parse_args()
    code = run("configs/topn.toml", ["train", "evaluate"])
    if code == EXIT_OK:
        steps = ["train", "evaluate"] + ([] if args.skip_sweep else ["sweep"])
        code = run("configs/converged.toml", steps)
    sys.exit(code)
