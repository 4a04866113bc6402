#!/usr/bin/env python3
"""Materialise MovieLens 100k (u.data / u.user / u.item) plus a seeded 80/20 split.

The canonical archive is tried first.  When it cannot be reached, the copy of
ml-100k bundled inside the RecBole wheel is downloaded through pip and
converted back into the original GroupLens file layout.

    python scripts/fetch_movielens.py --out data/ml-100k
"""
import argparse
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

import numpy as np

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]


def from_grouplens(out: Path, timeout: float = 20.0) -> bool:
    try:
        with urllib.request.urlopen(GROUPLENS_URL, timeout=timeout) as resp:
            blob = resp.read()
    except Exception as exc:  # noqa: BLE001 - any network failure means fall back
        print(f"grouplens unavailable ({exc.__class__.__name__}); trying RecBole wheel")
        return False
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        for name in ("u.data", "u.user", "u.item", "u.occupation", "u.genre"):
            (out / name).write_bytes(zf.read(f"ml-100k/{name}"))
    return True


def from_recbole(out: Path) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "recbole==1.2.1", "--no-deps", "-q", "-d", tmp],
            check=True,
        )
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        prefix = "recbole/dataset_example/ml-100k/ml-100k"
        with zipfile.ZipFile(wheel) as zf:
            inter = zf.read(prefix + ".inter").decode("utf-8")
            users = zf.read(prefix + ".user").decode("utf-8")
            items = zf.read(prefix + ".item").decode("utf-8")

    with open(out / "u.data", "w") as fh:
        for line in inter.splitlines()[1:]:
            u, i, r, ts = line.split("\t")
            fh.write(f"{u}\t{i}\t{int(float(r))}\t{int(float(ts))}\n")

    with open(out / "u.user", "w") as fh:
        for line in users.splitlines()[1:]:
            u, age, sex, occ, zipcode = line.split("\t")
            fh.write(f"{u}|{age}|{sex}|{occ}|{zipcode}\n")

    rows = []
    for line in items.splitlines()[1:]:
        i, title, year, classes = line.split("\t")
        flags = ["1" if g in classes.split(" ") else "0" for g in GENRES]
        rows.append((int(i), f"{i}|{title} ({year})|01-Jan-{year}|||" + "|".join(flags)))
    with open(out / "u.item", "w", encoding="latin-1", errors="replace") as fh:
        for _, row in sorted(rows):
            fh.write(row + "\n")


def write_split(out: Path, test_fraction: float, seed: int) -> None:
    lines = (out / "u.data").read_text().splitlines()
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(lines))
    n_test = int(round(test_fraction * len(lines)))
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    (out / "train.tsv").write_text("".join(lines[k] + "\n" for k in train_idx))
    (out / "test.tsv").write_text("".join(lines[k] + "\n" for k in test_idx))
    print(f"split seed={seed}: {len(train_idx)} train / {len(test_idx)} test")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("data/ml-100k"))
    parser.add_argument("--test-fraction", type=float, default=0.2)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--offline-only", action="store_true", help="skip the grouplens download")
    args = parser.parse_args(argv)

    args.out.mkdir(parents=True, exist_ok=True)
    if not (args.out / "u.data").exists():
        if args.offline_only or not from_grouplens(args.out):
            from_recbole(args.out)
    write_split(args.out, args.test_fraction, args.seed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
