#!/usr/bin/env python3
"""Write MovieLens-100k as headerless TSV (user, item, rating, timestamp).

The ratings ship inside the recbole wheel; it is downloaded with pip when no
wheel path is given.
"""
import argparse
import glob
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def find_wheel(arg, tmp):
    if arg:
        return Path(arg)
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--quiet", "-d", tmp, "recbole==1.2.1"],
        check=True,
    )
    return Path(glob.glob(f"{tmp}/recbole-*.whl")[0])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--wheel", help="local recbole wheel")
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "ml-100k.tsv"))
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        wheel = find_wheel(args.wheel, tmp)
        with zipfile.ZipFile(wheel) as z:
            lines = z.read(MEMBER).decode().splitlines()
    rows = [l for l in lines[1:] if l.strip()]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n")
    print(f"wrote {len(rows)} interactions to {out}")


if __name__ == "__main__":
    main()
