#!/usr/bin/env python3
"""Fetch MovieLens-100K ratings into ``data/ml-100k/u.data``.

Tries the GroupLens zip first. When that host is unreachable, falls back to
the copy bundled in the ``recbole`` wheel on PyPI (``ml-100k.inter``, the same
100000 rows with a one-line header), which is rewritten in ``u.data`` layout.
"""
from __future__ import annotations

import argparse
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WHEEL_MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def _from_grouplens(timeout: float) -> bytes:
    with urllib.request.urlopen(GROUPLENS_URL, timeout=timeout) as resp:
        payload = resp.read()
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        return zf.read("ml-100k/u.data")


def _from_recbole_wheel() -> bytes:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "--quiet",
             "--dest", tmp, "recbole==1.2.1"],
            check=True,
        )
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            text = zf.read(WHEEL_MEMBER).decode("utf-8")
    lines = text.splitlines()[1:]  # drop "user_id:token\titem_id:token..." header
    return ("\n".join(lines) + "\n").encode("utf-8")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "ml-100k" / "u.data"))
    parser.add_argument("--timeout", type=float, default=10.0)
    args = parser.parse_args(argv)

    out = Path(args.out)
    if out.exists():
        print(f"{out} already present")
        return 0
    try:
        raw = _from_grouplens(args.timeout)
        source = GROUPLENS_URL
    except Exception as exc:  # noqa: BLE001 - any network failure falls through
        print(f"GroupLens download failed ({exc}); using recbole wheel", file=sys.stderr)
        raw = _from_recbole_wheel()
        source = "recbole wheel"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(raw)
    n = raw.count(b"\n")
    print(f"wrote {n} rows to {out} (from {source})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
