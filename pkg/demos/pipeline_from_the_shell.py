"""
The command-line pipeline, step by step
=======================================

``hypercf`` splits a log once, then trains and evaluates against the cached
split. Here the steps run through ``hypercf.cli.main`` on a synthetic log so
the demo needs no download. In a shell it reads::

    hypercf prepare --data log.tsv --split-file runs/log.split
    hypercf train --split-file runs/log.split --model qcf --dim 8 --epochs 5 --checkpoint runs/qcf.ckpt
    hypercf evaluate --split-file runs/log.split --checkpoint runs/qcf.ckpt --report runs/qcf.csv
"""

import tempfile
from pathlib import Path

import numpy as np

from hypercf.cli import main

work = Path(tempfile.mkdtemp(prefix="hypercf-demo-"))

# 120 users, each with 10 timestamped items out of 500
rng = np.random.default_rng(1)
with open(work / "log.tsv", "w") as fh:
    for u in range(120):
        for t, i in enumerate(rng.choice(500, 10, replace=False)):
            fh.write(f"{u}\t{i}\t1\t{t}\n")

split = str(work / "log.split")
main(["prepare", "--data", str(work / "log.tsv"), "--split-file", split])
main(["--quiet", "train", "--split-file", split, "--model", "qcf", "--dim", "8", "--epochs", "5",
      "--checkpoint", str(work / "qcf.ckpt"), "--log", str(work / "qcf.jsonl")])
main(["evaluate", "--split-file", split, "--checkpoint", str(work / "qcf.ckpt"),
      "--report", str(work / "qcf.csv")])
print((work / "qcf.csv").read_text())

# a small sweep over d, printed as one CSV
main(["--quiet", "sweep", "--split-file", split, "--d-values", "2,8", "--epochs", "3", "--k-list", "10"])

# errors are one machine-readable line on stderr and a nonzero status
status = main(["evaluate", "--split-file", split, "--checkpoint", str(work / "qcf.ckpt"), "--dim", "4"])
print("exit status", status)
