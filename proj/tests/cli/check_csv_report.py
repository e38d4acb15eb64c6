#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Drives the CLI end to end and checks the CSV report it writes."""
import csv
import io
import math
import shutil
import subprocess
import sys
from pathlib import Path

COLUMNS = [
    "method", "network", "fold", "eval_participants", "n_frames", "valence_ccc", "arousal_ccc",
    "valence_pearson", "arousal_pearson", "train_seconds", "clients", "parallel_seconds",
    "inference_100_seconds", "inference_500_seconds",
]


def run(cli, *args):
    result = subprocess.run([cli, *args], capture_output=True, text=True)
    if result.returncode != 0:
        sys.exit(f"{' '.join(args)} failed ({result.returncode}): {result.stderr}")
    return result.stdout


def check_report(text, method, folds, participants):
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0].keys()) == COLUMNS, rows[0].keys()
    assert len(rows) == folds, len(rows)
    seen = []
    for i, row in enumerate(rows):
        assert row["method"] == method, row["method"]
        assert row["network"] == "BiGRU"
        assert int(row["fold"]) == i + 1
        ids = row["eval_participants"].split(";")
        seen += ids
        for key in ("valence_ccc", "arousal_ccc", "valence_pearson", "arousal_pearson"):
            value = float(row[key])
            assert math.isfinite(value) and -1.0 <= value <= 1.0, (key, value)
        assert float(row["train_seconds"]) > 0
        assert float(row["inference_500_seconds"]) >= 0
        assert int(row["n_frames"]) == 60 * len(ids)
    assert sorted(seen) == participants, seen
    return rows


def main():
    cli, work = sys.argv[1], Path(sys.argv[2])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)
    data = work / "data"
    run(cli, "gen-synthetic", "--participants", "4", "--frames", "60", "--features", "6", "--seed", "2",
        "--out", str(data))
    config = work / "run.cfg"
    config.write_text(
        f"data_dir = {data}\ncell = gru\nbidirectional = true\ninput_size = 6\nhidden_size = 4\n"
        "fc_hidden = 3\nsequence_length = 10\nlearning_rate = 0.001\nk_folds = 2\nepochs = 2\nseed = 5\n")
    participants = [f"P0{i}" for i in range(1, 5)]

    central = check_report(run(cli, "train-central", "--config", str(config), "--format", "csv"),
                           "Level1-AU", 2, participants)
    again = check_report(run(cli, "train-central", "--config", str(config), "--format", "csv"),
                         "Level1-AU", 2, participants)
    for a, b in zip(central, again):
        assert a["valence_ccc"] == b["valence_ccc"] and a["arousal_ccc"] == b["arousal_ccc"]

    federated = check_report(
        run(cli, "train-federated", "--config", str(config), "--format", "csv",
            "--set", f"checkpoint={work / 'fl.ckpt'}"),
        "Level2-FL", 2, participants)
    assert all(int(r["clients"]) == 2 for r in federated)

    out = run(cli, "evaluate", "--model", str(work / "fl.ckpt.fold1"), "--data", str(data))
    assert "valence CCC" in out and "frames       240" in out, out

    bad = subprocess.run([cli, "train-central", "--config", str(config), "--set", "k_folds=9"],
                         capture_output=True, text=True)
    assert bad.returncode != 0 and "error (" in bad.stderr, bad.stderr
    print("CLI CSV report checks passed")


if __name__ == "__main__":
    main()
