"""Run-artifact files: JSON for configs and parameters, CSV for time series.

A run directory holds config.json (the frozen configuration), log.csv with
one row per optimization iteration (iter, reward, walltime), params_best.json
with the best parameter groups seen, and optional numbered design/trajectory
snapshots. validate_run_dir checks any directory against this schema.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

LOG_HEADER = ["iter", "reward", "walltime"]


def write_config(path, config: dict) -> None:
    Path(path).write_text(json.dumps(config, indent=1, sort_keys=True) + "\n")


def read_config(path) -> dict:
    return json.loads(Path(path).read_text())


def write_log(path, rows) -> None:
    """rows: (iter, reward, walltime) triples, or (iter, reward) pairs for
    runs whose outputs must be reproducible byte-for-byte."""
    rows = list(rows)
    wide = bool(rows) and len(rows[0]) == 3
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(LOG_HEADER if wide else LOG_HEADER[:2])
        for row in rows:
            out = [int(row[0]), f"{row[1]:.10g}"]
            if wide:
                out.append(f"{row[2]:.6f}")
            w.writerow(out)


def read_log(path) -> list[tuple]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header not in (LOG_HEADER, LOG_HEADER[:2]):
            raise ValueError(f"unexpected log header {header}")
        return [tuple(int(r[0]) if i == 0 else float(c)
                      for i, c in enumerate(r[:len(header)]))
                for r in reader]


def write_params(path, groups: dict) -> None:
    """Parameter groups (name -> array) as JSON lists."""
    payload = {k: np.asarray(v).ravel().tolist() for k, v in groups.items()}
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def read_params(path) -> dict:
    return {k: np.asarray(v, dtype=float)
            for k, v in json.loads(Path(path).read_text()).items()}


def write_design(path, design) -> None:
    """Decoded design snapshot: per-particle x, m, s, r, f as JSON lists."""
    payload = {"x": design.x.tolist(), "m": design.m.tolist(),
               "s": design.s.tolist(), "r": design.r.tolist(),
               "f": design.f.tolist(), "volume": design.volume,
               "m0": design.m0, "s0": design.s0}
    Path(path).write_text(json.dumps(payload) + "\n")


def write_trajectory(path, frames) -> None:
    """Time series of particle positions: rows (frame, particle, x0, x1[, x2])."""
    frames = [np.asarray(fr) for fr in frames]
    d = frames[0].shape[1] if frames else 2
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["frame", "particle"] + [f"x{a}" for a in range(d)])
        for t, fr in enumerate(frames):
            for p in range(fr.shape[0]):
                w.writerow([t, p] + [f"{c:.10g}" for c in fr[p]])


def read_trajectory(path) -> list[np.ndarray]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        d = len(header) - 2
        frames: dict[int, list] = {}
        for row in reader:
            frames.setdefault(int(row[0]), []).append(
                [float(c) for c in row[2:2 + d]])
    return [np.asarray(frames[t]) for t in sorted(frames)]


def validate_run_dir(path) -> list[str]:
    """Schema check; returns a list of problems (empty = valid)."""
    root = Path(path)
    problems = []
    if not root.is_dir():
        return [f"{root} is not a directory"]
    config = root / "config.json"
    if not config.exists():
        problems.append("missing config.json")
    else:
        try:
            read_config(config)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            problems.append(f"config.json unreadable: {e}")
    log = root / "log.csv"
    if not log.exists():
        problems.append("missing log.csv")
    else:
        try:
            rows = read_log(log)
            its = [r[0] for r in rows]
            if its != sorted(its):
                problems.append("log.csv iterations out of order")
        except (ValueError, IndexError) as e:
            problems.append(f"log.csv malformed: {e}")
    params = root / "params_best.json"
    if params.exists():
        try:
            read_params(params)
        except (json.JSONDecodeError, ValueError) as e:
            problems.append(f"params_best.json malformed: {e}")
    for snap in sorted(root.glob("design_*.json")):
        try:
            json.loads(snap.read_text())
        except json.JSONDecodeError as e:
            problems.append(f"{snap.name} malformed: {e}")
    for snap in sorted(root.glob("trajectory_*.csv")):
        try:
            read_trajectory(snap)
        except (ValueError, IndexError) as e:
            problems.append(f"{snap.name} malformed: {e}")
    return problems
