"""Scan, ground-truth and manifest file formats.

Scans are stored as JSON lines: one object per line with fields

    {"timestamp_s": float, "mount": {"x": .., "y": .., "yaw": ..},
     "targets": [{"r": .., "theta": .., "sigma_r": .., "sigma_theta": ..,
                  "v": .., "sigma_v": ..}, ...]}

Angles are radians, distances meters, velocities m/s; ``v``/``sigma_v`` are
optional per target.  Timestamps must strictly increase across a file.
Simulated datasets pair two consecutive lines (model scan, current scan) and
carry a truth sidecar with one JSON line per pair.
"""

from __future__ import annotations

import json
from pathlib import Path

from .geometry import Dof, MotionState, RadarTarget, Scan, SensorMount


class ScanFormatError(ValueError):
    """A scan file violates the expected schema."""


def _target_to_dict(t: RadarTarget) -> dict:
    d = {
        "r": t.range_m,
        "theta": t.azimuth_rad,
        "sigma_r": t.range_std,
        "sigma_theta": t.azimuth_std,
    }
    if t.has_doppler:
        d["v"] = t.doppler
        d["sigma_v"] = t.doppler_std
    return d


def scan_to_dict(scan: Scan) -> dict:
    return {
        "timestamp_s": scan.timestamp,
        "mount": {"x": scan.mount.x_offset, "y": scan.mount.y_offset, "yaw": scan.mount.yaw_offset},
        "targets": [_target_to_dict(t) for t in scan.targets],
    }


def scan_from_dict(obj: dict, context: str = "") -> Scan:
    try:
        mount = obj.get("mount", {})
        targets = tuple(
            RadarTarget(
                range_m=t["r"],
                azimuth_rad=t["theta"],
                range_std=t["sigma_r"],
                azimuth_std=t["sigma_theta"],
                doppler=t.get("v"),
                doppler_std=t.get("sigma_v"),
            )
            for t in obj["targets"]
        )
        return Scan(
            targets=targets,
            timestamp=obj["timestamp_s"],
            mount=SensorMount(
                x_offset=mount.get("x", 0.0),
                y_offset=mount.get("y", 0.0),
                yaw_offset=mount.get("yaw", 0.0),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScanFormatError(f"invalid scan object{context}: {exc}") from exc


def write_scans(scans, path) -> None:
    with open(path, "w") as fh:
        for scan in scans:
            fh.write(json.dumps(scan_to_dict(scan)) + "\n")


def read_scans(path) -> list[Scan]:
    """Read a JSON-lines scan file, enforcing strictly increasing timestamps."""
    scans: list[Scan] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ScanFormatError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            scan = scan_from_dict(obj, context=f" at {path}:{lineno}")
            if scans and scan.timestamp <= scans[-1].timestamp:
                raise ScanFormatError(
                    f"{path}:{lineno}: timestamps must strictly increase "
                    f"({scan.timestamp} after {scans[-1].timestamp})"
                )
            scans.append(scan)
    return scans


def read_single_scan(path) -> Scan:
    scans = read_scans(path)
    if len(scans) != 1:
        raise ScanFormatError(f"{path}: expected exactly one scan, found {len(scans)}")
    return scans[0]


def state_to_dict(state: MotionState) -> dict:
    d = {
        "dof": int(state.dof),
        "translation": [float(v) for v in state.translation],
        "rotation": state.rotation,
        "iterations": state.iterations,
        "converged": state.converged,
        "cost": None if state.cost != state.cost else state.cost,
    }
    if state.covariance is not None:
        d["covariance"] = [[float(v) for v in row] for row in state.covariance]
    return d


def state_from_dict(obj: dict) -> MotionState:
    cov = obj.get("covariance")
    return MotionState(
        dof=Dof(obj["dof"]),
        translation=obj["translation"],
        rotation=obj["rotation"],
        covariance=cov,
        iterations=obj.get("iterations", 0),
        converged=obj.get("converged", False),
        cost=obj.get("cost") if obj.get("cost") is not None else float("nan"),
    )


def write_truths(entries, path) -> None:
    """Truth sidecar: one JSON line per pair.

    Each entry is a dict with pair/config/run indices, the true transform,
    the exact correspondence map, the dataset seed and the config hash.
    """
    with open(path, "w") as fh:
        for entry in entries:
            fh.write(json.dumps(entry) + "\n")


def read_truths(path) -> list[dict]:
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries


def write_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
