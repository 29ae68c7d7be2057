"""Frame/label pairing and the on-disk dataset format.

A dataset is a directory: ``labels.csv`` (header ``ID,Angle``), one
``images/%06d.ppm`` per row (binary P6), optional ``depth/%06d.pgm`` (P5,
16-bit millimeters) and ``metadata.json``.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_HEADER = "ID,Angle"


def bin_index(angle: float, n_bins: int) -> int:
    """Bin of a label under uniform bins over [-1, 1].

    Negative labels are binned as the mirror of their absolute value, so a
    label and its negation always land in mirrored bins (reflection symmetry
    holds even for labels sitting exactly on a bin edge).
    """
    if angle < 0:
        return n_bins - 1 - bin_index(-angle, n_bins)
    return min(int((angle + 1.0) / 2.0 * n_bins), n_bins - 1)


@dataclass
class Sample:
    id: int
    rgb: np.ndarray                 # (H, W, 3) uint8
    angle: float                    # steer label in [-1, 1]
    timestamp: float = 0.0
    depth: np.ndarray | None = None

    def __post_init__(self):
        if abs(self.angle) > 1.0:
            raise ValueError(f"|angle| must be <= 1, got {self.angle}")


@dataclass
class Dataset:
    samples: list[Sample] = field(default_factory=list)
    root: Path | None = None
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def angles(self) -> np.ndarray:
        return np.array([s.angle for s in self.samples], dtype=np.float64)


def sync_pairs(frames, labels, slop: float) -> list[tuple]:
    """Greedy nearest-timestamp matching of two sorted (t, payload) streams.

    Each frame grabs the unused label nearest in time; the pair is emitted only
    when |t_frame - t_label| <= slop. Labels (or frames) left over are dropped.
    """
    if slop <= 0:
        raise ValueError(f"slop must be > 0, got {slop}")
    frame_ts = [t for t, _ in frames]
    label_ts = [t for t, _ in labels]
    for name, ts in (("frame", frame_ts), ("label", label_ts)):
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"{name} stream not monotone")
    used = [False] * len(labels)
    pairs = []
    for t, payload in frames:
        pos = bisect.bisect_left(label_ts, t)
        best, best_dt = -1, slop
        for j in _outward(pos, len(labels)):
            dt = abs(label_ts[j] - t)
            if best >= 0 and label_ts[j] - t > best_dt:
                break
            if not used[j] and dt <= best_dt and (best < 0 or dt < best_dt):
                best, best_dt = j, dt
        if best >= 0:
            used[best] = True
            pairs.append((payload, labels[best][1]))
    return pairs


def _outward(pos: int, n: int):
    """Indices pos-1, pos, pos+1, ... interleaved outward, nearest first."""
    lo, hi = pos - 1, pos
    while lo >= 0 or hi < n:
        if lo >= 0:
            yield lo
            lo -= 1
        if hi < n:
            yield hi
            hi += 1


def write_ppm(path: Path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path: Path) -> np.ndarray:
    magic, w, h, maxval, data = _read_pnm(path)
    if magic != b"P6" or maxval != 255:
        raise ValueError(f"{path}: expected 8-bit P6")
    return np.frombuffer(data, dtype=np.uint8, count=w * h * 3).reshape(h, w, 3).copy()


def write_pgm16(path: Path, depth_m: np.ndarray) -> None:
    mm = np.clip(np.round(np.asarray(depth_m) * 1000.0), 0, 65535).astype(">u2")
    h, w = mm.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(mm.tobytes())


def read_pgm16(path: Path) -> np.ndarray:
    magic, w, h, maxval, data = _read_pnm(path)
    if magic != b"P5" or maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit P5")
    mm = np.frombuffer(data, dtype=">u2", count=w * h).reshape(h, w)
    return mm.astype(np.float64) / 1000.0


def _read_pnm(path: Path):
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, i = [], 0
    while len(tokens) < 4:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j : j + 1].isspace():
            j += 1
        tokens.append(raw[i:j])
        i = j
    i += 1  # single whitespace after maxval
    return tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3]), raw[i:]


def write_dataset(pairs, root, metadata: dict | None = None) -> Dataset:
    """Persist (CameraFrame, angle) pairs under root and return the Dataset."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    samples = []
    rows = [CSV_HEADER]
    have_depth = any(f.depth is not None for f, _ in pairs)
    if have_depth:
        (root / "depth").mkdir(exist_ok=True)
    for i, (frame, angle) in enumerate(pairs):
        write_ppm(root / "images" / f"{i:06d}.ppm", frame.rgb)
        if frame.depth is not None:
            write_pgm16(root / "depth" / f"{i:06d}.pgm", frame.depth)
        rows.append(f"{i},{angle:.6f}")
        samples.append(Sample(id=i, rgb=frame.rgb, angle=round(angle, 6),
                              timestamp=frame.timestamp, depth=frame.depth))
    (root / "labels.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    meta = dict(metadata or {})
    if meta:
        (root / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n",
                                            encoding="utf-8")
    return Dataset(samples=samples, root=root, metadata=meta)


def read_dataset(root) -> Dataset:
    root = Path(root)
    csv_path = root / "labels.csv"
    if not csv_path.exists():
        raise ValueError(f"{root}: no labels.csv")
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{csv_path}: bad header, expected {CSV_HEADER!r}")
    samples = []
    seen = set()
    for rowno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValueError(f"{csv_path} row {rowno}: expected 'ID,Angle'")
        try:
            sid = int(parts[0])
            angle = float(parts[1])
        except ValueError:
            raise ValueError(f"{csv_path} row {rowno}: non-numeric field") from None
        img_path = root / "images" / f"{sid:06d}.ppm"
        if not img_path.exists():
            raise ValueError(f"missing image for ID {sid}")
        depth_path = root / "depth" / f"{sid:06d}.pgm"
        depth = read_pgm16(depth_path) if depth_path.exists() else None
        samples.append(Sample(id=sid, rgb=read_ppm(img_path), angle=angle,
                              depth=depth))
        seen.add(sid)
    for img in sorted((root / "images").glob("*.ppm")):
        if int(img.stem) not in seen:
            raise ValueError(f"image {img.name} has no CSV row")
    meta_path = root / "metadata.json"
    metadata = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return Dataset(samples=samples, root=root, metadata=metadata)


def label_histogram(dataset: Dataset, n_bins: int) -> np.ndarray:
    """Counts per uniform-width bin over [-1, 1]; last bin right-inclusive."""
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    counts = np.zeros(n_bins, dtype=np.int64)
    for s in dataset.samples:
        counts[bin_index(s.angle, n_bins)] += 1
    return counts
