"""Tracking protocols (one-pass and multi-start), success scoring, reports.

A tracker is any callable `tracker(frames, init_box, gt_mask) -> [Box]`
returning one box per frame (the first echoes its initialization); `gt_mask`
is the ground-truth mask of the init frame when available, for oracle-style
initializers, else None.

Success curve: for 51 thresholds 0.00, 0.02, ..., 1.00, the fraction of
counted frames whose IoU is >= the threshold; the score is the mean of the
51 curve values.  Frames without visible ground truth are excluded from the
IoU pool by default (absent_policy="zero" counts them as misses).

The multi-start protocol anchors runs at visible-ground-truth frames with
index 0, s, 2s, ...; each anchor yields a forward run to the sequence end
and a backward run over the reversed prefix, runs shorter than 2 frames are
skipped, and scores are averaged weighted by run length.  The exact anchor
rule and weighting are conventions fixed by this toolkit, and reports carry
a note saying so.  With spacing >= sequence length the protocol degenerates
to exactly the one-pass result.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boxmask import Box, box_iou
from .errors import DataError, InitError
from .pnm import read_pgm, read_ppm

N_THRESHOLDS = 51
ABSENT_POLICIES = ("exclude", "zero")
MSE_NOTE = "multi-start anchor rule and length weighting are defined by this toolkit"


def thresholds() -> np.ndarray:
    return np.arange(N_THRESHOLDS, dtype=np.float64) / (N_THRESHOLDS - 1)


@dataclass(frozen=True)
class SequenceRecord:
    ident: str
    frame_paths: tuple
    gt_boxes: tuple  # per-frame Box or None (absent)
    gt_mask_paths: tuple | None = None

    def __post_init__(self):
        if len(self.gt_boxes) != len(self.frame_paths):
            raise DataError(
                f"sequence {self.ident}: {len(self.frame_paths)} frames but "
                f"{len(self.gt_boxes)} ground-truth rows"
            )
        if self.gt_mask_paths is not None and len(self.gt_mask_paths) != len(self.frame_paths):
            raise DataError(f"sequence {self.ident}: frame/mask count mismatch")
        if not any(b is not None for b in self.gt_boxes):
            raise DataError(f"sequence {self.ident}: no visible ground-truth frame")

    def __len__(self):
        return len(self.frame_paths)

    def first_visible(self) -> int:
        for i, b in enumerate(self.gt_boxes):
            if b is not None:
                return i
        raise DataError(f"sequence {self.ident}: no visible ground-truth frame")


def load_frame(path) -> np.ndarray:
    return read_ppm(path).astype(np.float32) / 255.0


def load_mask(path) -> np.ndarray:
    return read_pgm(path).astype(np.int32)


def load_sequence(seq_dir) -> SequenceRecord:
    """Read a sequence directory (frames/, optional masks/, annotations.txt)."""
    root = Path(seq_dir)
    ann = root / "annotations.txt"
    frames_dir = root / "frames"
    if not ann.is_file() or not frames_dir.is_dir():
        raise DataError(f"{root} is not a sequence directory (needs frames/ and annotations.txt)")
    frame_paths = sorted(str(p) for p in frames_dir.glob("*.ppm"))
    boxes = []
    for lineno, line in enumerate(ann.read_text(encoding="ascii").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise DataError(f"{ann}:{lineno}: expected 6 fields, got {len(parts)}")
        try:
            t, x, y, w, h, vis = (int(p) for p in parts)
        except ValueError:
            raise DataError(f"{ann}:{lineno}: non-integer field") from None
        if t != len(boxes):
            raise DataError(f"{ann}:{lineno}: frame index {t} out of order")
        boxes.append(Box(x, y, w, h) if vis else None)
    if len(frame_paths) != len(boxes):
        raise DataError(
            f"{root}: {len(frame_paths)} frames but {len(boxes)} annotation rows"
        )
    masks_dir = root / "masks"
    mask_paths = None
    if masks_dir.is_dir():
        found = sorted(str(p) for p in masks_dir.glob("*.pgm"))
        if len(found) == len(frame_paths):
            mask_paths = tuple(found)
    return SequenceRecord(
        ident=root.name,
        frame_paths=tuple(frame_paths),
        gt_boxes=tuple(boxes),
        gt_mask_paths=mask_paths,
    )


# --------------------------------------------------------------------------
# scoring


def success_score(ious) -> tuple[np.ndarray, float]:
    """Success curve over 51 thresholds and its mean.

    Empty input scores 0 by definition (no counted frames).
    """
    arr = np.asarray(list(ious), dtype=np.float64)
    if arr.size == 0:
        return np.zeros(N_THRESHOLDS, dtype=np.float64), 0.0
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"IoU values must lie in [0,1], got range [{arr.min()}, {arr.max()}]")
    curve = (arr[None, :] >= thresholds()[:, None]).mean(axis=1)
    return curve, float(curve.mean())


@dataclass(frozen=True)
class EvalResult:
    protocol: str  # "OPE" | "MSE"
    anchor_spacing: int | None
    per_sequence: tuple  # ({"id", "score", "curve", "runs"}, ...)
    aggregate: float
    note: str = ""


def _run_once(tracker, seq: SequenceRecord, indices, absent_policy: str):
    """One tracker run over seq frames at the given original indices.

    Returns (ious, n_frames).  indices[0] is the anchor (must be visible).
    """
    frames = [load_frame(seq.frame_paths[i]) for i in indices]
    init_box = seq.gt_boxes[indices[0]]
    gt_mask = None
    if seq.gt_mask_paths is not None:
        gt_mask = load_mask(seq.gt_mask_paths[indices[0]])
    boxes = tracker(frames, init_box, gt_mask)
    if len(boxes) != len(indices):
        raise DataError(
            f"tracker returned {len(boxes)} boxes for {len(indices)} frames"
        )
    ious = []
    for box, orig in zip(boxes, indices):
        gt = seq.gt_boxes[orig]
        if gt is None:
            if absent_policy == "zero":
                ious.append(0.0)
            continue
        ious.append(box_iou(box, gt))
    return ious, len(indices)


def _sequence_entry(ident, runs):
    """Combine per-run curves into the sequence entry (length-weighted)."""
    if not runs:
        return {
            "id": ident,
            "score": 0.0,
            "curve": np.zeros(N_THRESHOLDS, dtype=np.float64),
            "runs": [],
        }
    total = sum(r["length"] for r in runs)
    curve = np.zeros(N_THRESHOLDS, dtype=np.float64)
    for r in runs:
        curve += (r["length"] / total) * r.pop("_curve")
    return {"id": ident, "score": float(curve.mean()), "curve": curve, "runs": runs}


def _check_policy(absent_policy):
    if absent_policy not in ABSENT_POLICIES:
        raise ValueError(f"absent_policy must be one of {ABSENT_POLICIES}")


def ope(tracker, seq: SequenceRecord, absent_policy: str = "exclude") -> EvalResult:
    """One-pass evaluation: a single run from the first visible frame."""
    _check_policy(absent_policy)
    start = seq.first_visible()
    indices = list(range(start, len(seq)))
    try:
        ious, length = _run_once(tracker, seq, indices, absent_policy)
        curve, score = success_score(ious)
        runs = [
            {
                "anchor": start,
                "direction": "forward",
                "length": length,
                "score": score,
                "_curve": curve,
            }
        ]
    except InitError:
        runs = []
    entry = _sequence_entry(seq.ident, runs)
    return EvalResult(
        protocol="OPE",
        anchor_spacing=None,
        per_sequence=(entry,),
        aggregate=entry["score"],
    )


def mse(
    tracker, seq: SequenceRecord, anchor_spacing: int, absent_policy: str = "exclude"
) -> EvalResult:
    """Multi-start evaluation with anchors every `anchor_spacing` frames."""
    _check_policy(absent_policy)
    if anchor_spacing < 1:
        raise ValueError(f"anchor_spacing must be >= 1, got {anchor_spacing}")
    runs = []
    for anchor in range(0, len(seq), anchor_spacing):
        if seq.gt_boxes[anchor] is None:
            continue  # anchors must start from visible ground truth
        for direction, indices in (
            ("forward", list(range(anchor, len(seq)))),
            ("backward", list(range(anchor, -1, -1))),
        ):
            if len(indices) < 2:
                continue
            try:
                ious, length = _run_once(tracker, seq, indices, absent_policy)
                curve, score = success_score(ious)
            except InitError:
                continue
            runs.append(
                {
                    "anchor": anchor,
                    "direction": direction,
                    "length": length,
                    "score": score,
                    "_curve": curve,
                }
            )
    entry = _sequence_entry(seq.ident, runs)
    return EvalResult(
        protocol="MSE",
        anchor_spacing=anchor_spacing,
        per_sequence=(entry,),
        aggregate=entry["score"],
        note=MSE_NOTE,
    )


def evaluate_suite(
    tracker,
    sequences,
    protocol: str = "ope",
    anchor_spacing: int = 15,
    absent_policy: str = "exclude",
    threads: int = 1,
) -> EvalResult:
    """Run a protocol over many sequences; aggregation in canonical order.

    OPE aggregates as the arithmetic mean of per-sequence scores; MSE as the
    run-length-weighted mean over every run of every sequence.  Sequences
    are processed in sorted-id order regardless of thread count.
    """
    proto = protocol.lower()
    if proto not in ("ope", "mse"):
        raise ValueError(f"protocol must be ope or mse, got {protocol!r}")
    seqs = sorted(sequences, key=lambda s: s.ident)

    def one(seq):
        if proto == "ope":
            return ope(tracker, seq, absent_policy)
        return mse(tracker, seq, anchor_spacing, absent_policy)

    if threads > 1 and len(seqs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, seqs))
    else:
        results = [one(s) for s in seqs]

    entries = tuple(r.per_sequence[0] for r in results)
    if proto == "ope":
        aggregate = float(np.mean([e["score"] for e in entries])) if entries else 0.0
        return EvalResult("OPE", None, entries, aggregate)
    all_runs = [r for e in entries for r in e["runs"]]
    total = sum(r["length"] for r in all_runs)
    aggregate = (
        float(sum(r["score"] * r["length"] for r in all_runs) / total) if total else 0.0
    )
    return EvalResult("MSE", anchor_spacing, entries, aggregate, note=MSE_NOTE)


# --------------------------------------------------------------------------
# reports


def _r6(x: float) -> float:
    # 6-decimal fixed formatting, stable across write -> read -> write
    return float(f"{float(x):.6f}")


def write_report(result: EvalResult, path) -> None:
    doc = {
        "protocol": result.protocol,
        "anchor_spacing": result.anchor_spacing,
        "note": result.note,
        "aggregate": _r6(result.aggregate),
        "per_sequence": [
            {
                "id": e["id"],
                "score": _r6(e["score"]),
                "curve": [_r6(v) for v in e["curve"]],
                "runs": [
                    {
                        "anchor": r["anchor"],
                        "direction": r["direction"],
                        "length": r["length"],
                        "score": _r6(r["score"]),
                    }
                    for r in e["runs"]
                ],
            }
            for e in result.per_sequence
        ],
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="ascii") as f:
        f.write(text)


def read_report(path) -> EvalResult:
    with open(path, "r", encoding="ascii") as f:
        doc = json.load(f)
    entries = tuple(
        {
            "id": e["id"],
            "score": e["score"],
            "curve": np.asarray(e["curve"], dtype=np.float64),
            "runs": e["runs"],
        }
        for e in doc["per_sequence"]
    )
    return EvalResult(
        protocol=doc["protocol"],
        anchor_spacing=doc["anchor_spacing"],
        per_sequence=entries,
        aggregate=doc["aggregate"],
        note=doc.get("note", ""),
    )
