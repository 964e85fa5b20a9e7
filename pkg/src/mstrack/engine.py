"""Per-frame tracking engine: multi-scale propagation and mask decoding.

One step runs: encode the frame into stride-16 and stride-8 feature maps,
propagate ID embeddings at stride 16 (2 gated layers), bilinearly upsample
the propagated IDs to stride 8 and fuse them as a gated coarse prior with an
(affine, default-zero) ID estimate from the stride-8 features, propagate at
stride 8 (1 layer), read per-label logits against the ID bank, upsample the
logits to frame resolution and take the per-pixel argmax.  Boxes are the
minimum external rectangles of the predicted labels.

Matching uses cosine-style similarity: the engine rescales every feature row
to a fixed L2 norm (match_norm * sqrt(C)) before attention, so the softmax
logits are proportional to cosine similarity and sharp enough that a cell of
the reference frame re-matches itself decisively.  Memory id rows are exact
bank rows (majority-label encoding of the stored mask), which makes the
label readout of an undisturbed frame reduce to the coarse reconstruction
implemented in `coarse_reconstruct`.

Target loss is total: if a step predicts an empty mask, the last known box
is repeated with the lost flag set and memory is left unchanged for that
frame, so propagation can re-acquire from the reference entry later.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .boxmask import Box, SegmenterSpec, mask_to_box, segment_box
from .errors import ConfigError, InitError, ShapeError
from .features import EncoderConfig, encode_frame, validate_frame
from .kernels import bilinear_resize, channel_argmax, matmul
from .propagation import (
    Gate,
    GateParams,
    IdBank,
    MemoryBank,
    MemoryEntry,
    ScaleMemory,
    encode_mask_to_ids,
    gpm_stage,
    majority_downsample,
    make_id_bank,
    read_id_logits,
    scale_rows,
)

# default fuse gate is sigmoid(0) = 0.5, so the effective coarse-prior
# coefficient at default settings is 0.5 * prior_weight
DEFAULT_PRIOR_COEFF = 0.25


@dataclass(frozen=True)
class EngineConfig:
    encoder: EncoderConfig = EncoderConfig()
    id_dim: int = 32
    max_objects: int = 4
    gpm_layers16: int = 2
    gpm_layers8: int = 1
    temperature: float = 0.1
    long_term_every: int = 0  # 0 = reference frame only
    seed: int = 7
    match_norm: float = 6.0  # feature rows rescaled to match_norm * sqrt(C)
    prior_weight: float = 0.5  # coarse-prior residual weight before the fuse gate
    gates: GateParams = GateParams()
    fuse_gate: Gate = Gate()
    id_est_weight: np.ndarray | None = None  # [C8, D] affine ID estimate, None = zeros
    id_est_bias: np.ndarray | None = None  # [D]

    def __post_init__(self):
        if self.gpm_layers16 < 1 or self.gpm_layers8 < 1:
            raise ConfigError("gpm layer counts must be >= 1")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.match_norm <= 0:
            raise ConfigError(f"match_norm must be positive, got {self.match_norm}")
        if self.max_objects < 1:
            raise ConfigError("max_objects must be >= 1")


@dataclass
class EngineState:
    bank: IdBank
    memory: MemoryBank
    k: int  # current object count
    frame_index: int
    config: EngineConfig
    ref_shape: tuple  # (H, W)
    last_boxes: dict = field(default_factory=dict)  # label -> last non-lost Box


def _rows(grid: np.ndarray) -> np.ndarray:
    h, w, c = grid.shape
    return np.ascontiguousarray(grid.reshape(h * w, c))


def _match_rows(grid: np.ndarray, cfg: EngineConfig) -> np.ndarray:
    c = grid.shape[2]
    return scale_rows(_rows(grid), cfg.match_norm * np.sqrt(c))


def _validate_mask(mask: np.ndarray, frame: np.ndarray, cfg: EngineConfig) -> np.ndarray:
    m = np.asarray(mask)
    if m.shape != frame.shape[:2]:
        raise ShapeError(f"mask shape {m.shape} != frame shape {frame.shape[:2]}")
    if not np.issubdtype(m.dtype, np.integer):
        raise ShapeError(f"mask must be integer-typed, got {m.dtype}")
    if m.max(initial=0) > cfg.max_objects:
        raise InitError(f"mask labels exceed max_objects={cfg.max_objects}")
    return m.astype(np.int32)


def _memory_entry(scale, feats_rows, mask, bank, frame_index) -> MemoryEntry:
    ids = _rows(encode_mask_to_ids(mask, bank, scale))
    return MemoryEntry(scale=scale, keys=feats_rows, id_values=ids, frame_index=frame_index)


def init_reference(frame: np.ndarray, mask: np.ndarray, cfg: EngineConfig) -> EngineState:
    """Store the reference frame and its mask as memory at both scales."""
    f = validate_frame(frame)
    m = _validate_mask(mask, f, cfg)
    k = int(m.max(initial=0))
    if k < 1:
        raise InitError("reference mask has no foreground labels")
    bank = make_id_bank(cfg.max_objects, cfg.id_dim, cfg.seed)
    pyr = encode_frame(f, cfg.encoder)
    memory = MemoryBank()
    for scale, level in ((16, pyr.level16), (8, pyr.level8)):
        rows = _match_rows(level, cfg)
        entry = _memory_entry(scale, rows, m, bank, frame_index=0)
        memory.scales[scale] = ScaleMemory(long_term=[entry], short_term=entry)
    boxes = {label: mask_to_box(m, label) for label in range(1, k + 1)}
    return EngineState(
        bank=bank,
        memory=memory,
        k=k,
        frame_index=0,
        config=cfg,
        ref_shape=f.shape[:2],
        last_boxes=boxes,
    )


def _decode_step(state: EngineState, pyr) -> tuple:
    """Run both propagation stages and decode logits; returns (mask, f16, f8)."""
    cfg = state.config
    h16, w16 = pyr.level16.shape[:2]
    h8, w8 = pyr.level8.shape[:2]
    d = state.bank.id_dim

    f16 = _match_rows(pyr.level16, cfg)
    f8 = _match_rows(pyr.level8, cfg)

    ids16 = gpm_stage(
        f16,
        np.zeros((h16 * w16, d), dtype=np.float32),
        state.bank,
        state.memory.at(16),
        cfg.gpm_layers16,
        16,
        cfg.gates,
        cfg.temperature,
    )
    # unit rows before upsampling so the prior coefficient is scale-free
    ids16 = scale_rows(ids16, 1.0).reshape(h16, w16, d)
    prior8 = _rows(bilinear_resize(ids16, h8, w8))

    # fuse: gated coarse prior + (default-zero) affine ID estimate from level8,
    # gate driven by the upsampled level16 shortcut per the duplication rule
    shortcut8 = _rows(bilinear_resize(pyr.level16, h8, w8))
    gate = cfg.fuse_gate.values(shortcut8)
    est = np.zeros((h8 * w8, d), dtype=np.float32)
    if cfg.id_est_weight is not None:
        est = matmul(_rows(pyr.level8), np.asarray(cfg.id_est_weight, dtype=np.float32))
    if cfg.id_est_bias is not None:
        est = est + np.asarray(cfg.id_est_bias, dtype=np.float32)
    fused8 = est + gate * (np.float32(cfg.prior_weight) * prior8)

    ids8 = gpm_stage(
        f8,
        fused8,
        state.bank,
        state.memory.at(8),
        cfg.gpm_layers8,
        8,
        cfg.gates,
        cfg.temperature,
    )
    logits8 = read_id_logits(ids8, state.bank, state.k).reshape(h8, w8, state.k + 1)
    logits_full = bilinear_resize(logits8, state.ref_shape[0], state.ref_shape[1])
    return channel_argmax(logits_full), f16, f8


def step(state: EngineState, frame: np.ndarray):
    """Propagate one frame; returns (mask, boxes_by_label, state).

    The state is updated in place (frame index, short-term memory, last
    boxes) and also returned.  Lost labels keep their last box, flagged.
    """
    f = validate_frame(frame)
    if f.shape[:2] != state.ref_shape:
        raise ShapeError(f"frame shape {f.shape[:2]} != reference {state.ref_shape}")
    cfg = state.config
    pyr = encode_frame(f, cfg.encoder)
    pred, f16, f8 = _decode_step(state, pyr)

    boxes = {}
    for label in range(1, state.k + 1):
        b = mask_to_box(pred, label)
        if b.lost:
            prev = state.last_boxes.get(label, b)
            boxes[label] = replace(prev, lost=True)
        else:
            boxes[label] = b
            state.last_boxes[label] = b

    state.frame_index += 1
    if pred.max(initial=0) > 0:
        # store this frame as the new short-term memory; optionally extend
        # the long-term list on the configured cadence
        for scale, rows in ((16, f16), (8, f8)):
            entry = _memory_entry(scale, rows, pred, state.bank, state.frame_index)
            mem = state.memory.at(scale)
            mem.short_term = entry
            if cfg.long_term_every > 0 and state.frame_index % cfg.long_term_every == 0:
                mem.long_term.append(entry)
    return pred, boxes, state


def coarse_reconstruct(
    mask: np.ndarray, num_labels: int | None = None, prior: float = DEFAULT_PRIOR_COEFF
) -> np.ndarray:
    """Reference mask as the decode path reproduces it from its own memory.

    Majority-downsample the mask to strides 16 and 8, one-hot both, add the
    bilinearly upsampled stride-16 plane scaled by the effective prior
    coefficient to the stride-8 plane, upsample to full resolution and take
    the per-pixel argmax.  With default engine settings, stepping on a frame
    identical to the reference decodes to exactly this mask (up to attention
    leakage between look-alike cells).
    """
    m = np.asarray(mask)
    n = int(num_labels if num_labels is not None else m.max(initial=0) + 1)
    h, w = m.shape
    l16 = majority_downsample(m, 16, n)
    l8 = majority_downsample(m, 8, n)
    eye = np.eye(n, dtype=np.float32)
    coeff = prior * bilinear_resize(eye[l16], h // 8, w // 8) + eye[l8]
    return channel_argmax(bilinear_resize(coeff, h, w))


def track_sequence(
    frames,
    init,
    cfg: EngineConfig,
    segmenter_spec: SegmenterSpec | None = None,
    gt_mask=None,
):
    """Track through a frame list; returns one (Box, mask) pair per frame.

    `init` is either a Box (converted to a mask by the configured segmenter
    pipeline on frame 0, with `gt_mask` available to the oracle kind) or an
    integer label mask.  Frame 0 echoes the initialization.
    """
    frames = list(frames)
    if not frames:
        raise InitError("track_sequence needs at least one frame")
    first = validate_frame(frames[0])
    if isinstance(init, Box):
        spec = segmenter_spec or SegmenterSpec()
        mask0 = segment_box(first, init, spec, gt_mask=gt_mask)
    else:
        mask0 = np.asarray(init)
    if mask0.max(initial=0) < 1:
        raise InitError("initialization produced an empty mask")
    state = init_reference(first, mask0, cfg)
    box0 = mask_to_box(mask0, 1)
    outputs = [(box0, mask0.astype(np.int32))]
    for frame in frames[1:]:
        pred, boxes, state = step(state, frame)
        outputs.append((boxes[1], pred))
    return outputs


def make_tracker(cfg: EngineConfig, segmenter_spec: SegmenterSpec | None = None):
    """Adapt track_sequence to the evaluation-facing callable shape."""

    def run(frames, init_box: Box, gt_mask=None):
        results = track_sequence(frames, init_box, cfg, segmenter_spec, gt_mask=gt_mask)
        return [box for box, _ in results]

    return run
