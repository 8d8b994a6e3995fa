"""Weak-supervision tooling around detector outputs.

Covers the training-side plumbing that turns raw character detections and
scribble annotations into supervision: pseudo-label filtering, the
positive/negative/ignored proposal sampling policy, the character-class
taxonomy modes, and reference implementations of the loss terms (offset
regression + classification for characters, hard-negative-mined BCE for
the text-line map). Losses here are verification functions: no gradient
descent, no network.
"""

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    AxisAlignedBox,
    BinaryMask,
    Polygon,
    Polyline,
    RasterGrid,
    box_polygon_intersects,
    box_polyline_intersects,
)

#: Valid character classes: background, foreground (class-agnostic text),
#: unknown glyph, ten digits and twenty-six lowercase letters.
DIGITS = tuple(str(d) for d in range(10))
LETTERS = tuple(chr(c) for c in range(ord("a"), ord("z") + 1))
CHAR_CLASSES = frozenset({"Background", "Foreground", "Unknown", *DIGITS, *LETTERS})

PROB_EPSILON = 1e-7
ZERO_POSITIVE_FALLBACK = 100


class ClassMode(enum.Enum):
    """Classification granularity for the character branch.

    BF: binary background/foreground everywhere.
    ALL: full 38-way classes everywhere.
    ALL_BF: full classes on synthetic data, background/foreground on real
    data (real scribbles carry no per-character identities).
    """

    BF = "BF"
    ALL = "All"
    ALL_BF = "AllBF"


def class_labels(mode: ClassMode) -> tuple[str, ...]:
    """Class vocabulary (index order) for a mode's logits."""
    if mode is ClassMode.BF:
        return ("Background", "Foreground")
    return ("Background", *DIGITS, *LETTERS, "Unknown")


def class_index(char_class: str, mode: ClassMode) -> int:
    labels = class_labels(mode)
    try:
        return labels.index(char_class)
    except ValueError:
        raise ValueError(f"class {char_class!r} is not in the {mode.value} "
                         f"vocabulary; map it first") from None


def map_class(char_class: str, mode: ClassMode, domain: str) -> str:
    """Project a class into a mode's vocabulary for a data domain.

    BF collapses everything non-background to Foreground; ALL is the
    identity; ALL_BF is the identity on synthetic data and the BF collapse
    on real data.
    """
    if char_class not in CHAR_CLASSES:
        raise ValueError(f"unknown character class {char_class!r}")
    if domain not in ("synthetic", "real"):
        raise ValueError(f"domain must be 'synthetic' or 'real', got {domain!r}")
    if mode is ClassMode.ALL:
        return char_class
    if mode is ClassMode.ALL_BF and domain == "synthetic":
        return char_class
    return "Background" if char_class == "Background" else "Foreground"


@dataclass
class CharBox:
    """A detected or pseudo-labeled character: box, confidence, class."""

    box: AxisAlignedBox
    score: float
    char_class: str

    def __post_init__(self):
        self.score = float(self.score)
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.char_class not in CHAR_CLASSES:
            raise ValueError(f"unknown character class {self.char_class!r}")


@dataclass
class PseudoLabelSet:
    image_id: str
    labels: list[CharBox]


@dataclass(frozen=True)
class Proposal:
    box: AxisAlignedBox


@dataclass(frozen=True)
class SampleDecision:
    """Outcome of proposal sampling: positive (with the matched label
    index), negative, or ignored (potential positive near a scribble or a
    difficult region)."""

    kind: str
    matched_label: int | None = None

    def __post_init__(self):
        if self.kind not in ("positive", "negative", "ignored"):
            raise ValueError(f"bad decision kind {self.kind!r}")
        if (self.kind == "positive") != (self.matched_label is not None):
            raise ValueError("matched_label is set iff the decision is positive")


@dataclass(frozen=True)
class LossBreakdown:
    """Total training loss: externally supplied proposal-network term plus
    the character and line terms computed here."""

    l_char: float
    l_line: float
    l_rpn: float | None = None

    @property
    def total(self) -> float:
        return (self.l_rpn or 0.0) + self.l_char + self.l_line


# ---------------------------------------------------------------------------
# pseudo labels

def generate_pseudo_labels(detections, scribbles, t_pseudo: float = 0.9,
                           image_id: str = "") -> PseudoLabelSet:
    """Filter raw detections into character pseudo labels.

    Keeps a detection iff (1) its score is >= t_pseudo, (2) its class is a
    concrete character class (not Unknown and not Background), and (3) its
    box intersects at least one scribble line. Input order is preserved.
    """
    if not 0.0 <= t_pseudo <= 1.0:
        raise ValueError("t_pseudo must lie in [0, 1]")
    kept = [
        d for d in detections
        if d.score >= t_pseudo
        and d.char_class not in ("Unknown", "Background")
        and any(box_polyline_intersects(d.box, line) for line in scribbles)
    ]
    return PseudoLabelSet(image_id=image_id, labels=kept)


# ---------------------------------------------------------------------------
# proposal sampling

def box_iou(a: AxisAlignedBox, b: AxisAlignedBox) -> float:
    """IoU of two axis-aligned boxes by closed-form rectangle arithmetic."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def sample_proposals(proposals, labels: PseudoLabelSet, scribbles,
                     difficult_regions, match_iou: float = 0.5) -> list[SampleDecision]:
    """Assign each proposal a training role.

    Positive iff its best IoU with any pseudo label reaches match_iou (the
    best label's index is recorded; ties go to the lowest index). Otherwise
    negative only when it also overlaps no scribble line and no difficult
    region; anything else is a potential positive and is ignored.
    """
    if not 0.0 < match_iou < 1.0:
        raise ValueError("match_iou must lie in (0, 1)")
    decisions = []
    for prop in proposals:
        best_idx, best_iou = None, 0.0
        for idx, label in enumerate(labels.labels):
            iou = box_iou(prop.box, label.box)
            if iou > best_iou:
                best_idx, best_iou = idx, iou
        if best_idx is not None and best_iou >= match_iou:
            decisions.append(SampleDecision("positive", best_idx))
            continue
        near_text = (
            any(box_polyline_intersects(prop.box, line) for line in scribbles)
            or any(box_polygon_intersects(prop.box, region)
                   for region in difficult_regions)
        )
        decisions.append(SampleDecision("ignored" if near_text else "negative"))
    return decisions


# ---------------------------------------------------------------------------
# character loss

def box_offsets(proposal: AxisAlignedBox, target: AxisAlignedBox) -> tuple:
    """(dx, dy, dw, dh) taking the proposal onto the target: center deltas
    normalized by the proposal size, log size ratios."""
    pcx, pcy = proposal.center
    tcx, tcy = target.center
    return (
        (tcx - pcx) / proposal.width,
        (tcy - pcy) / proposal.height,
        math.log(target.width / proposal.width),
        math.log(target.height / proposal.height),
    )


def apply_box_offsets(proposal: AxisAlignedBox, offsets) -> AxisAlignedBox:
    """Inverse of box_offsets: decode (dx, dy, dw, dh) against a proposal."""
    dx, dy, dw, dh = (float(v) for v in offsets)
    cx = proposal.center[0] + dx * proposal.width
    cy = proposal.center[1] + dy * proposal.height
    w = proposal.width * math.exp(dw)
    h = proposal.height * math.exp(dh)
    return AxisAlignedBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def _smooth_l1(err: np.ndarray) -> np.ndarray:
    a = np.abs(err)
    return np.where(a < 1.0, 0.5 * a * a, a - 0.5)


def char_loss(pred_offsets, target_offsets, pred_class_logits, target_classes,
              mode: ClassMode) -> tuple[float, float]:
    """(l_regress, l_classify) for one batch of sampled proposals.

    l_regress: smooth-L1 between predicted and target offsets, summed over
    the 4 coordinates of each positive sample and averaged over positives.
    l_classify: cross-entropy between predicted logits and target classes,
    averaged over all sampled proposals.
    """
    pred = np.asarray(pred_offsets, dtype=np.float64).reshape(-1, 4)
    tgt = np.asarray(target_offsets, dtype=np.float64).reshape(-1, 4)
    if pred.shape != tgt.shape:
        raise ValueError(f"offset shape mismatch: {pred.shape} vs {tgt.shape}")
    l_regress = float(np.mean(np.sum(_smooth_l1(pred - tgt), axis=1))) \
        if len(pred) else 0.0

    logits = np.asarray(pred_class_logits, dtype=np.float64)
    targets = list(target_classes)
    if logits.size == 0 and not targets:
        return l_regress, 0.0
    logits = logits.reshape(len(targets), -1)
    n_classes = len(class_labels(mode))
    if logits.shape[1] != n_classes:
        raise ValueError(f"logits have {logits.shape[1]} classes, "
                         f"{mode.value} mode needs {n_classes}")
    idx = np.array([class_index(c, mode) for c in targets])
    log_norm = np.log(np.sum(np.exp(logits - logits.max(axis=1, keepdims=True)),
                             axis=1)) + logits.max(axis=1)
    l_classify = float(np.mean(log_norm - logits[np.arange(len(targets)), idx]))
    return l_regress, l_classify


# ---------------------------------------------------------------------------
# text-line map loss

def ohem_sample(pred: RasterGrid, target: BinaryMask, ignore: BinaryMask,
                neg_ratio: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Flat pixel indices of (positives, mined hard negatives).

    Positives are every target pixel outside the ignore mask. Negatives are
    the neg_ratio * len(positives) eligible pixels with the largest
    predicted values (the hardest to suppress), ties broken toward the
    lowest flat index; when there are no positives at all, the 100 hardest
    negatives are used instead.
    """
    if (pred.height, pred.width) != (target.height, target.width) or \
            (pred.height, pred.width) != (ignore.height, ignore.width):
        raise ValueError("pred/target/ignore dimensions differ")
    if neg_ratio < 0:
        raise ValueError("neg_ratio must be non-negative")
    eligible = ~ignore.bits
    pos_idx = np.flatnonzero(target.bits & eligible)
    neg_idx = np.flatnonzero(~target.bits & eligible)
    budget = neg_ratio * len(pos_idx) if len(pos_idx) else ZERO_POSITIVE_FALLBACK
    k = min(budget, len(neg_idx))
    if k:
        values = pred.values.ravel()[neg_idx]
        order = np.lexsort((neg_idx, -values))
        neg_idx = neg_idx[order[:k]]
    else:
        neg_idx = neg_idx[:0]
    return pos_idx, np.sort(neg_idx)


def bce_on_samples(pred: RasterGrid, pos_idx, neg_idx) -> float:
    """Binary cross-entropy over an explicit sample set of flat indices,
    with predictions clamped to [eps, 1 - eps]. Exactly rounded summation
    keeps analytic test values (like ln 2) reproducible."""
    x = np.clip(pred.values.ravel(), PROB_EPSILON, 1.0 - PROB_EPSILON)
    pos_idx = np.asarray(pos_idx, dtype=np.intp)
    neg_idx = np.asarray(neg_idx, dtype=np.intp)
    n = len(pos_idx) + len(neg_idx)
    if n == 0:
        return 0.0
    total = math.fsum(np.log(x[pos_idx])) + math.fsum(np.log(1.0 - x[neg_idx]))
    return -total / n


def line_loss_ohem(pred: RasterGrid, target: BinaryMask, ignore: BinaryMask,
                   neg_ratio: int = 3) -> float:
    """Hard-negative-mined BCE between a predicted text-line map and the
    scribble target, skipping ignore pixels; 1:neg_ratio positive:negative
    sampling."""
    pos_idx, neg_idx = ohem_sample(pred, target, ignore, neg_ratio)
    return bce_on_samples(pred, pos_idx, neg_idx)


# ---------------------------------------------------------------------------
# detections file format

@dataclass
class DetectionsFile:
    """Per-image character detections plus the path of the text-line map
    that accompanies them (None for derived files such as pseudo labels)."""

    image_id: str
    chars: list[CharBox]
    textline_map: str | None = None


def _char_to_dict(c: CharBox) -> dict:
    return {
        "box": [c.box.x1, c.box.y1, c.box.x2, c.box.y2],
        "score": c.score,
        "class": c.char_class,
    }


def _char_from_dict(d: dict) -> CharBox:
    x1, y1, x2, y2 = (float(v) for v in d["box"])
    return CharBox(AxisAlignedBox(x1, y1, x2, y2), float(d["score"]), d["class"])


def dumps_detections(df: DetectionsFile) -> str:
    data = {"image_id": df.image_id, "chars": [_char_to_dict(c) for c in df.chars]}
    if df.textline_map is not None:
        data["textline_map"] = df.textline_map
    return json.dumps(data, ensure_ascii=False, separators=(",", ":")) + "\n"


def loads_detections(text: str) -> DetectionsFile:
    def reject(name):
        raise ValueError(f"non-finite JSON literal {name!r} is not allowed")
    data = json.loads(text, parse_constant=reject)
    return DetectionsFile(
        image_id=str(data["image_id"]),
        chars=[_char_from_dict(d) for d in data["chars"]],
        textline_map=data.get("textline_map"),
    )


def write_detections(path, df: DetectionsFile) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(dumps_detections(df))


def read_detections(path) -> DetectionsFile:
    with open(path, encoding="utf-8") as f:
        return loads_detections(f.read())
