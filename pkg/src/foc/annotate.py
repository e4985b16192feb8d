"""Annotation criteria checks and the two-reviewer acceptance workflow."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DuplicateApprover,
    IllegalTransition,
    ImageIdMismatch,
    ParseError,
    SameReviewer,
)
from .imaging import BoundingBox, Polygon, rasterize_polygon

MIN_VERTICES = 6
REQUIRED_APPROVALS = 2


class ViolationKind(enum.IntEnum):
    MinVertices = 0
    OutsideBox = 1
    OffCenter = 2
    OutsideLungRegion = 3
    CountMismatch = 4


@dataclass(frozen=True)
class AnnotatedObject:
    polygon: Polygon
    box: BoundingBox


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    reviewer_id: str
    objects: Tuple[AnnotatedObject, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class CriteriaViolation:
    kind: ViolationKind
    object_index: Optional[int] = None
    detail: str = ""

    def sort_key(self):
        return (int(self.kind), -1 if self.object_index is None else self.object_index)

    def to_json(self) -> dict:
        return {"kind": self.kind.name, "object_index": self.object_index, "detail": self.detail}


def _outside_box(poly: Polygon, box: BoundingBox) -> bool:
    return any(x < box.x or x > box.x2 or y < box.y or y > box.y2 for x, y in poly.vertices)


def _off_center(poly: Polygon, box: BoundingBox) -> bool:
    cx, cy = poly.centroid()
    return not (box.x + box.w / 4 <= cx <= box.x + 3 * box.w / 4
                and box.y + box.h / 4 <= cy <= box.y + 3 * box.h / 4)


def validate_record(a: AnnotationRecord, b: Optional[AnnotationRecord] = None,
                    lung_mask=None) -> List[CriteriaViolation]:
    """Check one reviewer's record against the annotation criteria.

    The lung-region check runs only when ``lung_mask`` is given. The count
    check runs only against a second reviewer's record ``b``. An empty result
    means the record complies.
    """
    if b is not None:
        if b.image_id != a.image_id:
            raise ImageIdMismatch(f"{a.image_id!r} vs {b.image_id!r}")
        if b.reviewer_id == a.reviewer_id:
            raise SameReviewer(f"both records come from {a.reviewer_id!r}")

    found: List[CriteriaViolation] = []
    lung = None if lung_mask is None else np.asarray(lung_mask) > 0
    for k, obj in enumerate(a.objects):
        poly, box = obj.polygon, obj.box
        if len(poly) < MIN_VERTICES:
            found.append(CriteriaViolation(ViolationKind.MinVertices, k,
                                           f"{len(poly)} vertices, need at least {MIN_VERTICES}"))
        if _outside_box(poly, box):
            found.append(CriteriaViolation(ViolationKind.OutsideBox, k,
                                           f"vertex leaves box {box.as_list()}"))
        if _off_center(poly, box):
            cx, cy = poly.centroid()
            found.append(CriteriaViolation(ViolationKind.OffCenter, k,
                                           f"centroid ({cx:.1f}, {cy:.1f}) outside central window"))
        if lung is not None:
            h, w = lung.shape
            footprint = rasterize_polygon(poly, w, h) > 0
            if not (footprint & lung).any():
                found.append(CriteriaViolation(ViolationKind.OutsideLungRegion, k,
                                               "no overlap with the lung mask"))
    if b is not None and len(a.objects) != len(b.objects):
        found.append(CriteriaViolation(
            ViolationKind.CountMismatch, None,
            f"{a.reviewer_id}: {len(a.objects)} objects, {b.reviewer_id}: {len(b.objects)}"))
    return sorted(found, key=CriteriaViolation.sort_key)


def shape_review_notes(record: AnnotationRecord) -> List[str]:
    # object shape is a judgement call; surface it for a human, never auto-fail
    return [f"object {k}: confirm sickle, round or earbud-like shape"
            for k in range(len(record.objects))]


# -- review workflow --------------------------------------------------------

class Status(enum.Enum):
    Queued = "Queued"
    Annotated = "Annotated"
    UnderReview = "UnderReview"
    Accepted = "Accepted"


@dataclass(frozen=True)
class Submit:
    objects: Tuple[AnnotatedObject, ...] = ()


@dataclass(frozen=True)
class Approve:
    reviewer_id: str


@dataclass(frozen=True)
class Reject:
    pass


@dataclass(frozen=True)
class ReviewState:
    status: Status = Status.Queued
    approvers: FrozenSet[str] = field(default_factory=frozenset)
    objects: Tuple[AnnotatedObject, ...] = ()

    def __post_init__(self):
        if self.status is Status.Accepted and len(self.approvers) < REQUIRED_APPROVALS:
            raise ValueError("Accepted needs at least two distinct approvers")

    @property
    def approvals(self) -> int:
        return len(self.approvers)


def review_transition(state: ReviewState, event) -> ReviewState:
    """Advance the review state machine by one event.

    Submitting moves a queued image through Annotated straight to UnderReview.
    A rejection clears the annotations and re-queues the image.
    """
    if state.status is Status.Queued and isinstance(event, Submit):
        annotated = ReviewState(Status.Annotated, frozenset(), tuple(event.objects))
        return replace(annotated, status=Status.UnderReview)
    if state.status is Status.UnderReview and isinstance(event, Approve):
        if event.reviewer_id in state.approvers:
            raise DuplicateApprover(f"{event.reviewer_id!r} already approved")
        approvers = state.approvers | {event.reviewer_id}
        status = Status.Accepted if len(approvers) >= REQUIRED_APPROVALS else Status.UnderReview
        return replace(state, status=status, approvers=approvers)
    if state.status is Status.UnderReview and isinstance(event, Reject):
        return ReviewState(Status.Queued, frozenset(), ())
    raise IllegalTransition(f"{type(event).__name__} not allowed in state {state.status.value}")


# -- files ------------------------------------------------------------------

def parse_annotations(records) -> List[AnnotationRecord]:
    if not isinstance(records, list):
        raise ParseError("annotation file must hold a JSON array")
    out = []
    for i, rec in enumerate(records):
        try:
            objects = []
            for obj in rec["objects"]:
                poly = Polygon(tuple((float(x), float(y)) for x, y in obj["polygon"]))
                objects.append(AnnotatedObject(poly, BoundingBox(*obj["box"])))
            out.append(AnnotationRecord(str(rec["image_id"]), str(rec["reviewer_id"]), tuple(objects)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"annotation record {i}: {exc}") from exc
    return out


def load_annotations(path) -> List[AnnotationRecord]:
    try:
        records = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_annotations(records)


def validate_files(a_records: Sequence[AnnotationRecord],
                   b_records: Sequence[AnnotationRecord] = (), lung_mask=None) -> list:
    """Validate reviewer A's records, pairing each with B's record for the same image."""
    partner = {r.image_id: r for r in b_records}
    results = []
    for rec in sorted(a_records, key=lambda r: r.image_id):
        violations = validate_record(rec, partner.get(rec.image_id), lung_mask)
        results.append({"image_id": rec.image_id,
                        "reviewer_id": rec.reviewer_id,
                        "compliant": not violations,
                        "violations": [v.to_json() for v in violations],
                        "shape_review": shape_review_notes(rec)})
    return results
