"""Training-dataset refinement: category-consistency filtering of detector
crops and color-variant class separation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

from .errors import ContractViolation
from .taxonomy import CategoryHierarchy


@dataclass(frozen=True)
class ClassLabel:
    """Same-item class assignment for one training image."""

    class_id: int
    source_item_id: Hashable
    color_tag: str | None = None


def category_consistency_filter(
    crops: Sequence[tuple[Hashable, str, str]], hierarchy: CategoryHierarchy
) -> list[Hashable]:
    """Keep crop ids whose classifier sub-category rolls up to the detector's
    super-category; order preserved.

    Each crop is (crop_id, detector_super, classifier_sub). Unknown labels
    are a contract violation, not data.
    """
    kept: list[Hashable] = []
    for crop_id, detector_super, classifier_sub in crops:
        if not hierarchy.is_super(detector_super):
            raise ContractViolation(f"unknown super-category {detector_super!r} for {crop_id!r}")
        if hierarchy.super_of(classifier_sub) == detector_super:
            kept.append(crop_id)
    return kept


def color_separate(
    items: Sequence[tuple[Hashable, str | None]]
) -> list[ClassLabel]:
    """Assign one same-item class per distinct (item_id, color_tag) pair.

    Input rows are images: (source item id, color tag of that image). Images
    of the same item that differ in color become different classes, so a
    retrieval model may use color as a shortcut. A missing color tag keeps
    the image in the item's base class instead of dropping it (only
    false-positive pairs hurt precision; recall is preserved).

    Returns one ClassLabel per input row, in input order. class_id <->
    (item_id, color_tag) is a bijection over the labeled rows.
    """
    class_ids: dict[tuple[Hashable, str | None], int] = {}
    labels: list[ClassLabel] = []
    for item_id, color_tag in items:
        key = (item_id, color_tag)
        if key not in class_ids:
            class_ids[key] = len(class_ids)
        labels.append(ClassLabel(class_ids[key], item_id, color_tag))
    return labels
