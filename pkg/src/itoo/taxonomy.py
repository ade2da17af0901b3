"""Two-level fashion category hierarchy: 6 super-categories, 32 sub-categories.

The hierarchy is config-loadable; the default taxonomy ships as a data file
(one ``sub<TAB>super`` line per sub-category).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ContractViolation, ParseError

SUPER_CATEGORIES = ("top", "bottom", "outer", "dress", "shoes", "bag")

# Expected number of sub-categories per super-category.
SUB_COUNTS = {"top": 6, "bottom": 6, "outer": 6, "dress": 2, "shoes": 7, "bag": 5}


@dataclass(frozen=True)
class CategoryHierarchy:
    """Immutable sub -> super mapping.

    ``sub_to_super`` preserves file/definition order, which is the canonical
    sub-category enumeration order.
    """

    super_categories: tuple[str, ...]
    sub_to_super: dict[str, str]
    _subs_by_super: dict[str, tuple[str, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        by_super: dict[str, list[str]] = {s: [] for s in self.super_categories}
        for sub, sup in self.sub_to_super.items():
            by_super.setdefault(sup, []).append(sub)
        object.__setattr__(
            self, "_subs_by_super", {k: tuple(v) for k, v in by_super.items()}
        )

    @property
    def sub_categories(self) -> tuple[str, ...]:
        return tuple(self.sub_to_super)

    def super_of(self, sub: str) -> str:
        try:
            return self.sub_to_super[sub]
        except KeyError:
            raise ContractViolation(f"unknown sub-category: {sub!r}") from None

    def subs_of(self, super_category: str) -> tuple[str, ...]:
        try:
            return self._subs_by_super[super_category]
        except KeyError:
            raise ContractViolation(f"unknown super-category: {super_category!r}") from None

    def is_sub(self, name: str) -> bool:
        return name in self.sub_to_super

    def is_super(self, name: str) -> bool:
        return name in self.super_categories


def validate_hierarchy(h: CategoryHierarchy) -> list[str]:
    """Return violation messages; empty list means the hierarchy is valid.

    Violations are data, not exceptions: ingest jobs report them in bulk.
    """
    violations: list[str] = []
    if len(set(h.super_categories)) != len(h.super_categories):
        violations.append("super-category names not unique")
    if set(h.super_categories) != set(SUPER_CATEGORIES):
        violations.append(
            f"super-categories must be {sorted(SUPER_CATEGORIES)}, "
            f"got {sorted(set(h.super_categories))}"
        )
    if len(h.sub_to_super) != 32:
        violations.append(f"sub-category count: expected 32, got {len(h.sub_to_super)}")
    for sub, sup in h.sub_to_super.items():
        if sup not in h.super_categories:
            violations.append(f"non-unique mapping or unknown super for {sub!r}: {sup!r}")
    for sup, expected in SUB_COUNTS.items():
        actual = sum(1 for s in h.sub_to_super.values() if s == sup)
        if actual != expected:
            violations.append(
                f"sub-category count under {sup!r}: expected {expected}, got {actual}"
            )
    return violations


def load_hierarchy(path: str | Path) -> CategoryHierarchy:
    """Load a ``sub<TAB>super`` hierarchy file."""
    sub_to_super: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(
                    f"expected 'sub<TAB>super', got {line!r}", path=str(path), line=lineno
                )
            sub, sup = parts[0].strip(), parts[1].strip()
            if sub in sub_to_super:
                raise ParseError(f"duplicate sub-category {sub!r}", path=str(path), line=lineno)
            sub_to_super[sub] = sup
    return CategoryHierarchy(SUPER_CATEGORIES, sub_to_super)


def save_hierarchy(h: CategoryHierarchy, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sub, sup in h.sub_to_super.items():
            f.write(f"{sub}\t{sup}\n")


def default_hierarchy() -> CategoryHierarchy:
    """The built-in 32-sub taxonomy."""
    ref = resources.files("itoo").joinpath("data/hierarchy.tsv")
    with resources.as_file(ref) as path:
        return load_hierarchy(path)
