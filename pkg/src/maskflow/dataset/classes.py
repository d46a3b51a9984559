"""Class tables, binary foreground merging, and cross-dataset class mapping.

A class table maps positive integer ids to named classes, each either an
anatomical structure or a surgical instrument; id 0 is reserved for the
background everywhere. Evaluation collapses any selected subset of classes
to a single foreground, so most of the pipeline only ever sees boolean masks.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParseError, ValidationError

CATEGORIES = ("anatomy", "instrument")


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    category: str


@dataclass(frozen=True)
class ClassTable:
    entries: tuple[ClassEntry, ...]

    def __post_init__(self):
        seen: set[int] = set()
        for e in self.entries:
            if e.class_id <= 0:
                raise ValidationError(
                    f"class id {e.class_id} ({e.name}) must be positive; 0 is background"
                )
            if e.class_id in seen:
                raise ValidationError(f"duplicate class id {e.class_id}")
            if e.category not in CATEGORIES:
                raise ValidationError(
                    f"class {e.name}: category {e.category!r} not in {CATEGORIES}"
                )
            seen.add(e.class_id)

    def ids(self) -> set[int]:
        return {e.class_id for e in self.entries}

    def names(self) -> dict[str, int]:
        return {e.name: e.class_id for e in self.entries}

    def by_id(self, class_id: int) -> ClassEntry:
        for e in self.entries:
            if e.class_id == class_id:
                return e
        raise ValidationError(f"unknown class id {class_id}")

    def __len__(self) -> int:
        return len(self.entries)


# Bundled default: 3 anatomical structures followed by 9 instruments.
_DEFAULT_ENTRIES = (
    ClassEntry(1, "Iris", "anatomy"),
    ClassEntry(2, "Pupil", "anatomy"),
    ClassEntry(3, "Lens", "anatomy"),
    ClassEntry(4, "Slit/Incision Knife", "instrument"),
    ClassEntry(5, "Gauge Sizes", "instrument"),
    ClassEntry(6, "Capsulorhexis Cystotome", "instrument"),
    ClassEntry(7, "Capsulorhexis Forceps", "instrument"),
    ClassEntry(8, "Katena Forceps", "instrument"),
    ClassEntry(9, "Phacoemulsifier Tip", "instrument"),
    ClassEntry(10, "Spatula", "instrument"),
    ClassEntry(11, "Irrigation-Aspiration", "instrument"),
    ClassEntry(12, "Lens Injector", "instrument"),
)


def default_class_table() -> ClassTable:
    return ClassTable(_DEFAULT_ENTRIES)


def load_class_table(path: str | Path | None = None) -> ClassTable:
    """Load a class table from a tab-separated file, or the bundled default.

    File format: UTF-8 text, one class per line as ``id<TAB>name<TAB>category``
    with category ``anatomy`` or ``instrument``. Blank lines and lines starting
    with ``#`` are ignored.
    """
    if path is None:
        return default_class_table()
    entries = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split("\t")
        if len(fields) != 3:
            raise ParseError(
                f"{path}:{lineno}: expected 'id<TAB>name<TAB>category', got {line!r}"
            )
        try:
            class_id = int(fields[0])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: class id {fields[0]!r} is not an integer")
        entries.append(ClassEntry(class_id, fields[1].strip(), fields[2].strip()))
    return ClassTable(tuple(entries))


def merge_to_binary(labelmap: np.ndarray, include: set[int] | None = None) -> np.ndarray:
    """Collapse a multi-class label map to a single binary foreground.

    A pixel is foreground iff its label is nonzero and, when ``include`` is
    given, a member of ``include``. Background (label 0) is never foreground.
    """
    labels = np.asarray(labelmap)
    if labels.ndim != 2:
        raise ValidationError(f"expected a 2-D label map, got shape {labels.shape}")
    if include is None:
        return labels != 0
    wanted = np.array(sorted(i for i in include if i != 0), dtype=labels.dtype)
    return np.isin(labels, wanted)


def map_common_classes(
    source: ClassTable,
    target: ClassTable,
    alias_table: dict[str, str] | None = None,
) -> dict[int, int]:
    """Map source ids to target ids for exactly the classes shared by name.

    ``alias_table`` rewrites source names to target names before matching
    (identity where names already agree). Source classes with no counterpart
    are simply absent from the result, which downstream code treats as
    background. The mapping is injective; two source classes resolving to the
    same target name is rejected as ambiguous.
    """
    aliases = alias_table or {}
    target_names = target.names()
    source_names = {e.name for e in source.entries}
    for src_name, tgt_name in aliases.items():
        if src_name not in source_names:
            raise ValidationError(f"alias source {src_name!r} is not a source class")
        if tgt_name not in target_names:
            raise ValidationError(f"alias target {tgt_name!r} is not a target class")
    mapping: dict[int, int] = {}
    used_targets: dict[int, str] = {}
    for entry in source.entries:
        resolved = aliases.get(entry.name, entry.name)
        if resolved not in target_names:
            continue
        target_id = target_names[resolved]
        if target_id in used_targets:
            raise ValidationError(
                f"classes {used_targets[target_id]!r} and {entry.name!r} "
                f"both map to target {resolved!r}"
            )
        used_targets[target_id] = entry.name
        mapping[entry.class_id] = target_id
    return mapping
