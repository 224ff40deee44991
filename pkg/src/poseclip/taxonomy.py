"""Three-level pose hierarchy: 82 named poses, 20 variation groups, 6 body positions.

Variation-group (L2) names repeat across body positions ("Forward
bend" exists under both Standing and Sitting), so a group's identity
is the (group name, body position) pair, not the bare name.  The
shipped table lives in data/yoga82.csv; any file with the same header
loads the same way, so small custom hierarchies work too.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ParseError

HEADER = ["l3_name", "l2_name", "l1_name"]

SIX_POSE_SUBSET = (
    "Balasana",
    "Dhanurasana",
    "Marjaryasana",
    "Salamba Sarvangasana",
    "Ustrasana",
    "Utkatasana",
)

# Common shorthand for poses whose full names carry a qualifying prefix.
POSE_ALIASES = {
    "Sarvangasana": "Salamba Sarvangasana",
    "Sirsasana": "Salamba Sirsasana",
    "Trikonasana": "Utthita Trikonasana",
}


@dataclass(frozen=True)
class ClassRecord:
    l3_name: str
    l2_name: str
    l1_name: str

    @property
    def l2_key(self) -> tuple[str, str]:
        return (self.l2_name, self.l1_name)


@dataclass
class Taxonomy:
    """Ordered pose records plus derived group orderings and roll-up maps."""

    records: list[ClassRecord]
    l2_keys: list[tuple[str, str]] = field(init=False)
    l1_names: list[str] = field(init=False)
    _l3_index: dict[str, int] = field(init=False, repr=False)
    _l2_index: dict[tuple[str, str], int] = field(init=False, repr=False)
    _l1_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._l3_index = {}
        for i, rec in enumerate(self.records):
            if rec.l3_name in self._l3_index:
                raise ParseError(f"duplicate class name {rec.l3_name!r}")
            self._l3_index[rec.l3_name] = i
        self.l2_keys = []
        self.l1_names = []
        self._l2_index = {}
        self._l1_index = {}
        for rec in self.records:
            if rec.l2_key not in self._l2_index:
                self._l2_index[rec.l2_key] = len(self.l2_keys)
                self.l2_keys.append(rec.l2_key)
            if rec.l1_name not in self._l1_index:
                self._l1_index[rec.l1_name] = len(self.l1_names)
                self.l1_names.append(rec.l1_name)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def l3_names(self) -> list[str]:
        return [rec.l3_name for rec in self.records]

    def l3_index(self, name: str) -> int:
        try:
            return self._l3_index[name]
        except KeyError:
            alias = POSE_ALIASES.get(name)
            if alias is not None and alias in self._l3_index:
                return self._l3_index[alias]
            raise KeyError(f"unknown pose class {name!r}") from None

    def l2_of(self, l3_index: int) -> int:
        return self._l2_index[self.records[l3_index].l2_key]

    def l1_of(self, l3_index: int) -> int:
        return self._l1_index[self.records[l3_index].l1_name]

    def l1_of_l2(self, l2_index: int) -> int:
        return self._l1_index[self.l2_keys[l2_index][1]]

    def classes_in_l1(self, l1_index: int) -> list[int]:
        return [i for i in range(len(self.records)) if self.l1_of(i) == l1_index]

    def counts(self) -> tuple[int, int, int]:
        return (len(self.records), len(self.l2_keys), len(self.l1_names))

    def subset(self, names: list[str]) -> "Taxonomy":
        """New taxonomy over the named classes, in the given order."""
        return Taxonomy([self.records[self.l3_index(n)] for n in names])

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(HEADER)
            for rec in self.records:
                writer.writerow([rec.l3_name, rec.l2_name, rec.l1_name])


def load_taxonomy(path: str | Path) -> Taxonomy:
    """Parse a class-hierarchy CSV; errors carry the offending line number."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty taxonomy file", line=1) from None
        if header != HEADER:
            raise ParseError(f"expected header {','.join(HEADER)!r}, got {header!r}", line=1)
        seen: dict[str, int] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 or not all(cell.strip() for cell in row):
                raise ParseError(f"expected 3 non-empty fields, got {row!r}", line=lineno)
            name = row[0].strip()
            if name in seen:
                raise ParseError(
                    f"class {name!r} already defined on line {seen[name]}", line=lineno
                )
            seen[name] = lineno
            records.append(ClassRecord(name, row[1].strip(), row[2].strip()))
    if not records:
        raise ParseError("taxonomy file has a header but no classes", line=2)
    try:
        return Taxonomy(records)
    except ParseError as exc:
        raise ParseError(f"invalid taxonomy in {path}: {exc}") from exc


def default_taxonomy_path() -> Path:
    return Path(str(resources.files("poseclip").joinpath("data/yoga82.csv")))


def load_default_taxonomy() -> Taxonomy:
    return load_taxonomy(default_taxonomy_path())


def six_pose_taxonomy() -> Taxonomy:
    """The canonical six-pose subset spanning four body positions."""
    return load_default_taxonomy().subset(list(SIX_POSE_SUBSET))
