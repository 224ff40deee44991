"""Sample manifests, deterministic stratified splits, and raster loading.

A manifest is a flat list of (id, source, label) records.  The source
is either a raster file path, resolved relative to the manifest file,
or a self-describing synthetic spec string, so a manifest alone fully
determines every training input.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, SplitError
from .pgm import read_pgm, resize_nearest
from .util import rng_for

SYNTHETIC_PREFIX = "synthetic:"


@dataclass(frozen=True)
class Sample:
    id: str
    source: str
    label: int


@dataclass
class Manifest:
    """Immutable-by-convention list of samples with unique ids."""

    samples: list[Sample]
    base_dir: Path | None = None

    def __post_init__(self):
        seen: set[str] = set()
        for s in self.samples:
            if s.id in seen:
                raise ParseError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)
            if s.label < 0:
                raise ParseError(f"sample {s.id!r} has negative label {s.label}")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def by_class(self) -> dict[int, list[Sample]]:
        groups: dict[int, list[Sample]] = {}
        for s in self.samples:
            groups.setdefault(s.label, []).append(s)
        return groups

    def validate_against(self, class_count: int) -> None:
        for s in self.samples:
            if s.label >= class_count:
                raise ConfigError(
                    f"sample {s.id!r} labeled {s.label} but only {class_count} classes exist"
                )

    def digest(self) -> str:
        h = hashlib.sha256()
        for s in self.samples:
            h.update(f"{s.id}\t{s.source}\t{s.label}\n".encode("utf-8"))
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{s.id}\t{s.source}\t{s.label}" for s in self.samples]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        samples = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"expected id<TAB>source<TAB>label, got {line!r}", line=lineno)
            try:
                label = int(parts[2])
            except ValueError:
                raise ParseError(f"label {parts[2]!r} is not an integer", line=lineno) from None
            samples.append(Sample(parts[0], parts[1], label))
        return cls(samples, base_dir=path.parent)


@dataclass(frozen=True)
class SplitSpec:
    """How to cut a manifest into train and test."""

    train_fraction: float = 0.8
    seed: int = 0
    per_class_cap: int | None = None

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train fraction must be in (0, 1), got {self.train_fraction}")
        if self.per_class_cap is not None and self.per_class_cap < 1:
            raise ConfigError(f"per-class cap must be >= 1, got {self.per_class_cap}")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(manifest: Manifest, spec: SplitSpec) -> tuple[Manifest, Manifest]:
    """Per-class seeded shuffle; round(fraction * n) to train, the rest to test.

    Output manifests preserve the input sample order; only membership
    is random.  An optional per-class cap subsamples the train side
    after the split.
    """
    train_ids: set[str] = set()
    for label, group in sorted(manifest.by_class().items()):
        if len(group) < 2:
            raise SplitError(
                f"class {label} has {len(group)} sample(s); need at least 2 to split"
            )
        rng = rng_for(spec.seed, f"split:{label}")
        order = rng.permutation(len(group))
        n_train = _round_half_up(spec.train_fraction * len(group))
        train_ids.update(group[i].id for i in order[:n_train])
    train = Manifest([s for s in manifest if s.id in train_ids], base_dir=manifest.base_dir)
    test = Manifest([s for s in manifest if s.id not in train_ids], base_dir=manifest.base_dir)
    if spec.per_class_cap is not None:
        train = subsample_per_class(train, spec.per_class_cap, spec.seed)
    return train, test


def subsample_per_class(manifest: Manifest, cap: int, seed: int) -> Manifest:
    """At most cap samples per class, chosen by seeded shuffle.

    Intended for the train side only; applying it to a test manifest
    would silently change the evaluation population.
    """
    if cap < 1:
        raise ConfigError(f"cap must be >= 1, got {cap}")
    keep: set[str] = set()
    for label, group in sorted(manifest.by_class().items()):
        if len(group) <= cap:
            keep.update(s.id for s in group)
        else:
            rng = rng_for(seed, f"subsample:{label}")
            order = rng.permutation(len(group))
            keep.update(group[i].id for i in order[:cap])
    return Manifest([s for s in manifest if s.id in keep], base_dir=manifest.base_dir)


def load_raster(source: str, side: int, base_dir: Path | None = None) -> np.ndarray:
    """Resolve a manifest source into a float64 [side, side] image in [0, 1]."""
    if source.startswith(SYNTHETIC_PREFIX):
        from .synthetic import parse_synthetic_source, render_pose

        return render_pose(parse_synthetic_source(source), side)
    path = Path(source)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    try:
        raw = read_pgm(path)
    except FileNotFoundError as exc:
        raise OSError(f"cannot read raster {path}: {exc}") from exc
    return resize_nearest(raw, side).astype(np.float64) / 255.0


def load_batch(samples: list[Sample], side: int, base_dir: Path | None = None) -> np.ndarray:
    """Stack rasters for a list of samples into [N, side, side]."""
    return np.stack([load_raster(s.source, side, base_dir) for s in samples])
