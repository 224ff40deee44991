"""Procedural stick-figure pose rasters.

Every class gets an archetype: a quantized tuple of nine joint angles
(torso lean, two shoulders, two elbows, two thighs, two knees).  The
archetype id is decomposed in mixed radix over four pose aspects
(torso option, leg set, arm set, and a large-angle variant), giving 420
pairwise-distinct silhouettes, comfortably above the 82 classes of the
shipped taxonomy.  Dataset generation assigns archetypes to classes
with a coprime stride so that consecutive class indices differ in
several aspects at once.

Samples are rendered by jittering the archetype angles with a seeded
normal perturbation, drawing limb segments as distance fields, adding
uniform background noise, and quantizing to 8-bit levels so a PGM
write/read round-trip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import SYNTHETIC_PREFIX, Manifest, Sample
from .errors import ConfigError, ParseError
from .pgm import write_pgm
from .util import derive_seed

TORSO_OPTIONS = (-90.0, -45.0, 0.0, 45.0, 90.0)

# (left thigh, left knee, right thigh, right knee), degrees relative to
# the torso-down direction.  Deliberately left-right asymmetric: a
# mirror-symmetric figure under an opposite torso lean would produce
# nearly the same bag of local stroke textures, which is all the image
# tower sees after mean pooling.
LEG_SETS = (
    (30.0, -15.0, -5.0, 20.0),
    (70.0, -85.0, -10.0, 0.0),
    (85.0, 10.0, -60.0, -25.0),
    (-40.0, 75.0, 35.0, -50.0),
)

# (left shoulder, left elbow, right shoulder, right elbow), degrees
# relative to the torso-up direction.  Asymmetric for the same reason.
ARM_SETS = (
    (-150.0, -25.0, 170.0, 15.0),
    (-100.0, -20.0, 75.0, 30.0),
    (-30.0, -70.0, 45.0, 60.0),
)

# Additive large-angle tweaks: (torso, l_shoulder, r_shoulder, l_thigh,
# r_thigh, l_knee, r_knee).  Chosen big enough that two archetypes
# differing only in this digit still read as different poses.
VARIANT_SETS = (
    (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (20.0, 35.0, -35.0, 25.0, -25.0, 40.0, 40.0),
    (-20.0, -45.0, 20.0, -30.0, 15.0, -55.0, 30.0),
    (10.0, 70.0, 55.0, -20.0, 45.0, 15.0, -35.0),
    (-10.0, -25.0, 80.0, 40.0, -45.0, -30.0, 55.0),
    (15.0, 55.0, -70.0, -45.0, 30.0, 60.0, -20.0),
    (-15.0, 90.0, 25.0, 15.0, -60.0, -45.0, -60.0),
)

MAX_ARCHETYPES = len(TORSO_OPTIONS) * len(LEG_SETS) * len(ARM_SETS) * len(VARIANT_SETS)

# Class index -> archetype id.  The stride is coprime to MAX_ARCHETYPES,
# so the map is a bijection; it spreads consecutive classes across all
# four pose aspects instead of walking the torso digit alone.
ARCHETYPE_STRIDE = 173


def class_archetype(class_index: int) -> int:
    if not 0 <= class_index < MAX_ARCHETYPES:
        raise ConfigError(
            f"class index {class_index} out of range; {MAX_ARCHETYPES} archetypes are defined"
        )
    return (class_index * ARCHETYPE_STRIDE) % MAX_ARCHETYPES

TORSO_LEN = 1.0
HEAD_OFFSET = 1.3
HEAD_RADIUS = 0.24
UPPER_ARM = 0.55
FOREARM = 0.5
THIGH = 0.7
SHIN = 0.65
FIGURE_EXTENT = 1.75

# Stroke intensity per segment (torso, then arms, then legs, matching
# the _skeleton segment order).  Limb groups get distinct gray levels:
# after mean pooling the image tower only sees a bag of local stroke
# textures, and level differences keep a left arm distinguishable from
# a right leg inside that bag.
SEGMENT_LEVELS = (1.0, 0.55, 0.55, 0.8, 0.8, 0.9, 0.9, 0.65, 0.65)
HEAD_LEVEL = 1.0

JITTER_DEG = 5.0
LEVEL_JITTER = 0.15
DEFAULT_THICKNESS = 1.2
DEFAULT_NOISE = 0.12


@dataclass(frozen=True)
class SyntheticPoseSpec:
    """Everything needed to re-render one sample."""

    archetype: int
    jitter_seed: int
    noise: float
    thickness: float = DEFAULT_THICKNESS

    def source(self) -> str:
        return f"{SYNTHETIC_PREFIX}{self.archetype}:{self.jitter_seed}:{self.noise!r}"


@dataclass(frozen=True)
class RenderConfig:
    """Generation-time knobs shared by a whole dataset."""

    side: int = 32
    noise: float = DEFAULT_NOISE
    thickness: float = DEFAULT_THICKNESS

    def __post_init__(self):
        if self.side < 8:
            raise ConfigError(f"side {self.side} too small to draw a figure")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError(f"noise level must be in [0, 1], got {self.noise}")
        if self.thickness <= 0:
            raise ConfigError(f"stroke thickness must be positive, got {self.thickness}")


def parse_synthetic_source(source: str) -> SyntheticPoseSpec:
    """Invert SyntheticPoseSpec.source(); stroke thickness takes the default."""
    if not source.startswith(SYNTHETIC_PREFIX):
        raise ParseError(f"not a synthetic source: {source!r}")
    parts = source[len(SYNTHETIC_PREFIX) :].split(":")
    if len(parts) != 3:
        raise ParseError(f"synthetic source needs archetype:seed:noise, got {source!r}")
    try:
        return SyntheticPoseSpec(int(parts[0]), int(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise ParseError(f"bad synthetic source {source!r}: {exc}") from exc


def archetype_angles(archetype: int) -> np.ndarray:
    """Nine joint angles (degrees) for one archetype id.

    Order: torso, l_shoulder, l_elbow, r_shoulder, r_elbow, l_thigh,
    l_knee, r_thigh, r_knee.
    """
    if not 0 <= archetype < MAX_ARCHETYPES:
        raise ConfigError(
            f"archetype {archetype} out of range; {MAX_ARCHETYPES} are defined"
        )
    a = archetype
    torso = TORSO_OPTIONS[a % len(TORSO_OPTIONS)]
    a //= len(TORSO_OPTIONS)
    legs = LEG_SETS[a % len(LEG_SETS)]
    a //= len(LEG_SETS)
    arms = ARM_SETS[a % len(ARM_SETS)]
    a //= len(ARM_SETS)
    var = VARIANT_SETS[a % len(VARIANT_SETS)]
    return np.array(
        [
            torso + var[0],
            arms[0] + var[1],
            arms[1],
            arms[2] + var[2],
            arms[3],
            legs[0] + var[3],
            legs[1] + var[5],
            legs[2] + var[4],
            legs[3] + var[6],
        ]
    )


def _dir(deg: float) -> np.ndarray:
    rad = np.deg2rad(deg)
    return np.array([np.sin(rad), np.cos(rad)])


def _skeleton(angles: np.ndarray) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Joint-angle tuple -> limb segments plus head center, in unit coordinates."""
    torso, l_sh, l_el, r_sh, r_el, l_th, l_kn, r_th, r_kn = angles
    hip = np.zeros(2)
    neck = hip + TORSO_LEN * _dir(torso)
    head = hip + HEAD_OFFSET * _dir(torso)
    l_elbow = neck + UPPER_ARM * _dir(torso + l_sh)
    l_hand = l_elbow + FOREARM * _dir(torso + l_sh + l_el)
    r_elbow = neck + UPPER_ARM * _dir(torso + r_sh)
    r_hand = r_elbow + FOREARM * _dir(torso + r_sh + r_el)
    down = torso + 180.0
    l_knee = hip + THIGH * _dir(down + l_th)
    l_foot = l_knee + SHIN * _dir(down + l_th + l_kn)
    r_knee = hip + THIGH * _dir(down + r_th)
    r_foot = r_knee + SHIN * _dir(down + r_th + r_kn)
    segments = [
        (hip, neck),
        (neck, l_elbow),
        (l_elbow, l_hand),
        (neck, r_elbow),
        (r_elbow, r_hand),
        (hip, l_knee),
        (l_knee, l_foot),
        (hip, r_knee),
        (r_knee, r_foot),
    ]
    return segments, head


def _segment_distance(px: np.ndarray, py: np.ndarray, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    vx, vy = p1[0] - p0[0], p1[1] - p0[1]
    wx, wy = px - p0[0], py - p0[1]
    vv = vx * vx + vy * vy
    t = np.clip((wx * vx + wy * vy) / vv, 0.0, 1.0) if vv > 0 else 0.0
    dx = wx - t * vx
    dy = wy - t * vy
    return np.sqrt(dx * dx + dy * dy)


def _render_figure(
    angles: np.ndarray,
    side: int,
    thickness: float,
    offset: np.ndarray,
    scale_mult: float,
    level_mult: np.ndarray | None = None,
) -> np.ndarray:
    """Draw the skeleton as a soft-edged distance field, values in [0, 1]."""
    segments, head = _skeleton(angles)
    levels = np.asarray(SEGMENT_LEVELS) * (1.0 if level_mult is None else level_mult)
    levels = np.clip(levels, 0.0, 1.0)
    scale = (side / 2.0 - 1.5) / FIGURE_EXTENT * scale_mult
    cx = side / 2.0 + offset[0]
    cy = side / 2.0 + offset[1]
    cols, rows = np.meshgrid(np.arange(side, dtype=np.float64), np.arange(side, dtype=np.float64))
    img = np.zeros((side, side))
    for (p0, p1), level in zip(segments, levels):
        q0 = np.array([cx + scale * p0[0], cy - scale * p0[1]])
        q1 = np.array([cx + scale * p1[0], cy - scale * p1[1]])
        d = _segment_distance(cols, rows, q0, q1)
        img = np.maximum(img, level * np.clip(thickness + 0.6 - d, 0.0, 1.0))
    hx, hy = cx + scale * head[0], cy - scale * head[1]
    ring = np.abs(np.sqrt((cols - hx) ** 2 + (rows - hy) ** 2) - scale * HEAD_RADIUS)
    img = np.maximum(img, HEAD_LEVEL * np.clip(thickness + 0.6 - ring, 0.0, 1.0))
    return img


def quantize(image: np.ndarray) -> np.ndarray:
    """Snap float values in [0, 1] to the 256 levels a PGM can hold."""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def render_archetype(archetype: int, side: int = 32, thickness: float = DEFAULT_THICKNESS) -> np.ndarray:
    """Noise-free, jitter-free render; the class's canonical silhouette."""
    return quantize(_render_figure(archetype_angles(archetype), side, thickness, np.zeros(2), 1.0))


def render_pose(spec: SyntheticPoseSpec, side: int = 32) -> np.ndarray:
    """Render one sample; a pure function of (spec, side)."""
    rng = np.random.default_rng(spec.jitter_seed)
    angles = archetype_angles(spec.archetype) + rng.normal(0.0, JITTER_DEG, size=9)
    offset = rng.uniform(-1.0, 1.0, size=2)
    scale_mult = 1.0 + rng.uniform(-0.06, 0.06)
    level_mult = rng.uniform(1.0 - LEVEL_JITTER, 1.0 + LEVEL_JITTER, size=9)
    img = _render_figure(angles, side, spec.thickness, offset, scale_mult, level_mult)
    if spec.noise > 0.0:
        img = img + spec.noise * rng.random((side, side))
    return quantize(img)


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "-" for c in name.lower()).strip("-")


def generate_synthetic_dataset(
    classes,
    images_per_class: int,
    seed: int,
    config: RenderConfig | None = None,
) -> tuple[Manifest, dict[str, np.ndarray]]:
    """One archetype per class, images_per_class seeded samples each.

    `classes` is a taxonomy or a plain list of class names; the class's
    position is its label index, and class_archetype() picks its
    silhouette.  Returns the manifest plus the rendered rasters keyed
    by sample id.
    """
    config = config or RenderConfig()
    names = list(getattr(classes, "l3_names", classes))
    if not names:
        raise ConfigError("no classes to generate")
    if len(names) > MAX_ARCHETYPES:
        raise ConfigError(
            f"{len(names)} classes requested but only {MAX_ARCHETYPES} archetypes exist"
        )
    if images_per_class < 1:
        raise ConfigError(f"images_per_class must be >= 1, got {images_per_class}")
    samples = []
    rasters: dict[str, np.ndarray] = {}
    for ci, name in enumerate(names):
        slug = _slug(name)
        for k in range(images_per_class):
            spec = SyntheticPoseSpec(
                archetype=class_archetype(ci),
                jitter_seed=derive_seed(seed, f"sample:{ci}:{k}"),
                noise=config.noise,
                thickness=config.thickness,
            )
            sid = f"{slug}-{k:04d}"
            samples.append(Sample(sid, spec.source(), ci))
            rasters[sid] = render_pose(spec, config.side)
    return Manifest(samples), rasters


def write_rasters(rasters: dict[str, np.ndarray], out_dir: str | Path) -> list[Path]:
    """Dump rendered rasters as PGM files named by sample id."""
    out_dir = Path(out_dir)
    paths = []
    for sid in sorted(rasters):
        path = out_dir / f"{sid}.pgm"
        write_pgm(path, to_uint8(rasters[sid]))
        paths.append(path)
    return paths
