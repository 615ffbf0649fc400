"""Synthetic scenes of thin, mutually crossing curvilinear strands.

A scene is a grayscale image plus per-strand ground-truth masks. Strands are
random smooth polylines rendered with a fixed stroke width; where strands
overlap, image intensity is the max of the contributors, so crossings carry
no brightness cue about ordering.

Annotations use image coordinates with `points` as (x, y) = (column, row)
pairs, matching the JSON annotation documents this package reads and writes:

    {"height": H, "width": W,
     "instances": [{"points": [[x0, y0], [x1, y1], ...], "width": w}, ...]}
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GenerationError(RuntimeError):
    """Scene sampling failed to satisfy the requested constraints."""


@dataclass(frozen=True)
class PolylineAnnotation:
    """One strand: an open polyline with a constant stroke width.

    points : (K, 2) float array of (x, y) vertices, K >= 2
    width : stroke width in pixels (full width, not radius)
    """

    points: np.ndarray
    width: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError(f"points must be (K>=2, 2), got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("points must be finite")
        if not (np.isfinite(self.width) and self.width > 0):
            raise ValueError(f"width must be positive, got {self.width}")
        object.__setattr__(self, "points", pts)


@dataclass
class InstanceSet:
    """Ground-truth masks for one image: one boolean (H, W) mask per strand."""

    height: int
    width: int
    masks: list

    def __post_init__(self):
        self.masks = [np.asarray(m, dtype=bool) for m in self.masks]
        for m in self.masks:
            if m.shape != (self.height, self.width):
                raise ValueError(
                    f"mask shape {m.shape} != ({self.height}, {self.width})"
                )

    def __len__(self):
        return len(self.masks)

    def union(self) -> np.ndarray:
        """Foreground mask: pixels claimed by at least one instance."""
        out = np.zeros((self.height, self.width), dtype=bool)
        for m in self.masks:
            out |= m
        return out

    def overlap(self) -> np.ndarray:
        """Pixels claimed by two or more instances (the crossings)."""
        counts = np.zeros((self.height, self.width), dtype=np.int32)
        for m in self.masks:
            counts += m
        return counts >= 2


def polyline_distance_within(height, width, points, reach):
    """Distance from each pixel center to a polyline, exact up to `reach`.

    Returns an (H, W) float array holding the Euclidean distance to the
    nearest segment for every pixel whose distance is <= reach; pixels
    farther than that may be reported as +inf. Only pixels inside each
    segment's reach-expanded bounding box are touched, which keeps the cost
    proportional to curve length rather than image area.
    """
    pts = np.asarray(points, dtype=np.float64)
    dist = np.full((height, width), np.inf)
    pad = float(reach) + 1e-9
    for a, b in zip(pts[:-1], pts[1:]):
        lo_x = max(int(np.floor(min(a[0], b[0]) - pad)), 0)
        hi_x = min(int(np.ceil(max(a[0], b[0]) + pad)), width - 1)
        lo_y = max(int(np.floor(min(a[1], b[1]) - pad)), 0)
        hi_y = min(int(np.ceil(max(a[1], b[1]) + pad)), height - 1)
        if lo_x > hi_x or lo_y > hi_y:
            continue
        ys, xs = np.mgrid[lo_y : hi_y + 1, lo_x : hi_x + 1]
        dx, dy = b[0] - a[0], b[1] - a[1]
        seg_sq = dx * dx + dy * dy
        if seg_sq == 0.0:
            d = np.hypot(xs - a[0], ys - a[1])
        else:
            t = ((xs - a[0]) * dx + (ys - a[1]) * dy) / seg_sq
            t = np.clip(t, 0.0, 1.0)
            d = np.hypot(xs - (a[0] + t * dx), ys - (a[1] + t * dy))
        window = dist[lo_y : hi_y + 1, lo_x : hi_x + 1]
        np.minimum(window, d, out=window)
    return dist


def rasterize_polyline(height, width, points, stroke_width) -> np.ndarray:
    """Boolean mask of pixels whose center lies within stroke_width/2 of the
    polyline (round caps and joins)."""
    if stroke_width <= 0:
        raise ValueError(f"stroke_width must be positive, got {stroke_width}")
    r = stroke_width / 2.0
    return polyline_distance_within(height, width, points, r) <= r


def _soft_coverage(height, width, points, stroke_width):
    # One-pixel antialiasing ramp at the stroke border; used for rendering
    # the image only, never for ground-truth masks.
    r = stroke_width / 2.0
    dist = polyline_distance_within(height, width, points, r + 1.0)
    return np.clip(r + 0.5 - dist, 0.0, 1.0)


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of the scene sampler."""

    height: int = 64
    width: int = 64
    curves_min: int = 2
    curves_max: int = 2
    stroke_min: float = 2.5
    stroke_max: float = 3.5
    intensity_min: float = 0.55
    intensity_max: float = 0.95
    noise_sigma: float = 0.03
    wiggle: float = 0.05
    control_points: int = 9
    ensure_crossing: bool = True
    max_attempts: int = 50

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ValueError("scene must be at least 8x8")
        if not 1 <= self.curves_min <= self.curves_max:
            raise ValueError("need 1 <= curves_min <= curves_max")
        if not 0 < self.stroke_min <= self.stroke_max:
            raise ValueError("need 0 < stroke_min <= stroke_max")
        if not 0 <= self.intensity_min <= self.intensity_max <= 1:
            raise ValueError("intensities must satisfy 0 <= min <= max <= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.control_points < 2:
            raise ValueError("control_points must be >= 2")


@dataclass
class Scene:
    image: np.ndarray
    instances: InstanceSet
    annotations: list = field(default_factory=list)


def _line_rect_span(anchor, direction, width, height):
    # Parameter range t for which anchor + t*direction stays inside the
    # pixel-center rectangle [0, W-1] x [0, H-1] (slab intersection).
    t_lo, t_hi = -np.inf, np.inf
    for coord, d, hi in ((anchor[0], direction[0], width - 1),
                         (anchor[1], direction[1], height - 1)):
        if abs(d) < 1e-12:
            if coord < 0 or coord > hi:
                return None
            continue
        a = (0 - coord) / d
        b = (hi - coord) / d
        t_lo = max(t_lo, min(a, b))
        t_hi = min(t_hi, max(a, b))
    if not np.isfinite(t_lo) or not np.isfinite(t_hi) or t_hi <= t_lo:
        return None
    return t_lo, t_hi


def _sample_polyline(rng, spec: SceneSpec, base_angle: float) -> np.ndarray:
    h, w = spec.height, spec.width
    angle = base_angle + rng.uniform(-0.15, 0.15)
    direction = np.array([np.cos(angle), np.sin(angle)])
    # Anchor in the central band so strands meet in the interior.
    anchor = np.array([
        rng.uniform(0.3 * (w - 1), 0.7 * (w - 1)),
        rng.uniform(0.3 * (h - 1), 0.7 * (h - 1)),
    ])
    span = _line_rect_span(anchor, direction, w, h)
    if span is None:  # pragma: no cover - central anchor always intersects
        raise GenerationError("strand chord missed the image rectangle")
    ts = np.linspace(span[0], span[1], spec.control_points)
    base = anchor[None, :] + ts[:, None] * direction[None, :]

    # Smooth perpendicular wander, pinned to zero at both endpoints so the
    # strand still enters and exits at the border.
    steps = rng.normal(0.0, 1.0, size=spec.control_points)
    walk = np.cumsum(steps)
    walk -= np.linspace(walk[0], walk[-1], spec.control_points)
    peak = np.max(np.abs(walk))
    if peak > 0:
        walk = walk / peak * spec.wiggle * min(h, w)
    perp = np.array([-direction[1], direction[0]])
    pts = base + walk[:, None] * perp[None, :]
    pts[:, 0] = np.clip(pts[:, 0], 0.0, w - 1.0)
    pts[:, 1] = np.clip(pts[:, 1], 0.0, h - 1.0)
    return pts


def _pairwise_crossings_ok(masks) -> bool:
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            if not np.any(masks[i] & masks[j]):
                return False
    return True


def generate_scene(spec: SceneSpec, seed: int) -> Scene:
    """Sample one scene deterministically from (spec, seed).

    When `spec.ensure_crossing` is set and more than one strand is drawn,
    every pair of strand masks is required to overlap somewhere; sampling
    retries up to `spec.max_attempts` times before raising GenerationError.
    """
    rng = np.random.default_rng(seed)
    h, w = spec.height, spec.width
    for _ in range(spec.max_attempts):
        n = int(rng.integers(spec.curves_min, spec.curves_max + 1))
        # Spread base angles over a half-turn so pairwise crossing angles
        # stay comfortably away from parallel.
        order = rng.permutation(n)
        annotations = []
        masks = []
        coverages = []
        ok = True
        for i in range(n):
            base_angle = (order[i] + 0.5) * np.pi / n
            try:
                pts = _sample_polyline(rng, spec, base_angle)
            except GenerationError:
                ok = False
                break
            stroke = rng.uniform(spec.stroke_min, spec.stroke_max)
            mask = rasterize_polyline(h, w, pts, stroke)
            if mask.sum() < 4:
                ok = False
                break
            annotations.append(PolylineAnnotation(points=pts, width=stroke))
            masks.append(mask)
            coverages.append(_soft_coverage(h, w, pts, stroke))
        if not ok:
            continue
        if spec.ensure_crossing and n > 1 and not _pairwise_crossings_ok(masks):
            continue

        image = np.zeros((h, w))
        for cov in coverages:
            intensity = rng.uniform(spec.intensity_min, spec.intensity_max)
            image = np.maximum(image, intensity * cov)
        if spec.noise_sigma > 0:
            image = image + rng.normal(0.0, spec.noise_sigma, size=image.shape)
        image = np.clip(image, 0.0, 1.0)
        return Scene(image, InstanceSet(h, w, masks), annotations)
    raise GenerationError(
        f"no valid scene after {spec.max_attempts} attempts (seed={seed})"
    )


def scene_seeds(master_seed: int, count: int) -> np.ndarray:
    """Per-scene seeds derived from one master seed."""
    rng = np.random.default_rng(master_seed)
    return rng.integers(0, 2**63 - 1, size=count, dtype=np.int64)


def make_training_labels(instances: InstanceSet, rng) -> np.ndarray:
    """Collapse overlapping masks into a single int label map for training.

    Background is 0 and instance k gets label k+1. A pixel claimed by
    several instances is assigned to one of its claimants uniformly at
    random, so over many epochs crossing pixels pull toward every strand
    they belong to rather than always the same one.
    """
    h, w = instances.height, instances.width
    labels = np.zeros((h, w), dtype=np.int32)
    if len(instances) == 0:
        return labels
    stack = np.stack(instances.masks)  # (K, H, W)
    counts = stack.sum(axis=0)
    single = counts == 1
    labels[single] = stack[:, single].argmax(axis=0) + 1
    for y, x in np.argwhere(counts >= 2):
        claimants = np.flatnonzero(stack[:, y, x])
        labels[y, x] = int(rng.choice(claimants)) + 1
    return labels


def annotations_to_document(height, width, annotations) -> dict:
    """Build the JSON-serializable annotation document for one image."""
    return {
        "height": int(height),
        "width": int(width),
        "instances": [
            {"points": [[float(x), float(y)] for x, y in ann.points],
             "width": float(ann.width)}
            for ann in annotations
        ],
    }


def parse_annotations(doc: dict):
    """Validate an annotation document; returns (height, width, annotations).

    Raises ValueError on any structural problem: missing keys, non-positive
    dimensions, polylines with fewer than two vertices, or bad widths.
    """
    if not isinstance(doc, dict):
        raise ValueError(f"annotation document must be an object, got {type(doc).__name__}")
    for key in ("height", "width", "instances"):
        if key not in doc:
            raise ValueError(f"annotation document missing key {key!r}")
    height, width = doc["height"], doc["width"]
    if not (isinstance(height, int) and isinstance(width, int)) or height < 1 or width < 1:
        raise ValueError(f"height/width must be positive integers, got {height!r}/{width!r}")
    if not isinstance(doc["instances"], list):
        raise ValueError("instances must be a list")
    annotations = []
    for k, entry in enumerate(doc["instances"]):
        if not isinstance(entry, dict) or "points" not in entry or "width" not in entry:
            raise ValueError(f"instance {k} must have 'points' and 'width'")
        try:
            ann = PolylineAnnotation(
                points=np.asarray(entry["points"], dtype=np.float64),
                width=float(entry["width"]),
            )
        except (TypeError, ValueError) as exc:
            raise ValueError(f"instance {k}: {exc}") from exc
        annotations.append(ann)
    return height, width, annotations


def annotations_to_instances(height, width, annotations) -> InstanceSet:
    """Rasterize a list of polyline annotations into ground-truth masks."""
    masks = [
        rasterize_polyline(height, width, ann.points, ann.width)
        for ann in annotations
    ]
    return InstanceSet(height, width, masks)
