"""Attribute histograms, their volume-weighted aggregation and descriptor comparison."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ilscape import __version__
from ilscape.flowfield import ATTRIBUTES, NORM_MODES, RESOLUTIONS

FORMAT_VERSION = 1
ENCODER_VERSION = f"ilscape-{__version__}"
DEFAULT_BINS = 16
BIN_RANGE = (8, 64)
VARIANTS = ("bounded", "log")

# Raw attribute value mapped to t = 1, set from the spread of occupied-cell
# values over the synthetic presets. Tensor magnitudes are in 1/s, M in world
# units/s; O is already in [0, 1].
DEFAULT_SCALES = {"Mt": 8.0, "Md": 8.0, "Ms": 8.0, "Mw": 4.0, "M": 4.0, "O": 1.0}


class DescriptorError(ValueError):
    pass


class IncomparableError(DescriptorError):
    """Two descriptors were encoded with different settings."""

    def __init__(self, field_name: str, a, b):
        super().__init__(f"descriptors are not comparable: {field_name} differs ({a!r} vs {b!r})")
        self.field = field_name


class NoInteractionError(DescriptorError):
    def __init__(self, msg: str = "no interaction captured: no sensor tracked any motion sample"):
        super().__init__(msg)


class DescriptorFormatError(DescriptorError):
    pass


class InvariantError(RuntimeError):
    """An internal consistency check failed; this indicates a bug, not bad input."""


def check_unit_sum(hist: np.ndarray, name: str, tol: float = 1e-9) -> None:
    if not (np.all(np.isfinite(hist)) and np.all(hist >= 0) and abs(float(hist.sum()) - 1.0) <= tol):
        raise InvariantError(f"global histogram {name} is not a unit-sum distribution")


@dataclass(frozen=True)
class AttributeWeights:
    Mt: float = 0.75
    Md: float = 1.0
    Ms: float = 0.25
    Mw: float = 0.75
    M: float = 0.25
    O: float = 1.0

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise DescriptorError("attribute weights must be finite and >= 0")
        if not np.any(vals > 0):
            raise DescriptorError("at least one attribute weight must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, a) for a in ATTRIBUTES], dtype=float)

    def as_dict(self) -> dict[str, float]:
        return {a: float(getattr(self, a)) for a in ATTRIBUTES}

    def scaled(self, factor: float) -> "AttributeWeights":
        return AttributeWeights(**{a: w * factor for a, w in self.as_dict().items()})

    @classmethod
    def from_mapping(cls, mapping: dict | None) -> "AttributeWeights":
        mapping = dict(mapping or {})
        unknown = set(mapping) - set(ATTRIBUTES)
        if unknown:
            raise DescriptorError(f"unknown attribute weight(s): {', '.join(sorted(unknown))}")
        return cls(**{k: float(v) for k, v in mapping.items()})

    @classmethod
    def uniform(cls, value: float = 1.0) -> "AttributeWeights":
        return cls(**{a: value for a in ATTRIBUTES})


def check_scales(scales: dict) -> dict[str, float]:
    out = {**DEFAULT_SCALES, **(scales or {})}
    unknown = set(out) - set(ATTRIBUTES)
    if unknown:
        raise DescriptorError(f"unknown attribute scale(s): {', '.join(sorted(unknown))}")
    for a, s in out.items():
        if not (math.isfinite(s) and s > 0):
            raise DescriptorError(f"scale for {a} must be positive, got {s}")
    return {a: float(out[a]) for a in ATTRIBUTES}


def check_bins(bins: int) -> int:
    if int(bins) != bins or not BIN_RANGE[0] <= bins <= BIN_RANGE[1]:
        raise DescriptorError(f"bins must be an integer in [{BIN_RANGE[0]}, {BIN_RANGE[1]}], got {bins}")
    return int(bins)


# --- local histograms --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LocalHistogram:
    """Normalized per-sensor histogram of one attribute; ``raw`` keeps the unnormalized bins."""

    attribute: str
    sensor_id: int
    size: float
    bins: np.ndarray
    raw: np.ndarray
    active: bool

    @property
    def n_bins(self) -> int:
        return len(self.bins)


def distance_weight(distance, size):
    """``exp(-(d / r)^2)`` falloff of a cell's contribution with its distance to the surface."""
    return np.exp(-np.square(np.asarray(distance, dtype=float) / np.asarray(size, dtype=float)))


def histogram_rows(values, rows, weights, n_rows: int, bins: int, scale: float):
    """Binned mass per row for flat cell samples.

    ``values`` are raw attribute values of occupied cells, ``rows`` the output
    row (sensor slot) of each cell and ``weights`` the distance falloff. Returns
    ``(normalized, raw)``, both ``(n_rows, bins)``. A row whose cells all have
    t = 0 is put entirely in bin 0, the limit of its histogram as t -> 0.
    """
    t = np.clip(np.asarray(values, dtype=float) / scale, 0.0, 1.0)
    b = np.minimum(np.floor(t * bins).astype(np.int64), bins - 1)
    rows = np.asarray(rows, dtype=np.int64)
    raw = np.bincount(rows * bins + b, weights=t * weights, minlength=n_rows * bins).reshape(n_rows, bins) / bins
    total = raw.sum(axis=1)
    occupied = np.bincount(rows, minlength=n_rows) > 0
    norm = np.zeros_like(raw)
    pos = total > 0
    norm[pos] = raw[pos] / total[pos, None]
    flat = occupied & ~pos
    norm[flat, 0] = 1.0
    return norm, raw


def local_histogram(grid, field, mesh=None, bins: int = DEFAULT_BINS, scale: float | None = None,
                    distances=None) -> LocalHistogram:
    """Histogram of one attribute grid over the occupied cells of ``field``.

    ``distances`` (cell centre to closest surface point, per cell) is computed
    from ``mesh`` when not given.
    """
    if bins < 2:
        raise DescriptorError("bins must be >= 2")
    scale = DEFAULT_SCALES[grid.attribute] if scale is None else float(scale)
    if not scale > 0:
        raise DescriptorError("scale must be positive")
    occ = field.count > 0
    if distances is None:
        from ilscape.geometry import closest_points

        d = np.zeros(occ.shape)
        if occ.any():
            d[occ] = closest_points(mesh, field.cell_centers[occ])[2]
    else:
        d = np.asarray(distances, dtype=float).reshape(occ.shape)
    w = distance_weight(d[occ], field.size)
    norm, raw = histogram_rows(grid.values[occ], np.zeros(int(occ.sum()), dtype=np.int64), w, 1, bins, scale)
    return LocalHistogram(grid.attribute, int(field.sensor_id), float(field.size), norm[0], raw[0], bool(occ.any()))


def volume_weighted_mean(hists: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """``sum_j m_j r_j^3 / sum_j r_j^3`` over rows, renormalized to unit sum."""
    hists = np.asarray(hists, dtype=float)
    vol = np.asarray(sizes, dtype=float) ** 3
    if len(hists) == 0 or vol.sum() <= 0:
        raise NoInteractionError()
    mean = (vol[:, None] * hists).sum(axis=0) / vol.sum()
    s = mean.sum()
    if s <= 0:
        raise NoInteractionError()
    return mean / s


# --- descriptor --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InteractionDescriptor:
    histograms: dict  # attribute -> (bins,) unit-sum array
    bins: int
    resolution: int
    norm_mode: str
    scales: dict
    active_sensors: int
    label: str | None = None
    encoder_version: str = ENCODER_VERSION

    def __post_init__(self):
        for a in ATTRIBUTES:
            h = np.asarray(self.histograms[a], dtype=float)
            if h.shape != (self.bins,):
                raise DescriptorError(f"histogram {a} has shape {h.shape}, expected ({self.bins},)")

    def __getitem__(self, attribute: str) -> np.ndarray:
        return self.histograms[attribute]

    def with_label(self, label):
        return replace(self, label=label)

    def metadata(self) -> dict:
        return {"bins": self.bins, "resolution": self.resolution, "norm_mode": self.norm_mode,
                "scales": dict(self.scales)}

    def check_comparable(self, other: "InteractionDescriptor") -> None:
        for key in ("bins", "resolution", "norm_mode"):
            if getattr(self, key) != getattr(other, key):
                raise IncomparableError(key, getattr(self, key), getattr(other, key))
        for a in ATTRIBUTES:
            if self.scales[a] != other.scales[a]:
                raise IncomparableError("scales", self.scales, other.scales)

    def equals(self, other: "InteractionDescriptor") -> bool:
        if self.metadata() != other.metadata() or self.active_sensors != other.active_sensors:
            return False
        return all(np.array_equal(self.histograms[a], other.histograms[a]) for a in ATTRIBUTES)


def aggregate(local_hists, resolution: int, norm_mode: str, scales: dict | None = None,
              label: str | None = None) -> InteractionDescriptor:
    """Combine per-sensor ``LocalHistogram`` objects into a descriptor.

    Inactive sensors are skipped; the reduction runs in sensor-id order.
    """
    by_attr: dict[str, list[LocalHistogram]] = {a: [] for a in ATTRIBUTES}
    for h in local_hists:
        if h.attribute not in by_attr:
            raise DescriptorError(f"unknown attribute {h.attribute!r}")
        if h.active:
            by_attr[h.attribute].append(h)
    n_bins = {h.n_bins for hs in by_attr.values() for h in hs}
    if len(n_bins) > 1:
        raise DescriptorError(f"local histograms disagree on bin count: {sorted(n_bins)}")
    if not n_bins:
        raise NoInteractionError()
    bins = n_bins.pop()
    out = {}
    active = set()
    for a, hs in by_attr.items():
        if not hs:
            raise NoInteractionError(f"no interaction captured: no active histogram for attribute {a}")
        hs = sorted(hs, key=lambda h: h.sensor_id)
        active.update(h.sensor_id for h in hs)
        out[a] = volume_weighted_mean(np.array([h.bins for h in hs]), np.array([h.size for h in hs]))
        check_unit_sum(out[a], a)
    return InteractionDescriptor(out, bins, resolution, norm_mode, check_scales(scales), len(active), label)


# --- comparison --------------------------------------------------------------

def bhattacharyya(h, k, variant: str = "bounded") -> float:
    """Bhattacharyya distance of two unit-sum histograms.

    ``bounded`` gives ``sqrt(1 - BC)`` in [0, 1]; ``log`` gives ``-ln(BC)``.
    """
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    if h.shape != k.shape:
        raise IncomparableError("bins", len(h), len(k))
    if variant == "bounded":
        # for unit-sum inputs 1 - BC = sum((sqrt h - sqrt k)^2) / 2, which has no cancellation near 0
        gap = 0.5 * float(np.sum(np.square(np.sqrt(h) - np.sqrt(k))))
        return math.sqrt(min(gap, 1.0))
    bc = min(max(float(np.sum(np.sqrt(h * k))), 0.0), 1.0)
    if variant == "log":
        return math.inf if bc == 0.0 else -math.log(bc)
    raise DescriptorError(f"unknown Bhattacharyya variant {variant!r}")


def attribute_distances(d1: InteractionDescriptor, d2: InteractionDescriptor, variant: str = "bounded") -> np.ndarray:
    d1.check_comparable(d2)
    return np.array([bhattacharyya(d1[a], d2[a], variant) for a in ATTRIBUTES])


def distance(d1: InteractionDescriptor, d2: InteractionDescriptor, weights: AttributeWeights | None = None,
             variant: str = "bounded") -> float:
    """Weighted mean over the six attributes of the per-attribute Bhattacharyya distance."""
    w = (weights or AttributeWeights()).as_array()
    return float(np.dot(w, attribute_distances(d1, d2, variant)) / len(ATTRIBUTES))


# --- .ild files ---------------------------------------------------------------

def to_document(d: InteractionDescriptor) -> dict:
    doc = {
        "version": FORMAT_VERSION,
        "bins": d.bins,
        "resolution": d.resolution,
        "norm_mode": d.norm_mode,
        "scales": {a: float(d.scales[a]) for a in ATTRIBUTES},
        "active_sensors": int(d.active_sensors),
        "label": d.label,
        "encoder_version": d.encoder_version,
    }
    for a in ATTRIBUTES:
        doc[f"hist_{a}"] = [float(x) for x in d.histograms[a]]
    return doc


def dumps(d: InteractionDescriptor) -> str:
    # json writes floats with repr, i.e. shortest round-trip form
    return json.dumps(to_document(d), indent=1) + "\n"


def save_descriptor(d: InteractionDescriptor, path) -> None:
    Path(path).write_text(dumps(d))


def from_document(doc) -> InteractionDescriptor:
    if not isinstance(doc, dict):
        raise DescriptorFormatError("descriptor document must be an object")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise DescriptorFormatError(f"unsupported version {version!r} (this build reads version {FORMAT_VERSION})")
    required = ["bins", "resolution", "norm_mode", "scales", "active_sensors"] + [f"hist_{a}" for a in ATTRIBUTES]
    missing = [k for k in required if k not in doc]
    if missing:
        raise DescriptorFormatError(f"missing field(s): {', '.join(missing)}")
    known = set(required) | {"version", "label", "encoder_version"}
    unknown = set(doc) - known
    if unknown:
        raise DescriptorFormatError(f"unknown field(s): {', '.join(sorted(unknown))}")
    try:
        bins = check_bins(doc["bins"]) if isinstance(doc["bins"], int) else -1
    except DescriptorError as exc:
        raise DescriptorFormatError(str(exc)) from None
    if bins < 0:
        raise DescriptorFormatError("bins must be an integer")
    if doc["resolution"] not in RESOLUTIONS:
        raise DescriptorFormatError(f"resolution must be one of {RESOLUTIONS}")
    if doc["norm_mode"] not in NORM_MODES:
        raise DescriptorFormatError(f"norm_mode must be one of {NORM_MODES}")
    if not isinstance(doc["scales"], dict) or set(doc["scales"]) != set(ATTRIBUTES):
        raise DescriptorFormatError(f"scales must name exactly {', '.join(ATTRIBUTES)}")
    hists = {}
    for a in ATTRIBUTES:
        h = doc[f"hist_{a}"]
        if not isinstance(h, list) or len(h) != bins or not all(isinstance(x, (int, float)) for x in h):
            raise DescriptorFormatError(f"hist_{a} must be a list of {bins} numbers")
        arr = np.array(h, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-9:
            raise DescriptorFormatError(f"hist_{a} must be non-negative and sum to 1")
        hists[a] = arr
    try:
        scales = check_scales({a: float(v) for a, v in doc["scales"].items()})
    except (DescriptorError, TypeError) as exc:
        raise DescriptorFormatError(str(exc)) from None
    return InteractionDescriptor(
        hists, bins, int(doc["resolution"]), doc["norm_mode"], scales, int(doc["active_sensors"]),
        doc.get("label"), doc.get("encoder_version", "unknown"),
    )


def loads(text: str) -> InteractionDescriptor:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise DescriptorFormatError(f"parse error at byte {offset}: {exc.msg}") from None
    return from_document(doc)


def load_descriptor(path) -> InteractionDescriptor:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DescriptorFormatError(f"cannot read {path}: {exc}") from None
    try:
        return loads(text)
    except DescriptorFormatError as exc:
        raise DescriptorFormatError(f"{path}: {exc}") from None

