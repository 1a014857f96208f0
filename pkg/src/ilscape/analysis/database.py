"""A labelled collection of descriptors and the pairwise distance matrix."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ilscape.descriptor import (
    AttributeWeights,
    DescriptorError,
    InteractionDescriptor,
    distance,
    load_descriptor,
)

MANIFEST = "manifest.json"
_SEGMENT = re.compile(r"^(?P<stem>.+)\.seg(?P<k>\d+)\.ild$")


@dataclass(frozen=True, eq=False)
class Entry:
    id: str
    label: str | None
    descriptor: InteractionDescriptor
    segments: tuple = ()  # descriptor (or None when the window was empty) per k = 1..N


@dataclass(eq=False)
class DescriptorDB:
    entries: list = field(default_factory=list)

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DescriptorError(f"duplicate entry ids: {', '.join(dup)}")
        for e in self.entries[1:]:
            self.entries[0].descriptor.check_comparable(e.descriptor)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    @property
    def labels(self) -> list:
        return [e.label for e in self.entries]

    @property
    def n_segments(self) -> int:
        counts = {len(e.segments) for e in self.entries}
        return counts.pop() if len(counts) == 1 else 0

    def get(self, entry_id: str) -> Entry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise KeyError(entry_id)

    def add(self, entry: Entry) -> None:
        if entry.id in self.ids:
            raise DescriptorError(f"duplicate entry id {entry.id}")
        if self.entries:
            self.entries[0].descriptor.check_comparable(entry.descriptor)
        self.entries.append(entry)


def scan_directory(directory) -> DescriptorDB:
    """Collect ``*.ild`` files; ``stem.segK.ild`` files become segment k of entry ``stem``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DescriptorError(f"{directory} is not a directory")
    full: dict[str, Path] = {}
    segs: dict[str, dict[int, Path]] = {}
    for path in sorted(directory.glob("*.ild")):
        m = _SEGMENT.match(path.name)
        if m:
            segs.setdefault(m["stem"], {})[int(m["k"])] = path
        else:
            full[path.stem] = path
    entries = []
    for stem in sorted(full):
        d = load_descriptor(full[stem])
        seg = segs.get(stem, {})
        if seg:
            n = max(seg)
            # a missing k means that window held no samples
            segments = tuple(load_descriptor(seg[k]) if k in seg else None for k in range(1, n + 1))
        else:
            segments = ()
        entries.append(Entry(stem, d.label, d, segments))
    orphans = sorted(set(segs) - set(full))
    if orphans:
        raise DescriptorError(f"segment files without a full descriptor: {', '.join(orphans)}")
    if not entries:
        raise DescriptorError(f"no .ild files in {directory}")
    return DescriptorDB(entries)


def write_manifest(db: DescriptorDB, directory) -> Path:
    directory = Path(directory)
    meta = db.entries[0].descriptor.metadata() if db.entries else {}
    doc = {
        "metadata": meta,
        "entries": [
            {
                "id": e.id,
                "label": e.label,
                "file": f"{e.id}.ild",
                "segments": [None if s is None else f"{e.id}.seg{k}.ild" for k, s in enumerate(e.segments, 1)],
            }
            for e in db.entries
        ],
    }
    path = directory / MANIFEST
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def load_db(path) -> DescriptorDB:
    """Open a database from its directory (or manifest file); falls back to scanning."""
    path = Path(path)
    directory = path.parent if path.is_file() else path
    manifest = directory / MANIFEST
    if not manifest.exists():
        return scan_directory(directory)
    try:
        doc = json.loads(manifest.read_text())
    except json.JSONDecodeError as exc:
        raise DescriptorError(f"{manifest}: invalid manifest ({exc.msg})") from None
    entries = []
    for item in doc.get("entries", []):
        d = load_descriptor(directory / item["file"])
        segs = tuple(None if s is None else load_descriptor(directory / s) for s in item.get("segments", []))
        entries.append(Entry(item["id"], item.get("label"), d, segs))
    return DescriptorDB(entries)


def pairwise(descriptors, weights: AttributeWeights | None = None, variant: str = "bounded") -> np.ndarray:
    """Symmetric distance matrix over a list of comparable descriptors."""
    n = len(descriptors)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = distance(descriptors[i], descriptors[j], weights, variant)
    return out


def distance_matrix(db: DescriptorDB, weights: AttributeWeights | None = None, variant: str = "bounded") -> np.ndarray:
    if len(db) < 2:
        raise DescriptorError("distance matrix needs at least 2 entries")
    return pairwise([e.descriptor for e in db.entries], weights, variant)


def write_matrix_csv(matrix: np.ndarray, ids, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *ids])
        for i, row in zip(ids, matrix):
            w.writerow([i, *(f"{x:.9f}" for x in row)])
