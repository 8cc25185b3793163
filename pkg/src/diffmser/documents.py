"""Versioned JSON documents, CSV reports and colored PLY export."""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .errors import DataMismatchError

REGIONS_FORMAT = "diffmser-regions"
DESCRIPTORS_FORMAT = "diffmser-descriptors"
DOC_VERSION = 1

# 32 high-contrast colors, cycled by region rank
PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
    (128, 128, 0), (255, 215, 180), (0, 0, 128), (0, 0, 0),
    (255, 255, 255), (255, 0, 0), (0, 255, 0), (0, 0, 255),
    (255, 128, 0), (128, 0, 255), (0, 255, 128), (255, 0, 128),
    (64, 64, 160), (160, 64, 64), (64, 160, 64), (200, 160, 0),
)
NEUTRAL = (128, 128, 128)


def encode_float(x):
    """JSON-safe float: infinities become the strings ``"inf"``/``"-inf"``."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def decode_float(x):
    return float(x)


def write_json(doc, path):
    """Write a document deterministically (sorted keys, fixed indentation)."""
    text = json.dumps(doc, indent=1, sort_keys=True, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def read_document(path, expected_format=None):
    with open(os.fspath(path), encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataMismatchError(f"{path}: not a JSON document ({exc})") from exc
    fmt = doc.get("format") if isinstance(doc, dict) else None
    if fmt not in (REGIONS_FORMAT, DESCRIPTORS_FORMAT) or doc.get("version") != DOC_VERSION:
        raise DataMismatchError(f"{path}: not a version-{DOC_VERSION} diffmser document")
    if expected_format is not None and fmt != expected_format:
        raise DataMismatchError(f"{path}: expected a {expected_format!r} document, got {fmt!r}")
    return doc


def regions_document(regions, mesh_hash, n_vertices, total_area, config):
    return {
        "format": REGIONS_FORMAT,
        "version": DOC_VERSION,
        "mesh_hash": mesh_hash,
        "n_vertices": int(n_vertices),
        "total_area": float(total_area),
        "config": config,
        "regions": [r.to_dict() for r in regions],
    }


def document_regions(doc):
    """Vertex arrays of the regions in a regions or descriptors document."""
    return [np.asarray(r["vertices"], dtype=np.int64) for r in doc["regions"]]


def check_mesh(doc, mesh, what="document"):
    if doc["mesh_hash"] != mesh.content_hash:
        raise DataMismatchError(f"{what} was produced for a different mesh")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def region_colors(n_vertices, regions):
    """Per-vertex RGB; larger regions are painted first so nested ones stay visible."""
    colors = np.tile(np.array(NEUTRAL, dtype=np.uint8), (n_vertices, 1))
    ranked = list(enumerate(regions))
    ranked.sort(key=lambda item: (-len(item[1]), item[0]))
    for rank, verts in ranked:
        verts = np.asarray(verts, dtype=np.int64)
        if verts.size and (verts.min() < 0 or verts.max() >= n_vertices):
            raise DataMismatchError(f"region {rank} has a vertex index outside [0, {n_vertices})")
        colors[verts] = PALETTE[rank % len(PALETTE)]
    return colors


def write_colored_ply(mesh, regions, path):
    """ASCII PLY of ``mesh`` with region colors (unassigned vertices gray)."""
    colors = region_colors(mesh.n_vertices, regions)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("ply\nformat ascii 1.0\ncomment diffmser regions\n")
        fh.write(f"element vertex {mesh.n_vertices}\n")
        fh.write("property double x\nproperty double y\nproperty double z\n")
        fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write(f"element face {mesh.n_faces}\n")
        fh.write("property list uchar int vertex_indices\nend_header\n")
        for (x, y, z), (r, g, b) in zip(mesh.positions.tolist(), colors.tolist()):
            fh.write(f"{x!r} {y!r} {z!r} {r} {g} {b}\n")
        for a, b, c in mesh.faces.tolist():
            fh.write(f"3 {a} {b} {c}\n")
