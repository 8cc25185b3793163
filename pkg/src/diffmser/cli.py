"""Command-line pipeline: spectra, detection, descriptors, evaluation, export.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 inconsistent data.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import logging
import math
import os
import sys
import warnings

import numpy as np

from . import documents as docs
from .component_tree import WeightedGraph, build_tree
from .descriptors import (
    DEFAULT_HKS_TIMES,
    DEFAULT_SIHKS_FREQS,
    Vocabulary,
    build_vocabulary,
    hks_field,
    quantize_field,
    region_average,
    region_bof,
    sihks_field,
)
from .detector import DetectorParams, detect
from .errors import DataMismatchError, NumericalError
from .evaluation import (
    Correspondence,
    descriptor_roc,
    image_overlaps,
    matching_score,
    repeatability,
)
from .laplacian import laplacian_pair
from .mesh import MeshError, load_mesh, vertex_areas
from .spectral import eigenpairs, load_basis, read_cache_header, save_basis
from .weighting import WeightingSpec, default_max_instability, weighted_graph

logger = logging.getLogger("diffmser")

DESCRIPTOR_KINDS = ("hks-avg", "hks-bof", "sihks-avg", "sihks-bof")
DEFAULT_OVERLAPS = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
REPORT_OVERLAP = 0.75


class ConfigError(ValueError):
    """Invalid command-line configuration."""


def _file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _load_checked_basis(mesh, cache):
    W, _, _ = laplacian_pair(mesh)
    return load_basis(cache, mesh=mesh, W=W)


# --- spectrum -------------------------------------------------------------


def cmd_spectrum(mesh_path, k, cache_path, seed=0, maxiter=None):
    """Solve for ``k`` eigenpairs of a mesh and write the spectral cache.

    Returns ``False`` when an existing valid cache already matches the mesh
    and ``k`` (nothing is recomputed), ``True`` otherwise.
    """
    mesh = load_mesh(mesh_path)
    if not 1 <= k <= mesh.n_vertices:
        raise ConfigError(f"k = {k} must be in [1, {mesh.n_vertices}] for {mesh_path}")
    if os.path.exists(cache_path):
        try:
            mesh_hash, n, cached_k = read_cache_header(cache_path)
            if mesh_hash == mesh.content_hash and n == mesh.n_vertices and cached_k == k:
                _load_checked_basis(mesh, cache_path)
                logger.info("%s is up to date", cache_path)
                return False
        except (DataMismatchError, NumericalError, OSError, KeyError, ValueError):
            logger.info("recomputing stale or invalid cache %s", cache_path)
    W, A, _ = laplacian_pair(mesh)
    basis = eigenpairs(W, A, k, seed=seed, maxiter=maxiter)
    save_basis(basis, cache_path, mesh.content_hash)
    logger.info("wrote %s (N=%d, k=%d)", cache_path, mesh.n_vertices, k)
    return True


# --- detect ---------------------------------------------------------------


def detect_config(weight=None, field_digest=None, params=None, k=None):
    params = params or DetectorParams()
    return {
        "weight": str(weight) if weight is not None else None,
        "field_sha256": field_digest,
        "k": k,
        "max_instability": docs.encode_float(params.max_instability),
        "overlap_dedup": params.overlap_dedup,
        "min_region_frac": params.min_region_frac,
        "max_region_frac": params.max_region_frac,
    }


def read_field(path, n):
    values = np.loadtxt(path, dtype=float, ndmin=1)
    if values.shape != (n,):
        raise DataMismatchError(f"{path}: expected {n} vertex weights, got {values.size}")
    return values


def cmd_detect(
    mesh_path, out_path, cache_path=None, weight=None, field_path=None,
    max_instability=None, overlap_dedup=0.8, min_frac=0.005, max_frac=0.5,
):
    """Detect maximally stable regions and write a regions document.

    Exactly one of ``weight`` (a weighting string, needs ``cache_path``) and
    ``field_path`` (a text file with one vertex weight per line) is used.
    ``max_instability=None`` takes the default cutoff of the weighting.
    """
    if (weight is None) == (field_path is None):
        raise ConfigError("give exactly one of --weight and --field")
    mesh = load_mesh(mesh_path)
    spec = None
    digest = None
    k = None
    if weight is not None:
        spec = WeightingSpec.parse(weight) if isinstance(weight, str) else weight
        if cache_path is None:
            raise ConfigError("--weight needs --cache")
        basis = _load_checked_basis(mesh, cache_path)
        k = basis.k
        graph = weighted_graph(spec, basis, mesh.edges)
        if max_instability is None:
            max_instability = default_max_instability(spec)
    else:
        digest = _file_digest(field_path)
        f = read_field(field_path, mesh.n_vertices)
        graph = WeightedGraph(mesh.n_vertices, mesh.edges, vertex_weights=f, areas=vertex_areas(mesh))
        if max_instability is None:
            max_instability = math.inf
    params = DetectorParams(max_instability, overlap_dedup, min_frac, max_frac)
    total_area = float(graph.areas.sum())
    regions = detect(build_tree(graph), params, total_area=total_area)
    doc = docs.regions_document(
        regions, mesh.content_hash, mesh.n_vertices, total_area,
        detect_config(spec, digest, params, k),
    )
    docs.write_json(doc, out_path)
    return doc


# --- descriptors ----------------------------------------------------------


def _point_field(kind, basis, times):
    if kind.startswith("hks"):
        return hks_field(basis, times)
    return sihks_field(basis, num_freqs=DEFAULT_SIHKS_FREQS)


def cmd_vocab(pairs, kind, p, out_path, seed=0, times=DEFAULT_HKS_TIMES):
    """Train a vocabulary on the point descriptors of ``(mesh, cache)`` pairs."""
    fields = []
    for mesh_path, cache_path in pairs:
        mesh = load_mesh(mesh_path)
        fields.append(_point_field(kind, _load_checked_basis(mesh, cache_path), times))
    vocab = build_vocabulary(fields, p, seed=seed)
    vocab.save(out_path)
    return vocab


def cmd_describe(
    regions_path, mesh_path, cache_path, kind, out_path, vocab_path=None, sigma=None,
    times=DEFAULT_HKS_TIMES,
):
    """Compute a region descriptor for every region of a regions document."""
    if kind not in DESCRIPTOR_KINDS:
        raise ConfigError(f"descriptor must be one of {', '.join(DESCRIPTOR_KINDS)}")
    doc = docs.read_document(regions_path, docs.REGIONS_FORMAT)
    mesh = load_mesh(mesh_path)
    docs.check_mesh(doc, mesh, str(regions_path))
    vocab = None
    if kind.endswith("bof"):
        if vocab_path is None:
            raise ConfigError(f"{kind} needs a vocabulary (--vocab)")
        vocab = Vocabulary.load(vocab_path)
    basis = _load_checked_basis(mesh, cache_path)
    field = _point_field(kind, basis, times)
    areas = basis.areas
    if vocab is not None:
        if vocab.centroids.shape[1] != field.dim:
            raise DataMismatchError(
                f"vocabulary dimension {vocab.centroids.shape[1]} != descriptor dimension {field.dim}"
            )
        theta = quantize_field(field, vocab, sigma)
    vectors = []
    for verts in docs.document_regions(doc):
        if vocab is None:
            vectors.append(region_average(field, verts, areas).values)
        else:
            vectors.append(region_bof(theta, verts, areas).values)

    out = dict(doc)
    out["format"] = docs.DESCRIPTORS_FORMAT
    out["config"] = dict(doc["config"])
    out["config"]["descriptor"] = {
        "kind": kind,
        "params": [float(x) for x in field.params],
        "vocab_sha256": _file_digest(vocab_path) if vocab is not None else None,
        "sigma": None if vocab is None else float(vocab.sigma if sigma is None else sigma),
    }
    out["regions"] = [
        dict(r, descriptor=[float(x) for x in v]) for r, v in zip(doc["regions"], vectors)
    ]
    docs.write_json(out, out_path)
    return out


# --- evaluation -----------------------------------------------------------


def _pair_inputs(null_mesh_path, null_doc_path, mesh_path, doc_path, corr_path, sym_path):
    null_mesh = load_mesh(null_mesh_path)
    mesh = load_mesh(mesh_path)
    null_doc = docs.read_document(null_doc_path)
    doc = docs.read_document(doc_path)
    docs.check_mesh(null_doc, null_mesh, str(null_doc_path))
    docs.check_mesh(doc, mesh, str(doc_path))
    corr = Correspondence.load(corr_path, null_mesh.n_vertices, sym_path)
    if corr.n_transformed != mesh.n_vertices:
        raise DataMismatchError(
            f"{corr_path}: {corr.n_transformed} entries for a mesh with {mesh.n_vertices} vertices"
        )
    return null_mesh, null_doc, doc, corr


def cmd_eval(pairs, out_dir, overlaps=DEFAULT_OVERLAPS, rho=REPORT_OVERLAP):
    """Evaluate detector repeatability (and descriptors, if present).

    Parameters
    ----------
    pairs : list of dict
        Keys ``null_mesh``, ``null_doc``, ``mesh``, ``doc``, ``corr`` and
        optionally ``corr_sym``.
    out_dir : path
        Receives ``repeatability.csv``, ``summary.json`` and, when every
        document carries descriptors, ``roc.csv`` and ``matching.csv``.
    """
    overlaps = sorted(set(float(o) for o in overlaps) | {REPORT_OVERLAP})
    os.makedirs(out_dir, exist_ok=True)
    reps, counts, n_regions, per_pair = [], [], [], []
    all_d, all_o, match_d, match_o = [], [], [], []
    with_desc = True
    for pair in pairs:
        null_mesh, null_doc, doc, corr = _pair_inputs(
            pair["null_mesh"], pair["null_doc"], pair["mesh"], pair["doc"],
            pair["corr"], pair.get("corr_sym"),
        )
        null_regions = docs.document_regions(null_doc)
        regions = docs.document_regions(doc)
        null_areas = vertex_areas(null_mesh)
        curve = repeatability(null_regions, regions, corr, null_areas, overlaps)
        reps.append(curve.repeatability)
        counts.append(curve.correspondences)
        n_regions.append(curve.n_regions)
        r75, c75 = curve.at(REPORT_OVERLAP)
        per_pair.append(
            {
                "doc": os.path.basename(str(pair["doc"])),
                "null_doc": os.path.basename(str(pair["null_doc"])),
                "n_regions": curve.n_regions,
                "n_valid": curve.n_valid,
                "n_null_regions": len(null_regions),
                "repeatability@0.75": r75,
                "correspondences@0.75": c75,
            }
        )
        has_desc = all("descriptor" in r for r in doc["regions"] + null_doc["regions"])
        with_desc = with_desc and has_desc
        if has_desc and regions and null_regions:
            beta_y = np.array([r["descriptor"] for r in doc["regions"]])
            beta_x = np.array([r["descriptor"] for r in null_doc["regions"]])
            if beta_y.shape[1] != beta_x.shape[1]:
                raise DataMismatchError("descriptor dimensions differ between documents")
            O, _ = image_overlaps(null_regions, regions, corr, null_areas)
            D = np.linalg.norm(beta_y[:, None, :] - beta_x[None, :, :], axis=2)
            all_d.append(D.ravel())
            all_o.append(O.ravel())
            match_d.append(D.T)
            match_o.append(O.T)

    if not pairs:
        raise ConfigError("no shape pairs to evaluate")
    if sum(n_regions) == 0:
        warnings.warn("all transformed-shape region documents are empty", stacklevel=2)
    mean_rep = np.mean(reps, axis=0)
    mean_cnt = np.mean(counts, axis=0)
    docs.write_csv(
        os.path.join(out_dir, "repeatability.csv"),
        ["overlap", "repeatability", "correspondences"],
        zip(overlaps, mean_rep.tolist(), mean_cnt.tolist()),
    )
    i75 = overlaps.index(REPORT_OVERLAP)
    summary = {
        "pairs": len(pairs),
        "avg_regions": float(np.mean(n_regions)),
        "repeatability@0.75": float(mean_rep[i75]),
        "correspondences@0.75": float(mean_cnt[i75]),
        "per_pair": per_pair,
        "eer": None,
        "matching_score@0.75": None,
    }

    if with_desc and all_d:
        d = np.concatenate(all_d)
        o = np.concatenate(all_o)
        try:
            roc = descriptor_roc(d, o, rho)
        except ValueError as exc:
            warnings.warn(f"ROC not computed: {exc}", stacklevel=2)
        else:
            summary["eer"] = None if math.isnan(roc.eer) else float(roc.eer)
            summary["roc_pairs"] = {"positive": roc.n_positive, "negative": roc.n_negative}
            docs.write_csv(
                os.path.join(out_dir, "roc.csv"),
                ["threshold", "fpr", "tpr"],
                zip(map(docs.encode_float, roc.thresholds.tolist()), roc.fpr.tolist(), roc.tpr.tolist()),
            )
        correct = np.zeros(len(overlaps), dtype=np.int64)
        m_total = 0
        for D, O in zip(match_d, match_o):
            ms = matching_score(D, O, overlaps)
            correct += ms.correct
            m_total += ms.m
        scores = correct / m_total
        summary["matching_score@0.75"] = float(scores[i75])
        docs.write_csv(
            os.path.join(out_dir, "matching.csv"),
            ["overlap", "score", "correct_first_matches"],
            zip(overlaps, scores.tolist(), correct.tolist()),
        )
    docs.write_json(summary, os.path.join(out_dir, "summary.json"))
    return summary


def cmd_export_ply(mesh_path, regions_path, out_path):
    mesh = load_mesh(mesh_path)
    doc = docs.read_document(regions_path)
    docs.check_mesh(doc, mesh, str(regions_path))
    docs.write_colored_ply(mesh, docs.document_regions(doc), out_path)


# --- argument parsing -----------------------------------------------------


def _float(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(
        prog="diffmser",
        description="Diffusion-geometric maximally stable component detection on triangle meshes.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="compute and cache Laplacian eigenpairs")
    p.add_argument("--mesh", action="append", required=True)
    p.add_argument("--k", type=int, default=200)
    p.add_argument("--cache", help="cache path (single mesh)")
    p.add_argument("--out", help="directory for <mesh-name>.npz caches")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--maxiter", type=int)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("detect", help="detect maximally stable regions")
    p.add_argument("--mesh", required=True)
    p.add_argument("--cache")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--weight", help="weighting, e.g. vw:heat:t=2048 or ew:invct")
    g.add_argument("--field", help="text file with one vertex weight per line")
    p.add_argument("--max-instability", type=_float)
    p.add_argument("--dedup", type=_float, default=0.8)
    p.add_argument("--no-dedup", action="store_true")
    p.add_argument("--min-frac", type=_float, default=0.005)
    p.add_argument("--max-frac", type=_float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("vocab", help="train a bag-of-features vocabulary")
    p.add_argument("--mesh", action="append", required=True)
    p.add_argument("--cache", action="append", required=True)
    p.add_argument("--descriptor", choices=("hks", "sihks"), default="sihks")
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--times", type=_float, nargs="+", default=list(DEFAULT_HKS_TIMES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("describe", help="compute region descriptors")
    p.add_argument("--regions", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--descriptor", choices=DESCRIPTOR_KINDS, default="sihks-avg")
    p.add_argument("--vocab")
    p.add_argument("--sigma", type=_float)
    p.add_argument("--times", type=_float, nargs="+", default=list(DEFAULT_HKS_TIMES))
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate repeatability and descriptor performance")
    p.add_argument("--null-mesh", action="append", required=True)
    p.add_argument("--null-regions", action="append", required=True)
    p.add_argument("--mesh", action="append", required=True)
    p.add_argument("--regions", action="append", required=True)
    p.add_argument("--corr", action="append", required=True)
    p.add_argument("--corr-sym", action="append")
    p.add_argument("--overlap", type=_float, action="append")
    p.add_argument("--rho", type=_float, default=REPORT_OVERLAP)
    p.add_argument("--out", required=True)

    p = sub.add_parser("export-ply", help="write a region-colored PLY")
    p.add_argument("--mesh", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--out", required=True)
    return parser


def _cache_target(mesh_path, args):
    if args.cache:
        return args.cache
    stem = os.path.splitext(os.path.basename(mesh_path))[0]
    return os.path.join(args.out, stem + ".npz")


def _run(args):
    if args.command == "spectrum":
        if args.cache and len(args.mesh) > 1:
            raise ConfigError("--cache takes a single --mesh; use --out for several")
        if not args.cache and not args.out:
            raise ConfigError("give --cache or --out")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
        jobs = [(m, args.k, _cache_target(m, args), args.seed, args.maxiter) for m in args.mesh]
        if args.jobs > 1 and len(jobs) > 1:
            with concurrent.futures.ProcessPoolExecutor(args.jobs) as pool:
                list(pool.map(cmd_spectrum, *zip(*jobs)))
        else:
            for job in jobs:
                cmd_spectrum(*job)
    elif args.command == "detect":
        cmd_detect(
            args.mesh, args.out, cache_path=args.cache, weight=args.weight,
            field_path=args.field, max_instability=args.max_instability,
            overlap_dedup=None if args.no_dedup else args.dedup,
            min_frac=args.min_frac, max_frac=args.max_frac,
        )
    elif args.command == "vocab":
        if len(args.mesh) != len(args.cache):
            raise ConfigError("--mesh and --cache must be given the same number of times")
        cmd_vocab(list(zip(args.mesh, args.cache)), args.descriptor, args.p, args.out,
                  seed=args.seed, times=args.times)
    elif args.command == "describe":
        cmd_describe(args.regions, args.mesh, args.cache, args.descriptor, args.out,
                     vocab_path=args.vocab, sigma=args.sigma, times=args.times)
    elif args.command == "eval":
        n = len(args.regions)
        lists = [args.null_mesh, args.null_regions, args.mesh, args.corr]
        if any(len(x) != n for x in lists) or (args.corr_sym and len(args.corr_sym) != n):
            raise ConfigError("pair flags must be repeated the same number of times")
        pairs = [
            {
                "null_mesh": args.null_mesh[i], "null_doc": args.null_regions[i],
                "mesh": args.mesh[i], "doc": args.regions[i], "corr": args.corr[i],
                "corr_sym": args.corr_sym[i] if args.corr_sym else None,
            }
            for i in range(n)
        ]
        cmd_eval(pairs, args.out, overlaps=args.overlap or DEFAULT_OVERLAPS, rho=args.rho)
    elif args.command == "export-ply":
        cmd_export_ply(args.mesh, args.regions, args.out)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _run(args)
    except NumericalError as exc:
        print(f"diffmser: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (DataMismatchError, MeshError) as exc:
        print(f"diffmser: inconsistent data: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"diffmser: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
