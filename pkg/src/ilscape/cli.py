"""``ilscape`` command line: encode scenes, compare descriptors and run the analyses."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
import traceback
import warnings
from pathlib import Path

import numpy as np

from ilscape import __version__
from ilscape.analysis import (
    DescriptorDB,
    Entry,
    correspondence,
    distance_matrix,
    evaluate_prediction,
    export_obj,
    leave_one_out,
    load_db,
    mds_embed,
    predict,
    retrieve,
    saliency,
    scan_directory,
    segment_signatures,
    write_manifest,
    write_matches_csv,
    write_matrix_csv,
    write_points_csv,
    write_pr_csv,
    write_svg,
)
from ilscape.analysis.retrieval import RECALL_GRID, write_ranking_csv
from ilscape.analysis.saliency import SaliencyMap
from ilscape.config import ConfigError, SceneConfig, load_config, load_weights
from ilscape.descriptor import (
    ATTRIBUTES,
    VARIANTS,
    AttributeWeights,
    IncomparableError,
    InvariantError,
    attribute_distances,
    distance,
    load_descriptor,
    save_descriptor,
)
from ilscape.geometry import load_mesh, save_obj
from ilscape.parallel import worker_count
from ilscape.pipeline import EncodingParams, Scene
from ilscape.shapes import PRIMITIVES
from ilscape.trajectory import PRESETS, read_trajectories, synthesize, write_trajectories

EXIT_OK, EXIT_INPUT, EXIT_INCOMPARABLE, EXIT_INTERNAL = 0, 1, 2, 3
log = logging.getLogger("ilscape")


def _value(text: str):
    """Parse ``key=value`` right-hand sides: JSON when possible, else a plain string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _params(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise ValueError(f"expected key=value, got {item!r}")
        out[key.strip()] = _value(val.strip())
    return out


def _weights(args) -> AttributeWeights:
    return load_weights(args.weights) if getattr(args, "weights", None) else AttributeWeights()


# --- scene helpers -------------------------------------------------------------

def _scene_config(args) -> SceneConfig:
    cfg = load_config(args.scene) if args.scene else SceneConfig()
    size = args.domain_size
    if size is not None and size != "auto":
        size = float(size)
    spacing = args.sample_spacing
    if spacing is not None and spacing != "auto":
        spacing = float(spacing)
    cfg = cfg.override(
        mesh=args.mesh, trajectories=args.trajectories, preset=args.preset, domain_size=size,
        up_axis=args.up_axis, sample_spacing=spacing, max_depth=args.max_depth, dt=args.dt,
        resolution=args.resolution, norm_mode=args.norm_mode, bins=args.bins, seed=args.seed, label=args.label,
    )
    if args.param:
        cfg = cfg.override(preset_params={**cfg.preset_params, **_params(args.param)})
    if cfg.mesh is None:
        raise ConfigError("no mesh given (set mesh in the scene file or pass --mesh)")
    if cfg.trajectories is None and cfg.preset is None:
        raise ConfigError("no motion given (set trajectories or preset)")
    return cfg


def _build(cfg: SceneConfig):
    mesh = load_mesh(cfg.mesh)
    scene = Scene.build(
        mesh, cfg.domain_size, cfg.up_axis, None if cfg.sample_spacing == "auto" else cfg.sample_spacing,
        cfg.max_depth, cfg.seed,
    )
    if cfg.trajectories is not None:
        ts = read_trajectories(cfg.trajectories)
    else:
        ts = synthesize(cfg.preset, cfg.preset_params, seed=cfg.seed, mesh=mesh)
    if cfg.label is not None:
        ts = ts.with_label(cfg.label)
    params = EncodingParams(cfg.resolution, cfg.norm_mode, cfg.bins, cfg.scales, cfg.dt)
    return mesh, scene, ts, params


def _scene_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", help="scene configuration (TOML)")
    p.add_argument("--mesh", help="observed mesh (OBJ)")
    p.add_argument("--trajectories", help="trajectory CSV")
    p.add_argument("--preset", choices=PRESETS, help="synthetic motion preset")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="preset parameter (repeatable)")
    p.add_argument("--domain-size", help="interaction space edge, or 'auto'")
    p.add_argument("--up-axis", choices=("x", "y", "z"))
    p.add_argument("--sample-spacing", help="surface sample spacing c, or 'auto'")
    p.add_argument("--max-depth", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--resolution", type=int)
    p.add_argument("--norm-mode", choices=("average", "direction"))
    p.add_argument("--bins", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--label")


# --- commands ------------------------------------------------------------------

def cmd_encode(args) -> int:
    start = time.perf_counter()
    cfg = _scene_config(args)
    _, scene, ts, params = _build(cfg)
    enc = scene.analyze(ts, params, args.t0, args.t1)
    out = Path(args.out)
    save_descriptor(enc.descriptor, out)
    written = [str(out)]
    if args.segments:
        sig = segment_signatures(scene, ts, args.segments, params, label=enc.descriptor.label)
        stem = out.name[: -len(".ild")] if out.name.endswith(".ild") else out.name
        for k, d in enumerate(sig.descriptors, 1):
            if d is not None:
                path = out.with_name(f"{stem}.seg{k}.ild")
                save_descriptor(d, path)
                written.append(str(path))
    elapsed = time.perf_counter() - start
    print(f"active sensors: {enc.descriptor.active_sensors} of {scene.tree.n_leaves}")
    print(f"trajectory samples: {enc.n_samples}")
    print(f"wall time: {elapsed:.3f} s")
    for w in written:
        print(f"wrote {w}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = load_descriptor(args.a), load_descriptor(args.b)
    w = _weights(args)
    if args.per_attribute:
        per = attribute_distances(a, b, args.variant)
        for name, v in zip(ATTRIBUTES, per):
            print(f"{name} {v:.6f}")
    print(f"{distance(a, b, w, args.variant):.6f}")
    return EXIT_OK


def cmd_gen(args) -> int:
    params = _params(args.param)
    for key in ("count", "duration", "dt", "label"):
        v = getattr(args, key)
        if v is not None:
            params[key] = v
    mesh = load_mesh(args.mesh) if args.mesh else None
    ts = synthesize(args.preset, params, seed=args.seed, mesh=mesh)
    write_trajectories(ts, args.out)
    print(f"wrote {len(ts)} samples of {ts.n_particles} particles to {args.out}")
    return EXIT_OK


def cmd_shape(args) -> int:
    params = _params(args.param)
    mesh = PRIMITIVES[args.name](**params)
    save_obj(mesh, args.out)
    print(f"wrote {len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles to {args.out}")
    return EXIT_OK


def cmd_db_build(args) -> int:
    db = scan_directory(args.dir)
    path = write_manifest(db, args.dir)
    for e in db.entries:
        print(f"{e.id}\t{e.label or ''}\t{len(e.segments)} segments")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_db_matrix(args) -> int:
    db = load_db(args.dir)
    m = distance_matrix(db, _weights(args), args.variant)
    write_matrix_csv(m, db.ids, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _mean_pr_rows(grid, mean):
    return np.column_stack([grid, mean])


def cmd_db_retrieve(args) -> int:
    db = load_db(args.dir)
    w = _weights(args)
    if args.query:
        q = load_descriptor(args.query)
        res = retrieve(db, q, args.top_k, label=args.label, exclude=args.exclude, weights=w, variant=args.variant,
                       want_pr=(args.label or q.label) is not None)
        for i, r in enumerate(res.ranking, 1):
            print(f"{i}\t{r.id}\t{r.label or ''}\t{r.distance:.6f}")
        if args.out_pr:
            write_pr_csv(res.pr, args.out_pr)
            if res.pr is None:
                print("precision/recall undefined: no relevant entries", file=sys.stderr)
        if args.out_ranking:
            write_ranking_csv(res.ranking, args.out_ranking)
        return EXIT_OK
    ev = leave_one_out(db, w, args.variant)
    print(f"leave-one-out nearest-neighbour accuracy: {ev.accuracy:.4f}")
    print(f"mean precision at recall 0.5: {ev.precision_at_half:.4f}")
    if args.out_pr:
        write_pr_csv(_mean_pr_rows(ev.grid, ev.mean_precision), args.out_pr)
    return EXIT_OK


def cmd_db_mds(args) -> int:
    db = load_db(args.dir)
    m = distance_matrix(db, _weights(args), args.variant)
    emb = mds_embed(m)
    if args.out_csv:
        write_points_csv(db.ids, db.labels, emb.points, args.out_csv)
    write_svg(db.ids, db.labels, emb.points, args.out_svg, args.title or "")
    print(f"embedding error (Frobenius): {emb.error:.6g}")
    print(f"wrote {args.out_svg}")
    return EXIT_OK


def cmd_db_predict(args) -> int:
    db = load_db(args.dir)
    w = _weights(args)
    if args.query:
        q = load_descriptor(args.query)
        res = predict(db, q, args.k, label=args.label, exclude=args.exclude, weights=w, variant=args.variant)
        for i, r in enumerate(res.ranking, 1):
            print(f"{i}\t{r.id}\t{r.label or ''}\t{r.distance:.6f}")
        if res.pr is None:
            print("precision/recall undefined for this query", file=sys.stderr)
        if args.out_pr:
            write_pr_csv(res.pr, args.out_pr)
        return EXIT_OK
    reports = evaluate_prediction(db, w, args.variant)
    lines = ["k,precision_at_recall_0.5,nearest_accuracy,queries"]
    for r in reports:
        lines.append(f"{r.k},{r.precision_at_half:.6f},{r.nearest_accuracy:.6f},{r.queries}")
        print(f"k={r.k}: precision@recall0.5 {r.precision_at_half:.4f}, nearest accuracy {r.nearest_accuracy:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text("\n".join(lines) + "\n")
        for r in reports:
            write_pr_csv(_mean_pr_rows(RECALL_GRID, r.mean_precision), out / f"pr_k{r.k}.csv")
        print(f"wrote {out}")
    return EXIT_OK


def cmd_saliency(args) -> int:
    cfg = _scene_config(args)
    mesh, scene, ts, params = _build(cfg)
    enc = scene.analyze(ts, params, args.t0, args.t1)
    w = load_weights(args.weights) if args.weights else cfg.attribute_weights
    smap = saliency(scene, enc, w, args.radius)
    smap.to_csv(args.out_csv)
    written = [args.out_csv]
    if args.out_obj:
        export_obj(mesh, smap, args.out_obj)
        written.append(args.out_obj)
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def _read_saliency(path, n_vertices: int) -> SaliencyMap:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected columns vertex_id,saliency")
    values = np.zeros(n_vertices)
    ids = data[:, 0].astype(np.int64)
    if len(ids) != n_vertices or ids.min() < 0 or ids.max() >= n_vertices:
        raise ValueError(f"{path}: saliency rows do not match the mesh's {n_vertices} vertices")
    values[ids] = data[:, 1]
    return SaliencyMap(values, math.nan, AttributeWeights())


def cmd_correspond(args) -> int:
    m1, m2 = load_mesh(args.mesh1), load_mesh(args.mesh2)
    s1 = _read_saliency(args.saliency1, len(m1.vertices))
    s2 = _read_saliency(args.saliency2, len(m2.vertices))
    matches = correspondence(m1, s1, m2, s2, args.grid, args.min_saliency)
    if args.out:
        write_matches_csv(matches, args.out)
    for m in matches[: args.top]:
        print(f"{m.cell[0]},{m.cell[1]},{m.cell[2]}\t{m.score:.6f}")
    print(f"{len(matches)} matched cells")
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ilscape", description=__doc__)
    p.add_argument("--version", action="version", version=f"ilscape {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("encode", help="encode a scene into an .ild descriptor")
    _scene_args(e)
    e.add_argument("--out", required=True)
    e.add_argument("--t0", type=float)
    e.add_argument("--t1", type=float)
    e.add_argument("--segments", type=int, help="also write N cumulative-window descriptors stem.segK.ild")
    e.set_defaults(func=cmd_encode)

    c = sub.add_parser("compare", help="distance between two descriptors")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--weights", help="attribute weights (TOML)")
    c.add_argument("--variant", choices=VARIANTS, default="bounded")
    c.add_argument("--per-attribute", action="store_true")
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("gen", help="synthesize trajectories")
    g.add_argument("--preset", choices=PRESETS, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int)
    g.add_argument("--duration", type=float)
    g.add_argument("--dt", type=float)
    g.add_argument("--label")
    g.add_argument("--mesh", help="target mesh for the converge preset")
    g.add_argument("--param", action="append", metavar="KEY=VALUE")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("shape", help="write a primitive mesh as OBJ")
    s.add_argument("name", choices=sorted(PRIMITIVES))
    s.add_argument("--out", required=True)
    s.add_argument("--param", action="append", metavar="KEY=VALUE")
    s.set_defaults(func=cmd_shape)

    db = sub.add_parser("db", help="descriptor database tools")
    dsub = db.add_subparsers(dest="db_command", required=True)

    def db_common(q):
        q.add_argument("dir", help="directory of .ild files")
        q.add_argument("--weights")
        q.add_argument("--variant", choices=VARIANTS, default="bounded")

    b = dsub.add_parser("build", help="index a directory of .ild files into manifest.json")
    b.add_argument("dir")
    b.set_defaults(func=cmd_db_build)

    m = dsub.add_parser("matrix", help="pairwise distance matrix CSV")
    db_common(m)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_db_matrix)

    r = dsub.add_parser("retrieve", help="rank entries for a query, or leave-one-out without one")
    db_common(r)
    r.add_argument("--query")
    r.add_argument("--top-k", type=int)
    r.add_argument("--label", help="relevant class (default: the query's label)")
    r.add_argument("--exclude", help="entry id to leave out")
    r.add_argument("--out-pr", help="recall,precision CSV")
    r.add_argument("--out-ranking")
    r.set_defaults(func=cmd_db_retrieve)

    md = dsub.add_parser("mds", help="2D embedding as CSV and SVG")
    db_common(md)
    md.add_argument("--out-svg", required=True)
    md.add_argument("--out-csv")
    md.add_argument("--title")
    md.set_defaults(func=cmd_db_mds)

    pr = dsub.add_parser("predict", help="early recognition from segment descriptors")
    db_common(pr)
    pr.add_argument("--query", help="segment descriptor of the query")
    pr.add_argument("--k", type=int, help="segment index of --query")
    pr.add_argument("--label")
    pr.add_argument("--exclude")
    pr.add_argument("--out-pr")
    pr.add_argument("--out", help="directory for the leave-one-out report")
    pr.set_defaults(func=cmd_db_predict)

    sa = sub.add_parser("saliency", help="per-vertex saliency of the observed mesh")
    _scene_args(sa)
    sa.add_argument("--radius", type=float, default=0.0)
    sa.add_argument("--weights")
    sa.add_argument("--t0", type=float)
    sa.add_argument("--t1", type=float)
    sa.add_argument("--out-csv", required=True)
    sa.add_argument("--out-obj")
    sa.set_defaults(func=cmd_saliency)

    co = sub.add_parser("correspond", help="match salient regions of two meshes")
    co.add_argument("--mesh1", required=True)
    co.add_argument("--saliency1", required=True)
    co.add_argument("--mesh2", required=True)
    co.add_argument("--saliency2", required=True)
    co.add_argument("--grid", type=int, default=8)
    co.add_argument("--min-saliency", type=float, default=0.0)
    co.add_argument("--top", type=int, default=10)
    co.add_argument("--out")
    co.set_defaults(func=cmd_correspond)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "db_command", None) == "predict" and args.query and args.k is None:
        parser.error("--query needs --k")
    try:
        worker_count()  # reject a malformed ILSCAPE_THREADS up front
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except IncomparableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPARABLE
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:  # any other failure is a bug
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
