"""Command-line front end.

Subcommands: synth, convert, episode, infer, finetune, eval, gradcheck,
batch. Exit codes: 0 success, 2 bad input, 3 check failure.
"""

import argparse
import os
import sys

import numpy as np

from . import config as config_mod
from . import episodes as episodes_mod
from . import metrics as metrics_mod
from . import sgt1, store
from .errors import SgfsisError
from .labels import convert_labels, read_label_map, write_label_map
from .pipeline import run_pipeline
from .synthetic import generate_scene
from .watershed import InstanceMask, MarkerMap, derive_markers, fuse_instance_class, watershed_segment

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_CHECK_FAILED = 3


def _load_config(args):
    cfg = config_mod.load(getattr(args, "config", None))
    for name in ("steps", "lr", "seed", "boundary_radius", "centroid_radius"):
        val = getattr(args, name.replace("-", "_"), None)
        if val is not None:
            setattr(cfg, name, val)
    cfg.validate()
    return cfg


def _item_paths(root, item_id):
    return (
        os.path.join(root, f"img_{item_id}.sgt"),
        os.path.join(root, f"lbl_{item_id}.sgt"),
        os.path.join(root, f"lbl_{item_id}.csv"),
    )


def _load_items(root, ids, need_labels=True):
    images, labels = [], []
    for item_id in ids:
        img_p, lbl_p, tbl_p = _item_paths(root, item_id)
        for p in (img_p,) + ((lbl_p, tbl_p) if need_labels else ()):
            if not os.path.exists(p):
                raise FileNotFoundError(p)
        images.append(sgt1.read(img_p).astype(np.float32))
        labels.append(read_label_map(lbl_p, tbl_p) if need_labels else None)
    return images, labels


def cmd_synth(args):
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        image, label = generate_scene(
            args.seed + i, size=args.size, n_classes=args.classes,
            touching=args.touching,
        )
        item = f"{i:04d}"
        img_p, lbl_p, tbl_p = _item_paths(args.out, item)
        sgt1.write(img_p, image)
        write_label_map(lbl_p, tbl_p, label)
    print(f"wrote {args.count} scenes to {args.out}")
    return EXIT_OK


def cmd_convert(args):
    cfg = _load_config(args)
    label = read_label_map(args.label, args.table)
    br, cr = cfg.effective_radii()
    channels = convert_labels(label, br, cr)
    os.makedirs(args.out, exist_ok=True)
    sgt1.write(os.path.join(args.out, "class_masks.sgt"), channels.class_masks)
    sgt1.write(os.path.join(args.out, "foreground.sgt"), channels.foreground)
    sgt1.write(os.path.join(args.out, "boundary.sgt"), channels.boundary)
    sgt1.write(os.path.join(args.out, "centroid.sgt"), channels.centroid)
    with open(os.path.join(args.out, "class_ids.txt"), "w", encoding="utf-8") as fh:
        fh.write(",".join(str(c) for c in channels.class_ids) + "\n")
    return EXIT_OK


def cmd_episode(args):
    root = args.data
    pool = {}
    for name in sorted(os.listdir(root)):
        if name.startswith("lbl_") and name.endswith(".csv"):
            item = name[4:-4]
            with open(os.path.join(root, name), encoding="utf-8") as fh:
                classes = {line.split(",")[2].strip() for line in fh if line.strip()}
            pool[item] = classes
    episode = episodes_mod.sample_episode(pool, args.batch_size, args.seed)
    episodes_mod.write_episode(args.out, episode)
    print(f"episode -> {args.out}")
    return EXIT_OK


def _run(args, steps):
    cfg = _load_config(args)
    cfg.steps = steps if steps is not None else cfg.steps
    support_ids = args.support.split(",")
    query_ids = args.query.split(",") if getattr(args, "query", None) else []
    s_imgs, s_lbls = _load_items(args.data, support_ids)
    q_imgs, _ = _load_items(args.data, query_ids, need_labels=False)
    results, bank, params, losses = run_pipeline(
        s_imgs, s_lbls, q_imgs, cfg.pipeline_config()
    )
    return cfg, query_ids, results, bank, params, losses


def cmd_infer(args):
    cfg, query_ids, results, bank, params, losses = _run(args, None)
    os.makedirs(args.out, exist_ok=True)
    for item_id, res in zip(query_ids, results):
        pre = os.path.join(args.out, f"q{item_id}_")
        sgt1.write(pre + "cls.sgt", res.cls_mask.astype(np.float32))
        sgt1.write(pre + "fg.sgt", res.fg.astype(np.float32))
        sgt1.write(pre + "bd.sgt", res.bd.astype(np.float32))
        sgt1.write(pre + "ct.sgt", res.ct.astype(np.float32))
        sgt1.write(pre + "markers.sgt", res.markers.labels.astype(np.uint32))
        sgt1.write(pre + "instances.sgt", res.instances.labels.astype(np.uint32))
        write_label_map(pre + "fused.sgt", pre + "fused.csv", res.fused)
    return EXIT_OK


def cmd_finetune(args):
    cfg, _, _, bank, params, losses = _run(args, args.steps)
    os.makedirs(args.out, exist_ok=True)
    store.save_bank(os.path.join(args.out, "bank"), bank)
    store.save_params(os.path.join(args.out, "params"), params)
    with open(os.path.join(args.out, "losses.txt"), "w", encoding="utf-8") as fh:
        for loss in losses:
            fh.write(f"{loss:.9f}\n")
    return EXIT_OK


def cmd_eval(args):
    gt = read_label_map(args.gt, args.gt_table)
    pred = read_label_map(args.pred, args.pred_table)
    base = [int(c) for c in args.base_classes.split(",")] if args.base_classes else []
    report = metrics_mod.evaluate(gt, pred, base)
    text = report.as_json() + "\n" if args.json else report.as_text()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args):
    from . import gradcheck

    worst, errors = gradcheck.run(trials=args.trials, seed=args.seed or 0)
    print(f"gradcheck: {len(errors)} trials, worst relative error {worst:.3e}")
    if worst >= gradcheck.REL_TOL:
        print("gradcheck FAILED", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_batch(args):
    """Line-oriented job loop on stdin, for foreign bindings.

    Jobs:
      watershed <fg> <bd> <ct> <t_f> <t_b> <t_c> <out>
      metrics <gt> <gt_csv> <pred> <pred_csv> [base,classes]
      convert <lbl> <csv> <boundary_r> <centroid_r> <out_prefix>
    Replies one line per job: `ok ...` or `err <message>`.
    """
    for raw in sys.stdin:
        parts = raw.strip().split()
        if not parts:
            continue
        try:
            if parts[0] == "watershed":
                fg = sgt1.read(parts[1]).astype(np.float32)
                bd = sgt1.read(parts[2]).astype(np.float32)
                ct = sgt1.read(parts[3]).astype(np.float32)
                t = (float(parts[4]), float(parts[5]), float(parts[6]))
                markers = derive_markers(fg, bd, ct, t)
                inst = watershed_segment(markers, fg, t[0])
                sgt1.write(parts[7], inst.labels.astype(np.uint32))
                print(f"ok {parts[7]}", flush=True)
            elif parts[0] == "metrics":
                gt = read_label_map(parts[1], parts[2])
                pred = read_label_map(parts[3], parts[4])
                base = [int(c) for c in parts[5].split(",")] if len(parts) > 5 else []
                report = metrics_mod.evaluate(gt, pred, base)
                print(f"ok {report.as_json()}", flush=True)
            elif parts[0] == "convert":
                label = read_label_map(parts[1], parts[2])
                ch = convert_labels(label, int(parts[3]), int(parts[4]))
                sgt1.write(parts[5] + "foreground.sgt", ch.foreground)
                sgt1.write(parts[5] + "boundary.sgt", ch.boundary)
                sgt1.write(parts[5] + "centroid.sgt", ch.centroid)
                sgt1.write(parts[5] + "class_masks.sgt", ch.class_masks)
                print(f"ok {parts[5]}", flush=True)
            elif parts[0] == "quit":
                break
            else:
                print(f"err unknown job {parts[0]!r}", flush=True)
        except (SgfsisError, FileNotFoundError, ValueError, IndexError) as exc:
            print(f"err {exc}", flush=True)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sgfsis",
        description="Few-shot nucleus instance segmentation pipeline "
        "(guided masks, marker-guided watershed, metrics).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ellipse dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--touching", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="label conversion to structural channels")
    p.add_argument("--config")
    p.add_argument("--label", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--boundary-radius", type=int)
    p.add_argument("--centroid-radius", type=int)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("episode", help="sample one few-shot episode")
    p.add_argument("--data", required=True)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_episode)

    for name, fn in (("infer", cmd_infer), ("finetune", cmd_finetune)):
        p = sub.add_parser(name, help=f"{name} on a support set")
        p.add_argument("--config")
        p.add_argument("--data", required=True)
        p.add_argument("--support", required=True, help="comma-separated item ids")
        if name == "infer":
            p.add_argument("--query", required=True, help="comma-separated item ids")
        p.add_argument("--out", required=True)
        p.add_argument("--steps", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--seed", type=int)
        p.set_defaults(func=fn)

    p = sub.add_parser("eval", help="evaluate a prediction against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--gt-table", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--pred-table", required=True)
    p.add_argument("--base-classes", default="")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("batch", help="stdin job loop (for bindings)")
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except SgfsisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
