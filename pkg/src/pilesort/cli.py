"""Command line entry points.

    pilesort grasp plan --heightmap scene.hmap --gripper gripper.cfg
    pilesort feedback process --frames frames_dir/
    pilesort experiment run --config exp.cfg --seed 7 --out results/
    pilesort experiment replay --log results/log.csv --out replay/
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import feedback, forest, io, report
from .experiment import (ExperimentConfig, read_log, run, write_log,
                         block_metrics)
from .features import color_feature_matrix, success_feature_matrix
from .grasp import GripperGeometry, apply_openings, closed_grasps, weighted_sample
from .heightmap import RgbMap, UnknownMask, BELT_GRAY
from .report import write_curves_csv


def _load_gripper(path) -> GripperGeometry:
    if path is None:
        return GripperGeometry()
    fields = {f.name for f in dataclasses.fields(GripperGeometry)} - {"opening_curve"}
    kwargs = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#")[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in fields:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            kwargs[key] = float(value.strip())
    return GripperGeometry(**kwargs)


def _cmd_grasp_plan(args) -> int:
    hm = io.read_hmap(args.heightmap)
    gripper = _load_gripper(args.gripper)
    rng = np.random.default_rng(args.seed)
    cands = closed_grasps(hm, gripper, args.angles)
    sampled = weighted_sample(cands, args.sample, rng) if cands else []
    grasps = apply_openings(sampled, hm, gripper)
    out = open(args.out, "w") if args.out else sys.stdout
    out.write("center_x,center_y,angle,inner_span,extra_opening,z,value\n")
    for g in grasps:
        out.write(f"{g.center_x:.3f},{g.center_y:.3f},{g.angle:.6f},"
                  f"{g.inner_span:.3f},{g.extra_opening:.3f},{g.z:.3f},"
                  f"{g.value:.3f}\n")
    if args.out:
        out.close()
    if args.dump_features:
        rgb = io.read_ppm(args.rgb) if args.rgb else RgbMap(
            np.full(hm.data.shape + (3,), BELT_GRAY, dtype=np.uint8))
        um = io.read_pbm(args.unknown) if args.unknown else UnknownMask(
            np.zeros(hm.data.shape, dtype=bool))
        Xs = success_feature_matrix(grasps, hm, rgb, um)
        Xc = color_feature_matrix(grasps, hm, rgb)
        with open(args.dump_features, "w") as f:
            for row in Xs:
                f.write("success," + ",".join(f"{v:.6g}" for v in row) + "\n")
            for row in Xc:
                f.write("color," + ",".join(f"{v:.6g}" for v in row) + "\n")
    return 0


def _cmd_feedback_process(args) -> int:
    stack = io.read_frames(args.frames)
    counts = feedback.result(stack).counts
    print(",".join(str(int(c)) for c in counts))
    return 0


def _cmd_experiment_run(args) -> int:
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    os.makedirs(args.out, exist_ok=True)
    models_dir = os.path.join(args.out, "models")
    os.makedirs(models_dir, exist_ok=True)

    def checkpoint(executed, models):
        if models.success is not None:
            forest.save(models.success, os.path.join(models_dir, "success.json"))
        if isinstance(models.color, forest.Forest):
            forest.save(models.color, os.path.join(models_dir, "color.json"))

    rng = np.random.default_rng(args.seed)
    records = run(config, rng, on_retrain=checkpoint)
    write_log(records, os.path.join(args.out, "log.csv"))
    report.write_report(records, args.out)
    return 0


def _cmd_experiment_replay(args) -> int:
    records = read_log(args.log)
    blocks = block_metrics(records)
    if args.out:
        report.write_report(records, args.out)
    else:
        sys.stdout.write("block,success_rate,purity\n")
        for b, rate, purity in blocks:
            purity_field = "" if purity is None else f"{purity:.6f}"
            sys.stdout.write(f"{b},{rate:.6f},{purity_field}\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pilesort")
    sub = parser.add_subparsers(dest="group", required=True)

    grasp_p = sub.add_parser("grasp", help="grasp planning")
    grasp_sub = grasp_p.add_subparsers(dest="command", required=True)
    plan = grasp_sub.add_parser("plan", help="emit grasp candidates as CSV")
    plan.add_argument("--heightmap", required=True)
    plan.add_argument("--gripper", help="gripper geometry config (key = value)")
    plan.add_argument("--sample", type=int, default=2000)
    plan.add_argument("--seed", type=int, default=0)
    plan.add_argument("--angles", type=int, default=16)
    plan.add_argument("--out", help="write CSV here instead of stdout")
    plan.add_argument("--rgb", help="PPM RGB map for --dump-features")
    plan.add_argument("--unknown", help="PBM unknown mask for --dump-features")
    plan.add_argument("--dump-features", help="write feature CSV rows here")
    plan.set_defaults(func=_cmd_grasp_plan)

    fb_p = sub.add_parser("feedback", help="drop-zone feedback")
    fb_sub = fb_p.add_subparsers(dest="command", required=True)
    process = fb_sub.add_parser("process", help="count colors in a frame stack")
    process.add_argument("--frames", required=True,
                         help="directory of depth_*.hmap + rgb_*.ppm frames")
    process.set_defaults(func=_cmd_feedback_process)

    exp_p = sub.add_parser("experiment", help="the sorting loop")
    exp_sub = exp_p.add_subparsers(dest="command", required=True)
    run_p = exp_sub.add_parser("run", help="run the learning loop")
    run_p.add_argument("--config", help="flat key = value config file")
    run_p.add_argument("--seed", type=int, required=True)
    run_p.add_argument("--out", required=True)
    run_p.set_defaults(func=_cmd_experiment_run)
    replay = exp_sub.add_parser("replay", help="recompute curves from a log")
    replay.add_argument("--log", required=True)
    replay.add_argument("--out", help="write curves.csv + curves.png here")
    replay.set_defaults(func=_cmd_experiment_replay)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
