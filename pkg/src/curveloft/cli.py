"""Command-line interface.

Subcommands:
    train <curves> [--config <json>] [--out <ckpt>] [--log <csv>]
    surface <ckpt> --res <n> --out <obj> [--transform <json>]
    eval <ckpt> <curves> [--gt <obj>] --report <csv>
    perturb <curves> --sigma <s> --seed <k> --out <file>
    sweep <suite> <curves> --out <csv> [--config <json>]

Exit codes: 0 success, 1 input error, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import field as nf
from . import geometry, pipeline
from .curves import (NormalizationTransform, load_curves, normalize_curves,
                     perturb_curves, save_curves)
from .errors import (ContractError, CurveloftError, InputError, NumericalError)
from .pipeline import SUITE_NAMES, TrainConfig


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit."""

    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="curveloft", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a field to curve constraints")
    p_train.add_argument("curves")
    p_train.add_argument("--config", default=None)
    p_train.add_argument("--out", default="field.ckpt.npz")
    p_train.add_argument("--log", default=None)
    p_train.add_argument("--default-feature", choices=("true", "false"),
                         default=None)

    p_surf = sub.add_parser("surface", help="extract the zero-level-set mesh")
    p_surf.add_argument("checkpoint")
    p_surf.add_argument("--res", type=int, required=True)
    p_surf.add_argument("--out", required=True)
    p_surf.add_argument("--transform", default=None,
                        help="JSON transform written by train, to undo normalization")

    p_eval = sub.add_parser("eval", help="metric report for a trained field")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("curves")
    p_eval.add_argument("--gt", default=None)
    p_eval.add_argument("--res", type=int, default=64)
    p_eval.add_argument("--report", required=True)

    p_pert = sub.add_parser("perturb", help="add Gaussian noise to curves")
    p_pert.add_argument("curves")
    p_pert.add_argument("--sigma", type=float, required=True)
    p_pert.add_argument("--seed", type=int, default=0)
    p_pert.add_argument("--out", required=True)

    p_sweep = sub.add_parser("sweep", help="run a fixed experiment suite")
    p_sweep.add_argument("suite", choices=SUITE_NAMES)
    p_sweep.add_argument("curves")
    p_sweep.add_argument("--config", default=None)
    p_sweep.add_argument("--out", required=True)
    return parser


def _load_config(path) -> TrainConfig:
    if path is None:
        return TrainConfig()
    return TrainConfig.from_json(path)


def _load_and_normalize(path, default_feature=None):
    flag = None if default_feature is None else (default_feature == "true")
    curves = load_curves(path, default_feature=flag)
    return normalize_curves(curves)


def export_mesh(params: nf.MlpParams, resolution: int,
                transform: NormalizationTransform, path) -> dict:
    """Extract the zero-level mesh, map back to input coordinates, write OBJ."""
    if resolution < 8:
        raise ContractError(f"export resolution must be >= 8, got {resolution}")
    from . import sampling
    grid = sampling.evaluate_grid(params, resolution)
    try:
        mesh = geometry.marching_cubes(grid, 0.0)
    except CurveloftError as exc:
        raise NumericalError(f"empty level set at resolution {resolution}") from exc
    mesh = geometry.TriangleMesh(transform.invert(mesh.vertices), mesh.triangles)
    geometry.write_obj(mesh, path)
    try:
        genus = geometry.mesh_genus(mesh)
    except CurveloftError:
        genus = None
    return {"n_vertices": mesh.n_vertices, "n_triangles": mesh.n_triangles,
            "genus": genus}


def _transform_to_json(transform: NormalizationTransform, path) -> None:
    with open(path, "w") as fh:
        json.dump({"scale": transform.scale,
                   "translation": transform.translation.tolist()}, fh)


def _transform_from_json(path) -> NormalizationTransform:
    with open(path) as fh:
        doc = json.load(fh)
    return NormalizationTransform(float(doc["scale"]),
                                  np.asarray(doc["translation"], dtype=np.float64))


def run_cli(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1

    try:
        if args.command == "train":
            config = _load_config(args.config)
            curves, transform = _load_and_normalize(args.curves, args.default_feature)
            params, log = pipeline.train(config, curves)
            nf.save_checkpoint(args.out, params)
            _transform_to_json(transform, str(args.out) + ".transform.json")
            if args.log:
                log.to_csv(args.log)
            if log.aborted_at is not None:
                print(f"aborted at iteration {log.aborted_at}; "
                      f"last good checkpoint written to {args.out}", file=sys.stderr)
                return 2
            print(f"trained {config.iterations} iterations; "
                  f"checkpoint written to {args.out}")
            return 0

        if args.command == "surface":
            params, _ = nf.load_checkpoint(args.checkpoint)
            transform = (NormalizationTransform.identity() if args.transform is None
                         else _transform_from_json(args.transform))
            stats = export_mesh(params, args.res, transform, args.out)
            print(f"wrote {args.out}: {stats['n_vertices']} vertices, "
                  f"{stats['n_triangles']} triangles, genus {stats['genus']}")
            return 0

        if args.command == "eval":
            params, _ = nf.load_checkpoint(args.checkpoint)
            curves, _ = _load_and_normalize(args.curves)
            gt_mesh = geometry.read_obj(args.gt) if args.gt else None
            report = pipeline.evaluate_metrics(params, curves, gt_mesh=gt_mesh,
                                               resolution=args.res)
            pipeline.write_rows_csv([report.to_dict()], args.report)
            print(f"report written to {args.report}")
            return 0

        if args.command == "perturb":
            curves = load_curves(args.curves)
            noisy = perturb_curves(curves, args.sigma, args.seed)
            save_curves(noisy, args.out)
            print(f"perturbed curves written to {args.out}")
            return 0

        if args.command == "sweep":
            config = _load_config(args.config)
            curves, _ = _load_and_normalize(args.curves)
            rows = pipeline.run_experiment_suite(args.suite, config, curves)
            pipeline.write_rows_csv(rows, args.out)
            print(f"{len(rows)} rows written to {args.out}")
            return 0
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2
    except CurveloftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
