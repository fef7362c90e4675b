"""``qdgan`` command line: run, sweep, compare, inspect-genome."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import engine
from .config import DATASETS, MODES, PRESETS, load_config, parse_overrides
from .exceptions import QDGANError
from .genome import Genome, IOShape, build_phenotype
from .harness import compare_runs, run_dir, run_experiment, sweep


def _add_config_flags(parser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--preset", choices=sorted(PRESETS), default="paper",
                        help="base settings before the file and flags (default: paper)")
    parser.add_argument("--dataset", choices=DATASETS)
    parser.add_argument("--generations", type=int)
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--jobs", dest="n_jobs", type=int, help="bout worker threads per run")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")


def _config(args, **extra):
    overrides = parse_overrides(args.set)
    for name in ("dataset", "generations", "out_dir", "n_jobs"):
        if getattr(args, name, None) is not None:
            overrides[name] = getattr(args, name)
    overrides.update({k: v for k, v in extra.items() if v is not None})
    return load_config(args.config, preset=args.preset, **overrides)


def _cmd_run(args):
    config = _config(args, mode=args.mode, seed=args.seed)
    status = run_experiment(config, resume=args.resume)
    print(f"{'ok' if status == 0 else 'failed'}: {run_dir(config)}")
    return status


def _cmd_sweep(args):
    config = _config(args)
    statuses = sweep(config, args.modes, args.seeds, processes=args.processes)
    for (mode, seed), status in statuses.items():
        print(f"{mode} seed {seed}: {'ok' if status == 0 else 'failed'}")
    return 0 if all(s == 0 for s in statuses.values()) else 1


def _cmd_compare(args):
    result = compare_runs(args.a, args.b)
    print(result.to_text())
    return 0


def _describe(genome, io_shape):
    network = build_phenotype(genome, io_shape, np.random.default_rng(0))
    lines = [f"{genome.role}: {len(genome)} gene(s), {network.n_parameters()} parameters"]
    for i, layer in enumerate(network.layers):
        name = "head" if layer.tag == "head" else f"gene {layer.tag}"
        lines.append(f"  [{i}] {name:>10} {layer.kind:<8} {layer.params.activation or 'None':<9} "
                     f"{tuple(layer.in_shape)} -> {tuple(layer.out_shape)}")
    return "\n".join(lines)


def _cmd_inspect(args):
    target = args.genome
    if Path(target).is_file():
        state = engine.load_checkpoint(target)
        print(f"checkpoint at generation {state.generation}")
        for label, pop in (("generators", state.generators),
                           ("discriminators", state.discriminators)):
            print(f"{label}:")
            for ind in pop:
                print(f"  #{ind.uid} fitness={ind.fitness:.6g} novelty={ind.novelty:.4f} "
                      f"samples={ind.trained_samples} {ind.genome.to_text()}")
        return 0
    shape = tuple(int(v) for v in args.sample_shape.split("x"))
    print(_describe(Genome.from_text(target), IOShape(shape, args.latent_dim)))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="qdgan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log every generation")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one mode/seed")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--seed", type=int)
    run.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    _add_config_flags(run)
    run.set_defaults(func=_cmd_run)

    sw = sub.add_parser("sweep", help="run several modes and seeds")
    sw.add_argument("--modes", nargs="+", choices=MODES, default=list(MODES))
    sw.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    sw.add_argument("--processes", type=int, default=1)
    _add_config_flags(sw)
    sw.set_defaults(func=_cmd_sweep)

    cmp_ = sub.add_parser("compare", help="Mann-Whitney U on final best FID of two run groups")
    cmp_.add_argument("--a", nargs="+", required=True, metavar="CSV")
    cmp_.add_argument("--b", nargs="+", required=True, metavar="CSV")
    cmp_.set_defaults(func=_cmd_compare)

    ins = sub.add_parser("inspect-genome", help="describe a genome string or a checkpoint")
    ins.add_argument("genome", help="genome text or checkpoint path")
    ins.add_argument("--sample-shape", default="1x8x8", help="e.g. 1x8x8 or 2")
    ins.add_argument("--latent-dim", type=int, default=100)
    ins.set_defaults(func=_cmd_inspect)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (QDGANError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
