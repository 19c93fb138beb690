"""Command line entry point.

Every command writes into ``--out`` (default ``runs``). Training commands
append one JSON object per line to ``<out>/<command>.log.jsonl``; the
fields are listed in the README. Exit codes: 0 success, 2 usage error,
3 config error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .. import __version__
from ..agents.explore import (
    PRIVILEGED, STUDENT, agreement, collect_bc_dataset, distill, exploration_model, train_a2c,
)
from ..agents.softq import train_softq
from ..envs import ExplorationEnv, GenerationEnv, derive_seed, read_records, replay, save_records
from ..neural import load_checkpoint, save_checkpoint
from ..perception import raster_image, render_topdown, save_image
from ..physics import realize
from ..scenegraph import deserialize
from .config import ConfigError, RunConfig, load_config, override
from .datasets import read_bc, read_dataset, save_bc, save_dataset, split
from .evaluate import (
    eval_exploration, eval_generation, explorer_factory, lf_factory, make_dataset, metrics_from_exploration_records,
    metrics_from_generation_records, re_factory, report, rg_factory, sg_factory,
)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("clutterscene")


class RuntimeFailure(RuntimeError):
    pass


# -- helpers -----------------------------------------------------------------------

def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _logger(args, name: str):
    path = _out(args) / f"{name}.log.jsonl"
    fh = path.open("a")

    def write(row: dict) -> None:
        fh.write(json.dumps(row, sort_keys=True) + "\n")
        fh.flush()
        log.info("%s", row)

    return write


def _gen_env(cfg: RunConfig, nodes: int) -> GenerationEnv:
    catalog = cfg.load_catalog()
    return GenerationEnv(cfg.load_rules(catalog), catalog, nodes, cfg.reward, cfg.env)


def _exp_env(cfg: RunConfig, dataset: str) -> ExplorationEnv:
    graphs = read_dataset(dataset)
    if not graphs:
        raise RuntimeFailure(f"{dataset}: empty dataset")
    return ExplorationEnv(graphs, cfg.load_catalog(), cfg.reward, cfg.env)


def _gen_factory(args, env: GenerationEnv, cfg: RunConfig):
    if args.agent == "rg":
        return rg_factory
    if not args.checkpoint:
        raise RuntimeFailure("--agent sg needs --checkpoint")
    model, _ = load_checkpoint(args.checkpoint)
    return sg_factory(model, env, cfg.softq.alpha_final or cfg.softq.alpha, cfg.eval.greedy)


def _exp_factory(args, cfg: RunConfig):
    if args.agent == "re":
        return re_factory
    if args.agent == "lf":
        return lf_factory
    if not args.checkpoint:
        raise RuntimeFailure(f"--agent {args.agent} needs --checkpoint")
    model, _ = load_checkpoint(args.checkpoint)
    return explorer_factory(model, PRIVILEGED if args.agent == "privileged" else STUDENT, cfg.eval.greedy)


def _start_run(args, name: str, cfg: RunConfig) -> None:
    """Copy the effective config and seed next to the run's outputs."""
    body = {"command": name, "seed": args.seed, "version": __version__, "config": cfg.to_dict()}
    (_out(args) / f"{name}.config.json").write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")


def _saver(path: Path, meta: dict):
    return lambda model: save_checkpoint(model, path, meta)


def _write_report(args, name: str, text: str) -> None:
    path = _out(args) / name
    path.write_text(text)
    sys.stdout.write(text)


# -- commands ----------------------------------------------------------------------

def cmd_gen_train(args, cfg: RunConfig) -> None:
    cfg = override(cfg, "softq", total_steps=args.steps)
    env = _gen_env(cfg, args.nodes)
    _start_run(args, "gen-train", cfg)
    path = _out(args) / "sg.npz"
    meta = {"nodes": args.nodes, "seed": args.seed, "version": __version__}
    model = train_softq(env, cfg.softq, args.seed, log=_logger(args, "gen-train"), checkpoint_fn=_saver(path, meta))
    save_checkpoint(model, path, meta)
    print(path)


def cmd_gen_sample(args, cfg: RunConfig) -> None:
    env = _gen_env(cfg, args.nodes)
    args.agent = "sg" if args.checkpoint else "rg"
    factory = _gen_factory(args, env, cfg)
    metrics, records = eval_generation(env, factory, args.count, args.seed)
    save_records(records, _out(args) / "gen-sample.records.jsonl")
    print(json.dumps({"scenes": metrics.scenes, "stable": metrics.stable_scenes}))


def cmd_make_dataset(args, cfg: RunConfig) -> None:
    env = _gen_env(cfg, args.nodes)
    factory = _gen_factory(args, env, cfg)
    min_hidden = cfg.dataset.min_hidden if args.min_hidden is None else args.min_hidden
    graphs, info = make_dataset(env, factory, args.count, args.seed, min_hidden=min_hidden,
                                max_episodes=cfg.dataset.max_episodes_per_graph * args.count)
    if len(graphs) < args.count:
        raise RuntimeFailure(f"only {len(graphs)} of {args.count} scenes passed the filter ({info})")
    path = _out(args) / "dataset.json"
    save_dataset(graphs, path)
    print(json.dumps({"path": str(path), **info}))


def cmd_explore_train(args, cfg: RunConfig) -> None:
    cfg = override(cfg, "a2c", total_steps=args.steps)
    env = _exp_env(cfg, args.dataset)
    _start_run(args, "explore-train-privileged", cfg)
    path = _out(args) / "teacher.npz"
    meta = {"view": PRIVILEGED, "seed": args.seed, "version": __version__}
    model = train_a2c(env, cfg.a2c, args.seed, view=PRIVILEGED, log_fn=_logger(args, "explore-train-privileged"),
                      checkpoint_fn=_saver(path, meta))
    save_checkpoint(model, path, meta)
    print(path)


def cmd_collect_bc(args, cfg: RunConfig) -> None:
    env = _exp_env(cfg, args.dataset)
    teacher, _ = load_checkpoint(args.teacher)
    samples = collect_bc_dataset(teacher, env, args.samples, args.seed)
    path = _out(args) / "bc.jsonl"
    save_bc(samples, path)
    print(json.dumps({"path": str(path), "samples": len(samples)}))


def cmd_distill(args, cfg: RunConfig) -> None:
    data = read_bc(args.bc)
    train, held = split(data, args.held_out, derive_seed(args.seed, 51))
    if args.epochs is not None:
        cfg = replace(cfg, bc=replace(cfg.bc, epochs=args.epochs))
    _start_run(args, "distill", cfg)
    n_classes = len(cfg.load_catalog().objects)
    student = exploration_model(n_classes, derive_seed(args.seed, 52), value_head=False)
    distill(student, train, cfg.bc, args.seed, log_fn=_logger(args, "distill"))
    path = _out(args) / "student.npz"
    score = agreement(student, held) if held else None
    save_checkpoint(student, path, {"view": STUDENT, "seed": args.seed, "agreement": score, "version": __version__})
    print(json.dumps({"path": str(path), "train": len(train), "held_out": len(held), "agreement": score}))


def cmd_eval_gen(args, cfg: RunConfig) -> None:
    env = _gen_env(cfg, args.nodes)
    episodes = args.episodes or cfg.eval.episodes
    metrics, records = eval_generation(env, _gen_factory(args, env, cfg), episodes, args.seed)
    save_records(records, _out(args) / "eval-gen.records.jsonl")
    extra = {"agent": args.agent, "nodes": args.nodes, "checkpoint": args.checkpoint}
    _write_report(args, "eval-gen.json", report("generation", metrics, seed=args.seed, env=env,
                                                config=cfg.to_dict(), extra=extra))


def cmd_eval_explore(args, cfg: RunConfig) -> None:
    env = _exp_env(cfg, args.dataset)
    episodes = args.episodes or cfg.eval.episodes
    metrics, records = eval_exploration(env, _exp_factory(args, cfg), episodes, args.seed)
    save_records(records, _out(args) / "eval-explore.records.jsonl")
    extra = {"agent": args.agent, "dataset": args.dataset, "checkpoint": args.checkpoint}
    _write_report(args, "eval-explore.json", report("exploration", metrics, seed=args.seed, env=env,
                                                    config=cfg.to_dict(), extra=extra))


def cmd_render(args, cfg: RunConfig) -> None:
    catalog = cfg.load_catalog()
    graph = deserialize(Path(args.scene).read_text())
    scene = realize(graph, catalog, args.seed)
    raster = render_topdown(scene, cfg.env.resolution)
    class_of = {oid: catalog.class_id(o.name) for oid, o in scene.objects.items()}
    save_image(raster_image(raster, class_of, len(catalog.objects)), args.png)
    print(args.png)


def cmd_replay(args, cfg: RunConfig) -> None:
    records = read_records(args.records)
    if not records:
        raise RuntimeFailure(f"{args.records}: no records")
    kind = records[0].env
    if kind == "generation":
        env = _gen_env(cfg, int(records[0].params["target_nodes"]))
        recompute = metrics_from_generation_records
    else:
        if not args.dataset:
            raise RuntimeFailure("exploration records need --dataset")
        env = _exp_env(cfg, args.dataset)
        recompute = metrics_from_exploration_records
    replayed = [replay(env, r) for r in records]
    if recompute(replayed) != recompute(records):
        raise RuntimeFailure("replayed metrics differ from recorded metrics")
    print(json.dumps({"records": len(records), "identical": True}))


# -- parser ------------------------------------------------------------------------

def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0, help="master seed (u64)")
    p.add_argument("--out", default=argparse.SUPPRESS if suppress else "runs", help="output directory")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clutterscene", parents=[_global_flags(False)])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_global_flags(True)]

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=common, help=help_)
        p.set_defaults(fn=fn)
        return p

    p = add("gen-train", cmd_gen_train, "train the Soft-Q generation policy")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--steps", type=int)

    p = add("gen-sample", cmd_gen_sample, "sample scenes and write episode records")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--checkpoint")

    p = add("make-dataset", cmd_make_dataset, "generate an exploration dataset of scene graphs")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--agent", choices=["rg", "sg"], default="rg")
    p.add_argument("--checkpoint")
    p.add_argument("--min-hidden", type=int)

    p = add("explore-train-privileged", cmd_explore_train, "train the privileged exploration teacher")
    p.add_argument("--dataset", required=True)
    p.add_argument("--steps", type=int)

    p = add("collect-bc", cmd_collect_bc, "record teacher actions with student observations")
    p.add_argument("--dataset", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--samples", type=int, default=5000)

    p = add("distill", cmd_distill, "behaviour-clone the student from recorded pairs")
    p.add_argument("--bc", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--held-out", type=float, default=0.2)

    p = add("eval-gen", cmd_eval_gen, "evaluate a generation agent")
    p.add_argument("--agent", choices=["rg", "sg"], default="rg")
    p.add_argument("--checkpoint")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--episodes", type=int)

    p = add("eval-explore", cmd_eval_explore, "evaluate an exploration agent")
    p.add_argument("--agent", choices=["re", "lf", "se", "privileged"], default="re")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--episodes", type=int)

    p = add("render", cmd_render, "realize a scene graph and save a top-down image")
    p.add_argument("--scene", required=True)
    p.add_argument("--png", required=True)

    p = add("replay", cmd_replay, "replay episode records and check they reproduce")
    p.add_argument("--records", required=True)
    p.add_argument("--dataset")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.load_catalog()
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.fn(args, cfg)
    except (RuntimeFailure, ValueError, KeyError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
