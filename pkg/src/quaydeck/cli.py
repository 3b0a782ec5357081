"""Command-line entry point; every run lands in a directory with a manifest
from which it can be byte-identically re-executed (`quaydeck replay`)."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import calib as calib_mod
from . import moo
from .baselines import EvolutionConfig, moead_run, nsga2_run, tree_to_text
from .env import FeatureScales, export_trajectory, rollout
from .instance import (
    DistributionParams,
    GeneratorConfig,
    InstanceError,
    generate_instance,
    load_instance,
    save_instance,
)
from .nn import load_checkpoint
from .preferences import even_grid
from .train import PpoConfig, train

MANIFEST_FORMAT = "quaydeck-manifest/1"


class CliError(ValueError):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _make_run_dir(args, command: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
        out = Path("runs") / f"{stamp}-{command}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out_dir: Path, command: str, params: dict,
                    artifacts: list[Path]) -> Path:
    manifest = {
        "format": MANIFEST_FORMAT,
        "command": command,
        "params": params,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": {p.name: _sha256(p) for p in artifacts},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", "utf-8")
    return path


def _scales_from_checkpoint(policy, inst) -> FeatureScales:
    meta = policy.meta.get("scales")
    if meta:
        return FeatureScales(dist=float(meta["dist"]), count=float(meta["count"]))
    return FeatureScales.for_instance(inst)


# -- command bodies: (params, out_dir) -> [artifact paths] -------------------

def run_gen(params: dict, out_dir: Path) -> list[Path]:
    cfg = GeneratorConfig(
        qc_count=params["qc"], yard_count=params["yards"],
        task_count=params["tasks"], truck_count=params["trucks"],
        cell_m=params["cell"],
        dist_params=DistributionParams(congestion_coeff=params["congestion"]),
    )
    inst = generate_instance(cfg, params["seed"])
    return [save_instance(inst, out_dir / "instance.json")]


def run_train(params: dict, out_dir: Path) -> list[Path]:
    inst = load_instance(params["instance"])
    cfg = PpoConfig(
        iterations=params["iterations"],
        episodes_per_iter=params["episodes"],
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        clip=params["clip"],
        discount=params["discount"],
        preference_set=even_grid(params["prefs"]),
        learning_rate=params["lr"],
        seed=params["seed"],
        fusion_mode=params["fusion"],
        warmup_rollouts=params["warmup"],
    )
    ckpt = out_dir / "checkpoint.ckpt"
    log = out_dir / "train_log.jsonl"

    def progress(rec):
        if rec["iter"] % 20 == 0 or rec["aborted"]:
            print(
                f"iter {rec['iter']:5d}  idle={rec['mean_objectives'][0]:9.1f}s "
                f"dist={rec['mean_objectives'][1]:9.1f}m  loss={rec['loss']:.4f}",
                flush=True,
            )

    train(cfg, inst, checkpoint_path=ckpt, log_path=log,
          progress=progress if params.get("verbose") else None)
    return [ckpt, log]


def run_eval(params: dict, out_dir: Path) -> list[Path]:
    inst = load_instance(params["instance"])
    policy = load_checkpoint(params["checkpoint"])
    scales = _scales_from_checkpoint(policy, inst)
    grid = even_grid(params["prefs"])
    jobs = params.get("jobs", 1)

    def point_for(pref):
        return moo.evaluate_policy(policy, pref, inst, params["C"],
                                   params["seed"], scales, label=params["label"])

    if jobs > 1:
        # Grid points are independent rollout sweeps; ordered collection keeps
        # the output independent of the worker count.
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(point_for, grid))
    else:
        points = [point_for(pref) for pref in grid]
    values = np.array([p.objectives for p in points])
    bounds = None
    if len(points) >= 2:
        try:
            _, bounds = moo.normalize(values)
        except ValueError:
            bounds = None
    artifacts = [
        moo.export_front(points, out_dir / "points.csv", bounds),
        moo.export_front(moo.pareto_filter(points).points, out_dir / "front.csv", bounds),
    ]
    mid = grid[len(grid) // 2]
    for k in range(params["dump_episodes"]):
        traj = rollout(policy, inst, mid, params["seed"] + k, mode="greedy",
                       scales=scales)
        artifacts.append(export_trajectory(traj, out_dir / f"episode_{k}.jsonl"))
    return artifacts


def run_calibrate(params: dict, out_dir: Path) -> list[Path]:
    inst = load_instance(params["instance"])
    policy = load_checkpoint(params["checkpoint"])
    scales = _scales_from_checkpoint(policy, inst)
    anchors = calib_mod.build_anchor_set(
        policy, even_grid(params["prefs"]), inst, params["C"],
        params["iterations"], params["seed"], scales,
    )
    a_path = calib_mod.save_anchor_set(anchors, out_dir / "anchors.txt")
    h_path = out_dir / "calibration_history.json"
    h_path.write_text(json.dumps(anchors.history, indent=1) + "\n", "utf-8")
    return [a_path, h_path]


def run_baseline(params: dict, out_dir: Path) -> list[Path]:
    inst = load_instance(params["instance"])
    cfg = EvolutionConfig(
        population=params["pop"], generations=params["generations"],
        p_crossover=params["p_cross"], p_mutation=params["p_mut"],
        max_depth=params["max_depth"], generation_C=params["gen_C"],
        final_C=params["C"], eval_seed=params["seed"],
        neighborhood=params["neighborhood"], seed=params["seed"],
    )
    runner = {"nsga2": nsga2_run, "moead": moead_run}[params["method"]]
    result = runner(cfg, inst)
    front = out_dir / "front.csv"
    moo.export_front(result.front.points, front)
    trees = out_dir / "trees.txt"
    trees.write_text(
        "".join(tree_to_text(ind.tree) + "\n" for ind in result.individuals), "utf-8"
    )
    return [front, trees]


def run_metrics(params: dict, out_dir: Path) -> list[Path]:
    tables: dict[str, list] = {}
    for i, p in enumerate(params["fronts"]):
        name = Path(p).stem or f"front{i}"
        while name in tables:
            name = f"{name}_{i}"
        tables[name] = moo.load_front(p)
    if not tables:
        raise CliError("metrics needs at least one front table")
    pooled = np.vstack([
        np.array([pt.objectives for pt in pts]) for pts in tables.values()
    ])
    _, bounds = moo.normalize(pooled)  # union of all compared methods
    lines = ["front,points,hv,sparsity"]
    for name, pts in sorted(tables.items()):
        front = moo.pareto_filter(pts).points
        z = moo.apply_bounds(np.array([p.objectives for p in front]), bounds)
        z = np.clip(z, 0.0, 1.0)
        keep = moo.nondominated_indices(z)
        hv = moo.hypervolume_2d(z[keep])
        sp = moo.sparsity(z) if len(z) >= 2 else float("nan")
        lines.append(f"{name},{len(front)},{hv!r},{sp!r}")
        print(lines[-1])
    path = out_dir / "metrics.csv"
    path.write_text("\n".join(lines) + "\n", "utf-8")
    return [path]


def run_plot(params: dict, out_dir: Path) -> list[Path]:
    from .plotting import plot_fronts, plot_training_log

    artifacts: list[Path] = []
    if params["fronts"]:
        fronts = {Path(p).stem: moo.load_front(p) for p in params["fronts"]}
        combined = [pt for pts in fronts.values() for pt in pts]
        artifacts.append(moo.export_front(combined, out_dir / "plotted_points.csv"))
        artifacts.append(plot_fronts(fronts, out_dir / "fronts.png"))
    if params.get("train_log"):
        artifacts.append(
            plot_training_log(params["train_log"], out_dir / "training.png")
        )
    if not artifacts:
        raise CliError("plot needs --fronts and/or --train-log")
    return artifacts


COMMANDS = {
    "gen": run_gen,
    "train": run_train,
    "eval": run_eval,
    "calibrate": run_calibrate,
    "baseline": run_baseline,
    "metrics": run_metrics,
    "plot": run_plot,
}


def execute(command: str, params: dict, out_dir: Path) -> Path:
    artifacts = COMMANDS[command](params, out_dir)
    return _write_manifest(out_dir, command, params, artifacts)


def _cmd(args, command: str, params: dict) -> int:
    out_dir = _make_run_dir(args, command)
    execute(command, params, out_dir)
    print(f"{command}: artifacts in {out_dir}")
    return 0


# -- argparse wiring ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="quaydeck",
        description="Preference-steerable multi-objective truck dispatching workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a terminal instance", formatter_class=fmt)
    p.add_argument("--qc", type=int, default=4)
    p.add_argument("--yards", type=int, default=12)
    p.add_argument("--tasks", type=int, default=80)
    p.add_argument("--trucks", type=int, default=10)
    p.add_argument("--cell", type=float, default=50.0, help="grid cell size in meters")
    p.add_argument("--congestion", type=float, default=0.0,
                   help="travel-time multiplier per inbound truck (0 disables)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=lambda a: _cmd(a, "gen", {
        "qc": a.qc, "yards": a.yards, "tasks": a.tasks, "trucks": a.trucks,
        "cell": a.cell, "congestion": a.congestion, "seed": a.seed,
    }))

    p = sub.add_parser("train", help="train the dispatch policy", formatter_class=fmt)
    p.add_argument("--instance", required=True)
    p.add_argument("--iterations", type=int, default=5000, help="training iterations K")
    p.add_argument("--episodes", type=int, default=10, help="episodes per iteration N")
    p.add_argument("--epochs", type=int, default=10, help="update epochs per iteration M")
    p.add_argument("--batch-size", type=int, default=32, help="minibatch size B")
    p.add_argument("--clip", type=float, default=0.2, help="surrogate clip rate")
    p.add_argument("--discount", type=float, default=1.0, help="reward discount")
    p.add_argument("--prefs", type=int, default=11, help="training preference grid size")
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--fusion", choices=["hadamard", "concat"], default="hadamard")
    p.add_argument("--warmup", type=int, default=32, help="random rollouts for cost scales")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=lambda a: _cmd(a, "train", {
        "instance": a.instance, "iterations": a.iterations, "episodes": a.episodes,
        "epochs": a.epochs, "batch_size": a.batch_size, "clip": a.clip,
        "discount": a.discount, "prefs": a.prefs, "lr": a.lr, "fusion": a.fusion,
        "warmup": a.warmup, "seed": a.seed, "verbose": a.verbose,
    }))

    p = sub.add_parser("eval", help="evaluate a preference grid into a front",
                       formatter_class=fmt)
    p.add_argument("--instance", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prefs", type=int, default=11, help="evaluation grid size")
    p.add_argument("--C", type=int, default=16, help="rollouts averaged per point")
    p.add_argument("--seed", type=int, default=0, help="base evaluation seed")
    p.add_argument("--label", default="policy")
    p.add_argument("--dump-episodes", type=int, default=0,
                   help="also export this many greedy episode logs")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker threads for the grid sweep; output is identical for any value")
    p.set_defaults(func=lambda a: _cmd(a, "eval", {
        "instance": a.instance, "checkpoint": a.checkpoint, "prefs": a.prefs,
        "C": a.C, "seed": a.seed, "label": a.label, "dump_episodes": a.dump_episodes,
        "jobs": a.jobs,
    }))

    p = sub.add_parser("calibrate", help="build the anchor set for preference calibration",
                       formatter_class=fmt)
    p.add_argument("--instance", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prefs", type=int, default=11)
    p.add_argument("--C", type=int, default=16)
    p.add_argument("--iterations", type=int, default=2, help="recalibration rounds")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=lambda a: _cmd(a, "calibrate", {
        "instance": a.instance, "checkpoint": a.checkpoint, "prefs": a.prefs,
        "C": a.C, "iterations": a.iterations, "seed": a.seed,
    }))

    p = sub.add_parser("baseline", help="run an evolutionary baseline",
                       formatter_class=fmt)
    p.add_argument("--method", choices=["nsga2", "moead"], required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--pop", type=int, default=16)
    p.add_argument("--generations", type=int, default=5)
    p.add_argument("--p-cross", type=float, default=0.5)
    p.add_argument("--p-mut", type=float, default=0.5)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--gen-C", type=int, default=4, help="evaluation seeds during evolution")
    p.add_argument("--C", type=int, default=16, help="final front re-evaluation seeds")
    p.add_argument("--neighborhood", type=int, default=20, help="MOEA/D neighborhood size")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=lambda a: _cmd(a, "baseline", {
        "method": a.method, "instance": a.instance, "pop": a.pop,
        "generations": a.generations, "p_cross": a.p_cross, "p_mut": a.p_mut,
        "max_depth": a.max_depth, "gen_C": a.gen_C, "C": a.C,
        "neighborhood": a.neighborhood, "seed": a.seed,
    }))

    p = sub.add_parser("metrics", help="hypervolume and sparsity over exported fronts",
                       formatter_class=fmt)
    p.add_argument("--fronts", nargs="+", required=True,
                   help="front tables; normalization pools all of them")
    p.set_defaults(func=lambda a: _cmd(a, "metrics", {"fronts": a.fronts}))

    p = sub.add_parser("plot", help="render figures from exported tables",
                       formatter_class=fmt)
    p.add_argument("--fronts", nargs="*", default=[])
    p.add_argument("--train-log", default=None)
    p.set_defaults(func=lambda a: _cmd(a, "plot", {
        "fronts": a.fronts, "train_log": a.train_log,
    }))

    p = sub.add_parser("serve", help="start the live session service",
                       formatter_class=fmt)
    p.add_argument("--data-dir", required=True,
                   help="directory holding instances/, checkpoints/, anchors/")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(func=_serve)

    p = sub.add_parser("replay", help="re-execute a run from its manifest",
                       formatter_class=fmt)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=_replay)

    for name, sp in sub.choices.items():
        if name != "serve":
            sp.add_argument("--out", default=None, help="run directory (default runs/<stamp>-<cmd>)")
    return parser


def _serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(Path(args.data_dir))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text("utf-8"))
    if manifest.get("format") != MANIFEST_FORMAT:
        raise CliError(f"unsupported manifest format {manifest.get('format')!r}")
    command = manifest["command"]
    if command not in COMMANDS:
        raise CliError(f"manifest names unknown command {command!r}")
    out_dir = _make_run_dir(args, f"replay-{command}")
    execute(command, manifest["params"], out_dir)
    print(f"replay of {command}: artifacts in {out_dir}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, InstanceError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
