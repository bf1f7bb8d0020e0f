"""Command-line entry points.

Every command is deterministic given --seed. File outputs start with a
header block (CSV comment lines or a "meta" object in JSON) recording the
command, the seed, and the effective configuration.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import torch

from . import experiments
from . import rng as rng_mod
from .corpus import IMAGES_NAME, LABELS_NAME, build_digits_corpus
from .dataio import (RunLogWriter, export_png, load_checkpoint, load_genotype,
                     load_idx, read_run_log, save_checkpoint, save_genotype,
                     split_train_val)
from .denoiser import DenoiserModel, train
from .errors import ArgumentError
from .evolution import replay_run_log
from .genome import CrossoverParams, crossover
from .presets import load_preset, preset_arch, preset_schedule, preset_train
from .sampler import Genotype, generate

_ERRORS = (ValueError, RuntimeError, OSError)


def _meta(args, sched=None, **extra) -> dict:
    meta = {"command": args.command, "seed": args.seed}
    if sched is not None:
        meta["schedule"] = {"T": sched.T, "beta_start": sched.beta_start,
                            "beta_end": sched.beta_end}
    meta.update(extra)
    return meta


def _write_csv(path, meta: dict, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        for key, value in meta.items():
            f.write(f"# {key}: {json.dumps(value)}\n")
        writer = csv.writer(f)
        writer.writerow(columns)
        writer.writerows(rows)


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _data_paths(data_dir) -> tuple[Path, Path]:
    d = Path(data_dir)
    return d / IMAGES_NAME, d / LABELS_NAME


# ---------------------------------------------------------------------------
# commands

def cmd_build_data(args) -> int:
    preset = load_preset(args.preset)
    data_cfg = preset.get("data", {})
    label = args.label if args.label is not None else data_cfg.get("label", 5)
    count = args.count if args.count is not None else data_cfg.get("count", 1000)
    out = _out_dir(args)
    images_path, labels_path = build_digits_corpus(out, label=label, count=count,
                                                   seed=args.seed)
    _write_json(out / "meta.json",
                {"meta": _meta(args, label=label, count=count, preset=preset["name"])})
    print(f"wrote {images_path}")
    print(f"wrote {labels_path}")
    return 0


def cmd_train(args) -> int:
    preset = load_preset(args.preset)
    arch = preset_arch(preset)
    data_cfg = preset.get("data", {})
    out = _out_dir(args)

    images_path, labels_path = _data_paths(args.data)
    dataset = load_idx(images_path, labels_path, keep_label=data_cfg.get("label", 5),
                       target_size=arch.image_shape[1])
    val_count = min(data_cfg.get("val_count", 0), len(dataset) // 5)
    train_set, val_set = split_train_val(dataset, val_count=val_count, seed=args.seed)

    if args.resume:
        model, sched = load_checkpoint(args.resume)
    else:
        # fresh weights must be reproducible from --seed alone
        torch.manual_seed(args.seed)
        model, sched = DenoiserModel(arch), preset_schedule(preset)
    cfg = preset_train(preset, epochs=args.epochs, batch_size=args.batch_size,
                       learning_rate=args.lr, seed=args.seed)

    def on_checkpoint(m, epoch):
        save_checkpoint(m, sched, out / f"checkpoint-{epoch:04d}.evo")

    model, history = train(model, train_set, sched, cfg,
                           on_checkpoint=on_checkpoint, log=print)
    save_checkpoint(model, sched, out / "model.evo")
    _write_csv(out / "loss.csv",
               _meta(args, sched, preset=preset["name"], epochs=cfg.epochs,
                     batch_size=cfg.batch_size, learning_rate=cfg.learning_rate,
                     train_images=len(train_set), val_images=len(val_set),
                     resumed_from=str(args.resume) if args.resume else None),
               ["epoch", "mean_loss"],
               [(i + 1, loss) for i, loss in enumerate(history)])
    print(f"wrote {out / 'model.evo'}")
    return 0


def cmd_sample(args) -> int:
    model, sched = load_checkpoint(args.checkpoint)
    out = _out_dir(args)
    genotypes, images, _ = experiments.sample_standard(model, sched, args.n,
                                                       args.seed, exp=0)
    for i, image in enumerate(images):
        export_png(image, out / f"sample-{i:03d}.png")
        if args.save_genotypes:
            save_genotype(genotypes[i], out / f"sample-{i:03d}.evo")
    _write_json(out / "manifest.json",
                {"meta": _meta(args, sched, n=args.n,
                               checkpoint=str(args.checkpoint)),
                 "files": [f"sample-{i:03d}.png" for i in range(args.n)]})
    print(f"wrote {args.n} samples to {out}")
    return 0


def cmd_crossover(args) -> int:
    model, sched = load_checkpoint(args.checkpoint)
    parent_a = load_genotype(args.parent_a)
    parent_b = load_genotype(args.parent_b)
    t_interp = args.t_interp if args.t_interp is not None else int(round(0.6 * sched.T))
    out = _out_dir(args)

    child_x_T, injected = crossover(parent_a, parent_b,
                                    CrossoverParams(lam=args.lam, t_interp=t_interp))
    stream = rng_mod.substream(args.seed, rng_mod.STREAM_EXPERIMENT, 0, 1)
    x0, z_out, _ = generate(model, sched, child_x_T, injected=injected,
                            t_interp=t_interp, rng=stream)
    export_png(x0, out / "child.png")
    save_genotype(Genotype(x_T=child_x_T, noise=z_out), out / "child.evo")
    _write_json(out / "manifest.json",
                {"meta": _meta(args, sched, checkpoint=str(args.checkpoint),
                               parent_a=str(args.parent_a), parent_b=str(args.parent_b),
                               t_interp=t_interp),
                 "lambda": args.lam})
    print(f"wrote {out / 'child.png'}")
    return 0


def cmd_exp1(args) -> int:
    model, sched = load_checkpoint(args.checkpoint)
    out = _out_dir(args)
    lambdas = _parse_floats(args.lambdas) if args.lambdas else None
    result = experiments.exp1_run(model, sched, seed=args.seed,
                                  num_images=args.num_images,
                                  snapshot_stride=args.snapshot_stride,
                                  t_interp=args.t_interp, lambdas=lambdas)
    meta = _meta(args, sched, checkpoint=str(args.checkpoint),
                 num_images=args.num_images, snapshot_stride=result.snapshot_stride,
                 t_interp=result.t_interp, lambdas=list(result.lambdas),
                 parent_a=result.parent_a_index, parent_b=result.parent_b_index)
    _write_csv(out / "trajectories.csv", meta,
               ["kind", "image", "lambda", "t", "pc1", "pc2"],
               [(r.kind, r.image_index, "" if r.lam is None else r.lam, r.t,
                 r.pc1, r.pc2) for r in result.rows])
    _write_json(out / "report.json",
                {"meta": meta,
                 "correlation": result.correlation.to_dict(),
                 "final_pc1_by_lambda": result.final_pc1_by_lambda,
                 "explained_variance": [float(v) for v in
                                        result.transform.explained_variance]})
    print(f"lambda vs final PC1: rho={result.correlation.rho:+.3f} "
          f"p={result.correlation.p_value:.4f} ({result.correlation.method})")
    return 0


def cmd_exp2(args) -> int:
    model, sched = load_checkpoint(args.checkpoint)
    out = _out_dir(args)
    reports = []
    for trial in range(args.trials):
        seed = args.seed + trial
        result = experiments.exp2_run(model, sched, seed=seed, t_interp=args.t_interp)
        meta = _meta(args, sched, checkpoint=str(args.checkpoint), trial=trial,
                     trial_seed=seed, t_interp=result.t_interp)
        _write_csv(out / f"distances-trial{trial}.csv", meta,
                   ["lambda", "dist_to_A", "dist_to_B"],
                   list(zip(result.lambdas, result.dist_to_a, result.dist_to_b)))
        reports.append({"trial": trial, "seed": seed,
                        "to_parent_a": result.report_a.to_dict(),
                        "to_parent_b": result.report_b.to_dict()})
        print(f"trial {trial}: rho_A={result.report_a.rho:+.3f} "
              f"(p={result.report_a.p_value:.4f}) "
              f"rho_B={result.report_b.rho:+.3f} (p={result.report_b.p_value:.4f})")
    significant = sum(1 for r in reports
                      if r["to_parent_a"]["rho"] > 0 and r["to_parent_a"]["p_value"] < 0.05
                      and r["to_parent_b"]["rho"] < 0 and r["to_parent_b"]["p_value"] < 0.05)
    _write_json(out / "report.json",
                {"meta": _meta(args, sched, checkpoint=str(args.checkpoint),
                               trials=args.trials),
                 "reports": reports, "significant_trials": significant})
    print(f"{significant}/{args.trials} trials significant in the expected directions")
    return 0


def cmd_exp3(args) -> int:
    model, sched = load_checkpoint(args.checkpoint)
    out = _out_dir(args)
    grid = _parse_ints(args.t_interps) if args.t_interps else None
    reports = []
    for trial in range(args.trials):
        seed = args.seed + trial
        result = experiments.exp3_run(model, sched, seed=seed, t_interps=grid,
                                      lam=args.lam, offspring=args.offspring)
        meta = _meta(args, sched, checkpoint=str(args.checkpoint), trial=trial,
                     trial_seed=seed, lam=result.lam, offspring=result.offspring)
        _write_csv(out / f"diversity-trial{trial}.csv", meta,
                   ["t_interp", "diversity"],
                   list(zip(result.t_interps, result.diversities)))
        reports.append({"trial": trial, "seed": seed,
                        "correlation": result.report.to_dict()})
        print(f"trial {trial}: rho={result.report.rho:+.3f} "
              f"(p={result.report.p_value:.4f})")
    significant = sum(1 for r in reports
                      if r["correlation"]["rho"] < 0 and r["correlation"]["p_value"] < 0.05)
    _write_json(out / "report.json",
                {"meta": _meta(args, sched, checkpoint=str(args.checkpoint),
                               trials=args.trials),
                 "reports": reports, "significant_trials": significant})
    print(f"{significant}/{args.trials} trials significant and negative")
    return 0


def cmd_evolve_headless(args) -> int:
    model, sched = load_checkpoint(args.checkpoint)
    out = _out_dir(args)
    images_path, labels_path = _data_paths(args.data)
    dataset = load_idx(images_path, labels_path, keep_label=args.label,
                       target_size=model.config.image_shape[1])
    if not 0 <= args.target_index < len(dataset):
        raise ArgumentError(f"target index {args.target_index} outside the dataset "
                            f"(size {len(dataset)})")
    target = dataset.images[args.target_index]

    log_path = out / "run-log.jsonl"
    with RunLogWriter(log_path) as writer:
        result = experiments.evolve_headless(model, sched, seed=args.seed,
                                             target_image=target, N=args.n,
                                             generations=args.generations,
                                             t_interp0=args.t_interp0, s=args.s,
                                             log_writer=writer)
    _write_csv(out / "best.csv",
               _meta(args, sched, checkpoint=str(args.checkpoint),
                     target_index=args.target_index, N=args.n,
                     generations=args.generations,
                     t_interp0=args.t_interp0, s=args.s),
               ["generation", "best_distance"],
               list(enumerate(result.best_distance, start=1)))
    export_png(target, out / "target.png")
    for ind in result.session.population:
        export_png(ind.image, out / f"final-{ind.id}.png")
    print(f"best distance by generation: "
          + " ".join(f"{d:.4f}" for d in result.best_distance))
    print(f"wrote {log_path}")
    return 0


def cmd_replay(args) -> int:
    model, sched = load_checkpoint(args.checkpoint)
    out = _out_dir(args)
    events = read_run_log(args.log)
    session = replay_run_log(events, model, sched)
    for ind in session.population:
        export_png(ind.image, out / f"replay-{ind.id}.png")
    print(f"replayed {session.generation} generation(s) of session "
          f"{session.session_id}; population written to {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import ModelRegistry, create_app

    registry = ModelRegistry()
    for path in args.checkpoint:
        model_id = registry.add_checkpoint(path)
        print(f"registered model {model_id!r} from {path}")
    defaults = {"N": args.default_n, "t_interp0": args.default_t_interp0,
                "s": args.default_s}
    app = create_app(registry, run_log_dir=args.run_log_dir,
                     defaults={k: v for k, v in defaults.items() if v is not None})
    if args.static_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=args.static_dir, html=True), name="ui")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# parser

def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slerpevo",
        description="Evolutionary image search in a DDPM's noise-sequence space.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0)
        return p

    p = add("build-data", cmd_build_data, "write a digit corpus in IDX format")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", default="desk")
    p.add_argument("--label", type=int, default=None)
    p.add_argument("--count", type=int, default=None)

    p = add("train", cmd_train, "train a denoiser and save checkpoints")
    p.add_argument("--data", required=True, help="directory holding the IDX pair")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", default="desk")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")

    p = add("sample", cmd_sample, "generate images from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--save-genotypes", action="store_true")

    p = add("crossover", cmd_crossover, "breed one child from two saved genotypes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--parent-a", required=True)
    p.add_argument("--parent-b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--t-interp", type=int, default=None)

    p = add("exp1", cmd_exp1, "trajectory PCA with a lambda sweep")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--num-images", type=int, default=50)
    p.add_argument("--snapshot-stride", type=int, default=None)
    p.add_argument("--t-interp", type=int, default=None)
    p.add_argument("--lambdas", default=None, help="comma-separated lambda grid")

    p = add("exp2", cmd_exp2, "offspring distance to each parent across lambda")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--t-interp", type=int, default=None)

    p = add("exp3", cmd_exp3, "offspring diversity across t_interp")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--offspring", type=int, default=20)
    p.add_argument("--t-interps", default=None, help="comma-separated t_interp grid")

    p = add("evolve-headless", cmd_evolve_headless,
            "run scripted-selector evolution against a dataset target")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", type=int, default=5)
    p.add_argument("--target-index", type=int, default=0)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--generations", type=int, default=6)
    p.add_argument("--t-interp0", type=int, default=20)
    p.add_argument("--s", type=int, default=20)

    p = add("replay", cmd_replay, "rebuild a session from its run log")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)

    p = add("serve", cmd_serve, "serve the interactive HTTP API")
    p.add_argument("--checkpoint", action="append", required=True,
                   help="checkpoint to register; repeatable")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8350)
    p.add_argument("--run-log-dir", default=None)
    p.add_argument("--default-n", type=int, default=None)
    p.add_argument("--default-t-interp0", type=int, default=None)
    p.add_argument("--default-s", type=int, default=None)
    p.add_argument("--static-dir", default=None, help="serve a built frontend from /")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
