"""Command-line pipeline: generate, train, finetune, evaluate, density, run, shift-experiment, sweep.

Every subcommand writes into ``--out`` and leaves a ``manifest.json`` with the
resolved configuration, seed, wall time and the dataset digest.  Exit status
is 0 on success, 2 for configuration errors and 3 when a stage fails.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .embed import EmbeddingSpace, Trainer, load_space, save_space
from .graph import (AnchorSet, Graph, ablation_add_weight, ablation_drop_edges, generate_pair,
                    load_anchors, load_edgelist, load_split, save_anchors, save_edgelist, split_anchors)
from .hyperbolic import LorentzTrainer
from .implant import PseudoRegistry, implant, shift_decay_experiment
from .metatune import finetune_query, init_weights, learn_prior, psml_train
from .metrics import alignment_report, density_report, ppi

log = logging.getLogger("psml")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage


@contextmanager
def stage(name: str):
    try:
        yield
    except (ConfigError, StageError):
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# stages

@dataclass
class Dataset:
    gs: Graph
    gt: Graph
    anchors: AnchorSet
    digest: str


def load_dataset(cfg: ExperimentConfig, out: Path) -> Dataset:
    """Build or read the network pair, split anchors, and write a canonical copy under ``out/dataset``."""
    ds = cfg.dataset
    with stage("dataset"):
        if ds.synthetic:
            gs, gt, anchors = generate_pair(ds.synth)
        else:
            gs = load_edgelist(ds.source, ds.directed, "s")
            gt = load_edgelist(ds.target, ds.directed, "t")
            if ds.split:
                anchors = load_split(ds.split, gs, gt)
            else:
                anchors = load_anchors(ds.anchors, gs, gt)
        if not anchors.test:
            anchors = split_anchors(anchors, ds.train_ratio, cfg.seed)
        folder = out / "dataset"
        folder.mkdir(parents=True, exist_ok=True)
        save_edgelist(gs, folder / "source.edges")
        save_edgelist(gt, folder / "target.edges")
        save_anchors(anchors, gs, gt, folder / "anchors.txt", with_roles=True)
        h = hashlib.sha256()
        for name in ("source.edges", "target.edges", "anchors.txt"):
            h.update((folder / name).read_bytes())
    return Dataset(gs, gt, anchors, h.hexdigest())


def trainer_class(cfg: ExperimentConfig):
    return LorentzTrainer if cfg.geometry == "lorentz" else Trainer


@dataclass
class TrainResult:
    space: EmbeddingSpace
    registry: PseudoRegistry | None = None
    weights: np.ndarray | None = None
    trace: list | None = None


def train_stage(cfg: ExperimentConfig, data: Dataset) -> TrainResult:
    gs, gt, anchors = data.gs, data.gt, data.anchors
    cls = trainer_class(cfg)
    with stage("train"):
        if cfg.mode == "baseline-aw":
            gs = ablation_add_weight(gs, anchors, cfg.ablation.aw_factor)
            gt = ablation_add_weight(gt, anchors, cfg.ablation.aw_factor)
        elif cfg.mode == "baseline--":
            gs = ablation_drop_edges(gs, cfg.ablation.drop_rate, cfg.seed)
            gt = ablation_drop_edges(gt, cfg.ablation.drop_rate, cfg.seed + 1)
        if cfg.mode == "psml" and cfg.uses_pseudo:
            meta = cfg.meta if cfg.uses_meta else replace(cfg.meta, iterations=0, supports=())
            res = psml_train(gs, gt, anchors, cfg.pattern, cfg.embed, meta, cls)
            return TrainResult(res.space, res.registry, res.weights, [r.to_dict() for r in res.trace])
        reg = None
        pseudo = None
        if cfg.uses_pseudo:
            gs, gt, reg = implant(gs, gt, anchors, cfg.pattern)
            pseudo = reg.anchor_of()
        trainer = cls(gs, gt, anchors, cfg.embed, pseudo)
        for _ in range(cfg.embed.epochs):
            trainer.run_epoch()
        return TrainResult(trainer.space(), reg)


def save_train_result(res: TrainResult, out: Path) -> None:
    save_space(res.space, out / "space")
    if res.registry is not None:
        _dump(out / "space" / "registry.json", res.registry.to_dict())
    if res.weights is not None:
        _dump(out / "space" / "weights.json", [float(w) for w in res.weights])
    if res.trace is not None:
        _dump(out / "trace.json", res.trace)


def evaluate_stage(cfg: ExperimentConfig, space: EmbeddingSpace, data: Dataset):
    ev = cfg.eval
    with stage("evaluate"):
        return alignment_report(space, data.anchors, data.gs, data.gt, ev.ns, ev.hit_k, ev.metric,
                                ev.direction, {"mode": cfg.mode, "geometry": cfg.geometry})


def density_stage(cfg: ExperimentConfig, space: EmbeddingSpace, data: Dataset, pseudo_graphs=None):
    ev = cfg.eval
    with stage("density"):
        g = data.gs if ev.network == "s" else data.gt
        if ev.include_pseudo and pseudo_graphs is not None:
            g = pseudo_graphs[0 if ev.network == "s" else 1]
        return density_report(space, g, ev.grid, ev.top, ev.include_pseudo)


def write_alignment(report, out: Path) -> None:
    _dump(out / "alignment.json", report.to_dict())


def write_density(report, out: Path) -> None:
    _dump(out / "density.json", report.to_dict())
    (out / "density_cells.csv").write_text(report.cells_csv(), encoding="utf-8")
    (out / "density_frequency.csv").write_text(report.frequency_csv(), encoding="utf-8")


def _pseudo_graphs(data: Dataset, reg: PseudoRegistry | None):
    if reg is None:
        return None
    gs, gt, _ = implant(data.gs, data.gt, AnchorSet.all_train(reg.anchors), reg.pattern)
    return gs, gt


def _load_space_dir(path) -> tuple[EmbeddingSpace, PseudoRegistry | None, list | None]:
    with stage("load-space"):
        path = Path(path)
        space = load_space(path)
        reg = weights = None
        if (path / "registry.json").exists():
            reg = PseudoRegistry.from_dict(json.loads((path / "registry.json").read_text()))
        if (path / "weights.json").exists():
            weights = json.loads((path / "weights.json").read_text())
    return space, reg, weights


# ---------------------------------------------------------------------------
# subcommands

def _warnings(cfg: ExperimentConfig) -> list[str]:
    out = []
    if cfg.mode == "ps++" and "meta" in cfg.raw:
        out.append("mode 'ps++' ignores the meta section")
    if cfg.mode in ("baseline", "baseline-aw", "baseline--") and "implant" in cfg.raw:
        out.append(f"mode '{cfg.mode}' ignores the implant section")
    for w in out:
        log.warning(w)
    return out


def cmd_generate(cfg, args, out):
    return load_dataset(cfg, out), {}


def cmd_train(cfg, args, out):
    data = load_dataset(cfg, out)
    res = train_stage(cfg, data)
    save_train_result(res, out)
    return data, {}


def cmd_finetune(cfg, args, out):
    data = load_dataset(cfg, out)
    space, reg, weights = _load_space_dir(args.space)
    if reg is None:
        raise StageError("finetune", FileNotFoundError(f"{args.space} has no registry.json (no pseudo anchors)"))
    with stage("finetune"):
        trace = []
        if weights is not None:
            W = np.asarray(weights, dtype=np.float64)
        elif cfg.meta.supports:
            W = learn_prior(cfg.meta, cfg.embed, reg.pattern, None, trace, trainer_class(cfg))
        else:
            W = init_weights(reg.pattern, cfg.meta.w_init)
        gs2, gt2 = _pseudo_graphs(data, reg)
        W, updated = finetune_query(space, reg, W, cfg.meta, gs2, gt2, cfg.meta.iterations, trace)
        vectors = space.vectors.copy()
        for p, vec in updated.items():
            vectors[space.row(p)] = vec
        tuned = EmbeddingSpace(space.ids, vectors, space.merged, space.context, space.pseudo, space.geometry)
    save_train_result(TrainResult(tuned, reg, W, [r.to_dict() for r in trace]), out)
    return data, {}


def cmd_evaluate(cfg, args, out):
    data = load_dataset(cfg, out)
    space, _, _ = _load_space_dir(args.space)
    write_alignment(evaluate_stage(cfg, space, data), out)
    return data, {}


def cmd_density(cfg, args, out):
    data = load_dataset(cfg, out)
    space, reg, _ = _load_space_dir(args.space)
    write_density(density_stage(cfg, space, data, _pseudo_graphs(data, reg)), out)
    return data, {}


def cmd_run(cfg, args, out):
    data = load_dataset(cfg, out)
    res = train_stage(cfg, data)
    save_train_result(res, out)
    if res.trace is None:
        _dump(out / "trace.json", [])
    write_alignment(evaluate_stage(cfg, res.space, data), out)
    write_density(density_stage(cfg, res.space, data, _pseudo_graphs(data, res.registry)), out)
    return data, {}


def cmd_shift(cfg, args, out):
    with stage("shift-experiment"):
        report = shift_decay_experiment(cfg.shift)
    (out / "shift_report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "shift_records.csv").write_text(report.records_csv(), encoding="utf-8")
    return None, {"ordering": report.ordered}


SWEEP_MODES = ("baseline", "ps++", "psml")


def _sweep_cell(cfg: ExperimentConfig, ratio: float, mode: str) -> dict[int, float]:
    run_cfg = replace(cfg, mode=mode, dataset=replace(cfg.dataset, train_ratio=ratio))
    out = Path(cfg.raw.get("_sweep_scratch", "."))
    data = load_dataset(run_cfg, out / f"ratio-{ratio!r}")
    res = train_stage(run_cfg, data)
    return evaluate_stage(run_cfg, res.space, data).precision


def cmd_sweep(cfg, args, out):
    ratios = cfg.sweep_ratios
    if args.ratios is not None:
        try:
            ratios = tuple(float(r) for r in args.ratios.split(",") if r.strip())
        except ValueError:
            raise ConfigError(f"--ratios {args.ratios!r} is not a comma-separated list of numbers") from None
    if not ratios:
        raise ConfigError("sweep needs at least one training ratio")
    if any(not 0 < r < 1 for r in ratios):
        raise ConfigError("sweep ratios must lie in (0, 1)")
    if not cfg.dataset.synthetic and cfg.dataset.split:
        raise ConfigError("sweep re-splits anchors per ratio; remove dataset.split")
    cfg = replace(cfg, embed=replace(cfg.embed, workers=1), raw={**cfg.raw, "_sweep_scratch": str(out / "runs")})
    jobs = [(r, m) for r in ratios for m in SWEEP_MODES]
    with stage("sweep"):
        if args.workers and args.workers > 1:
            with ProcessPoolExecutor(args.workers) as pool:
                results = list(pool.map(_sweep_cell, [cfg] * len(jobs), *zip(*jobs)))
        else:
            results = [_sweep_cell(cfg, r, m) for r, m in jobs]
    ns = cfg.eval.ns
    lines = [",".join(["ratio", "mode"] + [f"P@{n}" for n in ns] + [f"PPI@{n}" for n in ns])]
    by_job = dict(zip(jobs, results))
    for r, m in jobs:
        prec, base = by_job[(r, m)], by_job[(r, "baseline")]
        ppis = []
        for n in ns:
            ppis.append("" if base[n] == 0 else repr(ppi(prec[n], base[n])))
        lines.append(",".join([repr(r), m] + [repr(prec[n]) for n in ns] + ppis))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    first = load_dataset(replace(cfg, dataset=replace(cfg.dataset, train_ratio=ratios[0])), out)
    return first, {}


COMMANDS = {
    "generate": (cmd_generate, "generate or load a network pair and split its anchors"),
    "train": (cmd_train, "train embeddings for the configured mode"),
    "finetune": (cmd_finetune, "meta fine-tune the pseudo anchors of a trained space"),
    "evaluate": (cmd_evaluate, "alignment report for a trained space"),
    "density": (cmd_density, "evenness report for a trained space"),
    "run": (cmd_run, "full pipeline: dataset, train, evaluate, density"),
    "shift-experiment": (cmd_shift, "shift-decay experiment on path probe graphs"),
    "sweep": (cmd_sweep, "baseline / ps++ / psml across training ratios"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psml", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, help="trainer threads (sweep: concurrent runs)")
        if name in ("finetune", "evaluate", "density"):
            p.add_argument("--space", required=True, help="space directory written by train/run")
        if name == "sweep":
            p.add_argument("--ratios", help="comma-separated training ratios")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        workers = None if args.command == "sweep" else args.workers
        if args.config:
            cfg = load_config(args.config, args.seed, workers)
        else:
            from .config import parse_config
            cfg = parse_config({}, args.seed, workers)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        warnings = _warnings(cfg)
        data, extra = COMMANDS[args.command][0](cfg, args, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except StageError as exc:
        log.error("%s", exc)
        return EXIT_STAGE
    manifest = {
        "command": args.command,
        "config": cfg.echo(),
        "seed": cfg.seed,
        "dataset_sha256": data.digest if data is not None else None,
        "warnings": warnings,
        "wall_time_seconds": round(time.perf_counter() - start, 3),
        **extra,
    }
    _dump(out / "manifest.json", manifest)
    log.info("wrote %s", out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
