"""Experiment configuration: a JSON document with one section per pipeline stage."""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .embed import TrainConfig
from .graph import SynthConfig, ValidationError
from .implant import ANCHOR_LINKS, PSEUDO_LINKS, ConnectionPattern, DecayConfig
from .metatune import MetaConfig, default_supports
from .metrics import DIRECTIONS, METRICS

MODES = ("baseline", "baseline-aw", "baseline--", "ps++", "psml")
GEOMETRIES = ("euclidean", "lorentz")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (exit status 2)."""


def _fill(cls, section: dict, where: str, **overrides):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    values = {**section, **overrides}
    try:
        return cls(**values)
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _pop_keys(section: dict, where: str, allowed: set[str]) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return dict(section)


@dataclass(frozen=True)
class DatasetConfig:
    """Either a synthetic pair (``synth``) or three input files."""

    synth: SynthConfig | None = None
    source: str | None = None
    target: str | None = None
    anchors: str | None = None
    split: str | None = None
    directed: bool | None = None
    train_ratio: float = 0.1

    @property
    def synthetic(self) -> bool:
        return self.synth is not None


@dataclass(frozen=True)
class EvalConfig:
    ns: tuple[int, ...] = (1, 5, 10, 30)
    hit_k: int = 30
    metric: str = "cosine"
    direction: str = "s2t"
    grid: int = 30
    top: int = 100
    network: str = "s"
    include_pseudo: bool = False


@dataclass(frozen=True)
class AblationConfig:
    aw_factor: float = 2.0
    drop_rate: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    embed: TrainConfig
    pattern: ConnectionPattern
    meta: MetaConfig
    eval: EvalConfig
    ablation: AblationConfig = field(default_factory=AblationConfig)
    shift: DecayConfig = field(default_factory=DecayConfig)
    sweep_ratios: tuple[float, ...] = (0.03, 0.07, 0.1, 0.15)
    mode: str = "baseline"
    geometry: str = "euclidean"
    seed: int = 0
    implant_enabled: bool = True
    meta_enabled: bool = True
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def uses_pseudo(self) -> bool:
        return self.mode in ("ps++", "psml") and self.implant_enabled

    @property
    def uses_meta(self) -> bool:
        return self.mode == "psml" and self.meta_enabled and self.meta.enabled

    def echo(self) -> dict:
        """Resolved configuration as plain JSON data."""
        def plain(x):
            if dataclasses.is_dataclass(x):
                return {f.name: plain(getattr(x, f.name)) for f in dataclasses.fields(x) if f.name != "raw"}
            if isinstance(x, (list, tuple)):
                return [plain(v) for v in x]
            return x
        return plain(self)


SECTIONS = {"dataset", "embed", "implant", "meta", "eval", "ablation", "shift", "sweep",
            "mode", "geometry", "seed"}


def parse_config(data: dict, seed: int | None = None, workers: int | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig; ``seed``/``workers`` override the document.

    The top-level seed is the default for every section seed that is not
    given explicitly (synthetic data, split, embedding, decay experiment).
    """
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    data = copy.deepcopy(data)
    unknown = sorted(set(data) - SECTIONS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    top_seed = data.get("seed", 0) if seed is None else seed
    if not isinstance(top_seed, int) or isinstance(top_seed, bool):
        raise ConfigError("seed must be an integer")

    mode = data.get("mode", "baseline")
    if mode not in MODES:
        raise ConfigError(f"mode {mode!r} not in {MODES}")
    geometry = data.get("geometry", "euclidean")
    if geometry not in GEOMETRIES:
        raise ConfigError(f"geometry {geometry!r} not in {GEOMETRIES}")

    ds = _pop_keys(data.get("dataset", {"synth": {}}), "dataset",
                   {"synth", "source", "target", "anchors", "split", "directed", "train_ratio"})
    if "synth" in ds:
        if any(k in ds for k in ("source", "target", "anchors", "split")):
            raise ConfigError("dataset: give either 'synth' or input paths, not both")
        synth = _fill(SynthConfig, ds["synth"] or {}, "dataset.synth",
                      **({} if "seed" in (ds["synth"] or {}) else {"seed": top_seed}))
        ds["synth"] = synth
    else:
        missing = [k for k in ("source", "target", "anchors") if not ds.get(k)]
        if missing:
            raise ConfigError(f"dataset: missing {', '.join(missing)}")
    dataset = _fill(DatasetConfig, ds, "dataset")
    if not 0 < dataset.train_ratio < 1:
        raise ConfigError(f"dataset.train_ratio {dataset.train_ratio} not in (0, 1)")

    emb = dict(data.get("embed", {}))
    emb.setdefault("seed", top_seed)
    if workers is not None:
        emb["workers"] = workers
    embed = _fill(TrainConfig, emb, "embed")
    if geometry == "lorentz" and embed.workers != 1:
        raise ConfigError("geometry 'lorentz' is single-worker only")

    imp = _pop_keys(data.get("implant", {}), "implant", {"enabled", "n", "anchor_links", "pseudo_links"})
    implant_enabled = bool(imp.pop("enabled", True))
    n = imp.get("n", 2)
    try:
        if "anchor_links" in imp or "pseudo_links" in imp:
            pattern = ConnectionPattern(n, tuple(imp.get("anchor_links", ("bidirectional",) * n)),
                                        tuple(imp.get("pseudo_links", ("bidirectional",) * (n * (n - 1) // 2))))
        else:
            pattern = ConnectionPattern.full(n)
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"implant: {exc}") from None

    meta_sec = dict(data.get("meta", {}))
    meta_enabled = bool(meta_sec.pop("enabled", True))
    if "supports" in meta_sec:
        meta_sec["supports"] = tuple(_fill(SynthConfig, s, f"meta.supports[{i}]")
                                     for i, s in enumerate(meta_sec["supports"]))
    else:
        meta_sec["supports"] = default_supports()
    meta = _fill(MetaConfig, meta_sec, "meta")

    ev = dict(data.get("eval", {}))
    if "ns" in ev:
        ev["ns"] = tuple(ev["ns"])
    ev.setdefault("metric", "lorentz" if geometry == "lorentz" else "cosine")
    evc = _fill(EvalConfig, ev, "eval")
    if not evc.ns or any(b <= a for a, b in zip(evc.ns, evc.ns[1:])) or evc.ns[0] < 1:
        raise ConfigError("eval.ns must be a nonempty strictly increasing list of positive integers")
    if evc.metric not in METRICS:
        raise ConfigError(f"eval.metric {evc.metric!r} not in {METRICS}")
    if (evc.metric == "lorentz") != (geometry == "lorentz"):
        raise ConfigError(f"eval.metric {evc.metric!r} does not fit geometry {geometry!r}")
    if evc.direction not in DIRECTIONS:
        raise ConfigError(f"eval.direction {evc.direction!r} not in {DIRECTIONS}")
    if evc.network not in ("s", "t"):
        raise ConfigError("eval.network must be 's' or 't'")
    if evc.grid < 1 or evc.top < 1 or evc.hit_k < 1:
        raise ConfigError("eval.grid, eval.top and eval.hit_k must be positive")

    ablation = _fill(AblationConfig, data.get("ablation", {}), "ablation")
    if not ablation.aw_factor > 0 or not 0 <= ablation.drop_rate < 1:
        raise ConfigError("ablation: aw_factor must be positive and drop_rate in [0, 1)")
    sh = dict(data.get("shift", {}))
    sh.setdefault("base_seed", top_seed)
    shift = _fill(DecayConfig, sh, "shift")

    sw = _pop_keys(data.get("sweep", {}), "sweep", {"ratios"})
    try:
        ratios = tuple(float(r) for r in sw.get("ratios", (0.03, 0.07, 0.1, 0.15)))
    except (TypeError, ValueError):
        raise ConfigError("sweep.ratios must be a list of numbers") from None

    return ExperimentConfig(dataset, embed, pattern, meta, evc, ablation, shift, ratios, mode, geometry,
                            top_seed, implant_enabled, meta_enabled, data)


def load_config(path, seed: int | None = None, workers: int | None = None) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return parse_config(data, seed, workers)
