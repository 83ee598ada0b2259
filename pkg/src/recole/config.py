"""Flat ``key = value`` run configuration."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .training import ABLATIONS, TrainConfig
from .tsne import TsneConfig

# stage seeds are derived from the master seed by fixed offsets
SEED_OFFSETS = {"cluster": 1, "init": 2, "pretrain": 3, "finetune": 4, "eval": 5, "plot": 6}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data
    dataset: str = ""
    test_dataset: str = ""
    glove: str = ""
    glove_dim: int = 300
    # files
    checkpoint: str = ""
    checkpoint_out: str = ""
    out_dir: str = "."
    eval_pool: str = ""
    seed: int = 42
    threads: int = 1
    # relation reduction + clustering
    reducer: str = "tsne"
    d_r: int = 2
    perplexity: float = 30.0
    tsne_iters: int = 1000
    tsne_lr: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    n_c: int = 5
    kmeans_restarts: int = 10
    # encoder
    m: int = 3
    d: int = 32
    K: int = 3
    aggregation: str = "sum"
    # training
    tau: float = 0.5
    sim_mode: str = "flatten"
    include_positive_in_denominator: bool = False
    epochs_pretrain: int = 10
    epochs_finetune: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    negatives_per_positive_finetune: int = 1
    filtered_corruption: bool = True
    ablation: str = "none"
    # evaluation
    hits_negatives: int = 50
    longtail_thresholds: str = "5,10,20,50"
    held_out_relation: str = ""
    cluster_override: int = -1
    triplet: str = ""

    def validate(self):
        if self.reducer not in ("tsne", "pca", "none"):
            raise ConfigError(f"reducer must be tsne, pca or none, not {self.reducer!r}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {', '.join(ABLATIONS)}")
        if self.aggregation not in ("sum", "mean"):
            raise ConfigError("aggregation must be sum or mean")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        for k in ("n_c",):
            if getattr(self, k) < 2:
                raise ConfigError(f"{k} must be at least 2")
        for k in ("glove_dim", "d_r", "tsne_iters", "m", "d", "K", "batch_size", "kmeans_restarts",
                  "negatives_per_positive_finetune", "hits_negatives", "threads"):
            if getattr(self, k) < 1:
                raise ConfigError(f"{k} must be at least 1")
        for k in ("epochs_pretrain", "epochs_finetune"):
            if getattr(self, k) < 0:
                raise ConfigError(f"{k} must be non-negative")
        return self

    def stage_seed(self, stage: str) -> int:
        return self.seed + SEED_OFFSETS[stage]

    def require(self, *keys):
        missing = [k for k in keys if not getattr(self, k)]
        if missing:
            raise ConfigError(f"missing required config key(s): {', '.join(missing)}")

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            tau=self.tau, m=self.m, d=self.d, K=self.K, n_c=self.n_c,
            epochs_pretrain=self.epochs_pretrain, epochs_finetune=self.epochs_finetune,
            batch_size=self.batch_size, learning_rate=self.learning_rate,
            adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2, adam_eps=self.adam_eps,
            negatives_per_positive_finetune=self.negatives_per_positive_finetune,
            filtered_corruption=self.filtered_corruption,
            include_positive_in_denominator=self.include_positive_in_denominator,
            sim_mode=self.sim_mode, aggregation=self.aggregation, ablation=self.ablation,
            seed=self.seed if seed is None else seed, threads=self.threads)

    def tsne_config(self) -> TsneConfig:
        return TsneConfig(d_r=self.d_r, perplexity=self.perplexity, iters=self.tsne_iters,
                          learning_rate=self.tsne_lr, exaggeration=self.exaggeration,
                          exaggeration_iters=self.exaggeration_iters,
                          momentum_initial=self.momentum_initial, momentum_final=self.momentum_final,
                          momentum_switch=self.momentum_switch, seed=self.stage_seed("cluster"))

    def thresholds(self) -> list[int]:
        return [int(x) for x in self.longtail_thresholds.split(",") if x.strip()]

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())

    def updated(self, **kv) -> "RunConfig":
        d = asdict(self)
        d.update(kv)
        return RunConfig(**d)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


_TYPES = {f.name: f.type if isinstance(f.type, str) else f.type.__name__ for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    typ = _TYPES[key]
    raw = raw.strip()
    try:
        if typ == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key} ({typ}): {raw!r}") from None
    return raw


def parse_pairs(pairs, base: RunConfig | None = None, source: str = "<args>") -> RunConfig:
    """Apply ``key=value`` strings to a config (unknown keys are rejected)."""
    cfg = asdict(base or RunConfig())
    for lineno, line in enumerate(pairs, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if k not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {k!r}")
        cfg[k] = _convert(k, v)
    return RunConfig(**cfg)


DATA_KEYS = ("dataset", "test_dataset", "glove")


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    """Read a config file; relative data paths are taken relative to the file."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    cfg = parse_pairs(lines, base, str(path))
    set_here = parse_pairs(lines, RunConfig(**{k: "" for k in DATA_KEYS}), str(path))
    fix = {}
    for k in DATA_KEYS:
        v = getattr(set_here, k)
        if v and not Path(v).is_absolute():
            fix[k] = str(path.parent / v)
    return cfg.updated(**fix) if fix else cfg


def from_text(text: str) -> RunConfig:
    return parse_pairs(text.splitlines(), RunConfig(), "<checkpoint>")
