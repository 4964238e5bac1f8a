"""Training configuration: a flat ``key = value`` file with CLI overrides.

One entry per line, ``#`` starts a comment, unknown keys are rejected.
Every key has a CLI flag of the same name (dashes for underscores), so a
run is fully described by its resolved config file.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

TRAIN_MODES = (
    "triplet_embed",  # BL1: hinge on embedding distances
    "triplet_metric",  # BL2: hinge on a raw one-dimensional learned score
    "triplet_improved_nosfx",  # two-dimensional softmax head, no auxiliary loss
    "triplet_improved",  # + auxiliary pair cross-entropy
    "quadruplet",  # + different-probe push, fixed margins
    "classification",  # BL3: contrastive + pair cross-entropy on doublets
    "quadruplet_margohnm",  # + batch-adaptive margins after warm start
)


@dataclass
class TrainConfig:
    mode: str = "quadruplet"
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3
    alpha1: float = 1.0
    alpha2: float = 0.5
    alpha_cts: float = 1.0
    softmax_aux_weight: float = 1.0
    warm_start_fraction: float = 0.5
    momentum: float = 0.0
    seed: int = 0
    embed_dims: tuple = (64, 32)
    head_dims: tuple = (32,)
    data_csv: str = ""
    synth_num_ids: int = 60
    synth_samples_per_id_per_camera: int = 2
    synth_dim: int = 16
    synth_intra_sigma: float = 0.3
    synth_inter_spread: float = 1.0
    synth_camera_shift_sigma: float = 0.3
    synth_cameras: int = 2
    test_fraction: float = 1.0 / 6.0
    trials: int = 10

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.alpha1 < 0 or self.alpha2 < 0 or self.alpha_cts < 0:
            raise ValueError("margins must be >= 0")
        if self.alpha1 < self.alpha2:
            raise ValueError("alpha1 must be >= alpha2")
        if not 0.0 <= self.warm_start_fraction <= 1.0:
            raise ValueError("warm_start_fraction must be in [0, 1]")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.embed_dims or any(d < 2 for d in self.embed_dims):
            raise ValueError("embed_dims must list widths >= 2 (final width >= 2)")
        if not self.head_dims or any(d < 1 for d in self.head_dims):
            raise ValueError("head_dims must list at least one hidden width >= 1")

    @property
    def head_kind(self) -> str:
        return "raw1" if self.mode == "triplet_metric" else "softmax2"

    @property
    def eval_mode(self) -> str:
        return "embed" if self.mode == "triplet_embed" else "metric"


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: str):
    if key in ("embed_dims", "head_dims"):
        return tuple(int(part) for part in raw.replace(" ", "").split(",") if part)
    ftype = _FIELD_TYPES[key]
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse flat ``key = value`` lines into raw string values."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{source}: line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"{source}: line {lineno}: unknown key {key!r}")
        values[key] = raw.strip()
    return values


def load_config(path: str, overrides: dict | None = None) -> TrainConfig:
    """Read a config file and apply override values (already typed or raw)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = parse_config_text(fh.read(), source=path)
    merged = {key: _coerce(key, value) for key, value in raw.items()}
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**merged)


def config_from_overrides(overrides: dict) -> TrainConfig:
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


def save_config(config: TrainConfig, path: str) -> None:
    lines = []
    for f in fields(TrainConfig):
        value = getattr(config, f.name)
        if f.name in ("embed_dims", "head_dims"):
            value = ",".join(str(d) for d in value)
        lines.append(f"{f.name} = {value}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
