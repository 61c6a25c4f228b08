"""The two classifiers: per-epoch stage scoring and whole-night health.

The stage model maps a (C, epoch_samples) window to 5 logits through a
strided conv front end, channel attention, a stack of bidirectional
selective-scan blocks, time-mean pooling, and a linear head.  The health
model consumes a one-hot hypnogram (5 stage rows + 1 mask row), runs the
same block stack at width 6, and pools only over unmasked positions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .eca import EcaLayer
from .errors import ConfigError, ShapeError
from .serialize import load_checkpoint, save_checkpoint
from .ssm import BiMambaBlock
from .stages import N_STAGES, STAGE_NAMES, StageLabel  # noqa: F401  (re-export)
from .tensor import Tensor

__all__ = [
    "StageModelConfig",
    "HealthModelConfig",
    "StageModel",
    "HealthModel",
    "build_stage_model",
    "build_health_model",
    "forward_stage",
    "forward_health",
    "predict_hypnogram",
    "load_model",
]

_DEFAULT_CNN = ((64, 7, 2), (96, 5, 2), (128, 3, 2))


@dataclass
class StageModelConfig:
    channels: int = 10
    epoch_samples: int = 1000
    n_bimamba: int = 1
    n_state: int = 16
    cnn: tuple = _DEFAULT_CNN
    dropout: float = 0.2
    use_eca: bool = True
    eca_k: int | None = None
    expand: int = 2
    d_conv: int = 4

    def __post_init__(self):
        self.cnn = tuple(tuple(layer) for layer in self.cnn)
        if self.n_bimamba < 1:
            raise ConfigError(f"need at least one block, got {self.n_bimamba}")
        if self.epoch_samples < 64:
            raise ConfigError(
                f"epoch_samples must be >= 64, got {self.epoch_samples}"
            )
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0,1), got {self.dropout}")
        for layer in self.cnn:
            if len(layer) != 3 or min(layer) < 1:
                raise ConfigError(f"cnn layers are (width,kernel,stride): {layer}")


@dataclass
class HealthModelConfig:
    max_cycles: int = 850
    n_bimamba: int = 1
    n_state: int = 8
    dropout: float = 0.2
    expand: int = 2
    d_conv: int = 4
    channels: int = 6  # 5 one-hot stage rows + 1 mask row

    def __post_init__(self):
        if self.max_cycles < 1:
            raise ConfigError(f"max_cycles must be >= 1, got {self.max_cycles}")
        if self.n_bimamba < 1:
            raise ConfigError(f"need at least one block, got {self.n_bimamba}")
        if self.channels != 6:
            raise ConfigError("health input is fixed at 6 rows (5 stages + mask)")


def _seeded(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


class _Base:
    """Shared parameter bookkeeping for both classifiers."""

    kind = ""
    config: object

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.blocks: list[BiMambaBlock] = []

    def _register_block(self, idx: int, block: BiMambaBlock):
        self.blocks.append(block)
        for name, tensor in block.parameters().items():
            self.params[f"blocks.{idx}.{name}"] = tensor

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def param_count(self) -> int:
        return sum(t.size for t in self.params.values())

    def zero_grads(self):
        for t in self.params.values():
            t.zero_grad()

    def save(self, path):
        cfg = asdict(self.config)
        named = [(name, tensor.data) for name, tensor in self.params.items()]
        save_checkpoint(path, named, self.kind, cfg)

    def load_params(self, arrays: dict[str, np.ndarray]):
        missing = sorted(set(self.params) ^ set(arrays))
        if missing:
            raise ConfigError(f"checkpoint parameter names do not match: {missing}")
        for name, tensor in self.params.items():
            if arrays[name].shape != tensor.data.shape:
                raise ShapeError(
                    f"checkpoint {name} has shape {arrays[name].shape}, "
                    f"model expects {tensor.data.shape}"
                )
            tensor.data = arrays[name].astype(np.float64)


class StageModel(_Base):
    kind = "stage"

    def __init__(self, cfg: StageModelConfig, seed: int):
        super().__init__()
        self.config = cfg
        rng = _seeded(seed)
        in_ch = cfg.channels
        self.cnn_layers = []
        for i, (width, kernel, stride) in enumerate(cfg.cnn):
            w = Tensor(
                rng.standard_normal((width, in_ch, kernel)) / np.sqrt(in_ch * kernel),
                requires_grad=True,
            )
            b = Tensor(np.zeros(width), requires_grad=True)
            self.params[f"cnn.{i}.w"] = w
            self.params[f"cnn.{i}.b"] = b
            self.cnn_layers.append((w, b, kernel, stride))
            in_ch = width
        self.d_model = in_ch
        self.eca = None
        if cfg.use_eca:
            self.eca = EcaLayer(self.d_model, rng, k=cfg.eca_k)
            self.params["eca.conv_w"] = self.eca.conv_w
        for i in range(cfg.n_bimamba):
            block = BiMambaBlock(
                self.d_model, cfg.n_state, rng, expand=cfg.expand, d_conv=cfg.d_conv
            )
            self._register_block(i, block)
        self.params["head.w"] = Tensor(
            rng.standard_normal((self.d_model, N_STAGES)) * 0.01, requires_grad=True
        )
        self.params["head.b"] = Tensor(np.zeros(N_STAGES), requires_grad=True)

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        cfg = self.config
        if x.ndim != 3 or x.shape[1] != cfg.channels or x.shape[2] != cfg.epoch_samples:
            raise ShapeError(
                f"stage input must be (B,{cfg.channels},{cfg.epoch_samples}), "
                f"got {x.shape}"
            )
        h = x
        for w, b, kernel, stride in self.cnn_layers:
            h = T.conv1d(h, w, b, stride=stride, padding=kernel // 2)
            h = T.relu(h)
            h = T.dropout(h, cfg.dropout, rng=rng, train=train)
        target_len = cfg.epoch_samples // 8
        if h.shape[-1] > target_len:  # front end must land at <= L/8
            h = T.narrow(h, 0, target_len, axis=-1)
        if self.eca is not None:
            h = self.eca.forward(h)
        for block in self.blocks:
            h = block.forward(h)
        pooled = T.mean(h, axis=2)
        pooled = T.dropout(pooled, cfg.dropout, rng=rng, train=train)
        return T.add(T.matmul(pooled, self.params["head.w"]), self.params["head.b"])


class HealthModel(_Base):
    kind = "health"

    def __init__(self, cfg: HealthModelConfig, seed: int):
        super().__init__()
        self.config = cfg
        rng = _seeded(seed)
        self.d_model = cfg.channels
        for i in range(cfg.n_bimamba):
            block = BiMambaBlock(
                self.d_model, cfg.n_state, rng, expand=cfg.expand, d_conv=cfg.d_conv
            )
            self._register_block(i, block)
        self.params["head.w"] = Tensor(
            rng.standard_normal((self.d_model, 2)) * 0.01, requires_grad=True
        )
        self.params["head.b"] = Tensor(np.zeros(2), requires_grad=True)

    def forward(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        cfg = self.config
        if x.ndim != 3 or x.shape[1] != cfg.channels or x.shape[2] != cfg.max_cycles:
            raise ShapeError(
                f"health input must be (B,{cfg.channels},{cfg.max_cycles}), "
                f"got {x.shape}"
            )
        mask = x.data[:, 5:6, :]  # 1 where the hypnogram has a real epoch
        h = T.mul(x, Tensor(mask))  # padded tails can carry no signal
        for block in self.blocks:
            h = block.forward(h)
        counts = mask[:, 0, :].sum(axis=1)
        inv = 1.0 / np.maximum(counts, 1.0)  # empty mask pools to exact zero
        pooled = T.mul(T.tsum(T.mul(h, Tensor(mask)), axis=2), Tensor(inv[:, None]))
        pooled = T.dropout(pooled, cfg.dropout, rng=rng, train=train)
        return T.add(T.matmul(pooled, self.params["head.w"]), self.params["head.b"])


def build_stage_model(cfg: StageModelConfig, seed: int) -> StageModel:
    return StageModel(cfg, seed)


def build_health_model(cfg: HealthModelConfig, seed: int) -> HealthModel:
    return HealthModel(cfg, seed)


def forward_stage(model: StageModel, batch, train: bool = False, rng=None) -> Tensor:
    data = batch.data if hasattr(batch, "data") else batch
    x = data if isinstance(data, Tensor) else Tensor(data)
    return model.forward(x, train=train, rng=rng)


def forward_health(model: HealthModel, x, train: bool = False, rng=None) -> Tensor:
    xt = x if isinstance(x, Tensor) else Tensor(x)
    return model.forward(xt, train=train, rng=rng)


def predict_hypnogram(model: StageModel, batches) -> np.ndarray:
    """Argmax stage per epoch, in input order; ties go to the lower index."""
    out = []
    with T.no_grad():
        for batch in batches:
            logits = forward_stage(model, batch, train=False)
            out.append(np.argmax(logits.data, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _config_from_dict(kind: str, cfg: dict):
    if kind == "stage":
        return StageModelConfig(**cfg)
    if kind == "health":
        return HealthModelConfig(**cfg)
    raise ConfigError(f"unknown checkpoint kind {kind!r}")


def load_model(path):
    """Rebuild a model from a checkpoint directory (self-describing)."""
    manifest, arrays = load_checkpoint(path)
    cfg = _config_from_dict(manifest["kind"], manifest["config"])
    model = StageModel(cfg, 0) if manifest["kind"] == "stage" else HealthModel(cfg, 0)
    model.load_params(arrays)
    return model
