"""Architectures assembled from the nn primitives, plus the training loop.

Three builders: a 3-conv CNN, a 5-conv + 3-FC network with a per-channel
input normalization layer and Xavier init throughout, and an
autoencoder-bottleneck + GRU-over-sequences head.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .nn import LayerSpec, LossSpec, Model
from .pipeline import PipelineSpec, bin_to_angle, label_to_bin
from .recorder import Dataset


@dataclass
class ModelSpec:
    name: str
    layers: list[LayerSpec]
    head: str                       # "regression" | "classification"
    input_shape: tuple
    n_bins: int = 15

    def __post_init__(self):
        if self.head not in ("regression", "classification"):
            raise ValueError(f"unknown head {self.head!r}")
        self.input_shape = tuple(self.input_shape)

    def to_dict(self) -> dict:
        return {"name": self.name, "head": self.head, "n_bins": self.n_bins,
                "input_shape": list(self.input_shape),
                "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(name=d["name"], head=d["head"], n_bins=d.get("n_bins", 15),
                   input_shape=tuple(d["input_shape"]),
                   layers=[LayerSpec.from_dict(l) for l in d["layers"]])

    def instantiate(self, seed: int = 0) -> Model:
        return Model.build(self.layers, self.input_shape, seed=seed)


def _head_layers(head: str, n_bins: int) -> list[LayerSpec]:
    if head == "classification":
        return [LayerSpec("linear", {"out": n_bins})]
    return [LayerSpec("linear", {"out": 1}), LayerSpec("tanh")]


def build_simple_cnn(input_shape=(3, 100, 200), head="classification",
                     n_bins: int = 15) -> ModelSpec:
    """3 conv layers (16/32/64 filters) then 3 shrinking linear layers."""
    layers = [
        LayerSpec("conv2d", {"filters": 16, "kernel": 3, "padding": 1}),
        LayerSpec("relu"),
        LayerSpec("maxpool"),
        LayerSpec("conv2d", {"filters": 32, "kernel": 3, "padding": 1}),
        LayerSpec("relu"),
        LayerSpec("maxpool"),
        LayerSpec("conv2d", {"filters": 64, "kernel": 3, "padding": 1}),
        LayerSpec("relu"),
        LayerSpec("maxpool"),
        LayerSpec("flatten"),
        LayerSpec("linear", {"out": 256}),
        LayerSpec("relu"),
        LayerSpec("linear", {"out": 64}),
        LayerSpec("relu"),
    ] + _head_layers(head, n_bins)
    return ModelSpec("simple_cnn", layers, head, input_shape, n_bins)


def build_pilotnet(input_shape=(3, 100, 200), head="classification",
                   n_bins: int = 15) -> ModelSpec:
    """Normalized input, 5 conv layers (24/36/48 s2, 64/64 s1), FC 100-50-head."""
    layers = [
        LayerSpec("normalize"),
        LayerSpec("conv2d", {"filters": 24, "kernel": 5, "stride": 2}),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"filters": 36, "kernel": 5, "stride": 2}),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"filters": 48, "kernel": 5, "stride": 2}),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"filters": 64, "kernel": 3}),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"filters": 64, "kernel": 3}),
        LayerSpec("relu"),
        LayerSpec("flatten"),
        LayerSpec("linear", {"out": 100}),
        LayerSpec("relu"),
        LayerSpec("linear", {"out": 50}),
        LayerSpec("relu"),
    ] + _head_layers(head, n_bins)
    return ModelSpec("pilotnet", layers, head, input_shape, n_bins)


def build_autoencoder(input_shape=(3, 24, 32),
                      embedding: int = 10) -> tuple[ModelSpec, ModelSpec]:
    """Conv encoder down to an `embedding`-wide bottleneck, mirrored decoder."""
    c, h, w = input_shape
    if h % 4 or w % 4:
        raise ValueError(f"autoencoder input H, W must be divisible by 4, "
                         f"got {input_shape}")
    h4, w4 = h // 4, w // 4
    enc = [
        LayerSpec("conv2d", {"filters": 8, "kernel": 3, "stride": 2, "padding": 1}),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"filters": 16, "kernel": 3, "stride": 2, "padding": 1}),
        LayerSpec("relu"),
        LayerSpec("flatten"),
        LayerSpec("linear", {"out": embedding}),
    ]
    dec = [
        LayerSpec("linear", {"out": 16 * h4 * w4}),
        LayerSpec("relu"),
        LayerSpec("reshape", {"shape": [16, h4, w4]}),
        LayerSpec("upsample2x"),
        LayerSpec("conv2d", {"filters": 8, "kernel": 3, "padding": 1}),
        LayerSpec("relu"),
        LayerSpec("upsample2x"),
        LayerSpec("conv2d", {"filters": c, "kernel": 3, "padding": 1}),
    ]
    return (ModelSpec("ae_encoder", enc, "regression", input_shape, 1),
            ModelSpec("ae_decoder", dec, "regression", (embedding,), 1))


def build_gru_head(embedding: int = 10, hidden: int = 10, seq_len: int = 3,
                   head: str = "classification", n_bins: int = 15) -> ModelSpec:
    """GRU over seq_len embeddings; the final hidden state feeds the head."""
    layers = [LayerSpec("gru", {"hidden": hidden})] + _head_layers(head, n_bins)
    return ModelSpec("gru_head", layers, head, (seq_len, embedding), n_bins)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    val_fraction: float = 0.2
    loss: LossSpec = field(default_factory=lambda: LossSpec(kind="ce"))
    pipeline: list = field(default_factory=list)
    label_scale: float = 1.0
    patience: int | None = None     # early stop on stalled val loss; off by default

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in
             ("epochs", "batch_size", "lr", "optimizer", "seed",
              "val_fraction", "label_scale", "pipeline", "patience")}
        d["loss"] = {"kind": self.loss.kind, "n_bins": self.loss.n_bins,
                     "class_weights": self.loss.class_weights,
                     "sigma": self.loss.sigma, "lam": self.loss.lam}
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        d = json.loads(text)
        loss = d.pop("loss", None)
        cfg = cls(**d)
        if loss:
            cfg.loss = LossSpec(**loss)
        return cfg


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    pred_entropy: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        rows = ["epoch,train_loss,val_loss,val_acc,pred_entropy"]
        for i in range(len(self.train_loss)):
            rows.append(f"{i},{self.train_loss[i]:.6f},{self.val_loss[i]:.6f},"
                        f"{self.val_acc[i]:.6f},{self.pred_entropy[i]:.6f}")
        return "\n".join(rows) + "\n"


def image_to_input(rgb: np.ndarray) -> np.ndarray:
    """HWC bytes or floats -> CHW float32 in [0, 1]."""
    x = rgb.astype(np.float32) / 255.0 if rgb.dtype == np.uint8 else rgb.astype(np.float32)
    if x.ndim == 2:
        x = x[None, :, :]
    else:
        x = np.transpose(x, (2, 0, 1))
    return x


def materialize(dataset: Dataset, pipeline: PipelineSpec | None, seed: int,
                loss: LossSpec, label_scale: float = 1.0):
    """Apply the pipeline and stack the dataset into (X, y) arrays."""
    if pipeline is not None and pipeline.ops:
        dataset = pipeline.apply_dataset(dataset, seed=seed)
    xs, ys = [], []
    for s in dataset.samples:
        xs.append(image_to_input(s.rgb))
        ys.append(s.angle)
    x = np.stack(xs)
    angles = np.array(ys, dtype=np.float32)
    if loss.is_classification:
        y = np.array([label_to_bin(a, loss.n_bins) for a in angles])
    else:
        y = angles * label_scale
    return x, y


def _mean_softmax_entropy(model: Model, x: np.ndarray,
                          batch: int = 256) -> float:
    probs = []
    for i in range(0, len(x), batch):
        probs.append(nn.softmax(model.forward(x[i:i + batch])))
    p = np.concatenate(probs).mean(axis=0)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def train(dataset: Dataset, spec: ModelSpec, config: TrainConfig,
          out_dir=None, stop=None) -> tuple[Model, TrainHistory]:
    """Deterministic minibatch training.

    With val_fraction = 0 the per-epoch metrics are computed over the training
    set itself. Checkpoints go to out_dir/last.ckpt and out_dir/best.ckpt (best
    validation loss) when out_dir is given. `stop(epoch, history)` may end
    training early.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    pipeline = PipelineSpec(config.pipeline) if config.pipeline else None
    x, y = materialize(dataset, pipeline, config.seed, config.loss,
                       config.label_scale)
    if tuple(x.shape[1:]) != spec.input_shape:
        raise ValueError(f"pipeline output {tuple(x.shape[1:])} does not match "
                         f"model input {spec.input_shape}")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(x))
    n_val = int(len(x) * config.val_fraction)
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        raise ValueError("no training samples after validation split")
    x_tr, y_tr = x[train_idx], y[train_idx]
    x_ev = x[val_idx] if n_val else x_tr
    y_ev = y[val_idx] if n_val else y_tr

    model = spec.instantiate(seed=config.seed)
    opt = nn.make_optimizer(config.optimizer, model.params(), config.lr)
    history = TrainHistory()
    best_val = math.inf
    since_best = 0
    classify = config.loss.is_classification

    for epoch in range(config.epochs):
        idx = rng.permutation(len(x_tr))
        losses = []
        for b0 in range(0, len(idx), config.batch_size):
            sel = idx[b0:b0 + config.batch_size]
            model.zero_grad()
            out = model.forward(x_tr[sel])
            loss, grad = config.loss.compute(out, y_tr[sel])
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"NaN loss at epoch {epoch} batch {b0 // config.batch_size}")
            model.backward(grad.reshape(out.shape))
            opt.step()
            losses.append(loss)
        history.train_loss.append(float(np.mean(losses)))

        out_ev = model.forward(x_ev)
        val_loss, _ = config.loss.compute(out_ev, y_ev)
        history.val_loss.append(val_loss)
        if classify:
            acc = float((out_ev.argmax(axis=1) == y_ev).mean())
            history.val_acc.append(acc)
            history.pred_entropy.append(_mean_softmax_entropy(model, x_ev))
        else:
            history.val_acc.append(float("nan"))
            history.pred_entropy.append(float("nan"))

        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            save_model(out_dir / "last.ckpt", model, spec, config.pipeline)
            if val_loss < best_val:
                save_model(out_dir / "best.ckpt", model, spec, config.pipeline)
        if val_loss < best_val:
            best_val = val_loss
            since_best = 0
        else:
            since_best += 1
        if config.patience is not None and since_best >= config.patience:
            break
        if stop is not None and stop(epoch, history):
            break
    return model, history


def overfit_sanity(spec: ModelSpec, dataset: Dataset, config: TrainConfig,
                   max_epochs: int = 500) -> tuple[bool, str]:
    """Can the model memorize a small dataset?

    Passes iff train accuracy reaches 100% (classification) or train MSE drops
    below 1e-3 (regression) within max_epochs. Contradictory duplicates
    (identical image, different label) are reported instead of trained on.
    """
    samples = dataset.samples
    for i in range(len(samples)):
        for j in range(i + 1, len(samples)):
            if (samples[i].rgb.shape == samples[j].rgb.shape
                    and np.array_equal(samples[i].rgb, samples[j].rgb)
                    and samples[i].angle != samples[j].angle):
                return False, "inconsistent labels"

    cfg = TrainConfig(epochs=max_epochs, batch_size=config.batch_size,
                      lr=config.lr, optimizer=config.optimizer,
                      seed=config.seed, val_fraction=0.0, loss=config.loss,
                      pipeline=config.pipeline, label_scale=config.label_scale)

    if config.loss.is_classification:
        def done(epoch, history):
            return history.val_acc[-1] >= 1.0
    else:
        def done(epoch, history):
            return history.val_loss[-1] < 1e-3

    _, history = train(dataset, spec, cfg, stop=done)
    if done(len(history.train_loss) - 1, history):
        return True, f"memorized after {len(history.train_loss)} epochs"
    return False, f"did not memorize within {max_epochs} epochs"


def train_autoencoder(images: np.ndarray, enc_spec: ModelSpec,
                      dec_spec: ModelSpec, epochs: int = 10,
                      batch_size: int = 8, lr: float = 1e-3,
                      seed: int = 0) -> tuple[Model, Model, list[float]]:
    """Train encoder+decoder on reconstruction MSE; returns per-epoch loss."""
    full = Model.build(enc_spec.layers + dec_spec.layers, enc_spec.input_shape,
                       seed=seed)
    opt = nn.Adam(full.params(), lr=lr)
    rng = np.random.default_rng(seed)
    x = images.astype(np.float32)
    losses = []
    for _ in range(epochs):
        idx = rng.permutation(len(x))
        epoch_losses = []
        for b0 in range(0, len(idx), batch_size):
            sel = idx[b0:b0 + batch_size]
            full.zero_grad()
            out = full.forward(x[sel])
            loss, grad = nn.loss_mse(out.reshape(len(sel), -1),
                                     x[sel].reshape(len(sel), -1))
            full.backward(grad.reshape(out.shape))
            opt.step()
            epoch_losses.append(loss)
        losses.append(float(np.mean(epoch_losses)))
    n_enc = len(enc_spec.layers)
    encoder = Model(full.layers[:n_enc], enc_spec.input_shape,
                    (enc_spec.layers[-1].params["out"],))
    decoder = Model(full.layers[n_enc:], encoder.output_shape,
                    enc_spec.input_shape)
    return encoder, decoder, losses


def encode_sequences(encoder: Model, x: np.ndarray, seq_len: int = 3):
    """Consecutive-frame embedding sequences; sequence i covers frames
    [i, i+seq_len) and carries the label index of its last frame."""
    emb = encoder.forward(x.astype(np.float32))
    n = len(emb) - seq_len + 1
    if n < 1:
        raise ValueError(f"need at least {seq_len} frames, got {len(emb)}")
    seqs = np.stack([emb[i:i + seq_len] for i in range(n)])
    last = np.arange(seq_len - 1, seq_len - 1 + n)
    return seqs, last


def save_model(path, model: Model, spec: ModelSpec,
               pipeline_ops: list | None = None) -> None:
    params = model.params()
    nn.save_checkpoint(path, spec.to_dict(), [p.data for p in params],
                       [p.name for p in params], pipeline=pipeline_ops or [])


def load_model(path) -> tuple[Model, ModelSpec, list]:
    spec_dict, params, _ = nn.load_checkpoint(path)
    spec = ModelSpec.from_dict(spec_dict)
    model = spec.instantiate(seed=0)
    own = model.params()
    if len(own) != len(params):
        raise ValueError(f"checkpoint has {len(params)} tensors, model "
                         f"expects {len(own)}")
    for p, data in zip(own, params):
        if p.data.shape != data.shape:
            raise ValueError(f"shape mismatch for {p.name}: "
                             f"{p.data.shape} vs {data.shape}")
        p.data = data
    pipeline = nn.load_sidecar(path).get("pipeline", [])
    return model, spec, pipeline


def predict_angles(model: Model, spec: ModelSpec, x: np.ndarray,
                   decode: str = "argmax") -> np.ndarray:
    """Steering angles from raw model output.

    Classification decodes argmax -> bin center by default, or the
    probability-weighted expectation with decode="expect".
    """
    out = model.forward(x)
    if spec.head == "regression":
        return np.clip(out[:, 0], -1.0, 1.0)
    if decode == "argmax":
        bins = out.argmax(axis=1)
        return np.array([bin_to_angle(int(b), spec.n_bins) for b in bins])
    if decode == "expect":
        p = nn.softmax(out)
        centers = np.array([bin_to_angle(i, spec.n_bins)
                            for i in range(spec.n_bins)])
        return p @ centers
    raise ValueError(f"unknown decode {decode!r}")
