"""Shared Local Encoder: per-position dense layers plus a fully connected head.

The model applies the same stack of dense layers (1x1 convolutions) at every
spatial position of its input map, flattens, and finishes with fully
connected layers; every learned layer except the final classifier is
followed by batch normalization and a ReLU.  Forward, backward and the SGD
loop are implemented directly on numpy arrays in float64, which keeps the
finite-difference gradient checks meaningful.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from .container import read_container, write_container
from .errors import FormatError, InvalidArgumentError

STANDARDIZE_EPS = 1e-8


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.9


@dataclass
class SleModel:
    """Standardizer, shared local layers, FC head and final classifier."""

    in_channels: int
    spatial_side: int
    class_count: int
    standard_mean: np.ndarray
    standard_var: np.ndarray
    local_layers: list  # [(DenseLayer, BatchNormState)]
    fc_layers: list  # [(DenseLayer, BatchNormState)]
    classifier: DenseLayer
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ModelSpec:
    local_widths: tuple
    fc_widths: tuple
    class_count: int


@dataclass(frozen=True)
class TrainConfig:
    """Optimization recipe: SGD with momentum, stepped LR, weight decay.

    ``lr_drop_epochs`` lists the epochs at which the learning rate is
    multiplied by ``lr_drop_factor``; ``crop_padding == 0`` disables the
    random-crop augmentation.
    """

    epochs: int
    batch_size: int
    lr_initial: float = 0.1
    lr_drop_factor: float = 0.1
    lr_drop_epochs: tuple = ()
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    crop_padding: int = 0
    horizontal_flip: bool = False

    def __post_init__(self):
        drops = tuple(self.lr_drop_epochs)
        if any(b <= a for a, b in zip(drops, drops[1:])):
            raise InvalidArgumentError("lr_drop_epochs must be strictly increasing")
        object.__setattr__(self, "lr_drop_epochs", drops)

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_initial": self.lr_initial,
            "lr_drop_factor": self.lr_drop_factor,
            "lr_drop_epochs": list(self.lr_drop_epochs),
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
            "crop_padding": self.crop_padding,
            "horizontal_flip": self.horizontal_flip,
        }

    @classmethod
    def from_dict(cls, d):
        kwargs = dict(d)
        kwargs["lr_drop_epochs"] = tuple(kwargs.get("lr_drop_epochs", ()))
        return cls(**kwargs)


def standardize_fit(features):
    """Per-channel mean and (biased) variance over samples and positions."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 4 or features.shape[0] == 0:
        raise InvalidArgumentError("expected a nonempty (n, C, S, S) feature array")
    mean = features.mean(axis=(0, 2, 3))
    var = features.var(axis=(0, 2, 3))
    return mean, var


def standardize_apply(features, mean, var):
    """``(x - mean) / sqrt(var + eps)`` per channel; zero-variance safe."""
    features = np.asarray(features, dtype=np.float64)
    scale = 1.0 / np.sqrt(var + STANDARDIZE_EPS)
    return (features - mean[:, None, None]) * scale[:, None, None]


def _uniform_fan_in(rng, out_dim, in_dim):
    bound = 1.0 / np.sqrt(in_dim)
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


def init_model(spec, in_channels, spatial_side, rng, bn_epsilon=1e-5, bn_momentum=0.9):
    """Initialize an SLE: uniform fan-in weights, zero biases, identity BN."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)

    def block(out_dim, in_dim):
        dense = DenseLayer(
            weight=_uniform_fan_in(rng, out_dim, in_dim),
            bias=np.zeros(out_dim),
        )
        bn = BatchNormState(
            gamma=np.ones(out_dim),
            beta=np.zeros(out_dim),
            running_mean=np.zeros(out_dim),
            running_var=np.ones(out_dim),
            epsilon=bn_epsilon,
            momentum=bn_momentum,
        )
        return dense, bn

    local_layers = []
    width_in = in_channels
    for width in spec.local_widths:
        local_layers.append(block(width, width_in))
        width_in = width
    flat = width_in * spatial_side * spatial_side
    fc_layers = []
    width_in = flat
    for width in spec.fc_widths:
        fc_layers.append(block(width, width_in))
        width_in = width
    classifier = DenseLayer(
        weight=_uniform_fan_in(rng, spec.class_count, width_in),
        bias=np.zeros(spec.class_count),
    )
    return SleModel(
        in_channels=in_channels,
        spatial_side=spatial_side,
        class_count=spec.class_count,
        standard_mean=np.zeros(in_channels),
        standard_var=np.ones(in_channels),
        local_layers=local_layers,
        fc_layers=fc_layers,
        classifier=classifier,
    )


def parameters(model):
    """Ordered ``name -> array`` view of every trainable parameter."""
    out = {}
    for i, (dense, bn) in enumerate(model.local_layers):
        out[f"local{i}.weight"] = dense.weight
        out[f"local{i}.bias"] = dense.bias
        out[f"local{i}.gamma"] = bn.gamma
        out[f"local{i}.beta"] = bn.beta
    for i, (dense, bn) in enumerate(model.fc_layers):
        out[f"fc{i}.weight"] = dense.weight
        out[f"fc{i}.bias"] = dense.bias
        out[f"fc{i}.gamma"] = bn.gamma
        out[f"fc{i}.beta"] = bn.beta
    out["classifier.weight"] = model.classifier.weight
    out["classifier.bias"] = model.classifier.bias
    return out


def parameter_count(model):
    return sum(p.size for p in parameters(model).values())


def _bn_forward(z, bn, mode):
    if mode == "train":
        mean = z.mean(axis=0)
        var = z.var(axis=0)
        bn.running_mean = bn.momentum * bn.running_mean + (1 - bn.momentum) * mean
        bn.running_var = bn.momentum * bn.running_var + (1 - bn.momentum) * var
    else:
        mean = bn.running_mean
        var = bn.running_var
    inv = 1.0 / np.sqrt(var + bn.epsilon)
    x_hat = (z - mean) * inv
    return bn.gamma * x_hat + bn.beta, x_hat, inv


def _block_forward(h, dense, bn, mode, cache):
    z = h @ dense.weight.T + dense.bias
    y, x_hat, inv = _bn_forward(z, bn, mode)
    out = np.maximum(y, 0.0)
    if cache is not None:
        cache.append({"input": h, "x_hat": x_hat, "inv": inv, "relu_mask": y > 0.0})
    return out


def forward(model, batch, mode="eval"):
    """Class logits for ``batch`` of shape ``(B, C, S, S)``.

    ``mode="train"`` uses batch statistics in the normalization layers (and
    updates the running estimates in place); ``mode="eval"`` applies the
    stored running statistics, a deterministic affine map.

    Returns ``(logits, caches)`` where ``caches`` is None in eval mode.
    """
    if mode not in ("train", "eval"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    batch = np.asarray(batch, dtype=np.float64)
    s = model.spatial_side
    if batch.ndim != 4 or batch.shape[1] != model.in_channels or batch.shape[2:] != (s, s):
        raise InvalidArgumentError(
            f"batch shape {batch.shape} does not match model input "
            f"({model.in_channels}, {s}, {s})"
        )
    b = batch.shape[0]
    caches = [] if mode == "train" else None

    x = standardize_apply(batch, model.standard_mean, model.standard_var)
    h = x.transpose(0, 2, 3, 1).reshape(b * s * s, model.in_channels)
    for dense, bn in model.local_layers:
        h = _block_forward(h, dense, bn, mode, caches)
    h = h.reshape(b, s * s * h.shape[-1])
    for dense, bn in model.fc_layers:
        h = _block_forward(h, dense, bn, mode, caches)
    logits = h @ model.classifier.weight.T + model.classifier.bias
    if caches is not None:
        caches.append({"input": h})
    return logits, caches


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(logits, labels):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(labels)), labels]
    return float(np.mean(log_z - picked))


def _bn_backward(dy, bn, cache_entry):
    x_hat = cache_entry["x_hat"]
    inv = cache_entry["inv"]
    m = dy.shape[0]
    dgamma = (dy * x_hat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dx_hat = dy * bn.gamma
    dz = (inv / m) * (
        m * dx_hat - dx_hat.sum(axis=0) - x_hat * (dx_hat * x_hat).sum(axis=0)
    )
    return dz, dgamma, dbeta


def _block_backward(dout, dense, bn, cache_entry, grads, prefix):
    dy = dout * cache_entry["relu_mask"]
    dz, dgamma, dbeta = _bn_backward(dy, bn, cache_entry)
    grads[f"{prefix}.gamma"] = dgamma
    grads[f"{prefix}.beta"] = dbeta
    grads[f"{prefix}.weight"] = dz.T @ cache_entry["input"]
    grads[f"{prefix}.bias"] = dz.sum(axis=0)
    return dz @ dense.weight


def _loss_grads_logits(model, batch, labels):
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= model.class_count:
        raise InvalidArgumentError("label outside [0, class_count)")
    logits, caches = forward(model, batch, mode="train")
    loss = _cross_entropy(logits, labels)

    b = batch.shape[0]
    s = model.spatial_side
    grads = {}
    dlogits = _softmax(logits)
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b

    head_cache = caches[-1]
    grads["classifier.weight"] = dlogits.T @ head_cache["input"]
    grads["classifier.bias"] = dlogits.sum(axis=0)
    dh = dlogits @ model.classifier.weight

    for i in reversed(range(len(model.fc_layers))):
        dense, bn = model.fc_layers[i]
        dh = _block_backward(dh, dense, bn, caches[len(model.local_layers) + i],
                             grads, f"fc{i}")
    k = dh.shape[-1] // (s * s)
    dh = dh.reshape(b * s * s, k)
    for i in reversed(range(len(model.local_layers))):
        dense, bn = model.local_layers[i]
        dh = _block_backward(dh, dense, bn, caches[i], grads, f"local{i}")
    return loss, grads, logits


def loss_and_backward(model, batch, labels):
    """Mean softmax cross-entropy and gradients for every parameter.

    Runs the train-mode forward pass (batch statistics in the normalization
    layers), so the gradients match what the training loop applies.
    """
    loss, grads, _ = _loss_grads_logits(model, batch, labels)
    return loss, grads


def learning_rate(config, epoch):
    """``lr_initial * lr_drop_factor ** (number of drop epochs <= epoch)``."""
    drops = sum(1 for d in config.lr_drop_epochs if d <= epoch)
    return config.lr_initial * config.lr_drop_factor**drops


def sgd_step(params, grads, velocities, config, epoch):
    """One SGD-with-momentum update, in place.

    ``v <- momentum * v + (grad + weight_decay * w)``;
    ``w <- w - lr(epoch) * v``.
    """
    lr = learning_rate(config, epoch)
    for name, w in params.items():
        g = grads[name] + config.weight_decay * w
        v = velocities[name]
        v *= config.momentum
        v += g
        w -= lr * v


@dataclass
class EvalResult:
    top1: float
    top5: float = None


def evaluate(model, features, labels, batch_size=512):
    """Eval-mode top-1 accuracy (and top-5 when there are >= 5 classes).

    Argmax ties break toward the lowest class index.
    """
    labels = np.asarray(labels)
    n = len(labels)
    correct1 = 0
    correct5 = 0
    for start in range(0, n, batch_size):
        idx = slice(start, min(start + batch_size, n))
        logits, _ = forward(model, features[idx], mode="eval")
        pred = np.argmax(logits, axis=1)
        correct1 += int((pred == labels[idx]).sum())
        if model.class_count >= 5:
            ranked = np.argsort(-logits, axis=1, kind="stable")[:, :5]
            correct5 += int((ranked == labels[idx][:, None]).any(axis=1).sum())
    top5 = correct5 / n if model.class_count >= 5 else None
    return EvalResult(top1=correct1 / n, top5=top5)


def train(images, labels, pipeline, model_spec, config,
          val_images=None, val_labels=None):
    """Train an SLE on ``pipeline`` features of ``images``.

    The standardizer is fit once on the un-augmented training features; each
    epoch re-extracts features with fresh augmentation draws when the config
    enables them.  All randomness (init, augmentation, shuffling) derives
    from ``config.seed``, so two runs produce bit-identical models.

    Returns ``(model, metrics)`` with one dict per epoch: mean loss, running
    train top-1 and, when a validation set is given, eval-mode top-1.
    """
    images = np.asarray(images)
    labels = np.asarray(labels)
    if len(images) == 0:
        raise InvalidArgumentError("empty training set")
    rng = np.random.default_rng(config.seed)

    base_features = pipeline.extract(images)
    mean, var = standardize_fit(base_features)
    model = init_model(
        model_spec, base_features.shape[1], base_features.shape[-1], rng
    )
    model.standard_mean = mean
    model.standard_var = var
    model.meta["pipeline"] = pipeline.describe()

    velocities = {name: np.zeros_like(p) for name, p in parameters(model).items()}
    val_features = None
    if val_images is not None:
        val_features = pipeline.extract(val_images)

    augmented = config.crop_padding > 0 or config.horizontal_flip
    metrics = []
    for epoch in range(config.epochs):
        feats = pipeline.extract(images, rng=rng) if augmented else base_features
        order = rng.permutation(len(images))
        total_loss = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads, logits = _loss_grads_logits(model, feats[idx], labels[idx])
            sgd_step(parameters(model), grads, velocities, config, epoch)
            total_loss += loss * len(idx)
            correct += int((np.argmax(logits, axis=1) == labels[idx]).sum())
        entry = {
            "epoch": epoch,
            "lr": learning_rate(config, epoch),
            "loss": total_loss / len(order),
            "train_top1": correct / len(order),
        }
        if val_features is not None:
            entry["val_top1"] = evaluate(model, val_features, val_labels).top1
        metrics.append(entry)
    return model, metrics


def clone_model(model):
    return copy.deepcopy(model)


def _model_arrays(model):
    yield "standard/mean", model.standard_mean
    yield "standard/var", model.standard_var
    for kind, layers in (("local", model.local_layers), ("fc", model.fc_layers)):
        for i, (dense, bn) in enumerate(layers):
            base = f"{kind}{i}"
            yield f"{base}/weight", dense.weight
            yield f"{base}/bias", dense.bias
            yield f"{base}/gamma", bn.gamma
            yield f"{base}/beta", bn.beta
            yield f"{base}/running_mean", bn.running_mean
            yield f"{base}/running_var", bn.running_var
    yield "classifier/weight", model.classifier.weight
    yield "classifier/bias", model.classifier.bias


def save_model(path, model, extra_header=None):
    """Serialize to the container format; ``extra_header`` is embedded as-is."""
    bn_eps = model.local_layers[0][1].epsilon if model.local_layers else 1e-5
    bn_mom = model.local_layers[0][1].momentum if model.local_layers else 0.9
    header = {
        "kind": "sle_model",
        "meta": {
            "in_channels": model.in_channels,
            "spatial_side": model.spatial_side,
            "class_count": model.class_count,
            "local_widths": [d.weight.shape[0] for d, _ in model.local_layers],
            "fc_widths": [d.weight.shape[0] for d, _ in model.fc_layers],
            "bn_epsilon": bn_eps,
            "bn_momentum": bn_mom,
        },
        "provenance": model.meta,
    }
    if extra_header:
        header.update(extra_header)
    write_container(path, header, list(_model_arrays(model)))


def load_model(path):
    """Load a checkpoint written by :func:`save_model`.

    Returns ``(model, header)``; arrays come back as float64 copies of the
    stored float32 payload.
    """
    header, arrays = read_container(path)
    if header.get("kind") != "sle_model":
        raise FormatError(f"not a model file: kind={header.get('kind')!r}")
    meta = header["meta"]

    def get(name):
        if name not in arrays:
            raise FormatError(f"model file missing array {name!r}")
        return arrays[name].astype(np.float64)

    def load_blocks(kind, widths):
        blocks = []
        for i in range(len(widths)):
            base = f"{kind}{i}"
            dense = DenseLayer(weight=get(f"{base}/weight"), bias=get(f"{base}/bias"))
            bn = BatchNormState(
                gamma=get(f"{base}/gamma"),
                beta=get(f"{base}/beta"),
                running_mean=get(f"{base}/running_mean"),
                running_var=get(f"{base}/running_var"),
                epsilon=meta["bn_epsilon"],
                momentum=meta["bn_momentum"],
            )
            blocks.append((dense, bn))
        return blocks

    model = SleModel(
        in_channels=meta["in_channels"],
        spatial_side=meta["spatial_side"],
        class_count=meta["class_count"],
        standard_mean=get("standard/mean"),
        standard_var=get("standard/var"),
        local_layers=load_blocks("local", meta["local_widths"]),
        fc_layers=load_blocks("fc", meta["fc_widths"]),
        classifier=DenseLayer(
            weight=get("classifier/weight"), bias=get("classifier/bias")
        ),
        meta=header.get("provenance", {}),
    )
    return model, header
