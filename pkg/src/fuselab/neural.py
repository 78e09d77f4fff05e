"""
Dense networks, per-modality autoencoders and the Combined Model.

Conventions:
  - Layer weights are (fan_in × fan_out); a layer computes act(a @ W + b).
  - Initialisation is Glorot uniform, U(−a, a) with a = √(6 / (fan_in + fan_out)),
    biases zero, drawn from the caller's Rng.
  - Loss is MSE averaged over every element of the output (batch × width).
  - Parameters are ordered [W0, b0, W1, b1, ...] wherever they are flattened.

The Combined Model encodes each selected modality block with its own
autoencoder's encoder, concatenates the latents in PF, BG, PHQ9 order and
feeds them to a regressor head. Training has two phases: reconstruction
pretraining per autoencoder, then regression with optional back-propagation
into the encoders. Both phases early-stop on a validation loss and restore
the best parameters seen.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum

import numpy as np
import structlog
from numpy.typing import ArrayLike

from fuselab.config import TrainConfig
from fuselab.domain.models import MODALITY_ORDER, Dataset, FeatureSchema, Modality
from fuselab.errors import ArgumentError, ShapeError, StateError
from fuselab.numerics import Matrix, Rng, Vector, as_matrix, permutation

log = structlog.get_logger()

type Params = tuple[Matrix, ...]


class Activation(StrEnum):
    TANH = "tanh"
    RELU = "relu"
    LINEAR = "linear"


def _activate(z: Matrix, activation: Activation) -> Matrix:
    match activation:
        case Activation.TANH:
            return np.tanh(z)
        case Activation.RELU:
            return np.maximum(z, 0.0)
        case Activation.LINEAR:
            return z


def _activation_slope(z: Matrix, a: Matrix, activation: Activation) -> Matrix:
    match activation:
        case Activation.TANH:
            return 1.0 - a * a
        case Activation.RELU:
            return (z > 0.0).astype(np.float64)
        case Activation.LINEAR:
            return np.ones_like(z)


# ── multilayer perceptron ────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class Layer:
    weight: Matrix
    bias: Vector
    activation: Activation

    def __post_init__(self) -> None:
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(
                f"layer weight {self.weight.shape} and bias {self.bias.shape} do not conform"
            )


@dataclass(frozen=True, slots=True)
class Mlp:
    layers: tuple[Layer, ...]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ArgumentError("an MLP needs at least one layer")
        for before, after in zip(self.layers, self.layers[1:], strict=False):
            if before.weight.shape[1] != after.weight.shape[0]:
                raise ShapeError(
                    f"layer widths do not conform: {before.weight.shape} → {after.weight.shape}"
                )

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.layers[0].weight.shape[0], *(layer.weight.shape[1] for layer in self.layers))

    @property
    def activations(self) -> tuple[Activation, ...]:
        return tuple(layer.activation for layer in self.layers)

    @property
    def input_width(self) -> int:
        return self.widths[0]

    @property
    def output_width(self) -> int:
        return self.widths[-1]

    @property
    def n_parameters(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def params(self) -> Params:
        return tuple(p for layer in self.layers for p in (layer.weight, layer.bias))

    def with_params(self, params: Sequence[Matrix]) -> Mlp:
        if len(params) != 2 * len(self.layers):
            raise ShapeError(f"expected {2 * len(self.layers)} parameter arrays, got {len(params)}")
        layers = []
        for i, layer in enumerate(self.layers):
            weight, bias = params[2 * i], params[2 * i + 1]
            if weight.shape != layer.weight.shape or bias.shape != layer.bias.shape:
                raise ShapeError(f"parameter shapes of layer {i} do not match")
            layers.append(Layer(weight=weight, bias=bias, activation=layer.activation))
        return Mlp(layers=tuple(layers))


def init_mlp(widths: Sequence[int], activations: Sequence[Activation | str], rng: Rng) -> Mlp:
    if len(widths) < 2 or len(activations) != len(widths) - 1:
        raise ArgumentError(
            f"need n+1 widths for n activations, got {len(widths)} and {len(activations)}"
        )
    if any(w < 1 for w in widths):
        raise ArgumentError(f"widths must be >= 1, got {list(widths)}")
    layers = []
    for fan_in, fan_out, activation in zip(widths, widths[1:], activations, strict=False):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        layers.append(
            Layer(
                weight=rng.generator.uniform(-bound, bound, size=(fan_in, fan_out)),
                bias=np.zeros(fan_out),
                activation=Activation(activation),
            )
        )
    return Mlp(layers=tuple(layers))


@dataclass(frozen=True, slots=True)
class ForwardCache:
    """Per-layer inputs, pre-activations and activations of one forward pass."""

    inputs: tuple[Matrix, ...]
    preactivations: tuple[Matrix, ...]
    activations: tuple[Matrix, ...]

    @property
    def output(self) -> Matrix:
        return self.activations[-1]


def forward(mlp: Mlp, x: ArrayLike) -> ForwardCache:
    a = as_matrix(x, "network input")
    if a.shape[1] != mlp.input_width:
        raise ShapeError(f"network expects {mlp.input_width} inputs, got {a.shape[1]}")
    inputs, pre, post = [], [], []
    for layer in mlp.layers:
        inputs.append(a)
        z = a @ layer.weight + layer.bias
        a = _activate(z, layer.activation)
        pre.append(z)
        post.append(a)
    return ForwardCache(tuple(inputs), tuple(pre), tuple(post))


def backward(mlp: Mlp, cache: ForwardCache, grad_output: Matrix) -> tuple[Params, Matrix]:
    """
    Reverse pass for a given upstream gradient dL/d(output).

    Returns (parameter gradients in params() order, dL/d(input)).
    """
    if grad_output.shape != cache.output.shape:
        raise ShapeError(
            f"upstream gradient {grad_output.shape} does not match output {cache.output.shape}"
        )
    grads: list[Matrix] = []
    upstream = grad_output
    for i in reversed(range(len(mlp.layers))):
        layer = mlp.layers[i]
        delta = upstream * _activation_slope(
            cache.preactivations[i], cache.activations[i], layer.activation
        )
        grads.append(delta.sum(axis=0))
        grads.append(cache.inputs[i].T @ delta)
        upstream = delta @ layer.weight.T
    grads.reverse()
    return tuple(grads), upstream


def mse_loss(prediction: ArrayLike, target: ArrayLike) -> float:
    diff = np.asarray(prediction, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(diff * diff))


def _mse_slope(prediction: Matrix, target: Matrix) -> Matrix:
    return 2.0 * (prediction - target) / prediction.size


def _as_target(target: ArrayLike, like: Matrix) -> Matrix:
    arr = np.asarray(target, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape != like.shape:
        raise ShapeError(f"target shape {arr.shape} does not match output {like.shape}")
    return arr


@dataclass(frozen=True, slots=True)
class LossGradient:
    loss: float
    gradients: Params


def grad(mlp: Mlp, x: ArrayLike, target: ArrayLike) -> LossGradient:
    """Exact gradients of the mean-over-elements MSE w.r.t. every parameter."""
    cache = forward(mlp, x)
    y = _as_target(target, cache.output)
    grads, _ = backward(mlp, cache, _mse_slope(cache.output, y))
    return LossGradient(loss=mse_loss(cache.output, y), gradients=grads)


# ── Adam ─────────────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class AdamState:
    m: Params
    v: Params
    step: int = 0


def adam_init(params: Sequence[Matrix]) -> AdamState:
    zeros = tuple(np.zeros_like(p) for p in params)
    return AdamState(m=zeros, v=tuple(np.zeros_like(p) for p in params), step=0)


def adam_step(
    params: Sequence[Matrix],
    grads: Sequence[Matrix],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update; pure, returns new params and state."""
    if not (len(params) == len(grads) == len(state.m)):
        raise ShapeError("params, grads and optimizer state differ in length")
    t = state.step + 1
    m = tuple(beta1 * m_i + (1.0 - beta1) * g for m_i, g in zip(state.m, grads, strict=True))
    v = tuple(beta2 * v_i + (1.0 - beta2) * g * g for v_i, g in zip(state.v, grads, strict=True))
    c1, c2 = 1.0 - beta1**t, 1.0 - beta2**t
    updated = tuple(
        p - lr * (m_i / c1) / (np.sqrt(v_i / c2) + eps)
        for p, m_i, v_i in zip(params, m, v, strict=True)
    )
    return updated, AdamState(m=m, v=v, step=t)


# ── training loop ────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class TrainingCurves:
    """Losses per epoch; index 0 is the loss before any update."""

    train: tuple[float, ...]
    validation: tuple[float, ...]
    best_epoch: int

    @property
    def best_validation(self) -> float:
        return self.validation[self.best_epoch]

    @property
    def epochs_run(self) -> int:
        return len(self.train) - 1


def _optimise(
    params: Params,
    loss_grad: Callable[[Params, np.ndarray], Params],
    evaluate: Callable[[Params], tuple[float, float]],
    n_rows: int,
    *,
    epochs: int,
    cfg: TrainConfig,
    lr: float,
    rng: Rng,
    event: str,
) -> tuple[Params, TrainingCurves]:
    state = adam_init(params)
    train_loss, val_loss = evaluate(params)
    train_curve, val_curve = [train_loss], [val_loss]
    best_params, best_epoch, waited = params, 0, 0
    for epoch in range(1, epochs + 1):
        order = permutation(rng, n_rows)
        for start in range(0, n_rows, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            params, state = adam_step(
                params, loss_grad(params, rows), state, lr, cfg.beta1, cfg.beta2, cfg.epsilon
            )
        train_loss, val_loss = evaluate(params)
        train_curve.append(train_loss)
        val_curve.append(val_loss)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            log.warning(f"{event}.diverged", epoch=epoch, learning_rate=lr)
            break
        if val_loss < val_curve[best_epoch]:
            best_params, best_epoch, waited = params, epoch, 0
        else:
            waited += 1
            if waited >= cfg.patience:
                break
    curves = TrainingCurves(tuple(train_curve), tuple(val_curve), best_epoch)
    log.debug(
        event,
        epochs_run=curves.epochs_run,
        best_epoch=best_epoch,
        best_validation=curves.best_validation,
    )
    return best_params, curves


# ── autoencoders ─────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class Autoencoder:
    encoder: Mlp
    decoder: Mlp
    modality: Modality | None = None

    def __post_init__(self) -> None:
        if self.encoder.output_width != self.decoder.input_width:
            raise ShapeError("encoder output width must equal decoder input width")
        if self.decoder.output_width != self.encoder.input_width:
            raise ShapeError("decoder output width must equal encoder input width")

    @property
    def latent_dim(self) -> int:
        return self.encoder.output_width

    @property
    def input_width(self) -> int:
        return self.encoder.input_width

    @property
    def n_parameters(self) -> int:
        return self.encoder.n_parameters + self.decoder.n_parameters


def init_autoencoder(
    n_inputs: int,
    hidden: int,
    latent_dim: int,
    activation: Activation | str,
    rng: Rng,
    modality: Modality | None = None,
) -> Autoencoder:
    """Encoder p → h → k and mirrored decoder k → h → p, linear bottleneck and output."""
    act = Activation(activation)
    return Autoencoder(
        encoder=init_mlp([n_inputs, hidden, latent_dim], [act, Activation.LINEAR], rng),
        decoder=init_mlp([latent_dim, hidden, n_inputs], [act, Activation.LINEAR], rng),
        modality=modality,
    )


def reconstruct(ae: Autoencoder, x: ArrayLike) -> Matrix:
    return forward(ae.decoder, forward(ae.encoder, x).output).output


def _ae_with(ae: Autoencoder, params: Params) -> Autoencoder:
    split = 2 * len(ae.encoder.layers)
    return replace(
        ae,
        encoder=ae.encoder.with_params(params[:split]),
        decoder=ae.decoder.with_params(params[split:]),
    )


def train_autoencoder(
    ae: Autoencoder,
    x_train: ArrayLike,
    x_val: ArrayLike,
    cfg: TrainConfig,
    rng: Rng,
    epochs: int | None = None,
) -> tuple[Autoencoder, TrainingCurves]:
    """
    Minimise reconstruction MSE with minibatch Adam.

    Early-stops on validation reconstruction loss (training loss when x_val is
    empty) and returns the best-validation parameters.
    """
    train = as_matrix(x_train, "autoencoder training input")
    val = np.asarray(x_val, dtype=np.float64).reshape(-1, train.shape[1])
    if train.shape[0] == 0:
        raise ArgumentError("cannot train an autoencoder on an empty training set")
    if train.shape[1] != ae.input_width:
        raise ShapeError(f"autoencoder expects {ae.input_width} columns, got {train.shape[1]}")

    def loss_grad(params: Params, rows: np.ndarray) -> Params:
        model = _ae_with(ae, params)
        batch = train[rows]
        enc = forward(model.encoder, batch)
        dec = forward(model.decoder, enc.output)
        dec_grads, latent_grad = backward(model.decoder, dec, _mse_slope(dec.output, batch))
        enc_grads, _ = backward(model.encoder, enc, latent_grad)
        return enc_grads + dec_grads

    def evaluate(params: Params) -> tuple[float, float]:
        model = _ae_with(ae, params)
        train_loss = mse_loss(reconstruct(model, train), train)
        val_loss = mse_loss(reconstruct(model, val), val) if val.shape[0] else train_loss
        return train_loss, val_loss

    params, curves = _optimise(
        ae.encoder.params() + ae.decoder.params(),
        loss_grad,
        evaluate,
        train.shape[0],
        epochs=cfg.max_epochs if epochs is None else epochs,
        cfg=cfg,
        lr=cfg.learning_rate,
        rng=rng,
        event="neural.autoencoder_trained",
    )
    return _ae_with(ae, params), curves


# ── Combined Model ───────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class CombinedModel:
    """
    One autoencoder per selected modality plus a regressor on the concatenated latents.

    `blocks[i]` lists the input columns of `modalities[i]`; modalities follow
    the fixed PF, BG, PHQ9 order.
    """

    modalities: tuple[Modality, ...]
    autoencoders: tuple[Autoencoder, ...]
    blocks: tuple[tuple[int, ...], ...]
    regressor: Mlp
    column_names: tuple[str, ...]
    clip: bool = True
    fitted: bool = False

    def __post_init__(self) -> None:
        if not (len(self.modalities) == len(self.autoencoders) == len(self.blocks)):
            raise ArgumentError("modalities, autoencoders and blocks must align")
        if not self.modalities:
            raise ArgumentError("a combined model needs at least one modality")
        if list(self.modalities) != [m for m in MODALITY_ORDER if m in self.modalities]:
            raise ArgumentError("modalities must follow PF, BG, PHQ9 order")
        for ae, block in zip(self.autoencoders, self.blocks, strict=True):
            if ae.input_width != len(block):
                raise ShapeError(
                    f"{ae.modality} encoder width {ae.input_width} != block {len(block)}"
                )
        if self.regressor.input_width != sum(ae.latent_dim for ae in self.autoencoders):
            raise ShapeError("regressor input width must equal the summed latent dims")
        if self.regressor.output_width != 1:
            raise ShapeError("regressor must have a single output")

    @property
    def input_width(self) -> int:
        return len(self.column_names)

    @property
    def latent_width(self) -> int:
        return self.regressor.input_width

    @property
    def n_parameters(self) -> int:
        return self.regressor.n_parameters + sum(ae.n_parameters for ae in self.autoencoders)

    def encoder_params(self) -> Params:
        return tuple(p for ae in self.autoencoders for p in ae.encoder.params())


def init_combined(
    schema: FeatureSchema,
    modalities: frozenset[Modality] | set[Modality],
    cfg: TrainConfig,
    rng: Rng,
) -> CombinedModel:
    """Fresh, unfitted Combined Model sized from the schema's modality blocks."""
    selected = tuple(m for m in MODALITY_ORDER if m in modalities)
    if not selected:
        raise ArgumentError("modality subset must not be empty")
    absent = [m.value for m in selected if not schema.indices_for(m)]
    if absent:
        raise ArgumentError(f"modalities {absent} have no columns in the dataset")
    blocks = tuple(schema.indices_for(m) for m in selected)
    autoencoders = tuple(
        init_autoencoder(len(b), cfg.hidden, cfg.latent_dim, cfg.activation, rng.child(i), m)
        for i, (m, b) in enumerate(zip(selected, blocks, strict=True))
    )
    regressor = init_mlp(
        [cfg.latent_dim * len(selected), cfg.hidden, 1],
        [cfg.activation, Activation.LINEAR],
        rng.child(len(selected)),
    )
    return CombinedModel(
        modalities=selected,
        autoencoders=autoencoders,
        blocks=blocks,
        regressor=regressor,
        column_names=schema.names,
        clip=cfg.clip_predictions,
    )


def _block_inputs(cm: CombinedModel, x: ArrayLike | Mapping[Modality, ArrayLike]) -> list[Matrix]:
    if isinstance(x, Mapping):
        unknown = sorted(str(m) for m in x if m not in cm.modalities)
        if unknown:
            raise ArgumentError(f"unknown modality block(s) {unknown}")
        missing = [m.value for m in cm.modalities if m not in x]
        if missing:
            raise ArgumentError(f"missing modality block(s) {missing}")
        return [as_matrix(x[m], f"{m.value} block") for m in cm.modalities]
    full = as_matrix(x, "combined model input")
    if full.shape[1] != cm.input_width:
        raise ShapeError(f"combined model expects {cm.input_width} columns, got {full.shape[1]}")
    return [full[:, list(block)] for block in cm.blocks]


def encode(
    model: Autoencoder | CombinedModel, x: ArrayLike | Mapping[Modality, ArrayLike]
) -> Matrix:
    """Latent representation; for a Combined Model, per-modality latents concatenated."""
    if isinstance(model, Autoencoder):
        return forward(model.encoder, x).output  # type: ignore[arg-type]
    blocks = _block_inputs(model, x)
    return np.hstack(
        [forward(ae.encoder, b).output for ae, b in zip(model.autoencoders, blocks, strict=True)]
    )


def _combined_with(cm: CombinedModel, params: Params, fine_tune: bool) -> CombinedModel:
    autoencoders = cm.autoencoders
    if fine_tune:
        rebuilt = []
        offset = 0
        for ae in cm.autoencoders:
            size = 2 * len(ae.encoder.layers)
            encoder = ae.encoder.with_params(params[offset : offset + size])
            rebuilt.append(replace(ae, encoder=encoder))
            offset += size
        autoencoders = tuple(rebuilt)
        params = params[offset:]
    return replace(cm, autoencoders=autoencoders, regressor=cm.regressor.with_params(params))


@dataclass(frozen=True, slots=True)
class CombinedCurves:
    pretrain: Mapping[Modality, TrainingCurves] = field(default_factory=dict)
    regression: TrainingCurves | None = None


def _checked_inputs(cm: CombinedModel, dataset: Dataset, role: str) -> tuple[list[Matrix], Matrix]:
    if dataset.schema.names != cm.column_names:
        raise ShapeError(f"{role} columns do not match the model's input columns")
    if not np.all(np.isfinite(dataset.target)):
        raise ArgumentError(f"{role} targets must all be present")
    return _block_inputs(cm, dataset.features), dataset.target[:, None]


def train_combined(
    cm: CombinedModel,
    train: Dataset,
    val: Dataset,
    cfg: TrainConfig,
    rng: Rng,
) -> tuple[CombinedModel, CombinedCurves]:
    """
    Phase 1: pretrain each autoencoder on its block (cfg.pretrain_epochs).
    Phase 2: train the regressor on concatenated latents, back-propagating into
    the encoders iff cfg.fine_tune_encoders; early-stop on validation MSE.
    """
    if train.n_rows == 0:
        raise ArgumentError("cannot train a combined model on an empty training set")
    train_blocks, y_train = _checked_inputs(cm, train, "training")
    val_blocks, y_val = _checked_inputs(cm, val, "validation")

    pretrain: dict[Modality, TrainingCurves] = {}
    autoencoders = list(cm.autoencoders)
    if cfg.pretrain_epochs > 0:
        for i, modality in enumerate(cm.modalities):
            autoencoders[i], pretrain[modality] = train_autoencoder(
                autoencoders[i],
                train_blocks[i],
                val_blocks[i],
                cfg,
                rng.child(i),
                epochs=cfg.pretrain_epochs,
            )
    # Output bias starts at the training target mean.
    head = cm.regressor.layers[-1]
    regressor = replace(
        cm.regressor,
        layers=(*cm.regressor.layers[:-1], replace(head, bias=np.full(1, float(y_train.mean())))),
    )
    model = replace(cm, autoencoders=tuple(autoencoders), regressor=regressor)
    fine_tune = cfg.fine_tune_encoders

    def predict_blocks(m: CombinedModel, blocks: list[Matrix]) -> Matrix:
        latent = np.hstack(
            [forward(ae.encoder, b).output for ae, b in zip(m.autoencoders, blocks, strict=True)]
        )
        return forward(m.regressor, latent).output

    def loss_grad(params: Params, rows: np.ndarray) -> Params:
        m = _combined_with(model, params, fine_tune)
        caches = [
            forward(ae.encoder, b[rows])
            for ae, b in zip(m.autoencoders, train_blocks, strict=True)
        ]
        head_cache = forward(m.regressor, np.hstack([c.output for c in caches]))
        head_grads, latent_grad = backward(
            m.regressor, head_cache, _mse_slope(head_cache.output, y_train[rows])
        )
        if not fine_tune:
            return head_grads
        encoder_grads: list[Matrix] = []
        offset = 0
        for ae, cache in zip(m.autoencoders, caches, strict=True):
            width = ae.latent_dim
            g, _ = backward(ae.encoder, cache, latent_grad[:, offset : offset + width])
            encoder_grads.extend(g)
            offset += width
        return tuple(encoder_grads) + head_grads

    def evaluate(params: Params) -> tuple[float, float]:
        m = _combined_with(model, params, fine_tune)
        train_loss = mse_loss(predict_blocks(m, train_blocks), y_train)
        if y_val.shape[0] == 0:
            return train_loss, train_loss
        return train_loss, mse_loss(predict_blocks(m, val_blocks), y_val)

    start = (model.encoder_params() if fine_tune else ()) + model.regressor.params()
    params, curves = _optimise(
        start,
        loss_grad,
        evaluate,
        train.n_rows,
        epochs=cfg.max_epochs,
        cfg=cfg,
        lr=cfg.learning_rate,
        rng=rng.child(len(cm.modalities)),
        event="neural.combined_trained",
    )
    fitted = replace(_combined_with(model, params, fine_tune), fitted=True)
    return fitted, CombinedCurves(pretrain=pretrain, regression=curves)


def predict_combined(cm: CombinedModel, x: Dataset | ArrayLike) -> Vector:
    """Regressor output per row, clipped to the PHQ-2 range [0, 6] when cm.clip."""
    if not cm.fitted:
        raise StateError("combined model used before train_combined")
    features = x.features if isinstance(x, Dataset) else x
    latent = encode(cm, features)
    prediction = forward(cm.regressor, latent).output[:, 0]
    return np.clip(prediction, 0.0, 6.0) if cm.clip else prediction
