"""Forecaster architectures, window pairs and the training loop.

This module holds no database models; it is the forecaster domain model.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from io import StringIO

import numpy as np
import pandas as pd
from django.core.exceptions import ImproperlyConfigured
from django.db import models as db_models
from django.utils.translation import gettext_lazy as _

from ntlchange import conf, defaults
from ntlchange.nncore import (CONV1D, INIT_GLOROT, INIT_HE, PADDING_SAME,
                              AdamState, LayerSpec, Network, adam_step,
                              mae_loss)
from ntlchange.utils import (DomainError, InputError, InsufficientDataError,
                             ShapeError, StateError, dump_json)

logger = logging.getLogger(__name__)


class ArchitectureId(db_models.TextChoices):
    FCNN = "FCNN", _("Fully connected network")
    CNN = "CNN", _("1-D convolutional network")
    LSTM = "LSTM", _("Long short-term memory network")


def _architecture(value):
    try:
        return ArchitectureId(str(value).upper())
    except ValueError:
        raise ImproperlyConfigured(
            f"unknown architecture '{value}', available choices are "
            f"{', '.join(ArchitectureId.values)}")


@dataclass
class TrainConfig:
    input_window: int = defaults.DEFAULT_INPUT_WINDOW
    output_window: int = defaults.DEFAULT_OUTPUT_WINDOW
    split_fraction: float = defaults.DEFAULT_SPLIT_FRACTION
    batch_size: int = defaults.DEFAULT_BATCH_SIZE
    epochs: dict = field(
        default_factory=lambda: dict(defaults.DEFAULT_EPOCHS))
    seed: int = 0
    max_norm: float = defaults.DEFAULT_MAX_NORM
    activity_l2: float = defaults.DEFAULT_ACTIVITY_L2
    dropout_rate: float = defaults.DEFAULT_DROPOUT_RATE

    def __post_init__(self):
        if not 1 <= self.output_window < self.input_window:
            raise ImproperlyConfigured(
                f"windows must satisfy 1 <= output < input, while got input "
                f"{self.input_window} and output {self.output_window}")
        if not 0 < self.split_fraction < 1:
            raise ImproperlyConfigured(
                f"split_fraction must be strictly between 0 and 1, while got "
                f"{self.split_fraction}")
        if self.batch_size < 1:
            raise ImproperlyConfigured(
                f"batch_size must be positive, while got {self.batch_size}")

        epochs = dict(defaults.DEFAULT_EPOCHS)
        for arch, n in self.epochs.items():
            arch = _architecture(arch)
            if int(n) != n or n < 1:
                raise ImproperlyConfigured(
                    f"epochs of {arch} must be a positive integer, while got "
                    f"{n}")
            epochs[arch.value] = int(n)
        self.epochs = epochs

    @classmethod
    def from_settings(cls, **overrides):
        """A config from ``NTL_CHANGE_CONFIG``, with ``overrides`` applied."""
        kwargs = dict(
            input_window=conf.INPUT_WINDOW,
            output_window=conf.OUTPUT_WINDOW,
            split_fraction=conf.SPLIT_FRACTION,
            batch_size=conf.BATCH_SIZE,
            epochs=dict(conf.EPOCHS),
            max_norm=conf.MAX_NORM,
            activity_l2=conf.ACTIVITY_L2,
        )
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class WindowPair:
    """``inputs`` are the ``w_i`` days starting at ``start``, ``targets`` the
    ``w_o`` days that follow."""
    start: int
    inputs: np.ndarray
    targets: np.ndarray


def _check_windows(w_i, w_o):
    for name, value in (("input window", w_i), ("output window", w_o)):
        if int(value) != value or value < 1:
            raise DomainError(
                f"{name} must be a positive integer, while got {value}")


def make_windows(series, w_i, w_o):
    """Every stride-1 ``(w_i, w_o)`` pair of ``series`` in chronological
    order, leaving out pairs that touch a masked day."""
    _check_windows(w_i, w_o)
    span = w_i + w_o
    if series.observed_count < span or len(series) < span:
        raise InsufficientDataError(
            f"series '{series.zone_id}' is too short for windows of {w_i}+{w_o}"
            f" days", required=span, available=series.observed_count)

    windows = np.lib.stride_tricks.sliding_window_view(series.values, span)
    valid = ~np.isnan(windows).any(axis=1)
    return [
        WindowPair(
            start=int(p), inputs=windows[p, :w_i].copy(),
            targets=windows[p, w_i:].copy())
        for p in np.flatnonzero(valid)]


def stack_pairs(pairs):
    inputs = np.array([p.inputs for p in pairs], dtype=float)
    targets = np.array([p.targets for p in pairs], dtype=float)
    return inputs, targets


def _hidden_dense(units, config):
    return [
        LayerSpec("dense", units=units, init=INIT_HE,
                  max_norm=config.max_norm, activity_l2=config.activity_l2),
        LayerSpec("relu"),
        LayerSpec("dropout", rate=config.dropout_rate),
    ]


def _output_dense(w_o, config):
    return [LayerSpec("dense", units=w_o, init=INIT_GLOROT,
                      max_norm=config.max_norm)]


def architecture_specs(arch, w_o, config):
    arch = _architecture(arch)
    specs = []
    if arch == ArchitectureId.FCNN:
        for units in defaults.FCNN_HIDDEN_UNITS:
            specs += _hidden_dense(units, config)

    elif arch == ArchitectureId.CNN:
        blocks = zip(defaults.CNN_FILTERS, defaults.CNN_KERNELS)
        for index, (filters, kernel) in enumerate(blocks):
            specs += [
                LayerSpec(CONV1D, filters=filters, kernel=kernel,
                          padding=PADDING_SAME, init=INIT_HE,
                          max_norm=config.max_norm),
                LayerSpec("relu"),
            ]
            if index < defaults.CNN_POOLED_BLOCKS:
                specs.append(LayerSpec("maxpool1d", pool=defaults.CNN_POOL_SIZE))
            specs += [
                LayerSpec("batchnorm"),
                LayerSpec("dropout", rate=config.dropout_rate),
            ]
        specs.append(LayerSpec("flatten"))
        for units in defaults.CNN_DENSE_UNITS:
            specs += _hidden_dense(units, config)

    else:
        first, second = defaults.LSTM_UNITS
        specs += [
            LayerSpec("lstm", units=first, return_sequences=True,
                      init=INIT_GLOROT),
            LayerSpec("dropout", rate=config.dropout_rate),
            LayerSpec("lstm", units=second, init=INIT_GLOROT),
            LayerSpec("dropout", rate=config.dropout_rate),
        ]
        for units in defaults.LSTM_DENSE_UNITS:
            specs += _hidden_dense(units, config)

    return specs + _output_dense(w_o, config)


def _input_shape(arch, w_i):
    if arch == ArchitectureId.FCNN:
        return (w_i,)
    return (w_i, 1)


def _model_seed(seed, arch):
    # distinct, stable streams per architecture
    return int(np.random.SeedSequence(
        [int(seed), ArchitectureId.values.index(arch.value)]).generate_state(1)[0])


class ForecastModel:
    """One forecaster: a network plus the normalization of its inputs and
    targets, ``z = (x - mean) / scale``."""

    def __init__(self, architecture, network, train_config, mean=0.0, scale=1.0,
                 train_loss=None, val_loss=None, frozen=False):
        if not scale > 0:
            raise DomainError(
                f"normalization scale must be positive, while got {scale}")
        self.architecture = _architecture(architecture)
        self.network = network
        self.train_config = train_config
        self.mean = float(mean)
        self.scale = float(scale)
        self.train_loss = train_loss
        self.val_loss = val_loss
        self.frozen = frozen

    def __repr__(self):
        state = "trained" if self.frozen else "untrained"
        return (f"<ForecastModel {self.architecture.value} "
                f"{self.input_window}->{self.output_window} {state}>")

    @property
    def input_window(self):
        return self.train_config.input_window

    @property
    def output_window(self):
        return self.train_config.output_window

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def denormalize(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.mean

    def predict(self, inputs, batch_size=512):
        """Map raw input windows ``(n, w_i)`` to raw forecasts ``(n, w_o)``."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if inputs.shape[1] != self.input_window:
            raise ShapeError(
                f"{self.architecture.value} expects windows of "
                f"{self.input_window} days, while got {inputs.shape[1]}")
        outputs = [
            self.network.forward(self.normalize(inputs[i:i + batch_size]))
            for i in range(0, len(inputs), batch_size)]
        if not outputs:
            return np.empty((0, self.output_window))
        return self.denormalize(np.concatenate(outputs))

    def to_dict(self):
        return {
            "format": defaults.CHECKPOINT_FORMAT,
            "architecture": self.architecture.value,
            "windows": {
                "input": self.input_window, "output": self.output_window},
            "normalization": {"mean": self.mean, "scale": self.scale},
            "train_config": self.train_config.to_dict(),
            "seed": self.train_config.seed,
            "geometry": self.geometry(),
            "losses": {"train": self.train_loss, "validation": self.val_loss},
            "network": self.network.to_dict(),
        }

    def geometry(self):
        if self.architecture != ArchitectureId.CNN:
            return {}
        return {
            "padding": PADDING_SAME,
            "pooled_blocks": defaults.CNN_POOLED_BLOCKS,
            "pool_size": defaults.CNN_POOL_SIZE,
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != defaults.CHECKPOINT_FORMAT:
            raise InputError(
                f"unsupported checkpoint format '{data.get('format')}', "
                f"expected '{defaults.CHECKPOINT_FORMAT}'")
        losses = data.get("losses") or {}
        model = cls(
            architecture=data["architecture"],
            network=Network.from_dict(data["network"]),
            train_config=TrainConfig.from_dict(data["train_config"]),
            mean=data["normalization"]["mean"],
            scale=data["normalization"]["scale"],
            train_loss=losses.get("train"),
            val_loss=losses.get("validation"),
            frozen=True)
        return model


def build_architecture(arch, w_i, w_o, config=None):
    """An untrained :class:`ForecastModel` for ``arch`` mapping ``w_i`` days
    to ``w_o`` days.

    :raises ImproperlyConfigured: when ``w_i`` is too short for the
       convolution and pooling geometry.
    """
    arch = _architecture(arch)
    if config is None:
        config = TrainConfig.from_settings(input_window=w_i, output_window=w_o)
    elif (config.input_window, config.output_window) != (w_i, w_o):
        config = TrainConfig.from_dict(
            {**config.to_dict(), "input_window": w_i, "output_window": w_o})

    specs = architecture_specs(arch, w_o, config)
    try:
        network = Network(
            specs, _input_shape(arch, w_i), seed=_model_seed(config.seed, arch))
    except ShapeError as e:
        raise ImproperlyConfigured(
            f"input window of {w_i} days does not fit the {arch.value} "
            f"geometry: {e}")
    return ForecastModel(arch, network, config)


@dataclass
class TrainingHistory:
    architecture: str
    train_mae: list = field(default_factory=list)
    val_mae: list = field(default_factory=list)
    n_train: int = 0
    n_validation: int = 0

    # number of window pairs that contributed to a gradient update
    samples_seen: int = 0

    @property
    def epochs(self):
        return len(self.train_mae)

    @property
    def plateau_epoch(self):
        """First epoch (1-based) whose validation MAE is within 1% of the
        best one."""
        if not self.val_mae:
            return None
        best = min(self.val_mae)
        for epoch, value in enumerate(self.val_mae, start=1):
            if value <= best * 1.01 + 1e-12:
                return epoch

    def to_csv(self):
        frame = pd.DataFrame({
            "epoch": range(1, self.epochs + 1),
            "train_mae": [repr(float(v)) for v in self.train_mae],
            "val_mae": [repr(float(v)) for v in self.val_mae],
        })
        buf = StringIO()
        frame.to_csv(buf, index=False)
        return buf.getvalue()


def _normalization(values):
    mean = float(np.mean(values))
    std = float(np.std(values))
    # constant baselines would otherwise blow rounding noise up to unit scale
    if not math.isfinite(std) or std <= 1e-12 * max(1.0, abs(mean)):
        std = 1.0
    return mean, std


def _evaluate_mae(model, inputs, targets):
    prediction = model.network.forward(model.normalize(inputs))
    loss, _ = mae_loss(prediction, model.normalize(targets))
    return loss * model.scale


def train(model, pairs, config=None):
    """Train ``model`` on ``pairs`` with a chronological split.

    The first ``split_fraction`` of the pairs drive Adam updates on the MAE
    loss, the rest are only evaluated. Losses are recorded per epoch in
    radiance units.

    :return: ``(model, history)``, ``model`` frozen for inference.
    """
    if model.frozen:
        raise StateError(f"{model!r} is already trained")
    config = config or model.train_config
    arch = model.architecture

    n = len(pairs)
    n_train = int(math.floor(config.split_fraction * n))
    n_val = n - n_train
    if n_train == 0 or n_val == 0:
        raise InsufficientDataError(
            f"cannot split {n} window pair(s) into training and validation",
            required=int(math.ceil(1 / min(
                config.split_fraction, 1 - config.split_fraction))),
            available=n)

    inputs, targets = stack_pairs(pairs)
    if inputs.shape[1] != model.input_window or (
            targets.shape[1] != model.output_window):
        raise ShapeError(
            f"window pairs of {inputs.shape[1]}+{targets.shape[1]} days do not "
            f"fit {model!r}")
    train_x, val_x = inputs[:n_train], inputs[n_train:]
    train_y, val_y = targets[:n_train], targets[n_train:]

    model.mean, model.scale = _normalization(
        np.concatenate([train_x.ravel(), train_y.ravel()]))
    norm_x = model.normalize(train_x)
    norm_y = model.normalize(train_y)

    history = TrainingHistory(
        architecture=arch.value, n_train=n_train, n_validation=n_val)
    network = model.network
    state = AdamState()
    rng = np.random.default_rng(_model_seed(config.seed, arch) + 1)
    parameters = network.parameters()
    epochs = config.epochs[arch.value]

    logger.info(
        "Training %s on %d pairs, validating on %d, %d epochs",
        arch.value, n_train, n_val, epochs)

    for epoch in range(1, epochs + 1):
        order = rng.permutation(n_train)
        loss_sum = 0.0
        for begin in range(0, n_train, config.batch_size):
            batch = order[begin:begin + config.batch_size]
            prediction = network.forward(norm_x[batch], training=True)
            loss, grad = mae_loss(prediction, norm_y[batch])
            network.backward(grad)
            adam_step(state, parameters, network.gradients())
            network.apply_constraints()
            loss_sum += loss * len(batch)
            history.samples_seen += len(batch)

        history.train_mae.append(loss_sum / n_train * model.scale)
        history.val_mae.append(_evaluate_mae(model, val_x, val_y))
        logger.debug(
            "%s epoch %d/%d: train MAE %.6g, validation MAE %.6g",
            arch.value, epoch, epochs, history.train_mae[-1],
            history.val_mae[-1])

    model.train_loss = history.train_mae[-1]
    model.val_loss = history.val_mae[-1]
    model.frozen = True
    logger.info(
        "%s validation MAE %.6g, plateau reached at epoch %s of %d",
        arch.value, model.val_loss, history.plateau_epoch, epochs)
    return model, history


def train_all(series, config, architectures=None, jobs=1):
    """Build and train every architecture on the baseline ``series``.

    :param jobs: number of architectures trained concurrently.
    :return: dict mapping architecture ids to ``(model, history)``.
    """
    architectures = [
        _architecture(a) for a in (architectures or ArchitectureId.values)]
    pairs = make_windows(series, config.input_window, config.output_window)

    def _train_one(arch):
        model = build_architecture(
            arch, config.input_window, config.output_window, config=config)
        return train(model, pairs, config)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_train_one, architectures))
    else:
        results = [_train_one(arch) for arch in architectures]
    return {arch.value: result for arch, result in zip(architectures, results)}


def checkpoint_text(model):
    return dump_json(model.to_dict())


def load_checkpoint(path):
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise InputError(f"invalid checkpoint '{path}': {e}")
    return ForecastModel.from_dict(data)
