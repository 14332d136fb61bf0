"""
A small neural-network kernel: the layer kinds needed by the forecasting
architectures, reverse-mode gradients for each, the MAE loss and Adam.

Arrays are batch-first. Sequence layers take ``(batch, steps, channels)``
and also accept ``(batch, steps)`` as a single-channel sequence.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from ntlchange import defaults
from ntlchange.utils import DomainError, NumericalError, ShapeError, StateError

DENSE = "dense"
CONV1D = "conv1d"
MAXPOOL1D = "maxpool1d"
BATCHNORM = "batchnorm"
DROPOUT = "dropout"
LSTM = "lstm"
FLATTEN = "flatten"
RELU = "relu"

LAYER_KINDS = (DENSE, CONV1D, MAXPOOL1D, BATCHNORM, DROPOUT, LSTM, FLATTEN, RELU)

INIT_HE = "he_uniform"
INIT_GLOROT = "glorot_uniform"

PADDING_VALID = "valid"
PADDING_SAME = "same"

MODE_TRAIN = "train"
MODE_INFER = "infer"


@dataclass
class LayerSpec:
    kind: str
    units: int = None
    filters: int = None
    kernel: int = None
    pool: int = None
    rate: float = None
    padding: str = PADDING_VALID
    return_sequences: bool = False
    init: str = INIT_HE
    max_norm: float = None
    activity_l2: float = 0.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise DomainError(
                f"unknown layer kind '{self.kind}', available choices are "
                f"{', '.join(LAYER_KINDS)}")

        required = {
            DENSE: ("units",),
            LSTM: ("units",),
            CONV1D: ("filters", "kernel"),
            MAXPOOL1D: ("pool",),
        }.get(self.kind, ())
        for name in required:
            value = getattr(self, name)
            if value is None or int(value) != value or value < 1:
                raise DomainError(
                    f"'{name}' of a {self.kind} layer must be a positive "
                    f"integer, while got {value}")

        if self.kind == DROPOUT:
            if self.rate is None or not 0 <= self.rate < 1:
                raise DomainError(
                    f"dropout rate must be in [0, 1), while got {self.rate}")
        if self.padding not in (PADDING_VALID, PADDING_SAME):
            raise DomainError(f"unknown padding '{self.padding}'")
        if self.init not in (INIT_HE, INIT_GLOROT):
            raise DomainError(f"unknown initializer '{self.init}'")
        if self.max_norm is not None and not self.max_norm > 0:
            raise DomainError(
                f"max_norm must be positive, while got {self.max_norm}")
        if self.activity_l2 < 0:
            raise DomainError(
                f"activity_l2 must be non-negative, while got "
                f"{self.activity_l2}")

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def _uniform(rng, shape, fan_in, fan_out, init):
    if init == INIT_HE:
        limit = np.sqrt(6.0 / fan_in)
    else:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _as_sequence(x):
    if x.ndim == 2:
        return x[:, :, np.newaxis], True
    return x, False


def _sequence_shape(input_shape):
    if len(input_shape) == 1:
        return input_shape[0], 1
    if len(input_shape) == 2:
        return input_shape
    raise ShapeError(
        f"sequence layers take (steps,) or (steps, channels) inputs, while got "
        f"{input_shape}")


def _clip_norm(kernel, cap, axis):
    norms = np.sqrt(np.sum(kernel**2, axis=axis, keepdims=True))
    scale = np.where(norms > cap, cap / np.maximum(norms, 1e-12), 1.0)
    kernel *= scale


class Layer:
    kind = None

    def __init__(self, spec):
        self.spec = spec
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self.input_shape = None
        self.output_shape = None
        self._cache = None

    def build(self, input_shape, rng):
        self.input_shape = tuple(input_shape)
        self.output_shape = self._build(self.input_shape, rng)
        return self.output_shape

    def _build(self, input_shape, rng):
        return input_shape

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        if self.input_shape is not None:
            accepted = {self.input_shape}
            if self.kind in (CONV1D, MAXPOOL1D, LSTM):
                # a single-channel sequence may come without its channel axis
                if len(self.input_shape) == 1:
                    accepted.add(self.input_shape + (1,))
                elif self.input_shape[1] == 1:
                    accepted.add(self.input_shape[:1])
            if x.shape[1:] not in accepted:
                raise ShapeError(
                    f"{self.kind} layer expects input of shape "
                    f"(batch, {', '.join(map(str, self.input_shape))}), "
                    f"while got {x.shape}")
        return x

    def forward(self, x, training=False):
        x = self._check_input(x)
        out, cache = self._forward(x, training)
        self._cache = cache if training else None
        return out

    def backward(self, grad):
        if self._cache is None:
            raise StateError(
                f"backward called on {self.kind} layer without a preceding "
                f"forward pass in train mode")
        return self._backward(np.asarray(grad, dtype=float), self._cache)

    def _forward(self, x, training):
        raise NotImplementedError()

    def _backward(self, grad, cache):
        raise NotImplementedError()

    def apply_constraints(self):
        pass

    @property
    def regularization_loss(self):
        return 0.0


class Dense(Layer):
    kind = DENSE

    def _build(self, input_shape, rng):
        if len(input_shape) != 1:
            raise ShapeError(
                f"dense layer takes flat inputs, while got {input_shape}")
        fan_in, units = input_shape[0], int(self.spec.units)
        self.params["kernel"] = _uniform(
            rng, (fan_in, units), fan_in, units, self.spec.init)
        self.params["bias"] = np.zeros(units)
        self._penalty = 0.0
        return (units,)

    def _forward(self, x, training):
        y = x @ self.params["kernel"] + self.params["bias"]
        if training and self.spec.activity_l2:
            self._penalty = self.spec.activity_l2 * np.sum(y**2) / x.shape[0]
        else:
            self._penalty = 0.0
        return y, (x, y)

    def _backward(self, grad, cache):
        x, y = cache
        if self.spec.activity_l2:
            grad = grad + 2 * self.spec.activity_l2 * y / x.shape[0]
        self.grads["kernel"] = x.T @ grad
        self.grads["bias"] = grad.sum(axis=0)
        return grad @ self.params["kernel"].T

    def apply_constraints(self):
        if self.spec.max_norm is not None:
            _clip_norm(self.params["kernel"], self.spec.max_norm, axis=0)

    @property
    def regularization_loss(self):
        return self._penalty


class Conv1D(Layer):
    """Stride-1 cross-correlation over the steps axis, channels last."""
    kind = CONV1D

    def _build(self, input_shape, rng):
        steps, channels = _sequence_shape(input_shape)
        k, filters = int(self.spec.kernel), int(self.spec.filters)
        if self.spec.padding == PADDING_SAME:
            self._pad = ((k - 1) // 2, k - 1 - (k - 1) // 2)
        else:
            self._pad = (0, 0)
        out_steps = steps + sum(self._pad) - k + 1
        if out_steps < 1:
            raise ShapeError(
                f"conv1d kernel {k} is longer than its input of {steps} steps")
        self.params["kernel"] = _uniform(
            rng, (k, channels, filters), k * channels, k * filters,
            self.spec.init)
        self.params["bias"] = np.zeros(filters)
        return (out_steps, filters)

    def _forward(self, x, training):
        x, squeezed = _as_sequence(x)
        padded = np.pad(x, ((0, 0), self._pad, (0, 0)))
        k = self.params["kernel"].shape[0]
        # (batch, out_steps, channels, k) -> (batch, out_steps, k, channels)
        windows = np.lib.stride_tricks.sliding_window_view(
            padded, k, axis=1).transpose(0, 1, 3, 2)
        y = np.tensordot(windows, self.params["kernel"], axes=([2, 3], [0, 1]))
        y += self.params["bias"]
        return y, (padded.shape, windows, squeezed)

    def _backward(self, grad, cache):
        padded_shape, windows, squeezed = cache
        kernel = self.params["kernel"]
        self.grads["kernel"] = np.tensordot(
            windows, grad, axes=([0, 1], [0, 1]))
        self.grads["bias"] = grad.sum(axis=(0, 1))

        d_windows = np.tensordot(grad, kernel, axes=([2], [2]))
        d_padded = np.zeros(padded_shape)
        out_steps = grad.shape[1]
        for j in range(kernel.shape[0]):
            d_padded[:, j:j + out_steps, :] += d_windows[:, :, j, :]

        left, right = self._pad
        dx = d_padded[:, left:padded_shape[1] - right, :]
        return dx[:, :, 0] if squeezed else dx

    def apply_constraints(self):
        if self.spec.max_norm is not None:
            _clip_norm(self.params["kernel"], self.spec.max_norm, axis=(0, 1))


class MaxPool1D(Layer):
    """Non-overlapping max pooling, stride equal to the pool width. Trailing
    steps that do not fill a window are dropped."""
    kind = MAXPOOL1D

    def _build(self, input_shape, rng):
        steps, channels = _sequence_shape(input_shape)
        out_steps = steps // int(self.spec.pool)
        if out_steps < 1:
            raise ShapeError(
                f"maxpool1d width {self.spec.pool} is longer than its input "
                f"of {steps} steps")
        return (out_steps, channels)

    def _forward(self, x, training):
        x, squeezed = _as_sequence(x)
        n, steps, channels = x.shape
        pool = int(self.spec.pool)
        out_steps = steps // pool
        blocks = x[:, :out_steps * pool].reshape(n, out_steps, pool, channels)
        argmax = blocks.argmax(axis=2)
        y = np.take_along_axis(blocks, argmax[:, :, np.newaxis], axis=2)[:, :, 0]
        if squeezed:
            y = y[:, :, 0]
        return y, (x.shape, argmax, squeezed)

    def _backward(self, grad, cache):
        shape, argmax, squeezed = cache
        n, steps, channels = shape
        pool = int(self.spec.pool)
        out_steps = steps // pool
        if squeezed:
            grad = grad[:, :, np.newaxis]

        d_blocks = np.zeros((n, out_steps, pool, channels))
        np.put_along_axis(
            d_blocks, argmax[:, :, np.newaxis], grad[:, :, np.newaxis], axis=2)
        dx = np.zeros(shape)
        dx[:, :out_steps * pool] = d_blocks.reshape(n, out_steps * pool, channels)
        return dx[:, :, 0] if squeezed else dx


class BatchNorm(Layer):
    """Normalizes each feature (the last axis) by batch statistics in train
    mode and by running statistics in infer mode."""
    kind = BATCHNORM

    def _build(self, input_shape, rng):
        features = input_shape[-1]
        self.params["gamma"] = np.ones(features)
        self.params["beta"] = np.zeros(features)
        self.buffers["moving_mean"] = np.zeros(features)
        self.buffers["moving_variance"] = np.ones(features)
        return input_shape

    def _forward(self, x, training):
        axes = tuple(range(x.ndim - 1))
        eps = defaults.BATCHNORM_EPSILON
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            momentum = defaults.BATCHNORM_MOMENTUM
            self.buffers["moving_mean"] = (
                momentum * self.buffers["moving_mean"] + (1 - momentum) * mean)
            self.buffers["moving_variance"] = (
                momentum * self.buffers["moving_variance"]
                + (1 - momentum) * var)
        else:
            mean = self.buffers["moving_mean"]
            var = self.buffers["moving_variance"]

        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = (x - mean) * inv_std
        y = self.params["gamma"] * x_hat + self.params["beta"]
        return y, (x_hat, inv_std, axes)

    def _backward(self, grad, cache):
        x_hat, inv_std, axes = cache
        m = np.prod([grad.shape[a] for a in axes])
        self.grads["gamma"] = np.sum(grad * x_hat, axis=axes)
        self.grads["beta"] = np.sum(grad, axis=axes)

        d_xhat = grad * self.params["gamma"]
        return (inv_std / m) * (
            m * d_xhat
            - np.sum(d_xhat, axis=axes)
            - x_hat * np.sum(d_xhat * x_hat, axis=axes))


class Dropout(Layer):
    """Inverted dropout; the identity in infer mode."""
    kind = DROPOUT

    def __init__(self, spec, rng=None):
        super().__init__(spec)
        self.rng = rng if rng is not None else np.random.default_rng()

    def _forward(self, x, training):
        rate = self.spec.rate
        if not training or rate == 0:
            return x, np.ones_like(x)
        mask = (self.rng.random(x.shape) >= rate) / (1.0 - rate)
        return x * mask, mask

    def _backward(self, grad, mask):
        return grad * mask


class LSTMLayer(Layer):
    """Gated recurrence with gates ordered input, forget, cell, output.

    Returns the hidden state of every step with ``return_sequences``,
    otherwise that of the last step only.
    """
    kind = LSTM

    def _build(self, input_shape, rng):
        steps, channels = _sequence_shape(input_shape)
        units = int(self.spec.units)
        self.params["kernel"] = _uniform(
            rng, (channels, 4 * units), channels, 4 * units, self.spec.init)
        self.params["recurrent_kernel"] = _uniform(
            rng, (units, 4 * units), units, 4 * units, self.spec.init)
        bias = np.zeros(4 * units)
        bias[units:2 * units] = 1.0
        self.params["bias"] = bias
        if self.spec.return_sequences:
            return (steps, units)
        return (units,)

    def _forward(self, x, training):
        x, squeezed = _as_sequence(x)
        n, steps, _ = x.shape
        u = int(self.spec.units)
        W = self.params["kernel"]
        U = self.params["recurrent_kernel"]
        b = self.params["bias"]

        h = np.zeros((n, u))
        c = np.zeros((n, u))
        hs = np.empty((n, steps, u))
        cache = []
        for t in range(steps):
            z = x[:, t] @ W + h @ U + b
            i = expit(z[:, :u])
            f = expit(z[:, u:2 * u])
            g = np.tanh(z[:, 2 * u:3 * u])
            o = expit(z[:, 3 * u:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tanh_c = np.tanh(c)
            h = o * tanh_c
            hs[:, t] = h
            cache.append((h_prev, c_prev, i, f, g, o, tanh_c))

        out = hs if self.spec.return_sequences else h
        return out, (x, cache, squeezed)

    def _backward(self, grad, cache):
        x, steps_cache, squeezed = cache
        n, steps, _ = x.shape
        u = int(self.spec.units)
        W = self.params["kernel"]
        U = self.params["recurrent_kernel"]

        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros_like(self.params["bias"])
        dx = np.zeros_like(x)
        dh_next = np.zeros((n, u))
        dc_next = np.zeros((n, u))

        for t in reversed(range(steps)):
            h_prev, c_prev, i, f, g, o, tanh_c = steps_cache[t]
            if self.spec.return_sequences:
                dh = dh_next + grad[:, t]
            elif t == steps - 1:
                dh = dh_next + grad
            else:
                dh = dh_next

            do = dh * tanh_c
            dc = dc_next + dh * o * (1 - tanh_c**2)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f

            dz = np.concatenate([
                di * i * (1 - i),
                df * f * (1 - f),
                dg * (1 - g**2),
                do * o * (1 - o)], axis=1)
            dW += x[:, t].T @ dz
            dU += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, t] = dz @ W.T
            dh_next = dz @ U.T

        self.grads["kernel"] = dW
        self.grads["recurrent_kernel"] = dU
        self.grads["bias"] = db
        return dx[:, :, 0] if squeezed else dx


class Flatten(Layer):
    kind = FLATTEN

    def _build(self, input_shape, rng):
        return (int(np.prod(input_shape)),)

    def _forward(self, x, training):
        return x.reshape(x.shape[0], -1), x.shape

    def _backward(self, grad, shape):
        return grad.reshape(shape)


class ReLU(Layer):
    kind = RELU

    def _forward(self, x, training):
        return np.maximum(x, 0.0), x > 0

    def _backward(self, grad, positive):
        return grad * positive


LAYER_CLASSES = {
    DENSE: Dense,
    CONV1D: Conv1D,
    MAXPOOL1D: MaxPool1D,
    BATCHNORM: BatchNorm,
    DROPOUT: Dropout,
    LSTM: LSTMLayer,
    FLATTEN: Flatten,
    RELU: ReLU,
}


def make_layer(spec, rng=None):
    if isinstance(spec, dict):
        spec = LayerSpec.from_dict(spec)
    if spec.kind == DROPOUT:
        return Dropout(spec, rng=rng)
    return LAYER_CLASSES[spec.kind](spec)


def _check_finite(array, what):
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"non-finite values in {what}")


class Network:
    """A sequential stack of layers built from :class:`LayerSpec` items.

    ``seed`` fixes both the weight initialization and the dropout masks.
    """

    def __init__(self, specs, input_shape, seed=0):
        self.specs = [
            s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s)
            for s in specs]
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = int(seed)

        init_seq, dropout_seq = np.random.SeedSequence(self.seed).spawn(2)
        init_rng = np.random.default_rng(init_seq)
        self.dropout_rng = np.random.default_rng(dropout_seq)

        self.layers = []
        shape = self.input_shape
        for spec in self.specs:
            layer = make_layer(spec, rng=self.dropout_rng)
            shape = layer.build(shape, init_rng)
            self.layers.append(layer)
        self.output_shape = shape
        self._last_input = None

    def __repr__(self):
        kinds = "-".join(layer.kind for layer in self.layers)
        return f"<Network {self.input_shape}->{self.output_shape} {kinds}>"

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=float)
        out = x
        for layer in self.layers:
            out = layer.forward(out, training=training)
        _check_finite(out, "network output")
        self._last_input = x if training else None
        return out

    __call__ = forward

    def backward(self, grad):
        if self._last_input is None:
            raise StateError(
                "backward called without a preceding forward pass in train "
                "mode")
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        _check_finite(grad, "input gradient")
        return grad

    def parameters(self):
        return {
            f"{index}.{name}": array
            for index, layer in enumerate(self.layers)
            for name, array in layer.params.items()}

    def gradients(self):
        return {
            f"{index}.{name}": layer.grads[name]
            for index, layer in enumerate(self.layers)
            for name in layer.params}

    def buffers(self):
        return {
            f"{index}.{name}": array
            for index, layer in enumerate(self.layers)
            for name, array in layer.buffers.items()}

    def regularization_loss(self):
        return float(sum(layer.regularization_loss for layer in self.layers))

    def apply_constraints(self):
        for layer in self.layers:
            layer.apply_constraints()

    def to_dict(self):
        return {
            "specs": [spec.to_dict() for spec in self.specs],
            "input_shape": list(self.input_shape),
            "seed": self.seed,
            "parameters": {k: v.tolist() for k, v in self.parameters().items()},
            "buffers": {k: v.tolist() for k, v in self.buffers().items()},
        }

    @classmethod
    def from_dict(cls, data):
        network = cls(data["specs"], data["input_shape"], seed=data["seed"])
        for group, stored in (("params", data["parameters"]),
                              ("buffers", data.get("buffers", {}))):
            for key, value in stored.items():
                index, name = key.split(".", 1)
                target = getattr(network.layers[int(index)], group)
                array = np.array(value, dtype=float)
                if name not in target or target[name].shape != array.shape:
                    raise ShapeError(
                        f"stored array '{key}' does not fit the network")
                target[name] = array
        return network


def forward(layer, inputs, mode=MODE_INFER):
    """Apply a single built layer (or a :class:`Network`) in ``mode``."""
    if mode not in (MODE_TRAIN, MODE_INFER):
        raise DomainError(f"unknown mode '{mode}'")
    return layer.forward(inputs, training=mode == MODE_TRAIN)


def backward(network, inputs, upstream_gradient):
    """Back-propagate ``upstream_gradient`` through ``network``.

    :return: a tuple of the parameter gradients keyed like
       :meth:`Network.parameters` and the gradient with respect to
       ``inputs``.
    :raises StateError: when the last train-mode forward pass was not made
       on ``inputs``.
    """
    last = network._last_input
    if last is None or not np.array_equal(last, np.asarray(inputs, float)):
        raise StateError(
            "backward requires a train-mode forward pass on the same input")
    input_grad = network.backward(upstream_gradient)
    return network.gradients(), input_grad


def mae_loss(prediction, target):
    """Mean absolute error and its gradient with respect to ``prediction``.
    The subgradient at a zero residual is 0."""
    prediction = np.asarray(prediction, dtype=float)
    target = np.asarray(target, dtype=float)
    if prediction.shape != target.shape:
        raise ShapeError(
            f"prediction shape {prediction.shape} differs from target shape "
            f"{target.shape}")
    diff = prediction - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


@dataclass
class AdamState:
    step_size: float = defaults.ADAM_STEP_SIZE
    beta1: float = defaults.ADAM_BETA1
    beta2: float = defaults.ADAM_BETA2
    epsilon: float = defaults.ADAM_EPSILON
    first_moments: dict = field(default_factory=dict)
    second_moments: dict = field(default_factory=dict)
    timestep: int = 0

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0 <= value < 1:
                raise DomainError(f"{name} must be in [0, 1), while got {value}")
        if not self.step_size > 0 or not self.epsilon > 0:
            raise DomainError("step_size and epsilon must be positive")


def adam_step(state, parameters, gradients):
    """Update ``parameters`` in place with one bias-corrected Adam step.

    :param parameters: dict of arrays, e.g. :meth:`Network.parameters`.
    :param gradients: dict of arrays with the same keys and shapes.
    :return: ``(parameters, state)``
    """
    if set(parameters) != set(gradients):
        raise ShapeError("gradients do not match parameters")
    for key, param in parameters.items():
        if np.shape(gradients[key]) != param.shape:
            raise ShapeError(
                f"gradient of '{key}' has shape {np.shape(gradients[key])}, "
                f"parameter has {param.shape}")

    state.timestep += 1
    t = state.timestep
    correction1 = 1 - state.beta1**t
    correction2 = 1 - state.beta2**t
    for key, param in parameters.items():
        grad = np.asarray(gradients[key], dtype=float)
        m = state.first_moments.get(key)
        v = state.second_moments.get(key)
        if m is None:
            m = np.zeros_like(param)
            v = np.zeros_like(param)
        m = state.beta1 * m + (1 - state.beta1) * grad
        v = state.beta2 * v + (1 - state.beta2) * grad**2
        state.first_moments[key] = m
        state.second_moments[key] = v
        param -= state.step_size * (m / correction1) / (
            np.sqrt(v / correction2) + state.epsilon)
    return parameters, state


def numerical_gradient(func, array, eps=1e-6):
    """Central finite-difference gradient of the scalar ``func()`` with
    respect to ``array``, which is perturbed in place and restored."""
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + eps
        plus = func()
        array[index] = original - eps
        minus = func()
        array[index] = original
        grad[index] = (plus - minus) / (2 * eps)
    return grad
