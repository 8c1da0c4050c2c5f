"""Small double-precision conv/dense network with hand-written backprop."""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CHECKPOINT_FORMAT = "lanerl-qnet"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    pass


@dataclass
class NetworkSpec:
    input_shape: tuple = (3, 30, 15)
    conv_layers: int = 3
    first_channels: int = 16
    channels: int = 32
    kernel: int = 3
    stride: int = 1
    hidden_units: int = 96
    n_outputs: int = 5
    learning_rate: float = 0.0005

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        dims = (self.conv_layers, self.first_channels, self.channels, self.kernel,
                self.stride, self.hidden_units, self.n_outputs)
        if len(self.input_shape) != 3 or min(self.input_shape) <= 0:
            raise ShapeError("input_shape must be (channels, rows, cols)")
        if self.conv_layers < 0 or min(dims[1:]) <= 0:
            raise ShapeError("network dimensions must be positive")

    @property
    def conv_channels(self) -> list:
        return [self.first_channels] + [self.channels] * (self.conv_layers - 1) if self.conv_layers else []

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ShapeError(f"unknown network keys: {sorted(unknown)}")
        return cls(**data)


def glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv2D:
    kind = "conv"

    def __init__(self, in_ch, out_ch, kernel=3, stride=1, activation="relu", rng=None):
        if stride < 1:
            raise ShapeError("stride must be >= 1")
        self.in_ch, self.out_ch, self.kernel, self.stride = in_ch, out_ch, kernel, stride
        self.activation = activation
        rng = np.random.default_rng() if rng is None else rng
        k2 = kernel * kernel
        self.W = glorot(rng, (out_ch, in_ch, kernel, kernel), in_ch * k2, out_ch * k2)
        self.b = np.zeros(out_ch)
        self._cache = None

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_ch:
            raise ShapeError(f"conv expects {self.in_ch} channels, got {c}")
        ho = (h - self.kernel) // self.stride + 1
        wo = (w - self.kernel) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"input {in_shape} too small for kernel {self.kernel}")
        return (self.out_ch, ho, wo)

    def forward(self, x):
        n = x.shape[0]
        _, ho, wo = self.out_shape(x.shape[1:])
        k, s = self.kernel, self.stride
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, -1)
        z = cols @ self.W.reshape(self.out_ch, -1).T + self.b
        z = z.reshape(n, ho, wo, self.out_ch).transpose(0, 3, 1, 2)
        out = np.maximum(z, 0.0) if self.activation == "relu" else z
        self._cache = (x.shape, cols, z)
        return out

    def backward(self, dout, need_input_grad=True):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        x_shape, cols, z = self._cache
        if self.activation == "relu":
            dout = dout * (z > 0)
        n, _, ho, wo = dout.shape
        dmat = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, self.out_ch)
        self.dW = (dmat.T @ cols).reshape(self.W.shape)
        self.db = dmat.sum(axis=0)
        if not need_input_grad:
            return None
        k, s = self.kernel, self.stride
        dcols = (dmat @ self.W.reshape(self.out_ch, -1)).reshape(n, ho, wo, self.in_ch, k, k)
        dx = np.zeros(x_shape)
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += \
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dx

    def relu_pattern(self):
        return self._cache[2] > 0 if self.activation == "relu" else None

    @property
    def params(self):
        return [self.W, self.b]

    @property
    def grads(self):
        return [self.dW, self.db]


class Dense:
    kind = "dense"

    def __init__(self, n_in, n_out, activation="relu", rng=None):
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        rng = np.random.default_rng() if rng is None else rng
        self.W = glorot(rng, (n_out, n_in), n_in, n_out)
        self.b = np.zeros(n_out)
        self._cache = None

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != self.n_in:
            raise ShapeError(f"dense expects {self.n_in} inputs, got shape {in_shape}")
        return (self.n_out,)

    def forward(self, x):
        x2 = x.reshape(x.shape[0], -1)
        if x2.shape[1] != self.n_in:
            raise ShapeError(f"dense expects {self.n_in} inputs, got {x2.shape[1]}")
        z = x2 @ self.W.T + self.b
        out = np.maximum(z, 0.0) if self.activation == "relu" else z
        self._cache = (x.shape, x2, z)
        return out

    def backward(self, dout, need_input_grad=True):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        x_shape, x2, z = self._cache
        if self.activation == "relu":
            dout = dout * (z > 0)
        self.dW = dout.T @ x2
        self.db = dout.sum(axis=0)
        if not need_input_grad:
            return None
        return (dout @ self.W).reshape(x_shape)

    def relu_pattern(self):
        return self._cache[2] > 0 if self.activation == "relu" else None

    @property
    def params(self):
        return [self.W, self.b]

    @property
    def grads(self):
        return [self.dW, self.db]


def _as_batch(x, ndim):
    x = np.asarray(x, dtype=np.float64)
    return (x[None], True) if x.ndim == ndim else (x, False)


def conv_forward(x, layer: Conv2D):
    xb, single = _as_batch(x, 3)
    out = layer.forward(xb)
    return out[0] if single else out


def dense_forward(x, layer: Dense):
    xb, single = _as_batch(x, 1)
    out = layer.forward(xb)
    return out[0] if single else out


class Network:
    """Stack of conv layers, flatten, dense layers; last layer is linear."""

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        self.output_shape = shape
        self._forwarded = False

    def forward(self, x):
        xb, single = _as_batch(x, len(self.input_shape))
        if xb.shape[1:] != self.input_shape:
            raise ShapeError(f"expected input {self.input_shape}, got {xb.shape[1:]}")
        h = xb
        for layer in self.layers:
            h = layer.forward(h)
        self._forwarded = True
        self._single = single
        return h[0] if single else h

    def backward(self, output_grad, need_input_grad=False):
        """Backpropagate ``output_grad`` (same shape as the last forward output).

        Returns the per-layer [dW, db] lists; the input gradient is returned
        as a second value when requested.
        """
        if not self._forwarded:
            raise RuntimeError("backward called before forward")
        g = np.asarray(output_grad, dtype=np.float64)
        if self._single:
            g = g[None]
        for i in range(len(self.layers) - 1, -1, -1):
            need = need_input_grad or i > 0
            g = self.layers[i].backward(g, need_input_grad=need)
        grads = [[gr.copy() for gr in layer.grads] for layer in self.layers]
        return (grads, g) if need_input_grad else grads

    def params(self):
        return [layer.params for layer in self.layers]

    def n_params(self):
        return sum(p.size for layer in self.layers for p in layer.params)

    def relu_patterns(self):
        return [layer.relu_pattern() for layer in self.layers]

    def copy(self) -> "Network":
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.layers = []
        for layer in self.layers:
            new = object.__new__(type(layer))
            new.__dict__.update(layer.__dict__)
            new.W = layer.W.copy()
            new.b = layer.b.copy()
            new._cache = None
            clone.layers.append(new)
        clone._forwarded = False
        return clone

    def load_params(self, other: "Network"):
        for mine, theirs in zip(self.layers, other.layers):
            mine.W[...] = theirs.W
            mine.b[...] = theirs.b


class QNetwork(Network):
    def __init__(self, spec: NetworkSpec, rng=None, seed=None):
        if rng is None:
            rng = np.random.default_rng(seed)
        self.spec = spec
        self.seed = seed
        layers = []
        shape = spec.input_shape
        for ch in spec.conv_channels:
            conv = Conv2D(shape[0], ch, spec.kernel, spec.stride, rng=rng)
            shape = conv.out_shape(shape)
            layers.append(conv)
        n_in = int(np.prod(shape))
        if spec.hidden_units:
            layers.append(Dense(n_in, spec.hidden_units, rng=rng))
            n_in = spec.hidden_units
        layers.append(Dense(n_in, spec.n_outputs, activation="identity", rng=rng))
        super().__init__(layers, spec.input_shape)


def sgd_update(params, grads, eta):
    """theta <- theta + eta * delta, in place (delta already points uphill on Q)."""
    for layer_p, layer_g in zip(params, grads):
        for p, g in zip(layer_p, layer_g):
            if p.shape != g.shape:
                raise ShapeError("parameter/gradient shape mismatch")
            p += eta * g
    return params


def grad_check(network: Network, x, eps=1e-5, seed=0):
    """Max relative error between backprop and central differences.

    The scalar probed is a fixed random projection of the output. Parameters
    whose perturbation flips a ReLU between the two probes sit on a kink
    where the derivative is undefined; they are skipped and counted.

    Returns ``(max_rel_error, n_checked, n_skipped)``.
    """
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    out = network.forward(x)
    proj = rng.normal(size=np.shape(out))
    grads = network.backward(proj)

    def loss():
        return float(np.sum(network.forward(x) * proj))

    worst, checked, skipped = 0.0, 0, 0
    for layer, layer_grads in zip(network.layers, grads):
        for p, g in zip(layer.params, layer_grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + eps
                f_plus = loss()
                pat_plus = network.relu_patterns()
                flat[i] = old - eps
                f_minus = loss()
                pat_minus = network.relu_patterns()
                flat[i] = old
                if any(a is not None and not np.array_equal(a, b)
                       for a, b in zip(pat_plus, pat_minus)):
                    skipped += 1
                    continue
                num = (f_plus - f_minus) / (2 * eps)
                ana = gflat[i]
                err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
                worst = max(worst, err)
                checked += 1
    return worst, checked, skipped


# checkpoints

def network_to_dict(net: QNetwork, seed=None) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": net.seed if seed is None else seed,
        "spec": net.spec.to_dict(),
        "layers": [
            {"kind": layer.kind, "activation": layer.activation,
             "weight_shape": list(layer.W.shape), "weight": layer.W.ravel().tolist(),
             "bias": layer.b.tolist()}
            for layer in net.layers
        ],
    }


def network_from_dict(data: dict) -> QNetwork:
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ShapeError("not a network checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ShapeError(f"unsupported checkpoint version {data.get('version')}")
    spec = NetworkSpec.from_dict(data["spec"])
    net = QNetwork(spec, rng=np.random.default_rng(0), seed=data.get("seed"))
    if len(data["layers"]) != len(net.layers):
        raise ShapeError("layer count does not match spec")
    for layer, rec in zip(net.layers, data["layers"]):
        if rec["kind"] != layer.kind or tuple(rec["weight_shape"]) != layer.W.shape:
            raise ShapeError("layer geometry does not match spec")
        w = np.asarray(rec["weight"], dtype=np.float64)
        b = np.asarray(rec["bias"], dtype=np.float64)
        if w.size != layer.W.size or b.shape != layer.b.shape:
            raise ShapeError("parameter count does not match spec")
        layer.W[...] = w.reshape(layer.W.shape)
        layer.b[...] = b
    return net


def save_network(net: QNetwork, path, seed=None):
    Path(path).write_text(json.dumps(network_to_dict(net, seed)))


def load_network(path) -> QNetwork:
    return network_from_dict(json.loads(Path(path).read_text()))
