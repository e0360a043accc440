"""Dense feedforward networks with ReLU hidden layers and a linear output.

Two layer variants share one Network container:

* ``StandardLayer`` stores a single weight matrix ``w``.
* ``DualLayer`` stores two non-negative accumulators ``w1`` and ``w2``;
  the matrix actually multiplied against the input (the effective weight)
  is ``w1 - w2``.

``forward`` records every pre-activation and activation so that
``backward`` can return the per-neuron gradient signal
grad_i = dE/da * f'(z_i) for each layer; the loss is mean squared error
E = 0.5 * ||a_out - target||^2 with an identity output activation, so the
output-layer signal is simply (a_out - target).  Weight updates (see
``updaters``) consume this signal together with the layer's input.

Networks serialize to JSON with full float64 precision (Python's shortest
round-trip ``repr``, up to 17 significant digits): saving and loading
reproduces every weight bit for bit.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng, as_vector, matvec

INIT_SCALE = 0.05  # weights drawn uniformly from [-INIT_SCALE, INIT_SCALE)

STANDARD = "standard"
DUAL = "dual"


@dataclass
class StandardLayer:
    w: np.ndarray  # (neurons, inputs)
    bias: np.ndarray  # (neurons,)

    def effective_w(self) -> np.ndarray:
        return self.w

    @property
    def out_size(self) -> int:
        return self.w.shape[0]

    @property
    def in_size(self) -> int:
        return self.w.shape[1]


@dataclass
class DualLayer:
    w1: np.ndarray  # (neurons, inputs)
    w2: np.ndarray  # same shape
    bias: np.ndarray  # (neurons,)

    def effective_w(self) -> np.ndarray:
        return self.w1 - self.w2

    @property
    def out_size(self) -> int:
        return self.w1.shape[0]

    @property
    def in_size(self) -> int:
        return self.w1.shape[1]


@dataclass
class Network:
    """Homogeneous stack of layers (all standard or all dual).  Hidden
    layers use ReLU; the last layer is linear."""

    layers: list
    variant: str
    seed: int | None = None

    @property
    def arch(self) -> list[int]:
        return [self.layers[0].in_size] + [layer.out_size for layer in self.layers]

    @property
    def n_layers(self) -> int:
        return len(self.layers)


@dataclass
class ForwardTrace:
    """Everything one forward pass computed: the input, each layer's
    pre-activation z and activation a.  ``acts[-1]`` is the network output."""

    x: np.ndarray
    zs: list = field(default_factory=list)
    acts: list = field(default_factory=list)

    def output(self) -> np.ndarray:
        return self.acts[-1]

    def layer_input(self, k: int) -> np.ndarray:
        """The activation vector that fed layer k."""
        return self.x if k == 0 else self.acts[k - 1]


def relu(z):
    return np.maximum(z, 0.0)


def relu_prime(z):
    """1 where z > 0, else 0.  The kink at z = 0 belongs to the zero
    branch, so a neuron sitting exactly at 0 passes no gradient."""
    return (np.asarray(z) > 0.0).astype(np.float64)


def init_network(arch: list[int], variant: str, seed: int) -> Network:
    """Seeded uniform init in [-0.05, 0.05); biases zero.

    The dual variant splits the very same draw into its positive part (w1)
    and negative-part magnitude (w2), so ``w1 - w2`` equals the standard
    variant's ``w`` entry for entry.  Standard and dual networks built from
    one seed therefore start as the same function.
    """
    if variant not in (STANDARD, DUAL):
        raise ValueError(f"unknown variant {variant!r}")
    if len(arch) < 2:
        raise ValueError(f"arch needs at least input and output sizes, got {arch}")
    if any(int(s) <= 0 for s in arch):
        raise ValueError(f"all layer sizes must be positive, got {arch}")

    rng = Rng(seed, stream=0)
    layers = []
    for n_in, n_out in zip(arch[:-1], arch[1:]):
        base = rng.uniform(-INIT_SCALE, INIT_SCALE, (n_out, n_in))
        bias = np.zeros(n_out)
        if variant == STANDARD:
            layers.append(StandardLayer(w=base, bias=bias))
        else:
            layers.append(DualLayer(w1=np.maximum(base, 0.0), w2=np.maximum(-base, 0.0), bias=bias))
    return Network(layers=layers, variant=variant, seed=int(seed))


def forward(net: Network, x) -> ForwardTrace:
    x = as_vector(x, "x")
    if x.shape[0] != net.layers[0].in_size:
        raise ValueError(
            f"input has length {x.shape[0]}, network expects {net.layers[0].in_size}"
        )
    trace = ForwardTrace(x=x)
    a = x
    last = net.n_layers - 1
    for k, layer in enumerate(net.layers):
        z = matvec(layer.effective_w(), a) + layer.bias
        a = z if k == last else relu(z)
        trace.zs.append(z)
        trace.acts.append(a)
    return trace


def backward(net: Network, trace: ForwardTrace, target) -> list[np.ndarray]:
    """Per-layer gradient signal for E = 0.5 * ||a_out - target||^2.

    Returns one vector per layer; entry i of layer k's vector is
    dE/da_{k,i} * f'(z_{k,i}).  The full weight gradient for layer k is the
    outer product of this vector with ``trace.layer_input(k)``.
    """
    target = as_vector(target, "target")
    out = trace.output()
    if target.shape[0] != out.shape[0]:
        raise ValueError(f"target has length {target.shape[0]}, output has {out.shape[0]}")

    n = net.n_layers
    grads: list = [None] * n
    grads[n - 1] = out - target  # linear output layer: f'(z) = 1
    for k in range(n - 2, -1, -1):
        w_next = net.layers[k + 1].effective_w()
        grads[k] = (w_next.T @ grads[k + 1]) * relu_prime(trace.zs[k])
    return grads


def collapse_dual(net: Network) -> Network:
    """Fold each dual layer into a standard layer with w = w1 - w2.  The
    collapsed network computes the identical forward pass (same floats)
    at standard-network inference cost."""
    if net.variant != DUAL:
        raise ValueError("collapse_dual expects a dual-variant network")
    layers = [
        StandardLayer(w=layer.effective_w(), bias=layer.bias.copy()) for layer in net.layers
    ]
    return Network(layers=layers, variant=STANDARD, seed=net.seed)


def predict_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    """Forward pass over a whole sample matrix (rows = samples).  Used for
    evaluation; training always steps one sample at a time."""
    a = np.asarray(xs, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.layers[0].in_size:
        raise ValueError(
            f"expected (n, {net.layers[0].in_size}) inputs, got {a.shape}"
        )
    last = net.n_layers - 1
    for k, layer in enumerate(net.layers):
        z = a @ layer.effective_w().T + layer.bias
        a = z if k == last else relu(z)
    return a


def network_to_dict(net: Network) -> dict:
    doc = {"variant": net.variant, "arch": net.arch, "seed": net.seed, "layers": []}
    for layer in net.layers:
        if net.variant == STANDARD:
            doc["layers"].append({"w": layer.w.tolist(), "bias": layer.bias.tolist()})
        else:
            doc["layers"].append(
                {"w1": layer.w1.tolist(), "w2": layer.w2.tolist(), "bias": layer.bias.tolist()}
            )
    return doc


def network_from_dict(doc: dict) -> Network:
    variant = doc["variant"]
    layers = []
    for layer_doc in doc["layers"]:
        bias = np.asarray(layer_doc["bias"], dtype=np.float64)
        if variant == STANDARD:
            layers.append(StandardLayer(w=np.asarray(layer_doc["w"], dtype=np.float64), bias=bias))
        elif variant == DUAL:
            layers.append(
                DualLayer(
                    w1=np.asarray(layer_doc["w1"], dtype=np.float64),
                    w2=np.asarray(layer_doc["w2"], dtype=np.float64),
                    bias=bias,
                )
            )
        else:
            raise ValueError(f"unknown variant {variant!r}")
    return Network(layers=layers, variant=variant, seed=doc.get("seed"))


def save_network(net: Network, path) -> None:
    with open(path, "w") as f:
        json.dump(network_to_dict(net), f)


def load_network(path) -> Network:
    with open(path) as f:
        return network_from_dict(json.load(f))
