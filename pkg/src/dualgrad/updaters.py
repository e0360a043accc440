"""Per-sample weight update rules.

All four rules consume the same ingredients after one backward pass: the
layer's gradient signal ``grad`` (one scalar per neuron), the input vector
``x`` the layer saw, and the hyperparameters.  Biases are always updated
by plain SGD; the rules differ only in how they treat the weight matrix.

* ``sgd_step``      w += -eta * grad_i * x_j
* ``l2_step``       w := w * (1 - eta*lambda) - eta * grad_i * x_j
* ``dual_step``     sign-routed convex moving average of inputs:
                    with a = eta*|grad_i|, the row of w1 (grad_i < 0) or
                    w2 (grad_i > 0) moves to row*(1-a) + x*a; grad_i = 0
                    leaves the neuron untouched.
* ``dual_stabilized_step``  same update with the rate normalized by a
                    per-neuron running average of |grad|:
                    r = min(1, |grad_i| / g_avg_i * 0.1), a = eta*r, and
                    afterwards (only when grad_i != 0)
                    g_avg_i := g_avg_i*(1-eta) + |grad_i|*eta.

Because the dual rules form convex combinations, every w1/w2 entry stays
inside the range spanned by its initialization and the inputs seen so far;
weights cannot blow up, at the price of a bounded output range.

``batch_weighted_average`` is the closed-form counterpart of the dual
rule: the gradient-magnitude-weighted mean of the inputs in each sign
class (times eta).  The moving-average rule converges to the *unscaled*
weighted mean of its routed inputs, so comparisons against this oracle
divide out eta.

Updates mutate the layer in place and return it.  A layer must not be
updated concurrently from two threads.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UpdateRateOverflowError
from .numerics import as_vector


@dataclass
class TrainHyper:
    """Shared hyperparameters.  eta applies to every rule; lam only to
    l2_step; stab_factor/stab_cap only to dual_stabilized_step."""

    eta: float = 0.01
    lam: float = 0.0
    stab_factor: float = 0.1
    stab_cap: float = 1.0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not 0 < self.stab_factor <= 1:
            raise ValueError(f"stab_factor must be in (0, 1], got {self.stab_factor}")
        if self.stab_cap != 1.0:
            raise ValueError(f"stab_cap is fixed at 1, got {self.stab_cap}")


@dataclass
class StabilizerState:
    """Per-neuron running average of |grad| for one layer.  Starts at 1.0
    so the first updates are gentle (rate 0.1*|grad|)."""

    g_avg: np.ndarray

    @classmethod
    def init(cls, n_neurons: int) -> "StabilizerState":
        return cls(g_avg=np.ones(n_neurons))


def _check_shapes(layer, grad: np.ndarray, x: np.ndarray) -> None:
    if grad.shape[0] != layer.out_size:
        raise ValueError(f"grad has length {grad.shape[0]}, layer has {layer.out_size} neurons")
    if x.shape[0] != layer.in_size:
        raise ValueError(f"x has length {x.shape[0]}, layer expects {layer.in_size} inputs")


def sgd_step(layer, grad, x, h: TrainHyper):
    grad = as_vector(grad, "grad")
    x = as_vector(x, "x")
    _check_shapes(layer, grad, x)
    layer.w -= h.eta * np.outer(grad, x)
    layer.bias -= h.eta * grad
    return layer


def l2_step(layer, grad, x, h: TrainHyper):
    """Weight decay on the weights only; the bias is plain SGD."""
    grad = as_vector(grad, "grad")
    x = as_vector(x, "x")
    _check_shapes(layer, grad, x)
    layer.w *= 1.0 - h.eta * h.lam
    layer.w -= h.eta * np.outer(grad, x)
    layer.bias -= h.eta * grad
    return layer


def _convex_row_update(w: np.ndarray, mask: np.ndarray, a: np.ndarray, x: np.ndarray) -> None:
    """rows[mask] := rows[mask]*(1-a) + x*a, one rate per selected row."""
    if mask.any():
        am = a[mask][:, None]
        w[mask] = w[mask] * (1.0 - am) + x[None, :] * am


def dual_step(layer, grad, x, h: TrainHyper):
    """Sign-routed moving-average update of a dual layer.

    Only the accumulator matching each neuron's gradient sign changes;
    the other one is left bit for bit as it was.  Raises
    UpdateRateOverflowError when eta*|grad| > 1 for any neuron, because
    beyond that the update is no longer a convex combination.
    """
    grad = as_vector(grad, "grad")
    x = as_vector(x, "x")
    _check_shapes(layer, grad, x)

    a = h.eta * np.abs(grad)
    if np.any(a > 1.0):
        raise UpdateRateOverflowError(float(a.max()))
    _convex_row_update(layer.w1, grad < 0.0, a, x)
    _convex_row_update(layer.w2, grad > 0.0, a, x)
    layer.bias -= h.eta * grad
    return layer


def dual_stabilized_step(layer, stab: StabilizerState, grad, x, h: TrainHyper):
    """Dual update with the rate damped by the running gradient average.

    The rate r = min(cap, |grad|/g_avg * factor) replaces |grad| in the
    convex update (a = eta*r), so a lone outlier gradient cannot move a
    neuron further than eta.  g_avg is refreshed afterwards, from the
    pre-update value, and only for neurons that actually saw a gradient.
    """
    grad = as_vector(grad, "grad")
    x = as_vector(x, "x")
    _check_shapes(layer, grad, x)
    if stab.g_avg.shape[0] != layer.out_size:
        raise ValueError(
            f"stabilizer tracks {stab.g_avg.shape[0]} neurons, layer has {layer.out_size}"
        )

    mag = np.abs(grad)
    r = np.minimum(h.stab_cap, mag / stab.g_avg * h.stab_factor)
    a = h.eta * r
    _convex_row_update(layer.w1, grad < 0.0, a, x)
    _convex_row_update(layer.w2, grad > 0.0, a, x)
    layer.bias -= h.eta * grad

    active = grad != 0.0
    stab.g_avg[active] = stab.g_avg[active] * (1.0 - h.eta) + mag[active] * h.eta
    return layer, stab


def batch_weighted_average(xs, grads, h: TrainHyper) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form target of the dual rule for one neuron over a batch.

    w1_row = eta * sum_{grad<0}(-grad_i * x_i) / sum_{grad<0}(-grad_i),
    w2_row analogously over positive gradients.  An empty sign class
    yields a zero row (there is nothing to average).
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError(f"xs must be a non-empty list of equal-length vectors, got shape {xs.shape}")
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != (xs.shape[0],):
        raise ValueError(f"need one grad per sample: {grads.shape} vs {xs.shape[0]} samples")

    def side(mask: np.ndarray, magnitudes: np.ndarray) -> np.ndarray:
        if not mask.any():
            return np.zeros(xs.shape[1])
        weights = magnitudes[mask]
        return h.eta * (weights @ xs[mask]) / weights.sum()

    w1_row = side(grads < 0.0, -grads)
    w2_row = side(grads > 0.0, grads)
    return w1_row, w2_row
