"""Fake quantization with straight-through gradients.

The quantizer maps x to round(x * q / lambda) clamped to [-q, q] and scaled
back by lambda / q, where q = 2^(bits-1) - 1. Everything stays in float64;
"quantized" means snapped to the grid {k * lambda / q : k = -q..q}. Rounding
is half away from zero, which keeps the map odd: fq(-x) = -fq(x) exactly.

Weights use one scale per output channel (row of a dense weight, filter of a
conv kernel), recomputed from the live weights at every forward and treated
as a constant by the backward pass. Activations use a single scalar scale
tracked as an exponential moving average of per-batch max|X|, updated only in
train mode. Gradients cross both quantizers via the straight-through
estimator: the backward rule is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError
from .layers import BatchNorm, Conv2d, Dense, Layer, Model
from .tensor import Node

SCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class QuantConfig:
    """Bit widths and scale-tracking settings for one quantized model.

    boundary_bits applies to the first parametric layer and the final head
    layer, which are kept at higher precision than the interior. enabled=False
    turns every wrapped layer into an exact pass-through. keep_batchnorm=True
    retains normalization layers when wrapping (the multi-task setup); by
    default they are removed.
    """

    weight_bits: int = 4
    act_bits: int = 4
    boundary_bits: int = 8
    ema_momentum: float = 0.99
    enabled: bool = True
    keep_batchnorm: bool = False

    def __post_init__(self):
        for field in ("weight_bits", "act_bits", "boundary_bits"):
            bits = getattr(self, field)
            if not isinstance(bits, int) or not 2 <= bits <= 16:
                raise ContractError(f"{field} must be an integer in [2, 16], got {bits!r}")
        if not 0.0 < self.ema_momentum < 1.0:
            raise ContractError(f"ema_momentum must lie in (0, 1), got {self.ema_momentum}")


class QuantState:
    """Mutable activation-scale tracker for one quantized layer.

    act_scale is meaningful only once calibrated (first train-mode batch).
    weight_scale holds the per-channel scales of the most recent forward,
    kept for introspection; it is recomputed from the live weights each time.
    """

    def __init__(self):
        self.act_scale: float = 0.0
        self.calibrated: bool = False
        self.weight_scale: np.ndarray | None = None

    def snapshot(self) -> dict:
        return {"act_scale": self.act_scale, "calibrated": self.calibrated}

    def restore(self, snap: dict) -> None:
        self.act_scale = float(snap["act_scale"])
        self.calibrated = bool(snap["calibrated"])


def grid_levels(bits: int) -> int:
    """Number of representable values, 2^bits - 1 (symmetric grid)."""
    return 2 * (2 ** (bits - 1) - 1) + 1


def _check_bits(bits: int) -> int:
    if not isinstance(bits, (int, np.integer)) or not 2 <= bits <= 16:
        raise ContractError(f"bit width must be an integer in [2, 16], got {bits!r}")
    return 2 ** (bits - 1) - 1


def round_half_away(y: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero (odd-symmetric)."""
    return np.copysign(np.floor(np.abs(y) + 0.5), y)


def fake_quantize(x: np.ndarray, bits: int, scale) -> np.ndarray:
    """Snap x onto the symmetric grid of 2^bits - 1 levels spanning [-scale, scale].

    scale is a positive scalar or, for per-channel quantization, an array
    with one entry per leading-axis slice of x.
    """
    q = _check_bits(bits)
    x = np.asarray(x, dtype=np.float64)
    lam = np.asarray(scale, dtype=np.float64)
    if np.any(lam <= 0.0) or not np.all(np.isfinite(lam)):
        raise ContractError("quantization scale must be positive and finite")
    if lam.ndim > 0:
        if lam.shape != (x.shape[0],):
            raise ContractError(
                f"per-channel scale must have shape ({x.shape[0]},), got {lam.shape}"
            )
        lam = lam.reshape((-1,) + (1,) * (x.ndim - 1))
    y = x * (q / lam)
    return np.clip(round_half_away(y), -q, q) * (lam / q)


def weight_scales(w: np.ndarray) -> np.ndarray:
    """Per-output-channel max|w|, floored at 1e-8 so dead channels stay finite."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim < 2:
        raise ContractError(f"weight must have rank >= 2, got shape {w.shape}")
    flat = np.abs(w).reshape(w.shape[0], -1)
    return np.maximum(flat.max(axis=1), SCALE_FLOOR)


def act_scale_update(state: QuantState, batch: np.ndarray, momentum: float) -> QuantState:
    """Fold one batch's max|X| into the EMA scale; first call calibrates.

    lambda <- momentum*lambda + (1 - momentum)*max|batch| after calibration;
    the very first batch sets lambda = max|batch| directly.
    """
    if not 0.0 < momentum < 1.0:
        raise ContractError(f"ema momentum must lie in (0, 1), got {momentum}")
    peak = float(np.abs(batch).max()) if np.asarray(batch).size else 0.0
    if not np.isfinite(peak):
        raise ContractError("activation batch contains non-finite values")
    peak = max(peak, SCALE_FLOOR)
    if not state.calibrated:
        state.act_scale = peak
        state.calibrated = True
    else:
        state.act_scale = momentum * state.act_scale + (1.0 - momentum) * peak
    return state


class QuantizedLayer(Layer):
    """Wraps a dense or conv layer with weight and activation fake quantization.

    Forward order in train mode: update the activation scale from the raw
    (pre-quantization) input, then quantize the input with the updated scale,
    quantize the weights with freshly computed per-channel scales, and run the
    wrapped layer's affine map on the quantized pair. Biases are never
    quantized. Both quantizers sit behind straight-through nodes, so the
    upstream gradient reaches the latent weights and the input unchanged.

    With cfg.enabled False the wrapper delegates to the inner layer and is an
    exact pass-through. In eval mode before any train batch has calibrated the
    activation scale, input quantization is skipped (there is no scale yet);
    weight quantization still applies.
    """

    kind = "quantized"

    def __init__(self, inner: Dense | Conv2d, weight_bits: int, act_bits: int, cfg: QuantConfig):
        if not isinstance(inner, (Dense, Conv2d)):
            raise ContractError(f"only dense/conv layers can be quantized, got {inner.kind}")
        _check_bits(weight_bits)
        _check_bits(act_bits)
        self.inner = inner
        self.weight_bits = weight_bits
        self.act_bits = act_bits
        self.cfg = cfg
        self.state = QuantState()
        self.last_ste_pairs: list[tuple[Node, Node]] = []

    def forward(self, x: Node, train_mode: bool, rng) -> Node:
        if not self.cfg.enabled:
            return self.inner.forward(x, train_mode, rng)
        self.last_ste_pairs = []
        if train_mode:
            act_scale_update(self.state, x.value, self.cfg.ema_momentum)
        if self.state.calibrated:
            scale = self.state.act_scale
            qx = T.straight_through(x, lambda v: fake_quantize(v, self.act_bits, scale))
            self.last_ste_pairs.append((x, qx))
        else:
            qx = x
        lam_w = weight_scales(self.inner.weight.value)
        self.state.weight_scale = lam_w
        qw = T.straight_through(
            self.inner.weight, lambda v: fake_quantize(v, self.weight_bits, lam_w)
        )
        self.last_ste_pairs.append((self.inner.weight, qw))
        return self.inner.forward_with(qx, qw)

    def named_parameters(self):
        return self.inner.named_parameters()

    def named_buffers(self):
        return [
            ("act_scale", np.asarray(self.state.act_scale, dtype=np.float64)),
            ("calibrated", np.asarray(float(self.state.calibrated))),
        ]

    def set_buffer(self, name, value):
        if name == "act_scale":
            self.state.act_scale = float(value)
        elif name == "calibrated":
            self.state.calibrated = bool(float(value))
        else:
            super().set_buffer(name, value)


def wrap_model(model: Model, cfg: QuantConfig) -> Model:
    """Return a quantized view of the model, sharing its parameter nodes.

    All parametric layers are wrapped; the first and the last get
    boundary_bits for both weights and activations, interior layers get
    (weight_bits, act_bits). When cfg.enabled and not cfg.keep_batchnorm,
    plain batch-norm layers are dropped (per-task norms are always kept:
    they are the multi-task output calibration, not trunk normalization).
    """
    parametric = [i for i, l in enumerate(model.layers) if isinstance(l, (Dense, Conv2d))]
    if not parametric:
        raise ContractError("model has no dense or conv layer to quantize")
    first, last = parametric[0], parametric[-1]
    layers: list[Layer] = []
    from .layers import PerTaskNorm  # local import keeps module load order simple

    for i, layer in enumerate(model.layers):
        if isinstance(layer, (Dense, Conv2d)):
            if i == first or i == last:
                bits = (cfg.boundary_bits, cfg.boundary_bits)
            else:
                bits = (cfg.weight_bits, cfg.act_bits)
            layers.append(QuantizedLayer(layer, bits[0], bits[1], cfg))
        elif (
            isinstance(layer, BatchNorm)
            and not isinstance(layer, PerTaskNorm)
            and cfg.enabled
            and not cfg.keep_batchnorm
        ):
            continue
        else:
            layers.append(layer)
    return Model(layers, model.head, model.out_dim, model.input_shape, name=model.name)
