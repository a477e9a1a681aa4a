"""Complex-valued layers, the activation zoo, classification heads and
real-valued losses.

Every activation is registered as a differentiable primitive carrying its
Wirtinger pair (dw/dz, dw/dzbar). Radial activations w = h(|z|) * z use

    dw/dz = h + (r/2) h'      dw/dzbar = z^2 h' / (2r)

and phase-rotating ones w = g(arg z) * z use

    dw/dz = g - (i/2) g'      dw/dzbar = (i/2) (z^2 / r^2) g'

Kinks and the origin follow the subgradient-0 convention; all phase-scaled
activations output exactly 0 at z = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DomainError
from .wirtinger import (
    COMPLEX,
    REAL,
    Primitive,
    Var,
    register_primitive,
)
from .ctensor import Rng, sample_circular_gaussian

EPS_GUARD = 1e-12
DEFAULT_IGAUSSIAN_WIDTH = 1.0


# --------------------------------------------------------------------------
# Activation formulas (numpy, shared by the tape primitives and the plain
# evaluation path)
# --------------------------------------------------------------------------

def _radial_parts(z, h, hprime):
    """Wirtinger pair for w = h(r) z given h and h' evaluated on r."""
    r = np.abs(z)
    safe_r = np.where(r > 0, r, 1.0)
    dwdz = h + 0.5 * r * hprime
    dwdzbar = np.where(r > 0, z * z * hprime / (2.0 * safe_r), 0.0)
    return dwdz.astype(np.complex128), dwdzbar.astype(np.complex128)


def _sep_sigmoid_value(z, b=None):
    return expit(z.real) + 1j * expit(z.imag)


def _sep_sigmoid_partials(z, b=None):
    sx = expit(z.real)
    sy = expit(z.imag)
    dx = sx * (1.0 - sx)
    dy = sy * (1.0 - sy)
    return (("pair", 0.5 * (dx + dy) + 0j, 0.5 * (dx - dy) + 0j),)


def _zrelu_value(z, b=None):
    keep = (z.real >= 0) & (z.imag >= 0)
    return np.where(keep, z, 0.0 + 0.0j)


def _zrelu_partials(z, b=None):
    inside = (z.real > 0) & (z.imag > 0)
    return (("pair", np.where(inside, 1.0 + 0j, 0j), np.zeros_like(z)),)


def _crelu_value(z, b=None):
    return np.maximum(z.real, 0.0) + 1j * np.maximum(z.imag, 0.0)


def _crelu_partials(z, b=None):
    gx = (z.real > 0).astype(np.float64)
    gy = (z.imag > 0).astype(np.float64)
    return (("pair", 0.5 * (gx + gy) + 0j, 0.5 * (gx - gy) + 0j),)


def _modrelu_value(z, b):
    r = np.abs(z)
    pre = r + b
    return np.where(pre > 0, pre * z / (r + EPS_GUARD), 0.0 + 0.0j)


def _modrelu_partials(z, b):
    r = np.abs(z)
    active = (r + b > 0) & (r > 0)
    h = np.where(active, (r + b) / (r + EPS_GUARD), 0.0)
    hp = np.where(active, (EPS_GUARD - b) / (r + EPS_GUARD) ** 2, 0.0)
    dwdz, dwdzbar = _radial_parts(z, h, hp)
    dwdb = np.where(active, z / (r + EPS_GUARD), 0.0 + 0.0j)
    return (("pair", dwdz, dwdzbar), ("dreal", dwdb))


def _siglog_value(z, b=None):
    return z / (1.0 + np.abs(z))


def _siglog_partials(z, b=None):
    r = np.abs(z)
    h = 1.0 / (1.0 + r)
    hp = -1.0 / (1.0 + r) ** 2
    return (("pair", *_radial_parts(z, h, hp)),)


def _igaussian_value(z, b=None, *, width=DEFAULT_IGAUSSIAN_WIDTH):
    r = np.abs(z)
    return (1.0 - np.exp(-r * r / (2.0 * width * width))) * z / (r + EPS_GUARD)


def _igaussian_partials(z, b=None, *, width=DEFAULT_IGAUSSIAN_WIDTH):
    r = np.abs(z)
    e = np.exp(-r * r / (2.0 * width * width))
    h = (1.0 - e) / (r + EPS_GUARD)
    hp = ((r / (width * width)) * e * (r + EPS_GUARD) - (1.0 - e)) / (r + EPS_GUARD) ** 2
    return (("pair", *_radial_parts(z, h, hp)),)


def _cardioid_value(z, b):
    theta = np.where(z == 0, 0.0, np.angle(z))
    return 0.5 * (1.0 + np.cos(theta + b)) * z


def _cardioid_partials(z, b):
    r = np.abs(z)
    nonzero = r > 0
    theta = np.where(z == 0, 0.0, np.angle(z))
    g = 0.5 * (1.0 + np.cos(theta + b))
    gp = -0.5 * np.sin(theta + b)
    safe_r2 = np.where(nonzero, r * r, 1.0)
    dwdz = np.where(nonzero, g - 0.5j * gp, 0.0 + 0.0j)
    dwdzbar = np.where(nonzero, 0.5j * (z * z / safe_r2) * gp, 0.0 + 0.0j)
    dwdb = np.where(nonzero, -0.5 * np.sin(theta + b) * z, 0.0 + 0.0j)
    return (("pair", dwdz, dwdzbar), ("dreal", dwdb))


register_primitive(Primitive(
    "act_sep_sigmoid", (COMPLEX,), COMPLEX, holomorphic=False,
    value=_sep_sigmoid_value, partials=_sep_sigmoid_partials,
))
register_primitive(Primitive(
    "act_zrelu", (COMPLEX,), COMPLEX, holomorphic=False,
    value=_zrelu_value, partials=_zrelu_partials,
))
register_primitive(Primitive(
    "act_crelu", (COMPLEX,), COMPLEX, holomorphic=False,
    value=_crelu_value, partials=_crelu_partials,
))
register_primitive(Primitive(
    "act_modrelu", (COMPLEX, REAL), COMPLEX, holomorphic=False,
    value=_modrelu_value, partials=_modrelu_partials,
))
register_primitive(Primitive(
    "act_siglog", (COMPLEX,), COMPLEX, holomorphic=False,
    value=_siglog_value, partials=_siglog_partials,
))
register_primitive(Primitive(
    "act_igaussian", (COMPLEX,), COMPLEX, holomorphic=False,
    value=_igaussian_value, partials=_igaussian_partials,
))
register_primitive(Primitive(
    "act_cardioid", (COMPLEX, REAL), COMPLEX, holomorphic=False,
    value=_cardioid_value, partials=_cardioid_partials,
))


@dataclass(frozen=True)
class ActivationKind:
    name: str
    primitive: str
    trainable: str | None  # None, "single" or "per_feature"
    takes_bias: bool
    attrs: dict = field(default_factory=dict)


ACTIVATIONS: dict[str, ActivationKind] = {
    "sep_sigmoid": ActivationKind("sep_sigmoid", "act_sep_sigmoid", None, False),
    "zrelu": ActivationKind("zrelu", "act_zrelu", None, False),
    "modrelu": ActivationKind("modrelu", "act_modrelu", None, True),
    "trainable_modrelu": ActivationKind("trainable_modrelu", "act_modrelu", "per_feature", True),
    "cardioid": ActivationKind("cardioid", "act_cardioid", None, True),
    "trainable_cardioid_single": ActivationKind(
        "trainable_cardioid_single", "act_cardioid", "single", True),
    "trainable_cardioid_per_feature": ActivationKind(
        "trainable_cardioid_per_feature", "act_cardioid", "per_feature", True),
    "siglog": ActivationKind("siglog", "act_siglog", None, False),
    "crelu": ActivationKind("crelu", "act_crelu", None, False),
    "igaussian": ActivationKind("igaussian", "act_igaussian", None, False),
}

_SMOOTH_EVERYWHERE = ("sep_sigmoid", "siglog", "igaussian")


def apply_activation(kind: str, z, params=None, width: float = DEFAULT_IGAUSSIAN_WIDTH):
    """Evaluate one activation on a complex array (no tape involved).

    `params` is the trainable bias (scalar or per-feature array) for kinds
    that carry one; bias-taking kinds default to bias 0.
    """
    spec = _activation(kind)
    z = np.asarray(z, dtype=np.complex128)
    if spec.takes_bias:
        b = np.asarray(0.0 if params is None else params, dtype=np.float64)
        fn = {"act_modrelu": _modrelu_value, "act_cardioid": _cardioid_value}[spec.primitive]
        return fn(z, b)
    if params is not None:
        raise DomainError(f"activation {kind!r} takes no parameters")
    if spec.primitive == "act_igaussian":
        return _igaussian_value(z, width=width)
    fn = {
        "act_sep_sigmoid": _sep_sigmoid_value,
        "act_zrelu": _zrelu_value,
        "act_crelu": _crelu_value,
        "act_siglog": _siglog_value,
    }[spec.primitive]
    return fn(z)


def _activation(kind: str) -> ActivationKind:
    try:
        return ACTIVATIONS[kind]
    except KeyError:
        raise DomainError(f"unknown activation {kind!r}") from None


# --------------------------------------------------------------------------
# Heads and losses (plain evaluation surface)
# --------------------------------------------------------------------------

PROB_CLAMP = 1e-12


def magnitude_sigmoid_head(logit: complex, centering: float = 0.0) -> float:
    """sigmoid(|z| - c). Without the learnable centering c the output is
    confined to (1/2, 1) because |z| >= 0, which makes class 0 unreachable."""
    return float(expit(abs(complex(logit)) - centering))


def softmax_magnitude_head(logits) -> np.ndarray:
    """Softmax over entry magnitudes; sums to 1."""
    s = np.abs(np.asarray(logits, dtype=np.complex128))
    if s.ndim != 1 or s.size < 2:
        raise DomainError("softmax head needs a vector of length >= 2")
    e = np.exp(s - np.max(s))
    return e / e.sum()


def cross_entropy(probabilities, label: int) -> float:
    p = np.asarray(probabilities, dtype=np.float64)
    if not (0 <= label < p.size):
        raise DomainError(f"label {label} out of range for {p.size} classes")
    return float(-np.log(np.clip(p[label], PROB_CLAMP, 1.0 - PROB_CLAMP)))


def bce(probability: float, label: int) -> float:
    if label not in (0, 1):
        raise DomainError(f"binary label must be 0 or 1, got {label}")
    p = float(np.clip(probability, PROB_CLAMP, 1.0 - PROB_CLAMP))
    return float(-(label * math.log(p) + (1 - label) * math.log(1.0 - p)))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _bce_magnitude_value(z, c, *, label):
    s = np.abs(z) - c
    return (label * _softplus(-s) + (1 - label) * _softplus(s)).reshape(())


def _bce_magnitude_partials(z, c, *, label):
    r = np.abs(z)
    p = expit(r - c)
    coeff = p - label
    safe_r = np.where(r > 0, r, 1.0)
    dzbar = np.where(r > 0, coeff * z / (2.0 * safe_r), 0.0 + 0.0j)
    return (("dzbar", dzbar), ("dreal", -coeff))


register_primitive(Primitive(
    "bce_magnitude", (COMPLEX, REAL), REAL, holomorphic=False,
    value=_bce_magnitude_value, partials=_bce_magnitude_partials,
))


def _xent_magnitude_value(z, *, label):
    s = np.abs(z)
    m = np.max(s)
    return (m + np.log(np.sum(np.exp(s - m))) - s[label]).reshape(())


def _xent_magnitude_partials(z, *, label):
    s = np.abs(z)
    e = np.exp(s - np.max(s))
    p = e / e.sum()
    coeff = p.copy()
    coeff[label] -= 1.0
    r = s
    safe_r = np.where(r > 0, r, 1.0)
    dzbar = np.where(r > 0, coeff * z / (2.0 * safe_r), 0.0 + 0.0j)
    return (("dzbar", dzbar),)


register_primitive(Primitive(
    "xent_magnitude", (COMPLEX,), REAL, holomorphic=False,
    value=_xent_magnitude_value, partials=_xent_magnitude_partials,
))


# --------------------------------------------------------------------------
# Layers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # [in, out]
    bias: np.ndarray     # [out]


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    w = np.asarray(layer.weights)
    if x.ndim != 1 or w.ndim != 2 or x.shape[0] != w.shape[0]:
        raise DomainError(f"dense: cannot apply {w.shape} weights to input {x.shape}")
    return x @ w + np.asarray(layer.bias)


@dataclass(frozen=True)
class Conv2dLayer:
    kernels: np.ndarray  # [out_ch, in_ch, kh, kw]
    bias: np.ndarray     # [out_ch]
    stride: int = 1


def _unfold_indices(cin, h, w, kh, kw, stride):
    """Flat input indices of every (kh x kw x cin) patch, [n_patches, cin*kh*kw]."""
    hp = (h - kh) // stride + 1
    wp = (w - kw) // stride + 1
    if hp < 1 or wp < 1:
        raise DomainError(f"kernel {kh}x{kw} does not fit input {h}x{w}")
    base = np.arange(cin)[:, None, None] * (h * w) \
        + np.arange(kh)[None, :, None] * w \
        + np.arange(kw)[None, None, :]
    base = base.reshape(-1)
    offsets = (np.arange(hp)[:, None] * stride * w + np.arange(wp)[None, :] * stride).reshape(-1)
    return offsets[:, None] + base[None, :], hp, wp


def conv2d_forward(layer: Conv2dLayer, x: np.ndarray) -> np.ndarray:
    """Valid cross-correlation with complex multiply-accumulate."""
    x = np.asarray(x, dtype=np.complex128)
    k = np.asarray(layer.kernels)
    if x.ndim != 3 or k.ndim != 4 or x.shape[0] != k.shape[1]:
        raise DomainError(f"conv2d: kernels {k.shape} incompatible with input {x.shape}")
    cout, cin, kh, kw = k.shape
    idx, hp, wp = _unfold_indices(cin, x.shape[1], x.shape[2], kh, kw, layer.stride)
    patches = x.ravel()[idx]                        # [P, cin*kh*kw]
    kmat = k.reshape(cout, -1).T                    # [cin*kh*kw, cout]
    out = patches @ kmat + np.asarray(layer.bias)[None, :]
    return out.T.reshape(cout, hp, wp)


def maxpool2_by_magnitude(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling selecting the entry of largest magnitude per window."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 3 or x.shape[1] < 2 or x.shape[2] < 2:
        raise DomainError(f"maxpool2 needs [c, h>=2, w>=2], got {x.shape}")
    idx = _pool_indices(x)
    return x.ravel()[idx]


def _pool_indices(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    trimmed = np.abs(x[:, : 2 * h2, : 2 * w2]).reshape(c, h2, 2, w2, 2).transpose(0, 1, 3, 2, 4)
    flat_windows = trimmed.reshape(c, h2, w2, 4)
    winner = np.argmax(flat_windows, axis=-1)
    ci, hi, wi = np.meshgrid(np.arange(c), np.arange(h2), np.arange(w2), indexing="ij")
    row = 2 * hi + winner // 2
    col = 2 * wi + winner % 2
    return ci * (h * w) + row * w + col


# --------------------------------------------------------------------------
# Architectures
# --------------------------------------------------------------------------

HEADS = ("softmax_magnitude", "magnitude_sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    kind: str                      # "dense" | "conv2d" | "maxpool2"
    units: int = 0                 # dense
    out_channels: int = 0          # conv2d
    kernel: int = 0                # conv2d
    stride: int = 1                # conv2d
    activation: str | None = None


@dataclass(frozen=True)
class Architecture:
    input_shape: tuple[int, ...]   # (d,) or (c, h, w)
    layers: tuple[LayerSpec, ...]
    head: str
    igaussian_width: float = DEFAULT_IGAUSSIAN_WIDTH

    def __post_init__(self):
        if self.head not in HEADS:
            raise DomainError(f"unknown head {self.head!r}")
        for spec in self.layers:
            if spec.activation is not None:
                _activation(spec.activation)
        out = self.feature_shapes()[-1]
        if self.head == "magnitude_sigmoid" and out != (1,):
            raise DomainError("magnitude_sigmoid head requires a single output unit")
        if self.head == "softmax_magnitude" and (len(out) != 1 or out[0] < 2):
            raise DomainError("softmax_magnitude head requires >= 2 output units")

    def feature_shapes(self) -> list[tuple[int, ...]]:
        shapes = [self.input_shape]
        cur = self.input_shape
        for spec in self.layers:
            if spec.kind == "dense":
                if len(cur) != 1:
                    raise DomainError("dense layer requires a flat (rank-1) input")
                cur = (spec.units,)
            elif spec.kind == "conv2d":
                if len(cur) != 3:
                    raise DomainError("conv2d layer requires a [c, h, w] input")
                c, h, w = cur
                hp = (h - spec.kernel) // spec.stride + 1
                wp = (w - spec.kernel) // spec.stride + 1
                if hp < 1 or wp < 1:
                    raise DomainError("conv kernel does not fit its input")
                cur = (spec.out_channels, hp, wp)
            elif spec.kind == "flatten":
                cur = (math.prod(cur),)
            elif spec.kind == "maxpool2":
                if len(cur) != 3:
                    raise DomainError("maxpool2 requires a [c, h, w] input")
                c, h, w = cur
                cur = (c, h // 2, w // 2)
            else:
                raise DomainError(f"unknown layer kind {spec.kind!r}")
            shapes.append(cur)
        return shapes

    @property
    def classes(self) -> int:
        out = self.feature_shapes()[-1]
        return 2 if self.head == "magnitude_sigmoid" else out[0]


def init_params(arch: Architecture, rng: Rng) -> dict[str, np.ndarray]:
    """Circular Gaussian weights with E|w|^2 = 1/fan_in; all biases zero."""
    params: dict[str, np.ndarray] = {}
    shapes = arch.feature_shapes()
    for i, spec in enumerate(arch.layers):
        prefix = f"layer{i}"
        if spec.kind == "dense":
            fan_in = shapes[i][0]
            params[f"{prefix}.weights"] = np.asarray(
                sample_circular_gaussian((fan_in, spec.units), 1.0 / fan_in, rng))
            params[f"{prefix}.bias"] = np.zeros(spec.units, dtype=np.complex128)
            feat = spec.units
        elif spec.kind == "conv2d":
            cin = shapes[i][0]
            fan_in = cin * spec.kernel * spec.kernel
            params[f"{prefix}.kernels"] = np.asarray(sample_circular_gaussian(
                (spec.out_channels, cin, spec.kernel, spec.kernel), 1.0 / fan_in, rng))
            params[f"{prefix}.bias"] = np.zeros(spec.out_channels, dtype=np.complex128)
            feat = spec.out_channels
        else:
            continue
        if spec.activation is not None:
            act = _activation(spec.activation)
            if act.trainable == "single":
                params[f"{prefix}.act_bias"] = np.zeros((), dtype=np.float64)
            elif act.trainable == "per_feature":
                params[f"{prefix}.act_bias"] = np.zeros(feat, dtype=np.float64)
    if arch.head == "magnitude_sigmoid":
        params["head.centering"] = np.zeros((), dtype=np.float64)
    return params


def _apply_activation_var(spec: LayerSpec, arch: Architecture, out: Var,
                          params: dict[str, Var], prefix: str) -> Var:
    act = _activation(spec.activation)
    tape = out.tape
    attrs = {"width": arch.igaussian_width} if act.primitive == "act_igaussian" else {}
    if act.takes_bias:
        if act.trainable is None:
            bias = tape.constant(np.zeros((), dtype=np.float64))
        else:
            bias = params[f"{prefix}.act_bias"]
        return tape.apply(act.primitive, out, bias, **attrs)
    return tape.apply(act.primitive, out, **attrs)


def _features_var(arch: Architecture, params: dict[str, Var], x: Var) -> Var:
    shapes = arch.feature_shapes()
    cur = x
    for i, spec in enumerate(arch.layers):
        prefix = f"layer{i}"
        tape = cur.tape
        if spec.kind == "dense":
            cur = cur @ params[f"{prefix}.weights"] + params[f"{prefix}.bias"]
        elif spec.kind == "conv2d":
            cin, h, w = shapes[i]
            idx, hp, wp = _unfold_indices(cin, h, w, spec.kernel, spec.kernel, spec.stride)
            patches = tape.apply("gather", cur, indices=idx)
            kmat = tape.apply(
                "transpose2d",
                params[f"{prefix}.kernels"].reshape((spec.out_channels, cin * spec.kernel**2)))
            out = tape.apply("row_bias", patches @ kmat, params[f"{prefix}.bias"])
            cur = tape.apply("transpose2d", out).reshape((spec.out_channels, hp, wp))
        elif spec.kind == "flatten":
            cur = cur.reshape((math.prod(shapes[i]),))
        elif spec.kind == "maxpool2":
            idx = _pool_indices(cur.value)
            cur = cur.tape.apply("gather", cur, indices=idx)
        if spec.activation is not None:
            cur = _apply_activation_var(spec, arch, cur, params, prefix)
    return cur


def loss_fn(arch: Architecture):
    """Per-sample tape loss: model(params, x, label) -> scalar real Var."""

    def model(params: dict[str, Var], x: Var, label: int) -> Var:
        logits = _features_var(arch, params, x)
        tape = logits.tape
        if arch.head == "magnitude_sigmoid":
            return tape.apply("bce_magnitude", logits, params["head.centering"], label=int(label))
        return tape.apply("xent_magnitude", logits, label=int(label))

    return model


def forward_features(arch: Architecture, params: dict[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    """Plain numpy forward pass to the head logits (no tape)."""
    shapes = arch.feature_shapes()
    cur = np.asarray(x, dtype=np.complex128)
    for i, spec in enumerate(arch.layers):
        prefix = f"layer{i}"
        if spec.kind == "dense":
            cur = dense_forward(
                DenseLayer(params[f"{prefix}.weights"], params[f"{prefix}.bias"]), cur)
        elif spec.kind == "conv2d":
            cur = conv2d_forward(
                Conv2dLayer(params[f"{prefix}.kernels"], params[f"{prefix}.bias"], spec.stride), cur)
        elif spec.kind == "flatten":
            cur = cur.reshape(-1)
        elif spec.kind == "maxpool2":
            cur = maxpool2_by_magnitude(cur)
        if spec.activation is not None:
            act = _activation(spec.activation)
            bias = params.get(f"{prefix}.act_bias") if act.trainable else (
                np.zeros((), dtype=np.float64) if act.takes_bias else None)
            cur = apply_activation_raw(act, cur, bias, arch.igaussian_width)
    return cur


def apply_activation_raw(act: ActivationKind, z, bias, width):
    if act.primitive == "act_igaussian":
        return _igaussian_value(np.asarray(z, dtype=np.complex128), width=width)
    fn = {
        "act_sep_sigmoid": _sep_sigmoid_value,
        "act_zrelu": _zrelu_value,
        "act_crelu": _crelu_value,
        "act_siglog": _siglog_value,
        "act_modrelu": _modrelu_value,
        "act_cardioid": _cardioid_value,
    }[act.primitive]
    if act.takes_bias:
        return fn(np.asarray(z, dtype=np.complex128), np.asarray(bias, dtype=np.float64))
    return fn(np.asarray(z, dtype=np.complex128))


def predict_scores(arch: Architecture, params: dict[str, np.ndarray], x: np.ndarray):
    """Class scores for one sample: probability vector (softmax head) or the
    positive-class probability (sigmoid head)."""
    logits = forward_features(arch, params, x)
    if arch.head == "magnitude_sigmoid":
        return magnitude_sigmoid_head(complex(logits.reshape(())),
                                      centering=float(params["head.centering"]))
    return softmax_magnitude_head(logits)


def tape_kink_margin(tape) -> float:
    """Distance of the recorded computation to the nearest activation or
    head kink (finite-difference checks resample when this is small).

    Radial and phase-scaled activations count the origin as a kink because
    |z| is not smooth there even when the activation itself stays C^1.
    """
    margin = math.inf
    for node in tape.nodes:
        if not node.inputs:
            continue
        z = tape.nodes[node.inputs[0]].value
        if node.op in ("act_zrelu", "act_crelu"):
            margin = min(margin, float(np.min(np.abs(z.real))),
                         float(np.min(np.abs(z.imag))))
        elif node.op == "act_modrelu":
            b = tape.nodes[node.inputs[1]].value
            r = np.abs(z)
            margin = min(margin, float(np.min(np.abs(r + b))), float(np.min(r)))
        elif node.op in ("act_cardioid", "act_igaussian", "act_siglog",
                         "magnitude", "phase", "bce_magnitude", "xent_magnitude"):
            margin = min(margin, float(np.min(np.abs(z))))
    return margin
