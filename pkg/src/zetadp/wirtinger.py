"""Reverse-mode automatic differentiation over CR (Wirtinger) calculus.

A real-valued loss of complex parameters is recorded on a tape of primitive
applications; backward propagates the conjugate adjoint

    a(z) = dL / d conj(z)

For an elementwise primitive w = f(z) the tape stores the Wirtinger pair
(dw/dz, dw/dzbar) evaluated at the primal point, and backward applies

    a(z) += conj(a(w)) * dw/dzbar + a(w) * conj(dw/dz)

which for holomorphic primitives (dw/dzbar = 0) reduces to the familiar
a(z) = a(w) * conj(f'(z)). Real-valued intermediate nodes carry the plain
real derivative dL/dt and feed complex inputs through a(z) += a(t) * dt/dzbar.
Real-valued leaf parameters (e.g. trainable activation biases) receive the
plain real gradient dL/dt.

The gradient of a complex parameter is dL/d(conj theta) itself; no factor-2
rescaling is applied. The canonical pin: for L(z) = z * conj(z) the adjoint
is exactly z, of norm |z|, while flattening the same function to R^2 yields
a gradient of norm 2|z|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, GraphError

COMPLEX = "complex"
REAL = "real"

ROOT_IMAG_TOL = 1e-9


# --------------------------------------------------------------------------
# Primitive registry
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Primitive:
    """A registered differentiable operation.

    `value` computes the primal output from input arrays (plus attrs).
    For pointwise primitives `partials` returns one descriptor per input:
        ("pair", dwdz, dwdzbar)   complex output w.r.t. a complex input
        ("dzbar", dtdzbar)        real output w.r.t. a complex input
                                  (dt/dz is the conjugate, implied)
        ("dreal", dwdt)           any output w.r.t. a real input
    Structural primitives (matmul, reshape, ...) set `partials=None` and
    provide `backward{i}` handling via the dispatch table below.
    """

    name: str
    in_kinds: tuple[str, ...]
    out_kind: str
    holomorphic: bool
    value: Callable
    partials: Callable | None = None


_REGISTRY: dict[str, Primitive] = {}


def register_primitive(prim: Primitive) -> Primitive:
    if prim.name in _REGISTRY:
        raise GraphError(f"primitive {prim.name!r} already registered")
    _REGISTRY[prim.name] = prim
    return prim


def get_primitive(name: str) -> Primitive:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise GraphError(f"unregistered primitive {name!r} on tape") from None


def registered_primitives() -> dict[str, Primitive]:
    return dict(_REGISTRY)


# --------------------------------------------------------------------------
# Tape and variables
# --------------------------------------------------------------------------

@dataclass
class Node:
    op: str                      # primitive name, or "leaf" / "const"
    inputs: tuple[int, ...]
    value: np.ndarray
    kind: str                    # COMPLEX or REAL
    partials: tuple | None = None
    attrs: dict = field(default_factory=dict)
    param: str | None = None     # leaf parameter name


class Tape:
    """Ordered record of one forward computation (inputs precede users)."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.root: int | None = None
        self.param_nodes: dict[str, int] = {}

    def _push(self, node: Node) -> "Var":
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value: np.ndarray, name: str) -> "Var":
        kind = COMPLEX if np.iscomplexobj(value) else REAL
        dtype = np.complex128 if kind == COMPLEX else np.float64
        v = self._push(Node("leaf", (), np.asarray(value, dtype=dtype), kind, param=name))
        self.param_nodes[name] = v.idx
        return v

    def constant(self, value: np.ndarray) -> "Var":
        kind = COMPLEX if np.iscomplexobj(value) else REAL
        dtype = np.complex128 if kind == COMPLEX else np.float64
        return self._push(Node("const", (), np.asarray(value, dtype=dtype), kind))

    def apply(self, name: str, *args: "Var", **attrs) -> "Var":
        prim = get_primitive(name)
        if len(args) != len(prim.in_kinds):
            raise GraphError(f"{name} expects {len(prim.in_kinds)} inputs, got {len(args)}")
        for v, want in zip(args, prim.in_kinds):
            if v.kind != want:
                raise GraphError(f"{name}: expected {want} input, got {v.kind}")
        values = [v.value for v in args]
        out = prim.value(*values, **attrs)
        partials = prim.partials(*values, **attrs) if prim.partials is not None else None
        return self._push(
            Node(name, tuple(v.idx for v in args), np.asarray(out), prim.out_kind,
                 partials=partials, attrs=attrs)
        )

    def finalize(self, out: "Var") -> float:
        """Validate the root: a scalar whose value is (numerically) real."""
        val = out.value
        if val.size != 1:
            raise GraphError(f"loss must be scalar, got shape {val.shape}")
        scalar = complex(val.reshape(()))
        if abs(scalar.imag) > ROOT_IMAG_TOL * (1.0 + abs(scalar.real)):
            raise GraphError(f"loss must be real-valued, got {scalar}")
        self.root = out.idx
        return scalar.real


@dataclass(frozen=True)
class Var:
    """Handle to a tape node. Supports complex arithmetic operators."""

    tape: Tape
    idx: int

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.idx].value

    @property
    def kind(self) -> str:
        return self.tape.nodes[self.idx].kind

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return self.tape.apply("add", self, other)

    def __sub__(self, other):
        return self.tape.apply("sub", self, other)

    def __neg__(self):
        return self.tape.apply("neg", self)

    def __mul__(self, other):
        if isinstance(other, Var):
            return self.tape.apply("mul", self, other)
        return self.tape.apply("scale", self, factor=complex(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return self.tape.apply("matmul", self, other)

    def conj(self):
        return self.tape.apply("conj", self)

    def magnitude(self):
        return self.tape.apply("magnitude", self)

    def reshape(self, shape):
        return self.tape.apply("reshape", self, shape=tuple(shape))

    def sum(self):
        return self.tape.apply("sumall", self)


# --------------------------------------------------------------------------
# Forward / backward
# --------------------------------------------------------------------------

def forward(model_fn, params: dict[str, np.ndarray], *inputs) -> tuple[float, Tape]:
    """Record model_fn(params, *inputs) on a fresh tape.

    `model_fn` receives a dict of parameter Vars plus one constant Var per
    input array and must return a scalar Var with a real value (imaginary
    magnitude at most 1e-9 * (1 + |re|)). The tape is rebuilt on every call;
    no graph state is reused.
    """
    tape = Tape()
    pvars = {k: tape.leaf(v, k) for k, v in params.items()}
    ivars = [tape.constant(np.asarray(x)) for x in inputs]
    out = model_fn(pvars, *ivars)
    loss = tape.finalize(out)
    return loss, tape


@dataclass
class ConjugateGradient:
    """Per-parameter adjoints dL/d(conj theta).

    Complex parameters carry complex128 arrays; real parameters carry their
    plain real derivative as float64 arrays. The L2 norm treats the whole
    collection as one real vector (a complex entry contributes |g|^2, i.e.
    re^2 + im^2).
    """

    grads: dict[str, np.ndarray]

    def norm(self) -> float:
        total = 0.0
        for g in self.grads.values():
            total += float(np.sum(np.abs(g) ** 2))
        return math.sqrt(total)

    def scaled(self, s: float) -> "ConjugateGradient":
        return ConjugateGradient({k: g * s for k, g in self.grads.items()})

    def plus(self, other: "ConjugateGradient") -> "ConjugateGradient":
        if self.grads.keys() != other.grads.keys():
            raise DomainError("gradient key sets differ")
        return ConjugateGradient({k: g + other.grads[k] for k, g in self.grads.items()})

    @staticmethod
    def zeros_like(params: dict[str, np.ndarray]) -> "ConjugateGradient":
        return ConjugateGradient({k: np.zeros_like(np.asarray(v)) for k, v in params.items()})


def _reduce_to(arr: np.ndarray, shape) -> np.ndarray:
    """Sum-reduce broadcast contributions back to an input's shape."""
    if arr.shape == tuple(shape):
        return arr
    if math.prod(shape) == 1:
        return np.sum(arr).reshape(shape)
    raise GraphError(f"cannot reduce adjoint of shape {arr.shape} to {shape}")


def backward(tape: Tape) -> ConjugateGradient:
    """Propagate conjugate adjoints from the root to every leaf parameter."""
    if tape.root is None:
        raise GraphError("tape has no finalized root")
    nodes = tape.nodes
    adjoint: list[np.ndarray | None] = [None] * len(nodes)
    root = nodes[tape.root]
    # Complex root: with l := Re(root), the seed is dl/d(conj root) = 1/2.
    # Real root: plain real chain rule, seed 1.
    if root.kind == COMPLEX:
        adjoint[tape.root] = np.full(root.value.shape, 0.5 + 0.0j, dtype=np.complex128)
    else:
        adjoint[tape.root] = np.ones(root.value.shape, dtype=np.float64)

    def accumulate(idx: int, contribution: np.ndarray):
        node = nodes[idx]
        contribution = _reduce_to(np.asarray(contribution), node.value.shape)
        if node.kind == REAL:
            contribution = np.real(contribution)
        if adjoint[idx] is None:
            dtype = np.complex128 if node.kind == COMPLEX else np.float64
            adjoint[idx] = np.zeros(node.value.shape, dtype=dtype)
        adjoint[idx] = adjoint[idx] + contribution

    for idx in range(len(nodes) - 1, -1, -1):
        a_out = adjoint[idx]
        if a_out is None:
            continue
        node = nodes[idx]
        if node.op in ("leaf", "const"):
            continue
        if node.partials is not None:
            _backward_pointwise(node, a_out, accumulate)
        else:
            _backward_structural(node, a_out, nodes, accumulate)

    grads = {}
    for name, idx in tape.param_nodes.items():
        a = adjoint[idx]
        if a is None:
            node = nodes[idx]
            dtype = np.complex128 if node.kind == COMPLEX else np.float64
            a = np.zeros(node.value.shape, dtype=dtype)
        grads[name] = a
    return ConjugateGradient(grads)


def _backward_pointwise(node: Node, a_out: np.ndarray, accumulate):
    out_real = node.kind == REAL
    for in_idx, desc in zip(node.inputs, node.partials):
        tag = desc[0]
        if tag == "pair":
            _, dwdz, dwdzbar = desc
            accumulate(in_idx, np.conj(a_out) * dwdzbar + a_out * np.conj(dwdz))
        elif tag == "dzbar":
            if not out_real:
                raise GraphError(f"{node.op}: 'dzbar' descriptor requires a real output")
            _, dtdzbar = desc
            accumulate(in_idx, a_out * dtdzbar)
        elif tag == "dreal":
            _, dwdt = desc
            if out_real:
                accumulate(in_idx, a_out * dwdt)
            else:
                accumulate(in_idx, 2.0 * np.real(a_out * np.conj(dwdt)))
        else:
            raise GraphError(f"{node.op}: unknown partial descriptor {tag!r}")


def _backward_structural(node: Node, a_out: np.ndarray, nodes: list[Node], accumulate):
    op = node.op
    if op == "matmul":
        x = nodes[node.inputs[0]].value
        y = nodes[node.inputs[1]].value
        if x.ndim == 1 and y.ndim == 2:       # [n] @ [n,m] -> [m]
            accumulate(node.inputs[0], a_out @ np.conj(y).T)
            accumulate(node.inputs[1], np.outer(np.conj(x), a_out))
        elif x.ndim == 2 and y.ndim == 2:     # [n,m] @ [m,k] -> [n,k]
            accumulate(node.inputs[0], a_out @ np.conj(y).T)
            accumulate(node.inputs[1], np.conj(x).T @ a_out)
        elif x.ndim == 2 and y.ndim == 1:     # [n,m] @ [m] -> [n]
            accumulate(node.inputs[0], np.outer(a_out, np.conj(y)))
            accumulate(node.inputs[1], np.conj(x).T @ a_out)
        else:
            raise GraphError(f"matmul backward unsupported for ranks {x.ndim}, {y.ndim}")
    elif op == "conj":
        accumulate(node.inputs[0], np.conj(a_out))
    elif op == "reshape":
        in_shape = nodes[node.inputs[0]].value.shape
        accumulate(node.inputs[0], a_out.reshape(in_shape))
    elif op == "sumall":
        in_shape = nodes[node.inputs[0]].value.shape
        accumulate(node.inputs[0], np.broadcast_to(a_out.reshape(()), in_shape))
    elif op == "row_bias":
        accumulate(node.inputs[0], a_out)
        accumulate(node.inputs[1], a_out.sum(axis=0))
    elif op == "transpose2d":
        accumulate(node.inputs[0], a_out.T)
    elif op == "gather":
        in_shape = nodes[node.inputs[0]].value.shape
        idx = node.attrs["indices"]
        scattered = np.zeros(math.prod(in_shape), dtype=a_out.dtype)
        np.add.at(scattered, idx.ravel(), a_out.ravel())
        accumulate(node.inputs[0], scattered.reshape(in_shape))
    else:
        raise GraphError(f"no backward rule for structural primitive {op!r}")


# --------------------------------------------------------------------------
# Core primitives
# --------------------------------------------------------------------------

def _ones_pair(*_args, **_attrs):
    return (("pair", 1.0, 0.0),)


register_primitive(Primitive(
    "add", (COMPLEX, COMPLEX), COMPLEX, holomorphic=True,
    value=lambda a, b: a + b,
    partials=lambda a, b: (("pair", 1.0, 0.0), ("pair", 1.0, 0.0)),
))

register_primitive(Primitive(
    "sub", (COMPLEX, COMPLEX), COMPLEX, holomorphic=True,
    value=lambda a, b: a - b,
    partials=lambda a, b: (("pair", 1.0, 0.0), ("pair", -1.0, 0.0)),
))

register_primitive(Primitive(
    "neg", (COMPLEX,), COMPLEX, holomorphic=True,
    value=lambda a: -a,
    partials=lambda a: (("pair", -1.0, 0.0),),
))

register_primitive(Primitive(
    "scale", (COMPLEX,), COMPLEX, holomorphic=True,
    value=lambda a, *, factor: a * factor,
    partials=lambda a, *, factor: (("pair", factor, 0.0),),
))

register_primitive(Primitive(
    "mul", (COMPLEX, COMPLEX), COMPLEX, holomorphic=True,
    value=lambda a, b: a * b,
    partials=lambda a, b: (("pair", b, 0.0), ("pair", a, 0.0)),
))

register_primitive(Primitive(
    "square", (COMPLEX,), COMPLEX, holomorphic=True,
    value=lambda a: a * a,
    partials=lambda a: (("pair", 2.0 * a, 0.0),),
))

register_primitive(Primitive(
    "conj", (COMPLEX,), COMPLEX, holomorphic=False,
    value=lambda a: np.conj(a),
    partials=None,  # structural: a(z) += conj(a(w)); pair form is (0, 1)
))


def _magnitude_partials(z):
    r = np.abs(z)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(r > 0, z / (2.0 * np.where(r > 0, r, 1.0)), 0.0)
    return (("dzbar", d),)


register_primitive(Primitive(
    "magnitude", (COMPLEX,), REAL, holomorphic=False,
    value=lambda a: np.abs(a),
    partials=_magnitude_partials,
))


def _phase_value(z):
    return np.where(z == 0, 0.0, np.angle(z))


def _phase_partials(z):
    r2 = np.abs(z) ** 2
    d = np.where(r2 > 0, 1j * z / (2.0 * np.where(r2 > 0, r2, 1.0)), 0.0)
    return (("dzbar", d),)


register_primitive(Primitive(
    "phase", (COMPLEX,), REAL, holomorphic=False,
    value=_phase_value,
    partials=_phase_partials,
))

register_primitive(Primitive(
    "matmul", (COMPLEX, COMPLEX), COMPLEX, holomorphic=True,
    value=lambda a, b: np.tensordot(a, b, axes=1),
    partials=None,
))

register_primitive(Primitive(
    "reshape", (COMPLEX,), COMPLEX, holomorphic=True,
    value=lambda a, *, shape: a.reshape(shape),
    partials=None,
))

register_primitive(Primitive(
    "sumall", (COMPLEX,), COMPLEX, holomorphic=True,
    value=lambda a: np.sum(a).reshape(()),
    partials=None,
))

register_primitive(Primitive(
    "row_bias", (COMPLEX, COMPLEX), COMPLEX, holomorphic=True,
    value=lambda m, b: m + b[None, :],
    partials=None,
))

register_primitive(Primitive(
    "transpose2d", (COMPLEX,), COMPLEX, holomorphic=True,
    value=lambda a: a.T,
    partials=None,
))

register_primitive(Primitive(
    "gather", (COMPLEX,), COMPLEX, holomorphic=True,
    value=lambda a, *, indices: a.ravel()[indices],
    partials=None,
))


# --------------------------------------------------------------------------
# Verification utilities
# --------------------------------------------------------------------------

FD_STEP = 1e-5


def _rel_err(a, b) -> float:
    return float(abs(a - b) / (1e-8 + abs(a) + abs(b)))


def gradcheck(model_fn, params: dict[str, np.ndarray], *inputs,
              step: float = FD_STEP, dead_band: float = 0.0) -> float:
    """Worst relative error between backward adjoints and central differences.

    For a complex coordinate the reference is 0.5 * (D_x + i D_y) where D_x
    and D_y are central differences along the real and imaginary axes; for a
    real coordinate it is the plain central difference. NaN anywhere is
    reported as +inf.

    A coordinate where both the adjoint and the difference quotient fall
    below `dead_band` is counted as agreeing: central differences of an O(1)
    loss resolve nothing below ~1e-11, so comparing two numerical zeros
    through the relative metric only measures rounding noise. The default
    band of 0 applies the bare metric everywhere.
    """
    _, tape = forward(model_fn, params, *inputs)
    grad = backward(tape).grads

    def loss_at(modified: dict[str, np.ndarray]) -> float:
        return forward(model_fn, modified, *inputs)[0]

    worst = 0.0
    for name, p in params.items():
        p = np.asarray(p)
        for index in np.ndindex(p.shape if p.shape else (1,)):
            if not p.shape:
                index = ()

            def perturbed(delta):
                q = p.astype(p.dtype).copy()
                q[index] = q[index] + delta
                out = dict(params)
                out[name] = q
                return out

            if np.iscomplexobj(p):
                dx = (loss_at(perturbed(step)) - loss_at(perturbed(-step))) / (2 * step)
                dy = (loss_at(perturbed(1j * step)) - loss_at(perturbed(-1j * step))) / (2 * step)
                fd = 0.5 * (dx + 1j * dy)
            else:
                fd = (loss_at(perturbed(step)) - loss_at(perturbed(-step))) / (2 * step)
            got = grad[name][index] if p.shape else grad[name].reshape(())[()]
            if not (np.isfinite(fd) and np.all(np.isfinite(np.asarray(got)))):
                return math.inf
            if abs(got) <= dead_band and abs(fd) <= dead_band:
                continue
            worst = max(worst, _rel_err(got, fd))
    return worst


def holomorphy_residual(primitive_name: str, points: np.ndarray, **attrs) -> float:
    """Max |dw/dzbar| of a registered primitive over the sample points.

    Structural primitives that are linear with real coefficients (matmul,
    reshape, sums, gathers) have an identically zero conjugate partial and
    return exactly 0. `conj` is the one structural non-holomorphic primitive;
    its conjugate partial is identically 1.
    """
    prim = get_primitive(primitive_name)
    points = np.asarray(points, dtype=np.complex128)
    if prim.partials is None:
        return 0.0 if prim.holomorphic else (1.0 if prim.name == "conj" else math.nan)
    worst = 0.0
    n_complex = sum(1 for k in prim.in_kinds if k == COMPLEX)
    if n_complex != 1:
        # Two-input pointwise primitives (add, sub, mul): evaluate with both
        # inputs at the sample points.
        args = [points for k in prim.in_kinds]
    else:
        args = [points]
    for desc in prim.partials(*args, **attrs):
        if desc[0] == "pair":
            worst = max(worst, float(np.max(np.abs(np.broadcast_to(desc[2], points.shape)))))
        elif desc[0] == "dzbar":
            worst = max(worst, float(np.max(np.abs(np.broadcast_to(desc[1], points.shape)))))
    return worst


def partials_at(primitive_name: str, z: complex, **attrs) -> tuple[complex, complex]:
    """(dw/dz, dw/dzbar) of a single-complex-input pointwise primitive at z."""
    prim = get_primitive(primitive_name)
    if prim.partials is None:
        raise GraphError(f"{primitive_name} has no pointwise partials")
    pts = np.asarray([z], dtype=np.complex128)
    desc = prim.partials(pts, **attrs)[0]
    if desc[0] == "pair":
        dwdz = np.broadcast_to(desc[1], pts.shape)[0]
        dwdzbar = np.broadcast_to(desc[2], pts.shape)[0]
        return complex(dwdz), complex(dwdzbar)
    if desc[0] == "dzbar":
        d = np.broadcast_to(desc[1], pts.shape)[0]
        return complex(np.conj(d)), complex(d)
    raise GraphError(f"{primitive_name} first input is not complex")


def r2_flat_gradient_square_magnitude(z: complex) -> np.ndarray:
    """Gradient of f(x, y) = x^2 + y^2, the R^2 flattening of z * conj(z).

    Returns (2x, 2y), whose norm is 2|z|: flattening complex numbers into
    real pairs doubles the gradient norm of the squared magnitude and would
    force a doubled noise scale if clipped naively.
    """
    return np.array([2.0 * z.real, 2.0 * z.imag])
