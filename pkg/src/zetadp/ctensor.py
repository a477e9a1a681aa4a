"""Complex tensor core: immutable complex128 arrays, Hermitian norms,
circularly symmetric Gaussian sampling and a naive truncated DFT.

A CTensor is a C-contiguous, read-only numpy array of dtype complex128.
In memory that is exactly a row-major sequence of (re, im) float64 pairs,
which is also the on-disk layout used by the ZDPC format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

CTensor = np.ndarray


def _seal(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def ctensor(data, shape=None) -> CTensor:
    """Build an immutable complex128 tensor, validating shape and finiteness."""
    a = np.asarray(data, dtype=np.complex128)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise DomainError(f"all dimensions must be >= 1, got {shape}")
        if a.size != math.prod(shape):
            raise DomainError(
                f"data length {a.size} does not match shape {shape}"
            )
        a = a.reshape(shape)
    if not np.all(np.isfinite(a.view(np.float64))):
        raise DomainError("tensor components must be finite")
    return _seal(a)


class Rng:
    """Deterministic counter-based randomness.

    A generator is addressed by a (seed, stream) pair of unsigned 64-bit
    integers, forming the key of a Philox-4x64 counter-based bit generator.
    Equal (seed, stream) pairs yield identical sample sequences on every
    platform. Streams with distinct ids are statistically independent, so
    parallel work splits by disjoint stream ids rather than sharing state.
    """

    def __init__(self, seed: int, stream: int = 0):
        if not (0 <= seed < 2**64 and 0 <= stream < 2**64):
            raise DomainError("seed and stream must be unsigned 64-bit integers")
        self.seed = seed
        self.stream = stream
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([seed, stream], dtype=np.uint64))
        )

    def stream_at(self, stream: int) -> "Rng":
        """A fresh, independent generator for the same seed."""
        return Rng(self.seed, stream)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1)."""
        return self._gen.random(int(n))

    def normal(self, n: int) -> np.ndarray:
        """n standard normal doubles via the Box-Muller transform.

        Implemented on top of the uniform stream so the algorithm (and hence
        the exact bit sequence) is pinned by this package, not by the numpy
        version in use.
        """
        n = int(n)
        pairs = (n + 1) // 2
        u1 = 1.0 - self.uniform(pairs)  # (0, 1]: keeps log finite
        u2 = self.uniform(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        return out[:n]

    def integers(self, low: int, high: int, n: int) -> np.ndarray:
        return self._gen.integers(low, high, size=int(n))


def sample_circular_gaussian(shape, variance: float, rng: Rng) -> CTensor:
    """Circularly symmetric complex Gaussian noise with total variance
    `variance` per entry: each entry is A + Bi with A, B independent real
    normals of variance variance/2, entries mutually independent.

    One Box-Muller pair yields exactly one complex entry, so the sample is
    circular by construction: sqrt(variance/2) * sqrt(-2 ln u1) * e^(2 pi i u2).
    """
    if variance <= 0:
        raise DomainError(f"variance must be > 0, got {variance}")
    shape = (shape,) if isinstance(shape, int) else tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise DomainError(f"all dimensions must be >= 1, got {shape}")
    n = math.prod(shape)
    g = rng.normal(2 * n) * math.sqrt(variance / 2.0)
    z = g[:n] + 1j * g[n:]
    return _seal(z.reshape(shape))


def l2_norm(t: CTensor) -> float:
    """Hermitian L2 norm sqrt(sum z * conj(z)); real even for complex input."""
    return float(np.linalg.norm(np.asarray(t).ravel()))


def _require_same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise DomainError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def add(a: CTensor, b: CTensor) -> CTensor:
    _require_same_shape(a, b)
    return _seal(np.add(a, b))


def sub(a: CTensor, b: CTensor) -> CTensor:
    _require_same_shape(a, b)
    return _seal(np.subtract(a, b))


def scale(t: CTensor, c: complex) -> CTensor:
    return _seal(np.multiply(t, complex(c)))


def mul(a: CTensor, b: CTensor) -> CTensor:
    """Hadamard (elementwise) product."""
    _require_same_shape(a, b)
    return _seal(np.multiply(a, b))


def conj(t: CTensor) -> CTensor:
    return _seal(np.conj(t))


def matmul(a: CTensor, b: CTensor) -> CTensor:
    """Contract the last axis of `a` against the first axis of `b`."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DomainError(f"cannot contract shapes {a.shape} and {b.shape}")
    return _seal(np.tensordot(a, b, axes=1))


def magnitude(t: CTensor) -> np.ndarray:
    """|z| per entry (float64)."""
    return _seal(np.abs(np.asarray(t, dtype=np.complex128)))


def phase(t: CTensor) -> np.ndarray:
    """arg z per entry (float64), with phase(0) defined as 0."""
    t = np.asarray(t, dtype=np.complex128)
    out = np.where(t == 0, 0.0, np.angle(t))
    return _seal(out)


def reshape(t: CTensor, shape) -> CTensor:
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != np.asarray(t).size:
        raise DomainError(f"cannot reshape size {np.asarray(t).size} to {shape}")
    return _seal(np.reshape(t, shape))


def dft_1d(signal: CTensor, keep: int) -> CTensor:
    """First `keep` coefficients of the DFT X_k = sum_n x_n e^(-2 pi i k n / N).

    Naive O(N * keep) evaluation; intended for short (N <= a few thousand)
    feature vectors, not as an FFT replacement.
    """
    x = np.asarray(signal, dtype=np.complex128)
    if x.ndim != 1:
        raise DomainError(f"signal must be rank 1, got rank {x.ndim}")
    n = x.size
    keep = int(keep)
    if keep < 0 or keep > n:
        raise DomainError(f"keep must be in [0, {n}], got {keep}")
    idx = np.arange(n)
    out = np.empty(keep, dtype=np.complex128)
    for k in range(keep):
        out[k] = np.sum(x * np.exp(-2j * np.pi * k * idx / n))
    return _seal(out)


@dataclass(frozen=True)
class CircularityReport:
    """Moment audit of a circular complex sample against its nominal variance."""

    n: int
    variance: float
    var_re: float
    var_im: float
    cov: float
    pseudo_mean: complex       # mean of X^2; 0 for a circular distribution
    mean_sq_magnitude: float   # mean of |X|^2; equals `variance` when correct
    passed: bool
    failures: tuple[str, ...]


def circularity_report(samples: CTensor, variance: float, n_sigmas: float = 4.0) -> CircularityReport:
    """Check component variances, their covariance, the pseudo-variance and
    the mean squared magnitude of `samples` against a circular complex
    Gaussian of total variance `variance`, each within n_sigmas standard
    errors of its estimator.
    """
    z = np.asarray(samples).ravel()
    n = z.size
    re, im = z.real, z.imag
    half = variance / 2.0
    var_re = float(np.mean(re**2))
    var_im = float(np.mean(im**2))
    cov = float(np.mean(re * im))
    pseudo = complex(np.mean(z**2))
    msq = float(np.mean(np.abs(z) ** 2))

    # Estimator standard errors for gaussian components of variance `half`:
    # Var(re^2) = 2 half^2, Var(re*im) = half^2, Var(|z|^2) = variance^2.
    se_var = math.sqrt(2.0 * half * half / n)
    se_cov = math.sqrt(half * half / n)
    se_msq = math.sqrt(variance * variance / n)
    se_pseudo = math.sqrt(2.0 * variance * variance / n)

    failures = []
    if abs(var_re - half) > n_sigmas * se_var:
        failures.append(f"var(re)={var_re:.6g} not within {n_sigmas} SE of {half}")
    if abs(var_im - half) > n_sigmas * se_var:
        failures.append(f"var(im)={var_im:.6g} not within {n_sigmas} SE of {half}")
    if abs(cov) > n_sigmas * se_cov:
        failures.append(f"cov(re,im)={cov:.6g} not within {n_sigmas} SE of 0")
    if abs(pseudo) > n_sigmas * se_pseudo:
        failures.append(f"|mean(X^2)|={abs(pseudo):.6g} not within {n_sigmas} SE of 0")
    if abs(msq - variance) > n_sigmas * se_msq:
        failures.append(f"mean|X|^2={msq:.6g} not within {n_sigmas} SE of {variance}")

    return CircularityReport(
        n=n, variance=variance, var_re=var_re, var_im=var_im, cov=cov,
        pseudo_mean=pseudo, mean_sq_magnitude=msq,
        passed=not failures, failures=tuple(failures),
    )
