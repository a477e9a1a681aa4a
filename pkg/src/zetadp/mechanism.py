"""The complex Gaussian mechanism: sensitivity-calibrated circular noise,
per-sample conjugate-gradient clipping and lot-level privatization.

Noise convention: a noise scale sigma means every *real* component (the real
and the imaginary part of a complex coordinate, or a real coordinate itself)
receives independent N(0, sigma^2) noise. Equivalently each complex
coordinate receives circular noise of total variance 2 * sigma^2. This is
the scale at which the analytic (epsilon, delta) profile and the RDP bound
of the accountant are exact, so ledgers built from the noise multiplier are
sound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctensor import CTensor, Rng, sample_circular_gaussian
from .errors import DomainError
from .wirtinger import ConjugateGradient


@dataclass(frozen=True)
class ClipSpec:
    bound: float

    def __post_init__(self):
        if not self.bound > 0:
            raise DomainError(f"clip bound must be > 0, got {self.bound}")


@dataclass(frozen=True)
class MechanismSpec:
    sensitivity: float
    sigma: float  # per-real-component noise standard deviation

    def __post_init__(self):
        if not self.sensitivity > 0:
            raise DomainError(f"sensitivity must be > 0, got {self.sensitivity}")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")


def clip_conjugate_gradient(g: ConjugateGradient, bound: float) -> ConjugateGradient:
    """Scale g by min(1, bound / ||g||): output norm <= bound, per-entry phase
    unchanged. A zero gradient passes through untouched (no division occurs),
    and so does any gradient already within the bound, which makes clipping
    idempotent bit-for-bit."""
    if not bound > 0:
        raise DomainError(f"clip bound must be > 0, got {bound}")
    norm = g.norm()
    if norm <= bound:
        return g
    return g.scaled(bound / norm)


def gaussian_mechanism(value: CTensor, spec: MechanismSpec, rng: Rng) -> CTensor:
    """value + xi, with xi circular complex Gaussian noise at per-component
    std spec.sigma (total complex variance 2 sigma^2 per coordinate)."""
    value = np.asarray(value, dtype=np.complex128)
    noise = sample_circular_gaussian(value.shape, 2.0 * spec.sigma**2, rng)
    return value + noise


def privatize_lot(
    per_sample_grads: list[ConjugateGradient],
    bound: float,
    noise_multiplier: float,
    denominator: int,
    rng: Rng,
) -> ConjugateGradient:
    """(sum of clipped gradients + noise) / denominator.

    Inputs are re-clipped defensively, so the un-noised sum has add/remove-one
    sensitivity exactly `bound`. Noise is drawn once for the summed gradient:
    complex coordinates get circular noise with per-component std
    noise_multiplier * bound, real coordinates a real normal at the same std.
    The reduction is performed in list order, which callers keep sorted by
    sample index for determinism.
    """
    if denominator <= 0:
        raise DomainError(f"denominator must be positive, got {denominator}")
    if not per_sample_grads:
        raise DomainError("empty lot")
    clipped = [clip_conjugate_gradient(g, bound) for g in per_sample_grads]
    total = clipped[0]
    for g in clipped[1:]:
        total = total.plus(g)
    if noise_multiplier > 0:
        std = noise_multiplier * bound
        noised = {}
        for key, arr in total.grads.items():
            if np.iscomplexobj(arr):
                noise = np.asarray(sample_circular_gaussian(
                    arr.shape if arr.shape else (1,), 2.0 * std * std, rng))
                noised[key] = arr + noise.reshape(arr.shape)
            else:
                noise = rng.normal(arr.size).reshape(arr.shape) * std
                noised[key] = arr + noise
        total = ConjugateGradient(noised)
    return total.scaled(1.0 / denominator)
