"""Vector algebra on R^3 and the rigid-body Poisson / double-bracket structures.

Vectors are numpy arrays with the components on the last axis, so every
operation broadcasts over leading batch axes.  Scalar fields carry analytic
derivative closures; a finite-difference helper exists only to cross-validate
those closures, never to replace them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


def cross(u, v):
    """Cross product u ^ v, broadcasting over leading axes."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.empty(np.broadcast_shapes(u.shape, v.shape), dtype=float)
    out[..., 0] = u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1]
    out[..., 1] = u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2]
    out[..., 2] = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    return out


def cross_matrix(x):
    """Matrix [x]_ with [x]_ v = x ^ v, shape (..., 3, 3)."""
    x = np.asarray(x, dtype=float)
    m = np.zeros(x.shape[:-1] + (3, 3), dtype=float)
    m[..., 0, 1] = -x[..., 2]
    m[..., 0, 2] = x[..., 1]
    m[..., 1, 0] = x[..., 2]
    m[..., 1, 2] = -x[..., 0]
    m[..., 2, 0] = -x[..., 1]
    m[..., 2, 1] = x[..., 0]
    return m


def dot(u, v):
    """Euclidean inner product over the last axis."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.sum(u * v, axis=-1)


def norm(u):
    return np.sqrt(dot(u, u))


@dataclass(frozen=True)
class ScalarField:
    """Scalar function with analytic gradient and optional Hessian.

    value    : (state) -> real (broadcasts over leading axes when built by
               the constructors below)
    gradient : (state) -> state-shaped array
    hessian  : optional, (state) -> (n, n) symmetric matrix
    name     : label used in reports
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "field"

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))


def fd_gradient(field: ScalarField, x, step: float | None = None):
    """Central finite-difference gradient, for cross-validating analytic ones."""
    x = np.asarray(x, dtype=float)
    if step is None:
        step = 1e-6 * max(1.0, float(norm(x)))
    g = np.empty_like(x)
    for i in range(x.shape[-1]):
        e = np.zeros_like(x)
        e[..., i] = step
        g[..., i] = (field.value(x + e) - field.value(x - e)) / (2.0 * step)
    return g


def constant_field(c: float, dim: int = 3) -> ScalarField:
    return ScalarField(
        value=lambda x: np.full(x.shape[:-1], float(c)),
        gradient=lambda x: np.zeros_like(x),
        hessian=lambda x: np.zeros((dim, dim)),
        name=f"const({c})",
    )


def linear_field(b, name: str | None = None) -> ScalarField:
    """F(z) = z . b for a fixed vector b."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    return ScalarField(
        value=lambda x: dot(x, b),
        gradient=lambda x: np.broadcast_to(b, x.shape).copy(),
        hessian=lambda x: np.zeros((n, n)),
        name=name or "z.b",
    )


def quadratic_field(A, b=None, c: float = 0.0, name: str | None = None) -> ScalarField:
    """F(z) = z^T A z / 2 + b . z + c with A symmetric."""
    A = np.asarray(A, dtype=float)
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)

    def value(x):
        return 0.5 * dot(x, x @ A.T) + dot(x, b) + c

    return ScalarField(
        value=value,
        gradient=lambda x: x @ A.T + b,
        hessian=lambda x: A.copy(),
        name=name or "quadratic",
    )


def norm_squared_field(dim: int = 3) -> ScalarField:
    """F(z) = ||z||^2."""
    return quadratic_field(2.0 * np.eye(dim), name="norm2")


def sphere_field(dim: int = 3) -> ScalarField:
    """F(z) = ||z||^2 - 1, the unit-sphere level function."""
    return quadratic_field(2.0 * np.eye(dim), c=-1.0, name="norm2-1")


def casimir_field(dim: int = 3) -> ScalarField:
    """F(z) = ||z||^2 / 2, Casimir of the rigid-body bracket."""
    return quadratic_field(np.eye(dim), name="norm2/2")


def field_product(F: ScalarField, G: ScalarField) -> ScalarField:
    """Pointwise product F*G with the analytic product-rule gradient."""

    def value(x):
        return F.value(x) * G.value(x)

    def gradient(x):
        return (
            F.value(x)[..., None] * G.gradient(x)
            + G.value(x)[..., None] * F.gradient(x)
        )

    hessian = None
    if F.hessian is not None and G.hessian is not None:

        def hessian(x):
            gF, gG = F.gradient(x), G.gradient(x)
            return (
                F.value(x) * G.hessian(x)
                + G.value(x) * F.hessian(x)
                + np.outer(gF, gG)
                + np.outer(gG, gF)
            )

    return ScalarField(value, gradient, hessian, name=f"{F.name}*{G.name}")


@dataclass(frozen=True)
class PoissonStructure:
    """Rigid-body bracket {F,G}(z) = sign * z . (grad F ^ grad G)."""

    sign: int = -1

    def __post_init__(self):
        if self.sign not in (+1, -1):
            raise ValueError(f"Poisson sign must be +1 or -1, got {self.sign}")


@dataclass(frozen=True)
class DoubleBracketStructure:
    """Double bracket {{F,G}}(z) = alpha * (z ^ grad F) . (z ^ grad G)."""

    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"damping alpha must be >= 0, got {self.alpha}")


def rigid_body_bracket(F: ScalarField, G: ScalarField, z, s: PoissonStructure) -> float:
    """{F,G}_s(z) = s.sign * z . (grad F(z) ^ grad G(z))."""
    z = np.asarray(z, dtype=float)
    return s.sign * dot(z, cross(F.gradient(z), G.gradient(z)))


def bracket_field(F: ScalarField, G: ScalarField, s: PoissonStructure) -> ScalarField:
    """{F,G}_s as a ScalarField with analytic gradient (needs both Hessians)."""
    if F.hessian is None or G.hessian is None:
        raise ValueError("bracket_field requires Hessians of both arguments")

    def value(z):
        return rigid_body_bracket(F, G, z, s)

    def gradient(z):
        z = np.asarray(z, dtype=float)
        gF, gG = F.gradient(z), G.gradient(z)
        HF, HG = F.hessian(z), G.hessian(z)
        # d/dz_i of z.(gF ^ gG) via product rule on all three factors
        g = cross(gF, gG).astype(float)
        for i in range(3):
            g[i] += dot(z, cross(HF[:, i], gG)) + dot(z, cross(gF, HG[:, i]))
        return s.sign * g

    return ScalarField(value, gradient, name=f"{{{F.name},{G.name}}}")


def hamiltonian_vf(H: ScalarField, z, s: PoissonStructure):
    """The vector field X_H with X_H[G] = {G,H}_s; closed form -sign * z ^ grad H."""
    z = np.asarray(z, dtype=float)
    return -s.sign * cross(z, H.gradient(z))


def double_bracket(F: ScalarField, G: ScalarField, z, d: DoubleBracketStructure) -> float:
    """{{F,G}}(z) = alpha * (z ^ grad F(z)) . (z ^ grad G(z))."""
    z = np.asarray(z, dtype=float)
    return d.alpha * dot(cross(z, F.gradient(z)), cross(z, G.gradient(z)))


def double_bracket_vf(H: ScalarField, z, d: DoubleBracketStructure):
    """The vector field X with grad F . X = {{F,H}}; closed form -alpha * z ^ (z ^ grad H)."""
    z = np.asarray(z, dtype=float)
    return -d.alpha * cross(z, cross(z, H.gradient(z)))


def casimir_residual(
    F: ScalarField,
    s: PoissonStructure,
    samples: Sequence,
    probes: Sequence[ScalarField],
) -> float:
    """Max |{F,G}(z)| over samples x probes; 0 certifies F Casimir on the set."""
    samples = list(samples)
    probes = list(probes)
    if not samples or not probes:
        raise ValueError("casimir_residual needs nonempty samples and probes")
    worst = 0.0
    for z in samples:
        for G in probes:
            worst = max(worst, abs(float(rigid_body_bracket(F, G, z, s))))
    return worst
