"""Model catalog: named builders for the Larmor / Landau-Lifshitz family,
the Kubo oscillator, the scalar linear SDE and the isochronous oscillators.

Every builder returns a validated ModelSpec whose drift/diffusion closures
broadcast over leading batch axes, with analytic diffusion Jacobians for all
Stratonovich entries so the Wong-Zakai conversion never falls back to
differencing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np

from .integrate import ModelSpec, validate_model
from .noise import NoisePath, iterated_log_eta
from .vecalg import cross, cross_matrix

_EYE3 = np.eye(3)
# d[x]_x / dx_j = [e_j]_x (the cross-product matrix is linear in x)
_DCROSS = np.stack([cross_matrix(_EYE3[j]) for j in range(3)], axis=-1)

REQUIRED = object()

_SCHEMAS = {
    "larmor": {"b": (0.0, 0.0, 1.0)},
    "larmor_external": {"b": (0.0, 0.0, 1.0), "eps": 0.1, "sigma_mat": None},
    "larmor_preserving": {"b": (0.0, 0.0, 1.0), "gamma": 1.0},
    "ll": {"b": (0.0, 0.0, 1.0), "alpha": 1.0},
    "ell": {"b": (0.0, 0.0, 1.0), "alpha": 1.0, "eps": 0.1, "interpretation": REQUIRED},
    "etore_invariantized": {"b": (0.0, 0.0, 1.0), "alpha": 1.0, "eps": 0.1},
    "modified_etore": {"b": (0.0, 0.0, 1.0), "alpha": 1.0, "eps": 0.1},
    "rode_ll": {"b": (0.0, 0.0, 1.0), "alpha": 1.0, "scalar_eta": True, "t_min": 3.0},
    "kubo": {"a": 1.0, "sigma": 0.5},
    "scalar_linear": {"a": REQUIRED, "b_scalar": REQUIRED},
    "isochronous": {"omega": REQUIRED, "eps": 0.1},
}

CATALOG = tuple(sorted(_SCHEMAS))


@dataclass(frozen=True)
class CatalogEntry:
    """A catalog model name with its parameter values."""

    name: str
    params: dict = field(default_factory=dict)
    interpretation: Optional[str] = None


def build_model(entry, **overrides) -> ModelSpec:
    """Build a validated ModelSpec from a CatalogEntry or a catalog name."""
    if isinstance(entry, CatalogEntry):
        name = entry.name
        params = dict(entry.params)
        if entry.interpretation is not None:
            params.setdefault("interpretation", entry.interpretation)
    else:
        name = str(entry)
        params = {}
    params.update(overrides)
    if name not in _SCHEMAS:
        raise ValueError(f"unknown catalog model {name!r}; known: {', '.join(CATALOG)}")
    schema = _SCHEMAS[name]
    unknown = set(params) - set(schema)
    if unknown:
        raise ValueError(f"{name}: unknown parameters {sorted(unknown)}")
    resolved = {}
    for key, default in schema.items():
        if key in params:
            resolved[key] = params[key]
        elif default is REQUIRED:
            raise ValueError(f"{name}: missing required parameter {key!r}")
        else:
            resolved[key] = default
    model = _BUILDERS[name](**resolved)
    validate_model(model)
    return model


def _field_vector(b, who):
    b = np.asarray(b, dtype=float).reshape(3)
    if np.all(b == 0.0):
        raise ValueError(f"{who}: effective field b must be nonzero")
    return b


def _check_nonneg(who, **vals):
    for key, v in vals.items():
        if v < 0:
            raise ValueError(f"{who}: {key} must be >= 0, got {v}")


def _ll_drift(x, b, alpha):
    """-x ^ b - alpha x ^ (x ^ b); b may carry batch axes (RODE fields)."""
    xb = cross(x, b)
    return -xb - alpha * cross(x, xb)


def _sigma_etore(x, alpha):
    """sigma(t,x) = -x ^ . - alpha x ^ (x ^ .), shape (..., 3, 3)."""
    x = np.asarray(x, dtype=float)
    xxt = x[..., :, None] * x[..., None, :]
    n2 = np.sum(x * x, axis=-1)[..., None, None]
    return -cross_matrix(x) + alpha * (n2 * _EYE3 - xxt)


def _sigma_etore_jac(x, alpha):
    """d sigma[i,k] / d x[j] of _sigma_etore, shape (..., 3, 3, 3)."""
    x = np.asarray(x, dtype=float)
    jac = np.broadcast_to(-_DCROSS, x.shape[:-1] + (3, 3, 3)).copy()
    # alpha * (2 x_j delta_ik - delta_ij x_k - x_i delta_kj)
    jac += alpha * 2.0 * _EYE3[:, :, None] * x[..., None, None, :]
    jac -= alpha * _EYE3[:, None, :] * x[..., None, :, None]
    jac -= alpha * x[..., :, None, None] * _EYE3[None, :, :]
    return jac


def _build_larmor(b):
    b = _field_vector(b, "larmor")

    def drift(t, x):
        return cross(x, b)

    return ModelSpec(
        n=3, noise_dim=0, interpretation="ode", drift=drift,
        drift_terms=(("precession", drift),),
        name="larmor", params={"b": tuple(b)},
    )


def _build_larmor_external(b, eps, sigma_mat):
    b = _field_vector(b, "larmor_external")
    _check_nonneg("larmor_external", eps=eps)
    sm = np.eye(3) if sigma_mat is None else np.asarray(sigma_mat, dtype=float).reshape(3, 3)
    if np.all(sm == 0.0):
        raise ValueError("larmor_external: sigma_mat must be nonzero")
    jac0 = eps * np.stack([cross_matrix(_EYE3[j]) @ sm for j in range(3)], axis=-1)

    def drift(t, x):
        return cross(x, b)

    def diffusion(t, x):
        return eps * (cross_matrix(x) @ sm)

    def diffusion_jacobian(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(jac0, x.shape[:-1] + (3, 3, 3)).copy()

    return ModelSpec(
        n=3, noise_dim=3, interpretation="stratonovich",
        drift=drift, diffusion=diffusion, diffusion_jacobian=diffusion_jacobian,
        drift_terms=(("precession", drift),),
        name="larmor_external", params={"b": tuple(b), "eps": eps},
    )


def _build_larmor_preserving(b, gamma):
    b = _field_vector(b, "larmor_preserving")
    if gamma == 0:
        raise ValueError("larmor_preserving: gamma must be nonzero")
    jac0 = (-gamma * cross_matrix(b))[:, None, :]  # (x ^ b) = -[b]_x x

    def drift(t, x):
        return cross(x, b)

    def diffusion(t, x):
        return gamma * cross(x, b)[..., :, None]

    def diffusion_jacobian(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(jac0, x.shape[:-1] + (3, 1, 3)).copy()

    return ModelSpec(
        n=3, noise_dim=1, interpretation="stratonovich",
        drift=drift, diffusion=diffusion, diffusion_jacobian=diffusion_jacobian,
        drift_terms=(("precession", drift),),
        name="larmor_preserving", params={"b": tuple(b), "gamma": gamma},
    )


def _build_ll(b, alpha):
    b = _field_vector(b, "ll")
    _check_nonneg("ll", alpha=alpha)

    def precession(t, x):
        return -cross(x, b)

    def damping(t, x):
        return -alpha * cross(x, cross(x, b))

    def drift(t, x):
        return _ll_drift(x, b, alpha)

    return ModelSpec(
        n=3, noise_dim=0, interpretation="ode", drift=drift,
        drift_terms=(("precession", precession), ("damping", damping)),
        name="ll", params={"b": tuple(b), "alpha": alpha},
    )


def _build_ell(b, alpha, eps, interpretation):
    b = _field_vector(b, "ell")
    _check_nonneg("ell", alpha=alpha, eps=eps)
    if interpretation not in ("ito", "stratonovich"):
        raise ValueError(f"ell: interpretation must be ito or stratonovich, got {interpretation!r}")

    def precession(t, x):
        return -cross(x, b)

    def damping(t, x):
        return -alpha * cross(x, cross(x, b))

    def drift(t, x):
        return _ll_drift(x, b, alpha)

    def diffusion(t, x):
        return eps * _sigma_etore(x, alpha)

    def diffusion_jacobian(t, x):
        return eps * _sigma_etore_jac(x, alpha)

    return ModelSpec(
        n=3, noise_dim=3, interpretation=interpretation,
        drift=drift, diffusion=diffusion, diffusion_jacobian=diffusion_jacobian,
        drift_terms=(("precession", precession), ("damping", damping)),
        name=f"ell_{interpretation}",
        params={"b": tuple(b), "alpha": alpha, "eps": eps},
    )


def _rescale_rate(t, eps, alpha):
    d = 2.0 * eps**2 * (alpha**2 + 1.0)
    return d, d * t + 1.0


def _build_etore_invariantized(b, alpha, eps):
    b = _field_vector(b, "etore_invariantized")
    _check_nonneg("etore_invariantized", alpha=alpha, eps=eps)

    def rescaling(t, x):
        d, den = _rescale_rate(t, eps, alpha)
        return (-0.5 * d / den) * x

    def ll_part(t, x):
        _, den = _rescale_rate(t, eps, alpha)
        return _ll_drift(x, b, alpha) / math.sqrt(den)

    def drift(t, x):
        return rescaling(t, x) + ll_part(t, x)

    # The noise keeps the eps amplitude of the unrescaled equation: the rate
    # 2 eps^2 (alpha^2+1) in the rescaling is tuned to cancel exactly the
    # norm drift tr(eps^2 sigma sigma^T) = 2 eps^2 (alpha^2+1) on the sphere,
    # so L ||x||^2 = 0 there and the flow stays on S^2 almost surely.
    def diffusion(t, x):
        _, den = _rescale_rate(t, eps, alpha)
        return eps * _sigma_etore(x, alpha) / math.sqrt(den)

    def diffusion_jacobian(t, x):
        _, den = _rescale_rate(t, eps, alpha)
        return eps * _sigma_etore_jac(x, alpha) / math.sqrt(den)

    return ModelSpec(
        n=3, noise_dim=3, interpretation="ito",
        drift=drift, diffusion=diffusion, diffusion_jacobian=diffusion_jacobian,
        drift_terms=(("rescaling", rescaling), ("landau-lifshitz", ll_part)),
        name="etore_invariantized",
        params={"b": tuple(b), "alpha": alpha, "eps": eps},
    )


def _build_modified_etore(b, alpha, eps):
    b = _field_vector(b, "modified_etore")
    _check_nonneg("modified_etore", alpha=alpha, eps=eps)

    def rescaling(t, x):
        d, den = _rescale_rate(t, eps, alpha)
        return (-0.5 * d / den) * x

    def ll_part(t, x):
        _, den = _rescale_rate(t, eps, alpha)
        return _ll_drift(x, b, alpha) / math.sqrt(den)

    def drift(t, x):
        return rescaling(t, x) + ll_part(t, x)

    def diffusion(t, x):
        # single noise channel eps sigma(t, x) b with a 1-dim Brownian motion
        _, den = _rescale_rate(t, eps, alpha)
        col = np.einsum("...ik,k->...i", _sigma_etore(x, alpha), b)
        return eps * col[..., :, None] / math.sqrt(den)

    def diffusion_jacobian(t, x):
        _, den = _rescale_rate(t, eps, alpha)
        jac = np.einsum("...ikj,k->...ij", _sigma_etore_jac(x, alpha), b)
        return eps * jac[..., :, None, :] / math.sqrt(den)

    return ModelSpec(
        n=3, noise_dim=1, interpretation="ito",
        drift=drift, diffusion=diffusion, diffusion_jacobian=diffusion_jacobian,
        drift_terms=(("rescaling", rescaling), ("landau-lifshitz", ll_part)),
        name="modified_etore",
        params={"b": tuple(b), "alpha": alpha, "eps": eps},
    )


def _build_rode_ll(b, alpha, scalar_eta, t_min):
    b = _field_vector(b, "rode_ll")
    _check_nonneg("rode_ll", alpha=alpha)

    if scalar_eta:
        # equilibrium-preserving subfamily b_t = b0 eta_t with scalar eta
        def effective_field(eta):
            return np.asarray(eta, dtype=float)[..., None] * b
    else:
        def effective_field(eta):
            return np.asarray(eta, dtype=float)

    def precession(t, x, eta):
        return -cross(x, effective_field(eta))

    def damping(t, x, eta):
        return -alpha * cross(x, cross(x, effective_field(eta)))

    def drift(t, x, eta):
        return _ll_drift(x, effective_field(eta), alpha)

    eta_builder = partial(iterated_log_eta, t_min=t_min) if scalar_eta else None
    return ModelSpec(
        n=3, noise_dim=0, interpretation="rode", drift=drift,
        drift_terms=(("precession", precession), ("damping", damping)),
        eta_dim=1 if scalar_eta else 3,
        eta_builder=eta_builder,
        name="rode_ll",
        params={"b": tuple(b), "alpha": alpha, "scalar_eta": scalar_eta, "t_min": t_min},
    )


def _build_kubo(a, sigma):
    def drift(t, x):
        return np.stack([-a * x[..., 1], a * x[..., 0]], axis=-1)

    def diffusion(t, x):
        col = np.stack([-sigma * x[..., 1], sigma * x[..., 0]], axis=-1)
        return col[..., :, None]

    jac0 = np.array([[[0.0, -sigma]], [[sigma, 0.0]]])  # (n, l, n)

    def diffusion_jacobian(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(jac0, x.shape[:-1] + (2, 1, 2)).copy()

    return ModelSpec(
        n=2, noise_dim=1, interpretation="stratonovich",
        drift=drift, diffusion=diffusion, diffusion_jacobian=diffusion_jacobian,
        drift_terms=(("rotation", drift),),
        name="kubo", params={"a": a, "sigma": sigma},
    )


def kubo_exact(a, sigma, x0, path: NoisePath) -> np.ndarray:
    """Closed-form Kubo solution on the path grid: rotation by a t + sigma W_t.

    The drift and diffusion generators commute, so the Stratonovich flow is
    the planar rotation through the random angle.
    """
    theta = a * path.times + sigma * path.cumulative()[:, 0]
    c, s = np.cos(theta), np.sin(theta)
    x0 = np.asarray(x0, dtype=float)
    return np.stack([c * x0[0] - s * x0[1], s * x0[0] + c * x0[1]], axis=-1)


def _build_scalar_linear(a, b_scalar):
    def drift(t, x):
        return a * x

    def diffusion(t, x):
        x = np.asarray(x, dtype=float)
        return b_scalar * x[..., :, None]

    def diffusion_jacobian(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.array([[[b_scalar]]]), x.shape[:-1] + (1, 1, 1)).copy()

    return ModelSpec(
        n=1, noise_dim=1, interpretation="ito",
        drift=drift, diffusion=diffusion, diffusion_jacobian=diffusion_jacobian,
        drift_terms=(("linear", drift),),
        name="scalar_linear", params={"a": a, "b_scalar": b_scalar},
    )


def scalar_linear_exact(a, b_scalar, x0, path: NoisePath) -> np.ndarray:
    """Closed-form solution x0 exp((a - b^2/2) t + b W_t) on the path grid."""
    w = path.cumulative()[:, 0]
    return x0 * np.exp((a - 0.5 * b_scalar**2) * path.times + b_scalar * w)


def _build_isochronous(omega, eps):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    m = omega.shape[0]
    if m == 0:
        raise ValueError("isochronous: omega must be a nonempty frequency list")
    amps = np.broadcast_to(np.asarray(eps, dtype=float), (m,)).astype(float)
    if np.any(amps < 0):
        raise ValueError("isochronous: noise amplitudes must be >= 0")
    # state is (I_1..I_m, theta_1..theta_m); dI = 0, d theta_i = omega_i dt + eps_i o dB
    rate = np.concatenate([np.zeros(m), omega])
    col = np.concatenate([np.zeros(m), amps])[:, None]

    def drift(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(rate, x.shape).copy()

    def diffusion(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(col, x.shape[:-1] + (2 * m, 1)).copy()

    def diffusion_jacobian(t, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (2 * m, 1, 2 * m))

    return ModelSpec(
        n=2 * m, noise_dim=1, interpretation="stratonovich",
        drift=drift, diffusion=diffusion, diffusion_jacobian=diffusion_jacobian,
        drift_terms=(("frequency", drift),),
        name="isochronous",
        params={"omega": tuple(omega), "eps": tuple(amps)},
    )


def wrap_angles(model: ModelSpec, states: np.ndarray) -> np.ndarray:
    """Reduce isochronous angle coordinates mod 2 pi (output-time only)."""
    if model.name != "isochronous":
        return states
    m = model.n // 2
    out = np.array(states, dtype=float)
    out[..., m:] = np.mod(out[..., m:], 2.0 * np.pi)
    return out


_BUILDERS = {
    "larmor": _build_larmor,
    "larmor_external": _build_larmor_external,
    "larmor_preserving": _build_larmor_preserving,
    "ll": _build_ll,
    "ell": _build_ell,
    "etore_invariantized": _build_etore_invariantized,
    "modified_etore": _build_modified_etore,
    "rode_ll": _build_rode_ll,
    "kubo": _build_kubo,
    "scalar_linear": _build_scalar_linear,
    "isochronous": _build_isochronous,
}
