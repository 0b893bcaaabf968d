"""Persistence checkers and empirical verdicts.

Analytic invariance/equilibrium criteria evaluated on sampled points, plus
Monte Carlo machinery for stability probabilities, first-integral drift,
strong convergence order, conversion coherence and symplectic structure.
Every verdict is a deterministic function of (model, seed, tolerances).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .integrate import (
    ModelSpec,
    Trajectory,
    apply_generator,
    default_scheme,
    integrate_path,
    run_ensemble,
)
from .noise import (
    DOMAIN_ENSEMBLE,
    NoisePath,
    ParameterProcess,
    refine,
    sample_brownian,
    stream,
)
from .vecalg import (
    DoubleBracketStructure,
    PoissonStructure,
    ScalarField,
    cross,
    double_bracket_vf,
    hamiltonian_vf,
    linear_field,
    norm,
)

OFF_MANIFOLD_TOL = 1e-10


def derive_seed(master: int, domain: int, index: int) -> int:
    """Independent 64-bit child seed for (master, domain, index)."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(domain), int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


def fibonacci_sphere(n: int = 200) -> np.ndarray:
    """Deterministic quasi-uniform lattice on the unit sphere, shape (n, 3)."""
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def uniform_sphere_sampler(index: int, rng: np.random.Generator) -> np.ndarray:
    """Per-path uniform point on the unit sphere (for ensemble x0 sampling)."""
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def sphere_minus_cap(n: int, axis, cap_radius: float, boundary: int = 16) -> np.ndarray:
    """Lattice on S^2 excluding a chordal cap around -axis, plus a ring of
    points just outside the cap boundary (the hardest admissible starts)."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    pts = fibonacci_sphere(n)
    keep = np.linalg.norm(pts + axis, axis=1) > cap_radius
    pts = pts[keep]
    # ring at chordal distance ~ cap_radius from the antipode
    e = np.array([1.0, 0.0, 0.0])
    if abs(axis @ e) > 0.9:
        e = np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, e)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    theta = math.pi - 1.0000001 * cap_radius  # polar angle from +axis
    ring = []
    for k in range(boundary):
        phi = 2.0 * math.pi * k / boundary
        p = (
            math.cos(theta) * axis
            + math.sin(theta) * (math.cos(phi) * u + math.sin(phi) * v)
        )
        ring.append(p / np.linalg.norm(p))
    return np.vstack([pts, ring])


@dataclass(frozen=True)
class ConditionResult:
    name: str
    max_residual: float
    passed: bool


@dataclass(frozen=True)
class InvarianceReport:
    """Per-criterion residuals for one model/manifold pair."""

    model_name: str
    interpretation: str
    field_name: str
    tol: float
    n_samples: int
    conditions: tuple
    verdict: bool
    notes: str = ""

    def to_text(self) -> str:
        lines = [
            f"model: {self.model_name}",
            f"interpretation: {self.interpretation}",
            f"manifold: {self.field_name}",
            f"tolerance: {self.tol:.17g}",
            f"samples: {self.n_samples}",
        ]
        for c in self.conditions:
            lines.append(
                f"condition {c.name}: max_residual={c.max_residual:.17g} "
                f"{'pass' if c.passed else 'fail'}"
            )
        if self.notes:
            lines.append(f"notes: {self.notes}")
        lines.append(f"verdict: {'invariant' if self.verdict else 'not invariant'}")
        return "\n".join(lines)

    def rows(self):
        return [(c.name, c.max_residual, int(c.passed)) for c in self.conditions]


@dataclass(frozen=True)
class TermResult:
    name: str
    magnitude: float
    vanishes: bool


@dataclass(frozen=True)
class EquilibriumReport:
    """Per-term drift/diffusion magnitudes at a candidate equilibrium point."""

    model_name: str
    point: tuple
    tol: float
    drift_terms: tuple
    diffusion_columns: tuple
    verdict: bool

    def to_text(self) -> str:
        lines = [
            f"model: {self.model_name}",
            f"point: {','.join(f'{v:.17g}' for v in self.point)}",
            f"tolerance: {self.tol:.17g}",
        ]
        for t in self.drift_terms:
            lines.append(
                f"drift {t.name}: magnitude={t.magnitude:.17g} "
                f"{'vanishes' if t.vanishes else 'nonzero'}"
            )
        for t in self.diffusion_columns:
            lines.append(
                f"diffusion {t.name}: magnitude={t.magnitude:.17g} "
                f"{'vanishes' if t.vanishes else 'nonzero'}"
            )
        lines.append(
            "verdict: "
            + ("equilibrium persists" if self.verdict else "not an equilibrium")
        )
        return "\n".join(lines)

    def rows(self):
        out = [("drift:" + t.name, t.magnitude, int(t.vanishes)) for t in self.drift_terms]
        out += [
            ("diffusion:" + t.name, t.magnitude, int(t.vanishes))
            for t in self.diffusion_columns
        ]
        return out


def _hessian_rows(F: ScalarField, x: np.ndarray) -> np.ndarray:
    if F.hessian is None:
        raise ValueError("Ito invariance check needs the Hessian of F")
    return np.asarray(F.hessian(x))


def _eta_coverage(eta_samples) -> tuple[np.ndarray, str]:
    if eta_samples is None:
        raise ValueError("RODE invariance check needs eta samples")
    if isinstance(eta_samples, ParameterProcess):
        vals = np.asarray(eta_samples.values)
        # cover the observed range: evenly spaced order statistics + extremes
        flat = np.sort(vals, axis=0)
        idx = np.unique(np.linspace(0, flat.shape[0] - 1, 65).astype(int))
        vals = flat[idx]
    else:
        vals = np.asarray(eta_samples, dtype=float)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    return vals, f"eta coverage: {vals.shape[0]} samples in [{lo:.17g}, {hi:.17g}]"


def check_invariance(
    model: ModelSpec,
    F: ScalarField,
    samples,
    tol: float,
    ts: Sequence[float] = (0.0, 0.5, 1.0),
    eta_samples=None,
) -> InvarianceReport:
    """Evaluate the invariance criteria for F's zero set under the model flow.

    Ito models: drift tangency grad F . f, diffusion tangency grad F . sigma
    column-wise, and the second-order residual
    1/2 sum_ij (d2 F / dx_i dx_j) (sigma sigma^T)_ij, the drift the Ito
    formula leaves on the manifold once tangency holds.  Stratonovich models:
    the two tangency conditions.  ODE/RODE: drift tangency, the latter over
    sampled eta values covering the process range.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != model.n:
        raise ValueError(f"samples must have shape (m, {model.n})")
    fvals = np.abs(np.asarray(F.value(pts)))
    if np.max(fvals) > OFF_MANIFOLD_TOL:
        raise ValueError(
            f"sampler off-manifold: max |F| = {np.max(fvals):.3g} > {OFF_MANIFOLD_TOL:g}"
        )
    grads = np.asarray(F.gradient(pts))
    notes = ""
    conditions = []

    if model.interpretation == "rode":
        vals, notes = _eta_coverage(eta_samples)
        worst = 0.0
        for t in ts:
            for eta in vals:
                fx = np.asarray(model.drift(float(t), pts, eta))
                worst = max(worst, float(np.max(np.abs(np.sum(grads * fx, axis=-1)))))
        conditions.append(ConditionResult("drift_tangency", worst, worst <= tol))
    else:
        worst = 0.0
        for t in ts:
            fx = np.asarray(model.drift(float(t), pts))
            worst = max(worst, float(np.max(np.abs(np.sum(grads * fx, axis=-1)))))
        conditions.append(ConditionResult("drift_tangency", worst, worst <= tol))

    if model.interpretation in ("ito", "stratonovich"):
        worst = 0.0
        for t in ts:
            sig = np.asarray(model.diffusion(float(t), pts))
            proj = np.einsum("...i,...il->...l", grads, sig)
            worst = max(worst, float(np.max(np.abs(proj))))
        conditions.append(ConditionResult("diffusion_tangency", worst, worst <= tol))

    if model.interpretation == "ito":
        worst = 0.0
        for t in ts:
            sig = np.asarray(model.diffusion(float(t), pts))
            a = np.einsum("...il,...jl->...ij", sig, sig)
            for k in range(pts.shape[0]):
                hess = _hessian_rows(F, pts[k])
                worst = max(worst, abs(0.5 * float(np.sum(hess * a[k]))))
        conditions.append(ConditionResult("second_order_trace", worst, worst <= tol))

    verdict = all(c.passed for c in conditions)
    return InvarianceReport(
        model_name=model.name,
        interpretation=model.interpretation,
        field_name=F.name,
        tol=tol,
        n_samples=pts.shape[0],
        conditions=tuple(conditions),
        verdict=verdict,
        notes=notes,
    )


def check_equilibrium(
    model: ModelSpec,
    point,
    tol: float,
    ts: Sequence[float] = (0.0, 0.5, 1.0),
    eta_samples: Sequence[float] = (0.5, 1.0, 2.0),
) -> EquilibriumReport:
    """Report the magnitude of every drift summand and diffusion column at a point."""
    x = np.asarray(point, dtype=float)
    terms = model.drift_terms if model.drift_terms else (("drift", model.drift),)
    drift_results = []
    for name, term in terms:
        worst = 0.0
        for t in ts:
            if model.interpretation == "rode":
                for eta in eta_samples:
                    worst = max(worst, float(norm(np.asarray(term(float(t), x, eta)))))
            else:
                worst = max(worst, float(norm(np.asarray(term(float(t), x)))))
        drift_results.append(TermResult(name, worst, worst <= tol))
    diff_results = []
    if model.diffusion is not None:
        for k in range(model.noise_dim):
            worst = 0.0
            for t in ts:
                sig = np.asarray(model.diffusion(float(t), x))
                worst = max(worst, float(np.linalg.norm(sig[:, k])))
            diff_results.append(TermResult(f"column_{k + 1}", worst, worst <= tol))
    verdict = all(t.vanishes for t in drift_results) and all(
        t.vanishes for t in diff_results
    )
    return EquilibriumReport(
        model_name=model.name,
        point=tuple(float(v) for v in x),
        tol=tol,
        drift_terms=tuple(drift_results),
        diffusion_columns=tuple(diff_results),
        verdict=verdict,
    )


@dataclass(frozen=True)
class FirstIntegralDrift:
    max_drift: float
    terminal_drift: float


def first_integral_drift(traj: Trajectory, F: ScalarField) -> FirstIntegralDrift:
    """Max and terminal |F(x_t) - F(x_0)| along one trajectory."""
    vals = np.asarray(F.value(traj.states))
    dev = np.abs(vals - vals[0])
    return FirstIntegralDrift(float(np.max(dev)), float(dev[-1]))


@dataclass(frozen=True)
class MonotonicityStats:
    n_violations: int
    max_increase: float
    n_steps: int


def lyapunov_monotonicity(traj: Trajectory, V: ScalarField, step_tol: float) -> MonotonicityStats:
    """Count the steps where V increases by more than step_tol."""
    vals = np.asarray(V.value(traj.states))
    diffs = np.diff(vals)
    increases = diffs[diffs > 0]
    n_bad = int(np.sum(diffs > step_tol))
    max_inc = float(np.max(increases)) if increases.size else 0.0
    return MonotonicityStats(n_bad, max_inc, len(diffs))


@dataclass(frozen=True)
class OrderEstimate:
    step_sizes: np.ndarray
    errors: np.ndarray
    slope: float
    half_width: float


def _fit_order(hs, errors) -> tuple[float, float]:
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0):
        raise ValueError("strong errors must be positive for a log-log fit")
    coef, cov = np.polyfit(np.log(hs), np.log(errors), 1, cov=True)
    return float(coef[0]), float(1.96 * math.sqrt(max(cov[0][0], 0.0)))


def _coupled_paths(seed: int, n_paths: int, T: float, h0: float, dims: int, levels: int):
    """Per-path dyadic refinement families sharing one Brownian motion each.

    Returns a list over levels; each entry stacks the n_paths increment
    arrays as (N_level, n_paths, dims).
    """
    families = []
    for p in range(n_paths):
        path = sample_brownian(derive_seed(seed, DOMAIN_ENSEMBLE, p), T, h0, dims)
        chain = [path]
        for _ in range(levels - 1):
            chain.append(refine(chain[-1]))
        families.append(chain)
    stacks = []
    for lev in range(levels):
        stacks.append(np.stack([fam[lev].increments for fam in families], axis=1))
    times = [families[0][lev].times for lev in range(levels)]
    return stacks, times, families


def empirical_convergence_order(
    model: ModelSpec,
    x0,
    scheme: str,
    oracle: str,
    levels: int,
    n_paths: int,
    seed: int,
    T: float = 1.0,
    h0: float = 2.0**-6,
    closed_form: Optional[Callable] = None,
    oracle_gap: int = 3,
) -> OrderEstimate:
    """Strong error per dyadic level on coupled refined paths, with a log-log fit.

    oracle 'closed_form' compares terminal states against closed_form(x0, path)
    evaluated on each path's finest refinement; 'finest_refinement' compares
    against the same scheme run oracle_gap halvings below the finest measured
    level (the gap keeps the reference error from contaminating the slope).
    """
    if levels < 3:
        raise ValueError(f"need at least 3 levels, got {levels}")
    if oracle not in ("closed_form", "finest_refinement"):
        raise ValueError(f"unknown oracle {oracle!r}")
    if oracle == "closed_form" and closed_form is None:
        raise ValueError("closed_form oracle needs the closed_form callable")
    if oracle_gap < 1:
        raise ValueError(f"oracle_gap must be >= 1, got {oracle_gap}")
    x0 = np.asarray(x0, dtype=float)
    extra = oracle_gap if oracle == "finest_refinement" else 0
    dims = max(model.noise_dim, 1)
    stacks, times, families = _coupled_paths(seed, n_paths, T, h0, dims, levels + extra)

    def terminal_at(lev):
        x0b = np.broadcast_to(x0, (n_paths,) + x0.shape)
        if model.interpretation == "ode":
            from .integrate import _rk4_states

            return _rk4_states(model, x0b, times[lev], record=False)
        if model.interpretation == "rode":
            from .integrate import _rode_states

            etas = np.stack(
                [model.eta_builder(fam[lev]).values for fam in families], axis=1
            )
            return _rode_states(model, x0b, times[lev], etas, record=False)
        if model.interpretation == "ito":
            from .integrate import _em_states

            return _em_states(model, x0b, times[lev], stacks[lev], record=False)
        from .integrate import _heun_states

        return _heun_states(model, x0b, times[lev], stacks[lev], record=False)

    terminal = [terminal_at(lev) for lev in range(levels)]
    if oracle == "closed_form":
        ref = np.stack([np.asarray(closed_form(x0, fam[-1])) for fam in families])
    else:
        ref = terminal_at(levels + extra - 1)
    errors = np.array(
        [float(np.mean(np.linalg.norm(xT - ref, axis=-1))) for xT in terminal]
    )
    hs = h0 / 2.0 ** np.arange(levels)
    slope, half = _fit_order(hs, errors)
    return OrderEstimate(step_sizes=hs, errors=errors, slope=slope, half_width=half)


def functional_drift_decay(
    model: ModelSpec,
    x0,
    F: ScalarField,
    scheme: str,
    levels: int,
    n_paths: int,
    seed: int,
    T: float = 1.0,
    h0: float = 2.0**-6,
) -> OrderEstimate:
    """Decay order of the terminal first-integral drift E|F(x_T) - F(x_0)|
    under dyadic refinement of coupled paths."""
    from .integrate import _em_states, _heun_states

    if levels < 3:
        raise ValueError(f"need at least 3 levels, got {levels}")
    x0 = np.asarray(x0, dtype=float)
    f0 = float(F.value(x0))
    stacks, times, _ = _coupled_paths(seed, n_paths, T, h0, model.noise_dim, levels)
    drifts = []
    for lev in range(levels):
        x0b = np.broadcast_to(x0, (n_paths,) + x0.shape)
        if model.interpretation == "ito":
            xT = _em_states(model, x0b, times[lev], stacks[lev], record=False)
        else:
            xT = _heun_states(model, x0b, times[lev], stacks[lev], record=False)
        drifts.append(float(np.mean(np.abs(np.asarray(F.value(xT)) - f0))))
    hs = h0 / 2.0 ** np.arange(levels)
    slope, half = _fit_order(hs, drifts)
    return OrderEstimate(step_sizes=hs, errors=np.asarray(drifts), slope=slope, half_width=half)


@dataclass(frozen=True)
class GeneratorCheck:
    mc_rate: float
    se_rate: float
    generator_value: float
    residual: float


def one_step_generator_check(
    model: ModelSpec, V: ScalarField, x, h: float, n_samples: int, seed: int, t: float = 0.0
) -> GeneratorCheck:
    """Monte Carlo (E[V(x_{t+h})] - V(x)) / h against the generator value LV.

    One Euler-Maruyama step from a fixed state; the standard error of the
    rate and the exact generator value let callers form the 4 s.e. + O(h)
    acceptance band.
    """
    if model.interpretation != "ito":
        raise ValueError("one-step generator check needs an Ito model")
    x = np.asarray(x, dtype=float)
    rng = stream(seed, DOMAIN_ENSEMBLE, 0)
    dw = rng.normal(0.0, math.sqrt(h), size=(n_samples, model.noise_dim))
    fx = np.asarray(model.drift(t, x))
    sig = np.asarray(model.diffusion(t, x))
    x1 = x + fx * h + dw @ sig.T
    vals = np.asarray(V.value(x1))
    v0 = float(V.value(x))
    rate = float((vals.mean() - v0) / h)
    se = float(vals.std(ddof=1) / math.sqrt(n_samples) / h)
    lv = apply_generator(model, V, t, x)
    return GeneratorCheck(mc_rate=rate, se_rate=se, generator_value=lv,
                          residual=abs(rate - lv))


@dataclass(frozen=True)
class GapDecay:
    step_sizes: np.ndarray
    gaps: np.ndarray
    ratios: np.ndarray


def conversion_gap_decay(
    model_strat: ModelSpec,
    model_ito: ModelSpec,
    x0,
    levels: int,
    n_paths: int,
    seed: int,
    T: float = 1.0,
    h0: float = 2.0**-6,
) -> GapDecay:
    """Terminal strong gap between Heun on the Stratonovich model and EM on its
    Ito conversion, on the same coupled dyadic paths, one gap per level."""
    from .integrate import _em_states, _heun_states

    x0 = np.asarray(x0, dtype=float)
    dims = model_strat.noise_dim
    stacks, times, _ = _coupled_paths(seed, n_paths, T, h0, dims, levels)
    gaps = []
    for lev in range(levels):
        x0b = np.broadcast_to(x0, (n_paths,) + x0.shape)
        x_heun = _heun_states(model_strat, x0b, times[lev], stacks[lev], record=False)
        x_em = _em_states(model_ito, x0b, times[lev], stacks[lev], record=False)
        gaps.append(float(np.mean(np.linalg.norm(x_heun - x_em, axis=-1))))
    gaps = np.asarray(gaps)
    return GapDecay(
        step_sizes=h0 / 2.0 ** np.arange(levels),
        gaps=gaps,
        ratios=gaps[:-1] / gaps[1:],
    )


@dataclass(frozen=True)
class StabilityEstimate:
    probability: float
    half_width: float
    n_paths: int
    n_exceed: int


def stability_probability(
    model: ModelSpec,
    x0_radius: float,
    delta: float,
    T: float,
    n_paths: int,
    seed: int,
    h: float = 1e-2,
) -> StabilityEstimate:
    """Monte Carlo estimate of P(sup_{t<=T} |x_t| > delta) from |x_0| = x0_radius."""
    if not (delta > x0_radius > 0):
        raise ValueError(f"need delta > x0_radius > 0, got delta={delta}, x0={x0_radius}")
    x0 = np.zeros(model.n)
    x0[0] = x0_radius
    _, states = run_ensemble(
        model, x0, default_scheme(model), n_paths, seed,
        functionals=(), T=T, h=h, return_states=True,
    )
    sup = np.max(np.linalg.norm(states, axis=-1), axis=-1)
    n_exceed = int(np.sum(sup > delta))
    p = n_exceed / n_paths
    half = 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / n_paths)
    return StabilityEstimate(p, half, n_paths, n_exceed)


@dataclass(frozen=True)
class AttractionEstimate:
    fraction: float
    half_width: float
    n_paths: int
    n_attracted: int


def equilibrium_attraction(
    model: ModelSpec,
    target,
    eps: float,
    T: float,
    n_paths: int,
    x0,
    seed: int,
    h: float = 1e-3,
) -> AttractionEstimate:
    """Fraction of paths with ||x_T - target|| <= eps; x0 a point or sampler."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    target = np.asarray(target, dtype=float)
    _, states = run_ensemble(
        model, x0, default_scheme(model), n_paths, seed,
        functionals=(), T=T, h=h, return_states=True,
    )
    dist = np.linalg.norm(states[:, -1, :] - target, axis=-1)
    n_good = int(np.sum(dist <= eps))
    frac = n_good / n_paths
    half = 1.96 * math.sqrt(max(frac * (1.0 - frac), 0.0) / n_paths)
    return AttractionEstimate(frac, half, n_paths, n_good)


_J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def check_symplecticity(
    model: ModelSpec,
    scheme: str,
    x0,
    h: float,
    T: float,
    path: Optional[NoisePath] = None,
    fd_step: float = 1e-6,
) -> float:
    """Frobenius defect ||DPhi^T J DPhi - J|| of the pathwise flow map on R^2.

    DPhi is the Jacobian of x0 -> x_T along one fixed noise realization,
    by central finite differences in the initial condition.
    """
    x0 = np.asarray(x0, dtype=float)
    if model.n != 2:
        raise ValueError("symplecticity check needs a 2-dimensional model")
    if T < 0:
        raise ValueError("T must be >= 0")

    from .noise import _n_steps

    n_steps = _n_steps(T, h) if T > 0 else 0
    if path is None and model.noise_dim and T == 0:
        path = NoisePath(times=np.array([0.0]),
                         increments=np.zeros((0, model.noise_dim)), seed=0, level=0)

    def flow(y):
        if model.interpretation == "ode":
            grid = path.times if path is not None else np.arange(n_steps + 1) * h
            return integrate_path(model, y, scheme, grid=grid).states[-1]
        if path is None:
            raise ValueError("stochastic symplecticity check needs a NoisePath")
        return integrate_path(model, y, scheme, path=path).states[-1]

    delta = fd_step * max(1.0, float(np.linalg.norm(x0)))
    dphi = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = delta
        dphi[:, j] = (flow(x0 + e) - flow(x0 - e)) / (2.0 * delta)
    return float(np.linalg.norm(dphi.T @ _J2 @ dphi - _J2))


def ll_decomposition_residual(z, b, alpha: float) -> float:
    """Relative gap between the bracket decomposition and the damped precession drift.

    With H(z) = z.b, the sign=+1 bracket makes the precession -z^b Hamiltonian,
    and the damping -alpha z^(z^b) is the double-bracket flow of the same H, so
    X_H + X_dd must equal the full drift -z^b - alpha z^(z^b).
    """
    z = np.asarray(z, dtype=float)
    b = np.asarray(b, dtype=float)
    H = linear_field(b)
    total = hamiltonian_vf(H, z, PoissonStructure(+1)) + double_bracket_vf(
        H, z, DoubleBracketStructure(alpha)
    )
    rhs = -cross(z, b) - alpha * cross(z, cross(z, b))
    scale = max(float(norm(rhs)), np.finfo(float).tiny)
    return float(norm(total - rhs)) / scale


@dataclass(frozen=True)
class AmplitudeSweep:
    amplitudes: np.ndarray
    max_generator: np.ndarray
    largest_stable: Optional[float]


def generator_amplitude_sweep(
    build: Callable[[float], ModelSpec],
    V: ScalarField,
    points,
    amplitudes,
    t: float = 0.0,
) -> AmplitudeSweep:
    """Largest noise amplitude at which max LV stays <= 0 on the sampled points."""
    pts = np.asarray(points, dtype=float)
    amps = np.asarray(amplitudes, dtype=float)
    worst = np.empty(len(amps))
    for i, amp in enumerate(amps):
        model = build(float(amp))
        worst[i] = max(apply_generator(model, V, t, x) for x in pts)
    stable = [a for a, w in zip(amps, worst) if w <= 0.0]
    return AmplitudeSweep(
        amplitudes=amps,
        max_generator=worst,
        largest_stable=float(max(stable)) if stable else None,
    )


def report_to_csv(report, file, comment: str | None = None):
    """Residual table (criterion, value, passed) for invariance/equilibrium reports."""
    rows = report.rows()
    with open(file, "w", newline="") as fh:
        if comment:
            for line in comment.rstrip("\n").split("\n"):
                fh.write(f"# {line}\n")
        fh.write("criterion,value,passed\n")
        for name, value, passed in rows:
            fh.write(f"{name},{value:.17g},{passed}\n")
