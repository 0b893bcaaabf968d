"""Time-stepping for ODE / Ito / Stratonovich / RODE models.

Provides Euler-Maruyama (Ito), predictor-corrector stochastic Heun
(Stratonovich), classical RK4 (deterministic), pathwise RODE integration on
sampled parameter processes, the Stratonovich-to-Ito drift conversion, the
infinitesimal generator, and reproducible ensemble execution.

All steppers operate on states with the components on the last axis and
broadcast over leading batch axes; ensembles integrate whole path batches at
once.  Per-path arithmetic is elementwise along the batch axis, so results
are bitwise independent of how paths are grouped into worker chunks.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .noise import (
    DOMAIN_ENSEMBLE,
    DOMAIN_SAMPLER,
    NoisePath,
    ParameterProcess,
    _n_steps,
    stream,
)
from .vecalg import ScalarField

INTERPRETATIONS = ("ode", "ito", "stratonovich", "rode")

# scheme id -> model interpretation it integrates
SCHEMES = {
    "euler_maruyama": "ito",
    "heun": "stratonovich",
    "rk4": "ode",
    "rode_heun": "rode",
    "rode_euler": "rode",
}


class IntegrationError(RuntimeError):
    """Non-finite state encountered; carries the step index and partial data."""

    def __init__(self, message, step=None, time=None, times=None, states=None, path_index=None):
        super().__init__(message)
        self.step = step
        self.time = time
        self.times = times
        self.states = states
        self.path_index = path_index


@dataclass(frozen=True)
class ModelSpec:
    """A drift/diffusion model under a fixed interpretation.

    drift maps (t, x) -> state for ode/ito/stratonovich models and
    (t, x, eta) -> state for rode models.  diffusion maps (t, x) to an
    (n, l) matrix; diffusion_jacobian to the (n, l, n) tensor of
    d sigma[i,k] / d x[j] indexed [i, k, j].  All callables must broadcast
    over leading batch axes of x.
    """

    n: int
    noise_dim: int
    interpretation: str
    drift: Callable
    diffusion: Optional[Callable] = None
    diffusion_jacobian: Optional[Callable] = None
    drift_terms: tuple = ()
    eta_dim: int = 0
    eta_builder: Optional[Callable] = None
    name: str = "model"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.interpretation not in INTERPRETATIONS:
            raise ValueError(f"unknown interpretation {self.interpretation!r}")
        if self.interpretation in ("ito", "stratonovich"):
            if self.diffusion is None:
                raise ValueError(f"{self.interpretation} model needs a diffusion field")
        if self.interpretation in ("ode", "rode") and self.diffusion is not None:
            raise ValueError(f"{self.interpretation} model must not carry a state diffusion")


def validate_model(model: ModelSpec, x=None, t: float = 0.0, eta=None) -> None:
    """Probe drift/diffusion shapes at one point; raise ValueError on mismatch."""
    x = np.ones(model.n) if x is None else np.asarray(x, dtype=float)
    if model.interpretation == "rode":
        if eta is None:
            eta = 1.0 if model.eta_dim <= 1 else np.ones(model.eta_dim)
        fx = np.asarray(model.drift(t, x, eta))
    else:
        fx = np.asarray(model.drift(t, x))
    if fx.shape != x.shape:
        raise ValueError(f"drift shape {fx.shape} does not match state shape {x.shape}")
    if model.diffusion is not None:
        sig = np.asarray(model.diffusion(t, x))
        if sig.shape != (model.n, model.noise_dim):
            raise ValueError(
                f"diffusion shape {sig.shape}, expected {(model.n, model.noise_dim)}"
            )
    if model.diffusion_jacobian is not None:
        jac = np.asarray(model.diffusion_jacobian(t, x))
        expect = (model.n, model.noise_dim, model.n)
        if jac.shape != expect:
            raise ValueError(f"diffusion_jacobian shape {jac.shape}, expected {expect}")


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed states of one integrated path."""

    times: np.ndarray
    states: np.ndarray
    model_name: str = "model"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("states must carry one row per grid time")

    @property
    def n(self) -> int:
        return self.states.shape[-1]

    def functional_values(self, F: ScalarField) -> np.ndarray:
        return np.asarray(F.value(self.states))

    def to_csv(self, file, functionals: Sequence[ScalarField] = (), comment: str | None = None):
        names = [f.name for f in functionals]
        cols = [self.states[:, i] for i in range(self.n)]
        cols += [self.functional_values(f) for f in functionals]
        header = ",".join(["t"] + [f"x{i + 1}" for i in range(self.n)] + names)
        write_csv(file, header, [self.times] + cols, comment=comment)


@dataclass(frozen=True)
class EnsembleStats:
    """Per-time mean/variance of functionals over independent paths."""

    times: np.ndarray
    functional_names: tuple
    mean: np.ndarray      # shape (n_functionals, N+1)
    variance: np.ndarray  # population variance, same shape
    n_paths: int
    seed: int
    scheme: str
    model_name: str = "model"

    def to_csv(self, file, comment: str | None = None):
        header_parts = ["t"]
        cols = [self.times]
        for i, name in enumerate(self.functional_names):
            header_parts += [f"{name}_mean", f"{name}_var"]
            cols += [self.mean[i], self.variance[i]]
        write_csv(file, ",".join(header_parts), cols, comment=comment)


def write_csv(file, header: str, columns, comment: str | None = None):
    """Comma-separated columns at 17 significant digits with a mandatory header row."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(file, "w", newline="") as fh:
        if comment:
            for line in comment.rstrip("\n").split("\n"):
                fh.write(f"# {line}\n")
        fh.write(header + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _matvec(sig, v):
    return np.einsum("...il,...l->...i", sig, v)


def _check_finite(x, k, t, times, states):
    if np.isfinite(x).all():
        return
    if x.ndim > 1:
        bad = int(np.argwhere(~np.isfinite(x).all(axis=-1))[0][0])
        raise IntegrationError(
            f"non-finite state at step {k} (t={t:g}), path index {bad}",
            step=k, time=t, times=times, states=states, path_index=bad,
        )
    raise IntegrationError(
        f"non-finite state at step {k} (t={t:g})",
        step=k, time=t, times=times, states=states,
    )


def _run_steps(step, times, x0, record=True):
    """Drive a per-step update callable and collect states."""
    x = np.asarray(x0, dtype=float).copy()
    n_steps = len(times) - 1
    states = np.empty((n_steps + 1,) + x.shape) if record else None
    if record:
        states[0] = x
    for k in range(n_steps):
        t = times[k]
        h = times[k + 1] - times[k]
        x = step(k, t, h, x)
        _check_finite(x, k, t, times, states[: k + 2] if record else None)
        if record:
            states[k + 1] = x
    return states if record else x


def euler_maruyama(model: ModelSpec, x0, path: NoisePath) -> Trajectory:
    """Ito integration: x_{k+1} = x_k + f(t_k, x_k) h + sigma(t_k, x_k) dW_k."""
    _require(model, "ito")
    _check_path(model, path)
    states = _em_states(model, np.asarray(x0, dtype=float), path.times, path.increments)
    return Trajectory(times=path.times.copy(), states=states,
                      model_name=model.name, seed=path.seed)


def _em_states(model, x0, times, increments, record=True):
    f, sig = model.drift, model.diffusion

    def step(k, t, h, x):
        return x + f(t, x) * h + _matvec(sig(t, x), increments[k])

    return _run_steps(step, times, x0, record)


def heun_strat(model: ModelSpec, x0, path: NoisePath) -> Trajectory:
    """Stratonovich integration by the predictor-corrector stochastic Heun scheme.

    Predictor: xp = x + f(t, x) h + sigma(t, x) dW.
    Corrector: x' = x + (f(t, x) + f(t+h, xp)) h/2
                     + (sigma(t, x) + sigma(t+h, xp)) dW / 2.
    """
    _require(model, "stratonovich")
    _check_path(model, path)
    states = _heun_states(model, np.asarray(x0, dtype=float), path.times, path.increments)
    return Trajectory(times=path.times.copy(), states=states,
                      model_name=model.name, seed=path.seed)


def _heun_states(model, x0, times, increments, record=True):
    f, sig = model.drift, model.diffusion

    def step(k, t, h, x):
        dw = increments[k]
        fx = f(t, x)
        sx = sig(t, x)
        xp = x + fx * h + _matvec(sx, dw)
        return x + 0.5 * h * (fx + f(t + h, xp)) + 0.5 * _matvec(sx + sig(t + h, xp), dw)

    return _run_steps(step, times, x0, record)


def rk4(model: ModelSpec, x0, grid) -> Trajectory:
    """Classical 4th-order Runge-Kutta on a deterministic model."""
    _require(model, "ode")
    times = np.asarray(grid, dtype=float)
    states = _rk4_states(model, np.asarray(x0, dtype=float), times)
    return Trajectory(times=times.copy(), states=states, model_name=model.name)


def _rk4_states(model, x0, times, record=True):
    f = model.drift

    def step(k, t, h, x):
        k1 = f(t, x)
        k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = f(t + h, x + h * k3)
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    return _run_steps(step, times, x0, record)


def solve_rode(model: ModelSpec, x0, eta: ParameterProcess, scheme: str = "rode_heun") -> Trajectory:
    """Pathwise deterministic integration of dx/dt = f(t, x, eta_t).

    Default is Heun on the piecewise-linear interpolant of eta (the stage
    values are the sampled endpoints); 'rode_euler' freezes eta per step.
    """
    _require(model, "rode")
    if scheme not in ("rode_heun", "rode_euler"):
        raise ValueError(f"unknown RODE scheme {scheme!r}")
    _check_eta(model, eta)
    states = _rode_states(model, np.asarray(x0, dtype=float), eta.times, eta.values,
                          euler=(scheme == "rode_euler"))
    return Trajectory(times=eta.times.copy(), states=states, model_name=model.name)


def _rode_states(model, x0, times, eta_values, euler=False, record=True):
    f = model.drift

    if euler:
        def step(k, t, h, x):
            return x + h * f(t, x, eta_values[k])
    else:
        def step(k, t, h, x):
            k1 = f(t, x, eta_values[k])
            k2 = f(t + h, x + h * k1, eta_values[k + 1])
            return x + 0.5 * h * (k1 + k2)

    return _run_steps(step, times, x0, record)


def strat_to_ito(model: ModelSpec) -> ModelSpec:
    """Wong-Zakai conversion: add the correction drift, flip the interpretation.

    f_cor[i] = f[i] + 1/2 sum_k sum_j sigma[j,k] d sigma[i,k] / d x[j];
    the diffusion is unchanged.
    """
    _require(model, "stratonovich")
    if model.diffusion_jacobian is None:
        raise ValueError("strat_to_ito needs an analytic diffusion_jacobian")
    sig, jac, f = model.diffusion, model.diffusion_jacobian, model.drift

    def correction(t, x):
        return 0.5 * np.einsum("...jk,...ikj->...i", sig(t, x), jac(t, x))

    def drift(t, x):
        return f(t, x) + correction(t, x)

    terms = tuple(model.drift_terms) + (("wong-zakai", correction),)
    return ModelSpec(
        n=model.n,
        noise_dim=model.noise_dim,
        interpretation="ito",
        drift=drift,
        diffusion=sig,
        diffusion_jacobian=jac,
        drift_terms=terms,
        name=model.name + "_ito",
        params=dict(model.params),
    )


def apply_generator(model: ModelSpec, V: ScalarField, t: float, x) -> float:
    """Generator L V = grad V . f + 1/2 sum_ij (d2 V / dx_i dx_j) (sigma sigma^T)_ij.

    Fields here are time-independent, so the dV/dt term vanishes.
    """
    _require(model, "ito")
    if V.hessian is None:
        raise ValueError("apply_generator needs the Hessian of V")
    x = np.asarray(x, dtype=float)
    sig = np.asarray(model.diffusion(t, x))
    first = float(np.sum(V.gradient(x) * model.drift(t, x)))
    second = 0.5 * float(np.sum(V.hessian(x) * (sig @ sig.T)))
    return first + second


def integrate_path(model: ModelSpec, x0, scheme: str, path: NoisePath | None = None,
                   grid=None, eta: ParameterProcess | None = None) -> Trajectory:
    """Dispatch to the named scheme; used by convergence studies and the CLI."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; known: {sorted(SCHEMES)}")
    if scheme in ("euler_maruyama", "heun") and path is None:
        raise ValueError(f"scheme {scheme!r} needs a noise path")
    if scheme == "euler_maruyama":
        return euler_maruyama(model, x0, path)
    if scheme == "heun":
        return heun_strat(model, x0, path)
    if scheme == "rk4":
        if grid is None and path is None:
            raise ValueError("scheme 'rk4' needs a time grid or a path")
        return rk4(model, x0, grid if grid is not None else path.times)
    if eta is None:
        raise ValueError(f"scheme {scheme!r} needs a parameter process eta")
    return solve_rode(model, x0, eta, scheme=scheme)


def default_scheme(model: ModelSpec) -> str:
    for scheme, interp in SCHEMES.items():
        if interp == model.interpretation:
            return scheme
    raise ValueError(f"no scheme for interpretation {model.interpretation!r}")


def run_ensemble(
    model: ModelSpec,
    x0,
    scheme: str,
    n_paths: int,
    seed: int,
    functionals: Sequence[ScalarField],
    T: float,
    h: float,
    threads: int = 1,
    return_states: bool = False,
):
    """Integrate n_paths independent paths and reduce functional statistics.

    x0 is either one state shared by all paths or a sampler
    (index, Generator) -> state drawing path-specific initial conditions from
    the derived sampler stream.  Each path k uses its own derived noise
    stream, so the output is a pure function of (model, x0, scheme, n_paths,
    seed, functionals, T, h) and independent of the thread count.

    Returns EnsembleStats, or (EnsembleStats, states) with states of shape
    (n_paths, N+1, n) when return_states is set.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; known: {sorted(SCHEMES)}")
    if SCHEMES[scheme] != model.interpretation:
        raise ValueError(
            f"scheme {scheme!r} integrates {SCHEMES[scheme]} models, "
            f"not {model.interpretation}"
        )
    n_steps = _grid_steps(T, h)
    times = np.arange(n_steps + 1) * h

    def initial(k: int):
        if callable(x0):
            return np.asarray(x0(k, stream(seed, DOMAIN_SAMPLER, k)), dtype=float)
        return np.asarray(x0, dtype=float)

    def run_chunk(indices):
        x0b = np.stack([initial(k) for k in indices])
        if model.interpretation == "ode":
            return _rk4_states(model, x0b, times)
        if model.interpretation == "rode":
            etas = np.stack(
                [_path_eta(model, seed, k, n_steps, h, times) for k in indices], axis=1
            )
            return _rode_states(model, x0b, times, etas)
        incs = np.empty((n_steps, len(indices), model.noise_dim))
        for j, k in enumerate(indices):
            rng = stream(seed, DOMAIN_ENSEMBLE, k)
            incs[:, j, :] = rng.normal(0.0, np.sqrt(h), size=(n_steps, model.noise_dim))
        if model.interpretation == "ito":
            return _em_states(model, x0b, times, incs)
        return _heun_states(model, x0b, times, incs)

    chunks = np.array_split(np.arange(n_paths), max(1, min(threads, n_paths)))
    chunks = [c for c in chunks if len(c)]
    try:
        if len(chunks) == 1:
            results = [run_chunk(chunks[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                results = list(pool.map(run_chunk, chunks))
    except IntegrationError as err:
        raise IntegrationError(
            f"ensemble path aborted: {err}", step=err.step, time=err.time,
            path_index=err.path_index,
        ) from err
    states = np.concatenate(results, axis=1)  # (N+1, n_paths, n)

    names = tuple(f.name for f in functionals)
    mean = np.empty((len(names), n_steps + 1))
    var = np.empty_like(mean)
    for i, f in enumerate(functionals):
        vals = np.asarray(f.value(states))  # (N+1, n_paths)
        mean[i] = vals.mean(axis=1)
        var[i] = vals.var(axis=1)
    stats = EnsembleStats(
        times=times, functional_names=names, mean=mean, variance=var,
        n_paths=n_paths, seed=int(seed), scheme=scheme, model_name=model.name,
    )
    if return_states:
        return stats, np.swapaxes(states, 0, 1)
    return stats


def _path_eta(model, seed, k, n_steps, h, times):
    # builders receive a 1-dim driving path; vector eta processes go through
    # solve_rode with an explicitly constructed ParameterProcess
    if model.eta_builder is None:
        raise ValueError("RODE ensemble needs a model with an eta_builder")
    rng = stream(seed, DOMAIN_ENSEMBLE, k)
    incs = rng.normal(0.0, np.sqrt(h), size=(n_steps, 1))
    path = NoisePath(times=times.copy(), increments=incs, seed=int(seed), level=0)
    eta = model.eta_builder(path)
    _check_eta(model, eta)
    return np.asarray(eta.values)


def _grid_steps(T, h):
    if T <= 0 or h <= 0 or h > T:
        raise ValueError(f"need T > 0 and 0 < h <= T, got T={T}, h={h}")
    return _n_steps(T, h)


def _require(model: ModelSpec, interpretation: str):
    if model.interpretation != interpretation:
        raise ValueError(
            f"scheme expects a {interpretation} model, got {model.interpretation}"
        )


def _check_path(model: ModelSpec, path: NoisePath):
    if path.dims != model.noise_dim:
        raise ValueError(
            f"path has {path.dims} noise dimensions, model needs {model.noise_dim}"
        )


def _check_eta(model: ModelSpec, eta: ParameterProcess):
    if model.eta_dim and eta.dim != model.eta_dim:
        raise ValueError(
            f"parameter process has dimension {eta.dim}, model needs {model.eta_dim}"
        )
