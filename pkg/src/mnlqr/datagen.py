"""Trajectory data and interval-moment matrices, by sampling or exactly.

The data-driven solver consumes four matrices of interval expectations
collected under the behavior input u = K0 x + e(s):

    eta_xbar  row k:  E[vecs(x(t_{k+1}))] - E[vecs(x(t_k))]
    eta_ubar  row k:  E[ integral vecs(u) ds ]        over [t_k, t_{k+1}]
    eta_xx    row k:  E[ integral kron(x, x) ds ]
    eta_xu    row k:  E[ integral kron(x, u) ds ]

Two engines produce them.  Monte Carlo mode simulates Euler-Maruyama paths

    x_{k+1} = x_k + (A x_k + B u_k) h + (C x_k + D u_k) sqrt(h) zeta_k

with per-path noise streams derived deterministically from (seed, path
index), and averages trapezoidal interval integrals across paths in a
fixed reduction order, so a rerun with the same config is bit-identical.
Exact mode propagates the closed-loop moment ODEs for m(s) = E[x] and
S(s) = E[x x.T] with a fixed-step classical Runge-Kutta scheme on the
same substep grid and integrates the same interval quantities with
matching-order (Simpson) weights; it has no sampling error and serves as
the verification oracle for the Monte Carlo engine.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    MomentAccuracyError,
    SimulationBlowupError,
)
from .stability import SystemModel, _as_matrix
from .vecops import gamma_of_K, svec_len, triu_pairs

# Paths per accumulation block.  Fixed (never derived from worker count or
# machine state) so that reduction order, and therefore every collected
# matrix, is reproducible bit for bit.
CHUNK = 1024

# State or second-moment entries beyond this magnitude abort a run.
BLOWUP_LIMIT = 1e12

WORKERS_ENV = "MNLQR_WORKERS"


def _worker_count(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV, "").strip()
        workers = int(env) if env else (os.cpu_count() or 1)
    if workers < 1:
        raise DimensionError(f"worker count must be >= 1, got {workers}")
    return workers


@dataclass(frozen=True)
class ExplorationSignal:
    """Deterministic multi-sine exploration, one row of sinusoids per input.

    e_i(t) = sum_j amplitudes[i, j] * sin(frequencies[i, j] * t + phases[i, j])
    """

    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        amp = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))
        freq = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
        ph = np.atleast_2d(np.asarray(self.phases, dtype=float))
        if not (amp.shape == freq.shape == ph.shape):
            raise DimensionError(
                "amplitudes, frequencies and phases must share one shape, got "
                f"{amp.shape}, {freq.shape}, {ph.shape}"
            )
        for name, arr in (("amplitudes", amp), ("frequencies", freq), ("phases", ph)):
            if not np.all(np.isfinite(arr)):
                raise DimensionError(f"{name} has non-finite entries")
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "phases", ph)

    @classmethod
    def zero(cls, m: int) -> "ExplorationSignal":
        z = np.zeros((m, 1))
        return cls(amplitudes=z, frequencies=np.ones((m, 1)), phases=z)

    @property
    def n_inputs(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.amplitudes == 0.0))

    def eval(self, t) -> np.ndarray:
        """e(t); shape (m,) for scalar t, else t.shape + (m,)."""
        t = np.asarray(t, dtype=float)
        phase = (
            self.frequencies[None, ...] * t.reshape(t.shape + (1, 1))
            + self.phases[None, ...]
        )
        out = np.sum(self.amplitudes[None, ...] * np.sin(phase), axis=-1)
        return out[0] if t.ndim == 0 else out.reshape(t.shape + (self.n_inputs,))


def eval_exploration(sig: ExplorationSignal, t) -> np.ndarray:
    """Evaluate the exploration signal at time(s) t."""
    return sig.eval(t)


@dataclass(frozen=True)
class RolloutConfig:
    """Grid, integrator step, sample size and initial states of a data run."""

    x0_list: np.ndarray
    t0: float = 0.0
    q: int = 60
    interval_len: float = 0.05
    sde_step: float = 1e-3
    paths: int = 10_000
    seed: int = 0

    def __post_init__(self):
        x0 = np.atleast_2d(np.asarray(self.x0_list, dtype=float))
        if x0.size == 0 or not np.all(np.isfinite(x0)):
            raise DimensionError("x0_list must hold at least one finite initial state")
        object.__setattr__(self, "x0_list", x0)
        if self.q < 1:
            raise DimensionError(f"q must be >= 1, got {self.q}")
        if self.paths < 1:
            raise DimensionError(f"paths must be >= 1, got {self.paths}")
        if not (self.sde_step > 0 and self.interval_len > 0):
            raise DimensionError("sde_step and interval_len must be positive")
        ratio = self.interval_len / self.sde_step
        if abs(ratio - round(ratio)) > 1e-12 * ratio:
            raise DimensionError(
                f"sde_step {self.sde_step} must divide interval_len "
                f"{self.interval_len} (ratio {ratio})"
            )
        if not (0 <= int(self.seed) < 2**64):
            raise DimensionError("seed must fit an unsigned 64-bit integer")

    @property
    def substeps(self) -> int:
        return int(round(self.interval_len / self.sde_step))

    @property
    def rollouts(self) -> int:
        return self.x0_list.shape[0]

    @property
    def grid(self) -> np.ndarray:
        return self.t0 + self.interval_len * np.arange(self.q + 1)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.sde_step * np.arange(self.q * self.substeps + 1)


@dataclass(frozen=True)
class TrajectoryBatch:
    """Dense state/input samples of every simulated path at every substep."""

    times: np.ndarray
    states: np.ndarray  # (total paths, T, n)
    inputs: np.ndarray  # (total paths, T, m)
    x0_index: np.ndarray  # (total paths,) rollout id per path


@dataclass(frozen=True)
class MomentTrace:
    """Exact first/second moments plus the interval integrals built from them."""

    times: np.ndarray
    grid: np.ndarray
    mean: np.ndarray  # (rollouts, T, n)
    second: np.ndarray  # (rollouts, T, n, n)
    vecs_grid: np.ndarray  # (rollouts, q+1, n(n+1)/2)
    int_xx: np.ndarray  # (rollouts, q, n*n)
    int_xu: np.ndarray  # (rollouts, q, n*m)
    int_uu: np.ndarray  # (rollouts, q, m(m+1)/2)
    sde_step: float


@dataclass(frozen=True)
class DataMatrices:
    """The four interval-expectation blocks feeding the regression."""

    eta_xbar: np.ndarray
    eta_ubar: np.ndarray
    eta_xx: np.ndarray
    eta_xu: np.ndarray
    grid: np.ndarray
    n: int
    m: int
    mode: str  # "monte_carlo", "exact" or "imported"
    sample_info: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = self.eta_xbar.shape[0]
        expected = {
            "eta_xbar": (rows, svec_len(self.n)),
            "eta_ubar": (rows, svec_len(self.m)),
            "eta_xx": (rows, self.n * self.n),
            "eta_xu": (rows, self.n * self.m),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DimensionError(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise DimensionError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        q = len(self.grid) - 1
        if q < 1 or rows % q != 0:
            raise DimensionError(
                f"row count {rows} is not a multiple of the interval count {q}"
            )

    @property
    def rows(self) -> int:
        return self.eta_xbar.shape[0]


def _quad_weights(substeps: int, h: float, rule: str) -> np.ndarray:
    """Composite quadrature weights over one interval of `substeps` steps."""
    if rule == "trapezoid":
        w = np.full(substeps + 1, h)
        w[0] = w[-1] = 0.5 * h
        return w
    if rule == "simpson":
        if substeps % 2 != 0:
            # composite Simpson needs an even step count per interval
            return _quad_weights(substeps, h, "trapezoid")
        w = np.empty(substeps + 1)
        w[0::2] = 2.0 * h / 3.0
        w[1::2] = 4.0 * h / 3.0
        w[0] = w[-1] = h / 3.0
        return w
    raise DimensionError(f"unknown quadrature rule {rule!r}")


def _path_noise(seed: int, path_id: int, steps: int) -> np.ndarray:
    rng = np.random.default_rng((int(seed), int(path_id)))
    return rng.standard_normal(steps)


def _simulate_chunk(model, K0, e_grid, x0, h, seed, path_ids, times):
    """Euler-Maruyama for one block of paths sharing the initial state x0."""
    c = len(path_ids)
    T = len(times)
    n, m = model.n, model.m
    zeta = np.empty((c, T - 1))
    for row, g in enumerate(path_ids):
        zeta[row] = _path_noise(seed, g, T - 1)
    A, B, C, D = model.A, model.B, model.C, model.D
    x = np.empty((c, T, n))
    u = np.empty((c, T, m))
    x[:, 0] = x0
    sqh = math.sqrt(h)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(T - 1):
            xk = x[:, k]
            uk = xk @ K0.T + e_grid[k]
            u[:, k] = uk
            step = xk + h * (xk @ A.T + uk @ B.T)
            step += (sqh * zeta[:, k])[:, None] * (xk @ C.T + uk @ D.T)
            per_path = np.abs(step).max(axis=1)
            bad = ~np.isfinite(per_path) | (per_path > BLOWUP_LIMIT)
            if bad.any():
                first = int(np.argmax(bad))
                raise SimulationBlowupError(
                    f"path {path_ids[first]} exceeded |x| = {BLOWUP_LIMIT:.0e} "
                    f"at t = {times[k + 1]:.6g}; the closed loop is unstable "
                    "or the step too coarse",
                    path=int(path_ids[first]),
                    time=float(times[k + 1]),
                )
            x[:, k + 1] = step
        u[:, T - 1] = x[:, T - 1] @ K0.T + e_grid[T - 1]
    return x, u


def _chunk_ranges(total: int):
    for start in range(0, total, CHUNK):
        yield start, min(start + CHUNK, total)


def _interval_partials(x, u, q, substeps, w, pairs_x, pairs_u):
    """Path-summed interval integrals and grid vecs values for one block."""
    nn = x.shape[2] * x.shape[2]
    nm = x.shape[2] * u.shape[2]
    xx = np.empty((q, nn))
    xu = np.empty((q, nm))
    uu = np.empty((q, len(pairs_u[0])))
    for k in range(q):
        sl = slice(k * substeps, k * substeps + substeps + 1)
        X = x[:, sl]
        U = u[:, sl]
        xx[k] = np.einsum("s,psi,psj->ij", w, X, X).ravel()
        xu[k] = np.einsum("s,psi,psj->ij", w, X, U).ravel()
        uu[k] = np.einsum("s,psk->k", w, U[:, :, pairs_u[0]] * U[:, :, pairs_u[1]])
    g = x[:, ::substeps]
    gvecs = (g[:, :, pairs_x[0]] * g[:, :, pairs_x[1]]).sum(axis=0)
    return gvecs, xx, xu, uu


def _check_dims(model: SystemModel, K0, sig: ExplorationSignal, cfg: RolloutConfig):
    K0 = _as_matrix(K0, "K0", (model.m, model.n))
    if sig.n_inputs != model.m:
        raise DimensionError(
            f"exploration signal has {sig.n_inputs} channels, the system has {model.m}"
        )
    if cfg.x0_list.shape[1] != model.n:
        raise DimensionError(
            f"initial states have dimension {cfg.x0_list.shape[1]}, expected {model.n}"
        )
    return K0


def simulate_paths(model: SystemModel, K0, sig: ExplorationSignal,
                   cfg: RolloutConfig, dump_file=None) -> TrajectoryBatch:
    """Simulate every configured path densely (all substep samples kept).

    Memory grows as paths * substeps; for large Monte Carlo runs prefer
    :func:`collect_data_mc_streamed`, which fuses simulation and
    accumulation.  Path g always consumes the same noise stream, so the
    same (seed, cfg) reproduces the batch bit for bit.
    """
    K0 = _check_dims(model, K0, sig, cfg)
    times = cfg.times
    e_grid = sig.eval(times)
    states = np.empty((cfg.rollouts * cfg.paths, len(times), model.n))
    inputs = np.empty((cfg.rollouts * cfg.paths, len(times), model.m))
    x0_index = np.repeat(np.arange(cfg.rollouts), cfg.paths)
    for r in range(cfg.rollouts):
        base = r * cfg.paths
        for lo, hi in _chunk_ranges(cfg.paths):
            ids = np.arange(base + lo, base + hi)
            x, u = _simulate_chunk(
                model, K0, e_grid, cfg.x0_list[r], cfg.sde_step, cfg.seed, ids, times
            )
            states[base + lo : base + hi] = x
            inputs[base + lo : base + hi] = u
    if dump_file is not None:
        _dump_paths(dump_file, times, states, inputs)
    return TrajectoryBatch(times=times, states=states, inputs=inputs, x0_index=x0_index)


def _dump_paths(fh, times, states, inputs, path_offset: int = 0):
    n, m = states.shape[2], inputs.shape[2]
    writer = csv.writer(fh)
    if fh.tell() == 0:
        writer.writerow(
            ["t", "path_id"]
            + [f"x_{i+1}" for i in range(n)]
            + [f"u_{j+1}" for j in range(m)]
        )
    for p in range(states.shape[0]):
        pid = path_offset + p
        for k, t in enumerate(times):
            writer.writerow(
                [repr(float(t)), pid]
                + [repr(float(v)) for v in states[p, k]]
                + [repr(float(v)) for v in inputs[p, k]]
            )


def _mc_matrices(n, m, cfg, gvecs, xx, xu, uu) -> DataMatrices:
    blocks_xbar, blocks_ubar, blocks_xx, blocks_xu = [], [], [], []
    for r in range(cfg.rollouts):
        gmean = gvecs[r] / cfg.paths
        blocks_xbar.append(np.diff(gmean, axis=0))
        blocks_ubar.append(uu[r] / cfg.paths)
        blocks_xx.append(xx[r] / cfg.paths)
        blocks_xu.append(xu[r] / cfg.paths)
    return DataMatrices(
        eta_xbar=np.vstack(blocks_xbar),
        eta_ubar=np.vstack(blocks_ubar),
        eta_xx=np.vstack(blocks_xx),
        eta_xu=np.vstack(blocks_xu),
        grid=cfg.grid,
        n=n,
        m=m,
        mode="monte_carlo",
        sample_info={
            "paths": cfg.paths,
            "seed": int(cfg.seed),
            "rollouts": cfg.rollouts,
            "sde_step": cfg.sde_step,
            "quadrature": "trapezoid",
        },
    )


def collect_data_mc(batch: TrajectoryBatch, cfg: RolloutConfig) -> DataMatrices:
    """Interval expectations from a dense batch, trapezoid over substeps.

    Accumulation runs over the same fixed path blocks as the streamed
    collector, so both agree bit for bit on identical trajectories.
    """
    n = batch.states.shape[2]
    m = batch.inputs.shape[2]
    T = cfg.q * cfg.substeps + 1
    if batch.states.shape[1] != T:
        raise DimensionError(
            f"batch has {batch.states.shape[1]} substep samples, config wants {T}"
        )
    w = _quad_weights(cfg.substeps, cfg.sde_step, "trapezoid")
    pairs_x, pairs_u = triu_pairs(n), triu_pairs(m)
    gvecs = np.zeros((cfg.rollouts, cfg.q + 1, svec_len(n)))
    xx = np.zeros((cfg.rollouts, cfg.q, n * n))
    xu = np.zeros((cfg.rollouts, cfg.q, n * m))
    uu = np.zeros((cfg.rollouts, cfg.q, svec_len(m)))
    for r in range(cfg.rollouts):
        base = r * cfg.paths
        for lo, hi in _chunk_ranges(cfg.paths):
            part = _interval_partials(
                batch.states[base + lo : base + hi],
                batch.inputs[base + lo : base + hi],
                cfg.q, cfg.substeps, w, pairs_x, pairs_u,
            )
            gvecs[r] += part[0]
            xx[r] += part[1]
            xu[r] += part[2]
            uu[r] += part[3]
    return _mc_matrices(n, m, cfg, gvecs, xx, xu, uu)


def collect_data_mc_streamed(model: SystemModel, K0, sig: ExplorationSignal,
                             cfg: RolloutConfig, workers: int | None = None,
                             dump_file=None) -> DataMatrices:
    """Fused simulate-and-accumulate Monte Carlo collection.

    Only one block of trajectories is alive per worker, so memory stays
    flat in the path count.  Blocks are computed independently (thread
    pool sized by `workers`, the MNLQR_WORKERS variable, or the core
    count) and reduced in fixed block order; the result never depends on
    scheduling and equals collect_data_mc(simulate_paths(...), ...).
    Path dumping forces sequential block processing to keep file order
    deterministic.
    """
    K0 = _check_dims(model, K0, sig, cfg)
    workers = _worker_count(workers)
    times = cfg.times
    e_grid = sig.eval(times)
    w = _quad_weights(cfg.substeps, cfg.sde_step, "trapezoid")
    pairs_x, pairs_u = triu_pairs(model.n), triu_pairs(model.m)

    def task(r, lo, hi):
        ids = np.arange(r * cfg.paths + lo, r * cfg.paths + hi)
        x, u = _simulate_chunk(
            model, K0, e_grid, cfg.x0_list[r], cfg.sde_step, cfg.seed, ids, times
        )
        part = _interval_partials(x, u, cfg.q, cfg.substeps, w, pairs_x, pairs_u)
        if dump_file is not None:
            _dump_paths(dump_file, times, x, u, path_offset=int(ids[0]))
        return part

    gvecs = np.zeros((cfg.rollouts, cfg.q + 1, svec_len(model.n)))
    xx = np.zeros((cfg.rollouts, cfg.q, model.n * model.n))
    xu = np.zeros((cfg.rollouts, cfg.q, model.n * model.m))
    uu = np.zeros((cfg.rollouts, cfg.q, svec_len(model.m)))
    jobs = [
        (r, lo, hi) for r in range(cfg.rollouts) for lo, hi in _chunk_ranges(cfg.paths)
    ]
    if workers == 1 or dump_file is not None:
        results = (task(*job) for job in jobs)
        for (r, _, _), part in zip(jobs, results):
            gvecs[r] += part[0]
            xx[r] += part[1]
            xu[r] += part[2]
            uu[r] += part[3]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(task, *job) for job in jobs]
            # reduce in submission order regardless of completion order
            for (r, _, _), fut in zip(jobs, futures):
                part = fut.result()
                gvecs[r] += part[0]
                xx[r] += part[1]
                xu[r] += part[2]
                uu[r] += part[3]
    return _mc_matrices(model.n, model.m, cfg, gvecs, xx, xu, uu)


def propagate_moments(model: SystemModel, K0, sig: ExplorationSignal,
                      cfg: RolloutConfig) -> MomentTrace:
    """Exact moment propagation of the explored closed loop.

    Integrates, per initial state,

        dm/ds = Ab m + B e(s)
        dS/ds = Ab S + S Ab' + Cb S Cb' + B e m' + m e' B'
                + Cb m e' D' + D e m' Cb' + D e e' D'

    with Ab = A + B K0 and Cb = C + D K0, using classical fixed-step RK4
    at sde_step, then forms the interval integrals of the regression
    integrands with Simpson weights on the stored substep values.  S is
    symmetrized every step; losing positive semidefiniteness beyond
    1e-8 * max(1, |S|) at a grid point raises MomentAccuracyError
    (the step is too coarse), and |S| beyond 1e12 raises
    SimulationBlowupError (the loop is mean-square unstable).
    """
    K0 = _check_dims(model, K0, sig, cfg)
    A, B, C, D = model.A, model.B, model.C, model.D
    n, m = model.n, model.m
    Ab = A + B @ K0
    Cb = C + D @ K0
    h = cfg.sde_step
    times = cfg.times
    T = len(times)
    half_times = cfg.t0 + 0.5 * h * np.arange(2 * T - 1)
    e_half = sig.eval(half_times)  # (2T-1, m)

    def rhs(mean, S, e):
        Be = B @ e
        De = D @ e
        dm = Ab @ mean + Be
        Bem = np.outer(Be, mean)
        CmeD = Cb @ np.outer(mean, e) @ D.T
        dS = (
            Ab @ S + S @ Ab.T + Cb @ S @ Cb.T
            + Bem + Bem.T + CmeD + CmeD.T + np.outer(De, De)
        )
        return dm, dS

    mean = np.empty((cfg.rollouts, T, n))
    second = np.empty((cfg.rollouts, T, n, n))
    for r in range(cfg.rollouts):
        mcur = cfg.x0_list[r].copy()
        Scur = np.outer(mcur, mcur)
        mean[r, 0] = mcur
        second[r, 0] = Scur
        for k in range(T - 1):
            e0, eh, e1 = e_half[2 * k], e_half[2 * k + 1], e_half[2 * k + 2]
            k1m, k1S = rhs(mcur, Scur, e0)
            k2m, k2S = rhs(mcur + 0.5 * h * k1m, Scur + 0.5 * h * k1S, eh)
            k3m, k3S = rhs(mcur + 0.5 * h * k2m, Scur + 0.5 * h * k2S, eh)
            k4m, k4S = rhs(mcur + h * k3m, Scur + h * k3S, e1)
            mcur = mcur + (h / 6.0) * (k1m + 2 * k2m + 2 * k3m + k4m)
            Scur = Scur + (h / 6.0) * (k1S + 2 * k2S + 2 * k3S + k4S)
            Scur = 0.5 * (Scur + Scur.T)
            if np.abs(Scur).max() > BLOWUP_LIMIT or not np.all(np.isfinite(Scur)):
                raise SimulationBlowupError(
                    f"second moment exceeded {BLOWUP_LIMIT:.0e} at t = "
                    f"{times[k + 1]:.6g}; the closed loop is mean-square unstable",
                    time=float(times[k + 1]),
                )
            mean[r, k + 1] = mcur
            second[r, k + 1] = Scur
        S_grid = second[r, :: cfg.substeps]
        eigmin = np.linalg.eigvalsh(S_grid).min(axis=1)
        tol = 1e-8 * np.maximum(1.0, np.abs(S_grid).max(axis=(1, 2)))
        if np.any(eigmin < -tol):
            where = int(np.argmax(eigmin < -tol))
            raise MomentAccuracyError(
                f"second moment lost positive semidefiniteness at t = "
                f"{cfg.grid[where]:.6g} (min eig {eigmin[where]:.3e}); "
                "reduce sde_step"
            )

    # interval integrals of the regression integrands, Simpson on substeps
    w = _quad_weights(cfg.substeps, h, "simpson")
    pairs_x, pairs_u = triu_pairs(n), triu_pairs(m)
    e_grid = e_half[0::2]  # (T, m)
    vecs_grid = np.empty((cfg.rollouts, cfg.q + 1, svec_len(n)))
    int_xx = np.empty((cfg.rollouts, cfg.q, n * n))
    int_xu = np.empty((cfg.rollouts, cfg.q, n * m))
    int_uu = np.empty((cfg.rollouts, cfg.q, svec_len(m)))
    for r in range(cfg.rollouts):
        S = second[r]
        mn = mean[r]
        xx_t = S.reshape(T, n * n)
        xu_t = (S @ K0.T + mn[:, :, None] * e_grid[:, None, :]).reshape(T, n * m)
        KSK = np.einsum("aj,tjk,bk->tab", K0, S, K0)
        Kme = np.einsum("aj,tj,tb->tab", K0, mn, e_grid)
        Ucc = KSK + Kme + Kme.transpose(0, 2, 1) + e_grid[:, :, None] * e_grid[:, None, :]
        uu_t = Ucc[:, pairs_u[0], pairs_u[1]]
        vecs_grid[r] = S[:: cfg.substeps][:, pairs_x[0], pairs_x[1]]
        for k in range(cfg.q):
            sl = slice(k * cfg.substeps, k * cfg.substeps + cfg.substeps + 1)
            int_xx[r, k] = w @ xx_t[sl]
            int_xu[r, k] = w @ xu_t[sl]
            int_uu[r, k] = w @ uu_t[sl]
    return MomentTrace(
        times=times,
        grid=cfg.grid,
        mean=mean,
        second=second,
        vecs_grid=vecs_grid,
        int_xx=int_xx,
        int_xu=int_xu,
        int_uu=int_uu,
        sde_step=h,
    )


def collect_data_exact(trace: MomentTrace) -> DataMatrices:
    """Assemble exact-mode DataMatrices from a propagated moment trace."""
    rollouts = trace.vecs_grid.shape[0]
    n = trace.second.shape[2]
    m = trace.int_xu.shape[2] // n
    return DataMatrices(
        eta_xbar=np.vstack([np.diff(trace.vecs_grid[r], axis=0) for r in range(rollouts)]),
        eta_ubar=np.vstack(list(trace.int_uu)),
        eta_xx=np.vstack(list(trace.int_xx)),
        eta_xu=np.vstack(list(trace.int_xu)),
        grid=trace.grid,
        n=n,
        m=m,
        mode="exact",
        sample_info={
            "rollouts": rollouts,
            "sde_step": trace.sde_step,
            "quadrature": "simpson",
        },
    )


def eta_Kx(data: DataMatrices, K) -> np.ndarray:
    """Interval moments of vecs(K x) from the stored kron(x, x) moments.

    This is the transform that lets one data batch serve every policy
    iterate: E[integral vecs(K x)] = eta_xx @ gamma_of_K(K).T, exactly.
    """
    K = np.asarray(K, dtype=float)
    if K.shape != (data.m, data.n):
        raise DimensionError(f"K must have shape {(data.m, data.n)}, got {K.shape}")
    return data.eta_xx @ gamma_of_K(K).T
