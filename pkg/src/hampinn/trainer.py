"""Inverse-PINN fit of the coupling matrix.

The surrogate ``v_hat(t) = net(t / T)`` is trained jointly with the active
couplings to minimise

    L = lambda_model * mean_{grid, m} r_m(t)^2 + lambda_data * mean_{data, m} (v_hat - v)^2

with the equation-of-motion residual ``r(t) = dv_hat/dt - A(J) v_hat(t)``.
The couplings are optimised in units of ``omega_0`` so that every trainable
scalar has order-one scale.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import nn
from .pauli import LABELS, N_OBS, Preset, generator, generator_basis
from .sim import TrajectoryDataset, omega0, validate_couplings

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    """Every restart of a fit ended with a non-finite loss."""


class NonFiniteLoss(FloatingPointError):
    """Loss overflowed; distinct from a failure inside the gradient sweep."""


@dataclass
class TrainConfig:
    preset: Preset = Preset.GENERAL
    grid_size: int = 201
    lambda_data: float = 100.0
    lambda_model: float = 1.0
    lr: float = 1e-3
    lr_final: float = 1e-5
    iterations: int = 5_000
    restarts: int = 3
    seed: int = 0
    widths: tuple = nn.DEFAULT_WIDTHS
    # float32 halves the cost per step; derivative checks use float64
    dtype: str = "float32"
    # restrict the fit to a closed group of observables (see coupled_blocks)
    observables: Optional[tuple] = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_every: int = 100
    # converged when loss < loss_tol or improvement < stall_tol over stall_window
    loss_tol: float = 1e-6
    stall_tol: float = 1e-9
    stall_window: int = 1000
    # residual-degenerate: data term below floor while J keeps moving late on
    degenerate_data_floor: float = 1e-6
    degenerate_drift: float = 1e-3

    def __post_init__(self):
        self.preset = Preset.parse(self.preset)
        self.widths = tuple(int(w) for w in self.widths)
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if self.restarts < 1 or self.iterations < 1:
            raise ValueError("restarts and iterations must be >= 1")
        if self.lambda_data < 0 or self.lambda_model < 0:
            raise ValueError("loss weights must be non-negative")
        if self.lambda_data == 0 and self.lambda_model == 0:
            raise ValueError("at least one loss weight must be positive")
        if self.observables is not None:
            self.observables = tuple(self.observables)
            unknown = set(self.observables) - set(LABELS)
            if unknown or not self.observables:
                raise ValueError(f"bad observable subset {self.observables}")
            self.widths = self.widths[:-1] + (len(self.observables),)
        n_out = N_OBS if self.observables is None else len(self.observables)
        if self.widths[0] != 1 or self.widths[-1] != n_out:
            raise ValueError(f"network must map 1 -> {n_out}, got widths {self.widths}")


@dataclass
class FitResult:
    couplings: np.ndarray
    preset: Preset
    loss_total: float
    loss_model: float
    loss_data: float
    history: list
    seed: int
    restart: int
    converged: bool
    degenerate: bool
    wall_time: float
    failed_restarts: list = field(default_factory=list)
    true_couplings: Optional[np.ndarray] = None
    abs_errors: Optional[dict] = None
    rel_errors: Optional[dict] = None
    mae: Optional[float] = None
    model: Optional[nn.Network] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "model"}
        out["history"] = [list(row) for row in self.history]
        out["preset"] = self.preset.value
        out["couplings"] = self.couplings.tolist()
        if self.true_couplings is not None:
            out["true_couplings"] = self.true_couplings.tolist()
        return out


def mae(J_true, J_pred, active) -> float:
    """Mean relative absolute error over the active couplings."""
    J_true = np.asarray(J_true, dtype=float)
    J_pred = np.asarray(J_pred, dtype=float)
    if not len(active):
        raise ValueError("active set is empty")
    total = 0.0
    for p in active:
        exact = J_true[p.k, p.l]
        if exact == 0.0:
            raise ValueError(f"true coupling {p.label} is zero; relative error undefined")
        total += abs(exact - J_pred[p.k, p.l]) / abs(exact)
    return float(total / len(active))


def _surrogate(model, t_norm):
    """``(v, dv/dt_norm)`` from a network or from any callable with that contract."""
    if isinstance(model, nn.Network):
        return nn.forward_with_time_derivative(model, t_norm)
    v, dv = model(np.asarray(t_norm, dtype=float))
    return np.atleast_2d(v), np.atleast_2d(dv)


def model_residual(model, J, t, T: float = 1.0) -> np.ndarray:
    """Equation-of-motion residual ``dv_hat/dt - A(J) v_hat`` at times ``t``.

    ``model`` is a :class:`~hampinn.nn.Network` on normalized time ``t/T`` or a
    callable returning ``(v, dv/dt_norm)`` for normalized times.
    """
    v, dv = _surrogate(model, np.atleast_1d(np.asarray(t, dtype=float)) / T)
    A = generator(validate_couplings(J))
    return dv / T - v @ A.T


class PinnProblem:
    """Loss and gradient for one dataset; holds the fixed evaluation grid."""

    def __init__(self, dataset: TrajectoryDataset, config: TrainConfig):
        self.config = config
        self.preset = config.preset
        self.T = float(dataset.t_final)
        self.w0 = omega0(self.T)
        self.M = config.grid_size
        self.N = len(dataset)
        self.grid = np.linspace(0.0, self.T, self.M)
        self.data_times = dataset.times
        self.dtype = np.dtype(config.dtype)
        cols = (list(range(N_OBS)) if config.observables is None
                else [LABELS.index(o) for o in config.observables])
        self.n_out = len(cols)
        self.data = dataset.values[:, cols].astype(self.dtype)
        self.t_norm = (np.concatenate([self.grid, self.data_times]) / self.T).astype(self.dtype)
        self.active = self.preset.active
        flat = [4 * p.k + p.l for p in self.active]
        G = generator_basis()[flat] * self.w0
        if config.observables is not None:
            outside = np.delete(G[:, cols, :], cols, axis=2)
            if np.any(outside != 0):
                raise ValueError(f"observables {config.observables} are coupled to others "
                                 f"under preset {self.preset.name}")
            G = G[:, cols][:, :, cols]
        # generator slices for the active couplings, in omega_0 units
        self.G = G.astype(self.dtype)

    def couplings(self, j_norm) -> np.ndarray:
        J = np.zeros((4, 4))
        for value, p in zip(j_norm, self.active):
            J[p.k, p.l] = float(value) * self.w0
        return J

    def normalized(self, J) -> np.ndarray:
        J = validate_couplings(J, self.preset)
        return np.array([J[p.k, p.l] / self.w0 for p in self.active], dtype=self.dtype)

    def evaluate(self, model, j_norm, want_grad=True):
        """Return ``(total, model_term, data_term, grad_net, grad_j)``."""
        cfg = self.config
        M = self.M
        if want_grad:
            y, dy, tape = nn.forward_with_time_derivative(model, self.t_norm, record=True)
        else:
            y, dy = _surrogate(model, self.t_norm)
        A = np.tensordot(j_norm, self.G, axes=1)
        yg = y[:M]
        R = dy[:M] / self.T - yg @ A.T
        E = y[M:] - self.data
        cm = cfg.lambda_model / (self.n_out * M)
        cd = cfg.lambda_data / (self.n_out * self.N)
        loss_model = cm * float(np.sum(R * R))
        loss_data = cd * float(np.sum(E * E))
        total = loss_model + loss_data
        if not math.isfinite(total):
            raise NonFiniteLoss(f"loss is {total}")
        if not want_grad:
            return total, loss_model, loss_data, None, None
        gR = 2.0 * cm * R
        grad_y = np.empty_like(y)
        grad_y[:M] = -gR @ A
        grad_y[M:] = 2.0 * cd * E
        grad_dy = np.zeros_like(dy)
        grad_dy[:M] = gR / self.T
        grad_net = nn.backward(tape, grad_y, grad_dy)
        S = gR.T @ yg
        grad_j = -np.tensordot(self.G, S, axes=([1, 2], [0, 1]))
        return total, loss_model, loss_data, grad_net, grad_j


def loss_terms(model, J, dataset: TrajectoryDataset, config: Optional[TrainConfig] = None):
    """``(total, model_term, data_term)`` of the inverse-PINN objective."""
    config = config or TrainConfig(dtype="float64")
    problem = PinnProblem(dataset, config)
    total, lm, ld, _, _ = problem.evaluate(model, problem.normalized(J), want_grad=False)
    return total, lm, ld


def loss_total(model, J, dataset: TrajectoryDataset, config: Optional[TrainConfig] = None) -> float:
    return loss_terms(model, J, dataset, config)[0]


def _flat_views(model: nn.Network, n_j: int):
    """One buffer holding all trainables; returns it with network and J views."""
    theta = np.concatenate([model.flatten(), np.zeros(n_j, dtype=model.weights[0].dtype)])
    weights, biases, pos = [], [], 0
    for W, b in zip(model.weights, model.biases):
        weights.append(theta[pos:pos + W.size].reshape(W.shape))
        pos += W.size
        biases.append(theta[pos:pos + b.size])
        pos += b.size
    return theta, nn.Network(weights, biases), theta[pos:]


def _pack_grad(grad_net: nn.Network, grad_j) -> np.ndarray:
    parts = []
    for W, b in zip(grad_net.weights, grad_net.biases):
        parts += [W.ravel(), b]
    parts.append(grad_j)
    return np.concatenate(parts)


def restart_seed(seed: int, restart: int) -> int:
    return int(np.random.SeedSequence([seed, restart]).generate_state(1)[0])


def _cosine_lr(cfg: TrainConfig, step: int) -> float:
    frac = step / max(cfg.iterations - 1, 1)
    return cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + math.cos(math.pi * frac))


def _train_once(problem: PinnProblem, cfg: TrainConfig, seed: int) -> dict:
    model = nn.init_model(cfg.widths, seed, problem.dtype)
    theta, net, j = _flat_views(model, len(problem.active))
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2 = cfg.beta1, cfg.beta2
    history = []
    window_start = math.inf
    converged = False
    late_start = int(0.9 * cfg.iterations)
    j_late = None
    for step in range(cfg.iterations):
        total, lm, ld, g_net, g_j = problem.evaluate(net, j)
        if step == late_start:
            j_late = j.copy()
        if step % cfg.log_every == 0:
            history.append((step, total, lm, ld))
        if step % cfg.stall_window == 0:
            if window_start - total < cfg.stall_tol and step > 0:
                converged = True
            window_start = total
        if total < cfg.loss_tol:
            converged = True
        g = _pack_grad(g_net, g_j)
        lr = _cosine_lr(cfg, step)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        t = step + 1
        theta -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + cfg.eps)
    total, lm, ld, _, _ = problem.evaluate(net, j, want_grad=False)
    history.append((cfg.iterations, total, lm, ld))
    if total < cfg.loss_tol:
        converged = True
    drift = float(np.max(np.abs(j - j_late))) if j_late is not None else 0.0
    degenerate = ld < cfg.degenerate_data_floor and drift > cfg.degenerate_drift
    return dict(model=net.copy(), j=j.copy(), total=total, lm=lm, ld=ld,
                history=history, converged=converged, degenerate=degenerate)


def fit(dataset: TrajectoryDataset, config: Optional[TrainConfig] = None) -> FitResult:
    """Jointly fit the surrogate and the active couplings; best of ``restarts``."""
    config = config or TrainConfig()
    if len(dataset) < 2:
        raise ValueError("dataset needs at least 2 points")
    if dataset.preset is not None and dataset.preset is not config.preset:
        raise ValueError(f"dataset preset {dataset.preset.name} does not match "
                         f"config preset {config.preset.name}")
    if dataset.true_couplings is not None:
        validate_couplings(dataset.true_couplings, config.preset)
    problem = PinnProblem(dataset, config)
    start = time.perf_counter()
    best, best_idx, failed = None, -1, []
    for r in range(config.restarts):
        seed = restart_seed(config.seed, r)
        try:
            with np.errstate(over="raise", invalid="raise"):
                run = _train_once(problem, config, seed)
        except (NonFiniteLoss, FloatingPointError) as exc:
            log.warning("restart %d aborted: %s", r, exc)
            failed.append({"restart": r, "error": str(exc)})
            continue
        log.debug("restart %d: loss %.3e", r, run["total"])
        if best is None or run["total"] < best["total"]:
            best, best_idx = run, r
    if best is None:
        raise OptimizationError(f"all {config.restarts} restarts produced non-finite losses")
    J = problem.couplings(best["j"])
    result = FitResult(
        couplings=J, preset=config.preset, loss_total=best["total"], loss_model=best["lm"],
        loss_data=best["ld"], history=best["history"], seed=config.seed, restart=best_idx,
        converged=best["converged"], degenerate=best["degenerate"],
        wall_time=time.perf_counter() - start, failed_restarts=failed, model=best["model"],
    )
    if dataset.true_couplings is not None:
        truth = dataset.true_couplings
        result.true_couplings = truth.copy()
        result.abs_errors = {p.label: abs(truth[p.k, p.l] - J[p.k, p.l]) for p in problem.active}
        if all(truth[p.k, p.l] != 0 for p in problem.active):
            result.rel_errors = {p.label: result.abs_errors[p.label] / abs(truth[p.k, p.l])
                                 for p in problem.active}
            result.mae = mae(truth, J, problem.active)
    return result
