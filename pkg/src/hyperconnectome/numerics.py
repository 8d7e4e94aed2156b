"""Dense float64 matrix helpers, activations, a finite-difference gradient
checker and the adaptive-moment optimizer used to train the autoencoder.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The helper
functions below add the shape checking the model code relies on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Tuple

import numpy as np

from .errors import InstabilityError, ParameterError, ShapeError, TrainingError

Matrix = np.ndarray
Params = Dict[str, np.ndarray]
LossAndGrads = Tuple[float, Dict[str, np.ndarray]]


def as_matrix(a) -> Matrix:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def _shape_error(op: str, a: Matrix, b: Matrix) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a, b)
    return a @ b


def add(a: Matrix, b: Matrix) -> Matrix:
    if a.shape != b.shape:
        raise _shape_error("add", a, b)
    return a + b


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    if a.shape != b.shape:
        raise _shape_error("hadamard", a, b)
    return a * b


def transpose(a: Matrix) -> Matrix:
    return np.ascontiguousarray(a.T)


def scale(a: Matrix, c: float) -> Matrix:
    return a * float(c)


def relu(x: Matrix) -> Matrix:
    return np.maximum(x, 0.0)


def sigmoid(x) -> np.ndarray:
    """Logistic function, evaluated on the branch that cannot overflow."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x) -> np.ndarray:
    """log(1 + e^x) without overflow; ``softplus(-x) == -log sigmoid(x)``."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


# --------------------------------------------------------------------------
# gradient checking
# --------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: Tuple[int, ...]
    tol: float
    n_checked: int
    per_param: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def grad_check(
    f: Callable[[Params], LossAndGrads],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients from ``f`` against central differences.

    ``f(params)`` must return ``(loss, grads)`` where ``grads`` has one entry
    per parameter name with the parameter's shape. Every entry of every
    parameter is probed. The relative error of an entry is
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ParameterError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    work = {name: np.array(p, dtype=np.float64, copy=True) for name, p in params.items()}
    _, grads = f(work)
    missing = set(work) - set(grads)
    if missing:
        raise ShapeError(f"no analytic gradient for {sorted(missing)}")

    worst = (0.0, "", ())
    per_param: Dict[str, float] = {}
    n_checked = 0
    for name, p in work.items():
        g = np.asarray(grads[name])
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
        param_worst = 0.0
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            f_plus, _ = f(work)
            p[idx] = orig - eps
            f_minus, _ = f(work)
            p[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise InstabilityError(f"non-finite loss while probing {name}{list(idx)}")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            analytic = float(g[idx])
            denom = max(abs(analytic), abs(numeric), 1e-8)
            rel = abs(analytic - numeric) / denom
            n_checked += 1
            param_worst = max(param_worst, rel)
            if rel > worst[0]:
                worst = (rel, name, tuple(int(i) for i in idx))
        per_param[name] = param_worst
    return GradCheckReport(
        max_rel_error=worst[0],
        worst_param=worst[1],
        worst_index=worst[2],
        tol=tol,
        n_checked=n_checked,
        per_param=per_param,
    )


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adaptive_sgd_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> Tuple[Params, AdamState]:
    """One bias-corrected adaptive-moment update.

    Returns new parameter arrays and a new state; the inputs are not
    modified. Parameters without an entry in ``grads`` are left untouched.
    """
    if lr <= 0:
        raise ParameterError(f"learning rate must be positive, got {lr}")
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")

    t = state.step + 1
    new_params: Params = {}
    new_m: Dict[str, np.ndarray] = dict(state.m)
    new_v: Dict[str, np.ndarray] = dict(state.v)
    for name, p in params.items():
        if name not in grads:
            new_params[name] = p
            continue
        g = grads[name]
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = BETA1 * m + (1.0 - BETA1) * g
        v = BETA2 * v + (1.0 - BETA2) * (g * g)
        m_hat = m / (1.0 - BETA1**t)
        v_hat = v / (1.0 - BETA2**t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(step=t, m=new_m, v=new_v)
