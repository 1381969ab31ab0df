"""Coupled low-rank dictionary learning on the overlap region (D-Step).

Solves

    min  1/2 ||H_in - D_h X||^2 + alpha/2 ||M_in - D_m X||^2 + beta ||X||_1
         + gamma (||D_h||_* + ||D_m||_*)
    s.t. D_h >= 0, D_m >= 0, 1^T X = 1

by ADMM with splitting variables Z ~ X, J ~ D_h, K ~ D_m.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .datamodel import OverlapSplit
from .numkit import NonFiniteError, nuclear_norm, soft_threshold, solve_spd, sum_to_one_solve, svt
from .trace import AdmmTrace, SolverDivergence


@dataclass(frozen=True)
class DStepParams:
    alpha: float = 1.0
    beta: float = 1e-3
    gamma: float = 0.1
    dict_size: int | None = None
    max_iter: int = 500
    xi: float = 1.5
    eps: float = 1e-6
    mu0: float = 1e-3
    mu_max: float = 1e6
    seed: int = 0
    # alternative thresholds: beta/mu for the SVT step, alpha/mu for the l1 prox
    strict_paper: bool = False

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 < self.mu0 < self.mu_max:
            raise ValueError("need 0 < mu0 < mu_max")
        if self.xi <= 1:
            raise ValueError("xi must exceed 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")

    def resolve_dict_size(self, p: int, q: int, n: int) -> int:
        if self.dict_size is not None:
            size = int(self.dict_size)
        else:
            size = max(q, min(4 * q * math.ceil(p / q), n))
        if size < q:
            raise ValueError(f"dictionary size {size} is smaller than the MS channel count {q}")
        return size

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DictionaryPair:
    d_h: np.ndarray  # P x L
    d_m: np.ndarray  # Q x L

    @property
    def size(self) -> int:
        return self.d_h.shape[1]


@dataclass(frozen=True)
class DStepState:
    x: np.ndarray
    z: np.ndarray
    j: np.ndarray
    k: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    lambda3: np.ndarray
    mu: float
    iter: int = 0


def init_dstep(split: OverlapSplit, params: DStepParams) -> tuple[DictionaryPair, DStepState]:
    """Seed the dictionaries from overlap pixel pairs; X starts at uniform 1/L."""
    n = split.n
    if n < 1:
        raise ValueError("empty overlap: no training pixels")
    size = params.resolve_dict_size(split.p, split.q, n)
    rng = np.random.default_rng(params.seed)
    if size <= n:
        idx = rng.choice(n, size=size, replace=False)
        d_h = split.h_in[:, idx].copy()
        d_m = split.m_in[:, idx].copy()
    else:
        idx = rng.choice(n, size=size, replace=True)
        d_h = split.h_in[:, idx] + rng.uniform(0.0, 1e-3, size=(split.p, size))
        d_m = split.m_in[:, idx] + rng.uniform(0.0, 1e-3, size=(split.q, size))

    x = np.full((size, n), 1.0 / size)
    state = DStepState(
        x=x,
        z=np.zeros_like(x),
        j=np.zeros_like(d_h),
        k=np.zeros_like(d_m),
        lambda1=np.zeros_like(x),
        lambda2=np.zeros_like(d_h),
        lambda3=np.zeros_like(d_m),
        mu=params.mu0,
    )
    return DictionaryPair(d_h, d_m), state


def update_x(state: DStepState, dict_: DictionaryPair, split: OverlapSplit, params: DStepParams) -> np.ndarray:
    d_h, d_m, mu = dict_.d_h, dict_.d_m, state.mu
    a = d_h.T @ d_h + params.alpha * (d_m.T @ d_m) + mu * np.eye(dict_.size)
    b = d_h.T @ split.h_in + params.alpha * (d_m.T @ split.m_in) + mu * state.z + state.lambda1
    return sum_to_one_solve(a, b)


def _right_solve(rhs: np.ndarray, gram: np.ndarray) -> np.ndarray:
    # rhs @ inv(gram) for symmetric gram
    return solve_spd(gram, rhs.T).T


def update_dh(state: DStepState, split: OverlapSplit, x: np.ndarray) -> np.ndarray:
    mu = state.mu
    rhs = split.h_in @ x.T + mu * state.j + state.lambda2
    return _right_solve(rhs, x @ x.T + mu * np.eye(x.shape[0]))


def update_dm(state: DStepState, split: OverlapSplit, x: np.ndarray, alpha: float) -> np.ndarray:
    mu = state.mu
    rhs = alpha * (split.m_in @ x.T) + mu * state.k + state.lambda3
    return _right_solve(rhs, alpha * (x @ x.T) + mu * np.eye(x.shape[0]))


def update_jk(state: DStepState, dict_: DictionaryPair, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Nonnegative low-rank surrogates: SVT with threshold gamma/mu, then clamp at zero."""
    tau = gamma / state.mu
    j = np.maximum(0.0, svt(dict_.d_h - state.lambda2 / state.mu, tau))
    k = np.maximum(0.0, svt(dict_.d_m - state.lambda3 / state.mu, tau))
    return j, k


def update_z(state: DStepState, x: np.ndarray, beta: float) -> np.ndarray:
    return soft_threshold(x - state.lambda1 / state.mu, beta / state.mu)


def update_multipliers(state: DStepState, dict_: DictionaryPair, params: DStepParams) -> DStepState:
    """Dual ascent on the three splitting constraints, then grow mu."""
    mu = state.mu
    return replace(
        state,
        lambda1=state.lambda1 + mu * (state.z - state.x),
        lambda2=state.lambda2 + mu * (state.j - dict_.d_h),
        lambda3=state.lambda3 + mu * (state.k - dict_.d_m),
        mu=min(params.xi * mu, params.mu_max),
    )


def objective_dstep(dict_: DictionaryPair, x: np.ndarray, split: OverlapSplit, params: DStepParams) -> float:
    fit_h = 0.5 * np.sum((split.h_in - dict_.d_h @ x) ** 2)
    fit_m = 0.5 * params.alpha * np.sum((split.m_in - dict_.d_m @ x) ** 2)
    sparsity = params.beta * np.sum(np.abs(x))
    rank = params.gamma * (nuclear_norm(dict_.d_h) + nuclear_norm(dict_.d_m)) if params.gamma else 0.0
    return float(fit_h + fit_m + sparsity + rank)


def _check(name: str, value: np.ndarray, it: int) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise SolverDivergence(f"D-Step: non-finite values after the {name} update at iteration {it}")
    return value


def _step(name: str, it: int, fn, *args):
    # overflow inside an update surfaces as a divergence of that update
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            out = fn(*args)
    except NonFiniteError as exc:
        raise SolverDivergence(f"D-Step: non-finite values in the {name} update at iteration {it}") from exc
    return out


def run_dstep(split: OverlapSplit, params: DStepParams, callback=None) -> tuple[DictionaryPair, np.ndarray, AdmmTrace]:
    """Learn the coupled dictionaries and overlap codes.

    Returns the dictionaries clamped to be nonnegative, the codes X and the
    per-iteration trace. `callback(state, dictionary)` is invoked after every
    iteration.
    """
    dict_, state = init_dstep(split, params)
    trace = AdmmTrace()
    if params.strict_paper:
        rank_weight, l1_weight = params.beta, params.alpha
    else:
        rank_weight, l1_weight = params.gamma, params.beta

    for it in range(1, params.max_iter + 1):
        x = _check("X", _step("X", it, update_x, state, dict_, split, params), it)
        state = replace(state, x=x)
        d_h = _check("D_h", _step("D_h", it, update_dh, state, split, x), it)
        d_m = _check("D_m", _step("D_m", it, update_dm, state, split, x, params.alpha), it)
        dict_ = DictionaryPair(d_h, d_m)
        j, k = _step("J/K", it, update_jk, state, dict_, rank_weight)
        z = _check("Z", _step("Z", it, update_z, state, x, l1_weight), it)
        state = replace(state, j=_check("J", j, it), k=_check("K", k, it), z=z)

        mu_used = state.mu
        state = update_multipliers(state, dict_, params)
        state = replace(state, iter=it)

        r_zx = float(np.linalg.norm(state.z - x))
        r_jd = float(np.linalg.norm(state.j - d_h))
        r_km = float(np.linalg.norm(state.k - d_m))
        trace.record(objective_dstep(dict_, x, split, params), mu_used, z_x=r_zx, j_dh=r_jd, k_dm=r_km)
        if callback is not None:
            callback(state, dict_)
        if max(r_zx, r_jd, r_km) < params.eps:
            break

    final = DictionaryPair(np.maximum(0.0, dict_.d_h), np.maximum(0.0, dict_.d_m))
    if params.max_iter > 0 and not (np.any(final.d_h) and np.any(final.d_m)):
        raise SolverDivergence("D-Step collapsed to an all-zero dictionary")
    return final, state.x, trace
