"""Sparse coding of MS-only pixels on the learned MS dictionary (S-Step) and
HS reconstruction with the paired HS dictionary."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .datamodel import OverlapSplit, SpectralCube
from .dictlearn import DictionaryPair, DStepParams, run_dstep
from .numkit import NonFiniteError, SumToOneSolver, soft_threshold
from .trace import AdmmTrace, SolverDivergence


@dataclass(frozen=True)
class SStepParams:
    eta: float = 1e-4
    max_iter: int = 500
    xi: float = 1.5
    eps: float = 1e-6
    rho0: float = 1e-3
    rho_max: float = 1e6
    block_size: int = 4096

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 < self.rho0 < self.rho_max:
            raise ValueError("need 0 < rho0 < rho_max")
        if self.xi <= 1:
            raise ValueError("xi must exceed 1")
        if self.max_iter < 0 or self.block_size < 1:
            raise ValueError("max_iter must be >= 0 and block_size >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SStepState:
    y: np.ndarray
    o: np.ndarray
    delta: np.ndarray
    rho: float
    iter: int = 0


def init_sstep(size: int, n1: int, params: SStepParams) -> SStepState:
    y = np.full((size, n1), 1.0 / size)
    return SStepState(y=y, o=np.zeros_like(y), delta=np.zeros_like(y), rho=params.rho0)


def update_y(state: SStepState, d_m: np.ndarray, m_out: np.ndarray, params: SStepParams) -> np.ndarray:
    """Sum-to-one constrained least squares, solved in column blocks.

    The problem separates over pixels, so blocking only bounds temporaries.
    """
    size = d_m.shape[1]
    solve = SumToOneSolver(d_m.T @ d_m + state.rho * np.eye(size))
    y = np.empty_like(state.o)
    for lo in range(0, m_out.shape[1], params.block_size):
        hi = lo + params.block_size
        b = d_m.T @ m_out[:, lo:hi] + state.rho * state.o[:, lo:hi] + state.delta[:, lo:hi]
        y[:, lo:hi] = solve(b)
    return y


def update_o(state: SStepState, eta: float) -> np.ndarray:
    return soft_threshold(state.y - state.delta / state.rho, eta / state.rho)


def update_delta(state: SStepState, params: SStepParams) -> SStepState:
    return replace(
        state,
        delta=state.delta + state.rho * (state.o - state.y),
        rho=min(params.xi * state.rho, params.rho_max),
    )


def objective_sstep(y: np.ndarray, d_m: np.ndarray, m_out: np.ndarray, eta: float) -> float:
    return float(0.5 * np.sum((m_out - d_m @ y) ** 2) + eta * np.sum(np.abs(y)))


def run_sstep(m_out, d_m, params: SStepParams, callback=None) -> tuple[np.ndarray, AdmmTrace]:
    """Encode `m_out` on `d_m` with sum-to-one, l1-regularized codes.

    `callback(state)` is invoked after every iteration.
    """
    m_out = np.asarray(m_out, dtype=np.float64)
    d_m = np.asarray(d_m, dtype=np.float64)
    if m_out.ndim != 2 or m_out.shape[1] == 0:
        raise ValueError("m_out must be a nonempty Q x N1 matrix")
    if d_m.shape[0] != m_out.shape[0]:
        raise ValueError(f"dictionary has {d_m.shape[0]} channels, data has {m_out.shape[0]}")

    state = init_sstep(d_m.shape[1], m_out.shape[1], params)
    trace = AdmmTrace()
    for it in range(1, params.max_iter + 1):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                y = update_y(state, d_m, m_out, params)
        except NonFiniteError as exc:
            raise SolverDivergence(f"S-Step: non-finite values in the Y update at iteration {it}") from exc
        if not np.all(np.isfinite(y)):
            raise SolverDivergence(f"S-Step: non-finite values after the Y update at iteration {it}")
        state = replace(state, y=y)
        o = update_o(state, params.eta)
        if not np.all(np.isfinite(o)):
            raise SolverDivergence(f"S-Step: non-finite values after the O update at iteration {it}")
        state = replace(state, o=o)
        rho_used = state.rho
        state = replace(update_delta(state, params), iter=it)

        residual = float(np.linalg.norm(state.o - state.y))
        trace.record(objective_sstep(y, d_m, m_out, params.eta), rho_used, o_y=residual)
        if callback is not None:
            callback(state)
        if residual < params.eps:
            break
    return state.y, trace


def reconstruct(d_h, y) -> np.ndarray:
    """HS spectra for the coded pixels, ``D_h @ Y`` (not clamped)."""
    d_h = np.asarray(d_h, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if d_h.shape[1] != y.shape[0]:
        raise ValueError(f"dictionary has {d_h.shape[1]} atoms, codes have {y.shape[0]} rows")
    return d_h @ y


@dataclass(frozen=True)
class PipelineResult:
    cube: SpectralCube  # reconstruction over the out-of-overlap grid
    estimate: np.ndarray  # P x N1, unclamped
    dictionary: DictionaryPair
    x: np.ndarray
    y: np.ndarray
    dstep_trace: AdmmTrace
    sstep_trace: AdmmTrace


def jslol_pipeline(split: OverlapSplit, dparams: DStepParams, sparams: SStepParams) -> PipelineResult:
    """Learn dictionaries on the overlap, code the MS-only pixels, reconstruct HS."""
    dictionary, x, dtrace = run_dstep(split, dparams)
    if split.n1 == 0:
        empty = np.zeros((split.p, 0))
        y = np.zeros((dictionary.size, 0))
        return PipelineResult(split.out_cube(empty), empty, dictionary, x, y, dtrace, AdmmTrace())
    y, strace = run_sstep(split.m_out, dictionary.d_m, sparams)
    estimate = reconstruct(dictionary.d_h, y)
    return PipelineResult(split.out_cube(estimate), estimate, dictionary, x, y, dtrace, strace)
