"""Reference spectral super-resolution methods.

* pixel-wise copy: nearest overlap pixel in MS space donates its HS spectrum
* linear regression from MS to HS channels, fitted on the overlap
* sparse coding with the overlap MS pixels themselves as the dictionary
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import OverlapSplit
from .numkit import FactorizationError, solve_spd
from .sparsecode import SStepParams, reconstruct, run_sstep


def nearest_columns(queries: np.ndarray, refs: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Index of the Euclidean-nearest column of `refs` for every column of `queries`.

    Distances are computed from explicit differences (not the expanded dot
    product form) so exact ties stay exact; ties go to the lowest index.
    """
    queries = np.asarray(queries, dtype=np.float64)
    refs = np.asarray(refs, dtype=np.float64)
    if refs.shape[1] == 0:
        raise ValueError("no reference columns")
    out = np.empty(queries.shape[1], dtype=np.int64)
    step = max(1, chunk * 1024 // max(1, refs.shape[1] * refs.shape[0]))
    for lo in range(0, queries.shape[1], step):
        q = queries[:, lo:lo + step]
        d = np.sum((q[:, :, None] - refs[:, None, :]) ** 2, axis=0)
        out[lo:lo + step] = np.argmin(d, axis=1)
    return out


def pwc(split: OverlapSplit) -> np.ndarray:
    """Copy the HS spectrum of the MS-nearest overlap pixel."""
    if split.n == 0:
        raise ValueError("empty overlap")
    return split.h_in[:, nearest_columns(split.m_out, split.m_in)]


@dataclass(frozen=True)
class RegressionModel:
    t: np.ndarray  # P x Q
    ridge: float


def fit_regression(split: OverlapSplit, ridge: float = 1e-6) -> RegressionModel:
    """Ridge least squares ``T = H_in M_in^T (M_in M_in^T + ridge I)^-1``."""
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    gram = split.m_in @ split.m_in.T + ridge * np.eye(split.q)
    try:
        t = solve_spd(gram, split.m_in @ split.h_in.T).T
    except FactorizationError as exc:
        raise FactorizationError("regression system is singular; use ridge > 0") from exc
    return RegressionModel(t=t, ridge=ridge)


def regression_objective(model_t: np.ndarray, split: OverlapSplit, ridge: float) -> float:
    return float(np.sum((split.h_in - model_t @ split.m_in) ** 2) + ridge * np.sum(model_t**2))


def apply_regression(model: RegressionModel, m_out) -> np.ndarray:
    return model.t @ np.asarray(m_out, dtype=np.float64)


@dataclass(frozen=True)
class MsDictionaryResult:
    estimate: np.ndarray
    codes: np.ndarray
    atoms: np.ndarray  # overlap column indices used as atoms


def ms_dictionary_baseline(
    split: OverlapSplit, sparams: SStepParams, atom_budget: int | None = None, seed: int = 0
) -> MsDictionaryResult:
    """Sparse-code MS-only pixels on sampled overlap MS pixels, reconstruct with their HS partners."""
    if split.n == 0:
        raise ValueError("empty overlap")
    budget = split.n if atom_budget is None else int(atom_budget)
    if not 1 <= budget <= split.n:
        raise ValueError(f"atom budget must lie in [1, {split.n}], got {budget}")
    rng = np.random.default_rng(seed)
    atoms = np.sort(rng.choice(split.n, size=budget, replace=False))
    d_m = split.m_in[:, atoms]
    d_h = split.h_in[:, atoms]
    codes, _ = run_sstep(split.m_out, d_m, sparams)
    return MsDictionaryResult(estimate=reconstruct(d_h, codes), codes=codes, atoms=atoms)
