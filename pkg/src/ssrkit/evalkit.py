"""Quality assessment of reconstructed spectra: reconstruction metrics,
1-NN classification scores and fully constrained unmixing scores."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .baselines import nearest_columns
from .numkit import FactorizationError, SumToOneSolver

log = logging.getLogger(__name__)

PSNR_CAP = 100.0
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass(frozen=True)
class ReconReport:
    rmse: float
    psnr: float
    sad: float
    ssim: float
    ergas: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.rmse, self.psnr, self.sad, self.ssim, self.ergas)

    def to_dict(self) -> dict:
        return asdict(self)


def spectral_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise angle between spectra.

    Uses ``2 atan2(|u - v|, |u + v|)`` on the unit vectors, which equals the
    arccos of the normalized inner product but stays accurate near zero
    (identical spectra give exactly 0).
    """
    u = a / np.linalg.norm(a, axis=0)
    v = b / np.linalg.norm(b, axis=0)
    return 2.0 * np.arctan2(np.linalg.norm(u - v, axis=0), np.linalg.norm(u + v, axis=0))


def band_psnr(reference: np.ndarray, estimate: np.ndarray) -> np.ndarray:
    mse = np.mean((reference - estimate) ** 2, axis=1)
    peak = np.max(reference, axis=1)
    with np.errstate(divide="ignore"):
        psnr = 10.0 * np.log10(peak**2 / mse)
    return np.minimum(np.where(mse == 0, PSNR_CAP, psnr), PSNR_CAP)


def band_ssim(reference: np.ndarray, estimate: np.ndarray) -> np.ndarray:
    """SSIM per band from global band statistics (no sliding window), dynamic range 1."""
    mx = reference.mean(axis=1)
    my = estimate.mean(axis=1)
    dx = reference - mx[:, None]
    dy = estimate - my[:, None]
    vx = np.mean(dx * dx, axis=1)
    vy = np.mean(dy * dy, axis=1)
    cxy = np.mean(dx * dy, axis=1)
    return ((2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2)) / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))


def recon_metrics(reference, estimate, geometry: tuple[int, int] | None = None) -> ReconReport:
    """RMSE, PSNR (dB), SAD (rad), SSIM and ERGAS between two ``P x N1`` pixel matrices.

    PSNR is averaged over bands with the band's reference maximum as peak and
    is capped at 100 dB. ERGAS uses a resolution ratio of 1. Pixels where
    either spectrum is all zero are left out of SAD; a zero reference band
    mean makes ERGAS NaN.
    """
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {estimate.shape}")
    if reference.ndim != 2 or reference.size == 0:
        raise ValueError("need nonempty P x N1 matrices")
    if geometry is not None and geometry[0] * geometry[1] != reference.shape[1]:
        raise ValueError(f"geometry {geometry} does not match {reference.shape[1]} pixels")

    rmse = math.sqrt(np.mean((reference - estimate) ** 2))
    psnr = float(np.mean(band_psnr(reference, estimate)))

    ok = (np.linalg.norm(reference, axis=0) > 0) & (np.linalg.norm(estimate, axis=0) > 0)
    if not np.all(ok):
        log.warning("SAD: %d zero-norm pixels excluded", int(np.sum(~ok)))
    sad = float(np.mean(spectral_angle(reference[:, ok], estimate[:, ok]))) if np.any(ok) else float("nan")

    ssim = float(np.mean(band_ssim(reference, estimate)))

    band_mean = reference.mean(axis=1)
    if np.any(band_mean == 0):
        log.warning("ERGAS undefined: reference band with zero mean")
        ergas = float("nan")
    else:
        band_rmse = np.sqrt(np.mean((reference - estimate) ** 2, axis=1))
        ergas = float(100.0 * math.sqrt(np.mean((band_rmse / band_mean) ** 2)))
    return ReconReport(rmse=rmse, psnr=psnr, sad=sad, ssim=ssim, ergas=ergas)


# --- classification ----------------------------------------------------------


def nn_classify(train_specs, train_labels, test_specs) -> np.ndarray:
    """1-NN labels under Euclidean distance; ties go to the lowest train index."""
    train_labels = np.asarray(train_labels)
    train_specs = np.asarray(train_specs, dtype=np.float64)
    if train_specs.shape[1] != train_labels.shape[0]:
        raise ValueError("one label per training column required")
    return train_labels[nearest_columns(np.asarray(test_specs, dtype=np.float64), train_specs)]


@dataclass(frozen=True)
class ClassReport:
    oa: float
    aa: float
    kappa: float
    per_class: list[float]
    classes: list[int]
    confusion: list[list[int]]

    def to_dict(self) -> dict:
        return asdict(self)


def scores_from_confusion(confusion, classes=None) -> ClassReport:
    """OA, AA and Cohen's kappa from a confusion matrix (rows = truth)."""
    cm = np.asarray(confusion, dtype=np.int64)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty test set")
    truth_counts = cm.sum(axis=1)
    pred_counts = cm.sum(axis=0)
    oa = np.trace(cm) / total
    present = truth_counts > 0
    recall = np.divide(np.diag(cm), truth_counts, out=np.zeros(len(cm)), where=present)
    aa = float(np.mean(recall[present]))
    p_e = float(np.dot(truth_counts, pred_counts)) / float(total) ** 2
    kappa = (oa - p_e) / (1.0 - p_e) if p_e < 1 else 1.0
    classes = list(range(1, len(cm) + 1)) if classes is None else [int(c) for c in classes]
    return ClassReport(
        oa=float(oa),
        aa=aa,
        kappa=float(kappa),
        per_class=[float(r) for r in recall[present]],
        classes=[c for c, keep in zip(classes, present) if keep],
        confusion=cm.tolist(),
    )


def confusion_matrix(predicted, truth, classes=None) -> tuple[np.ndarray, np.ndarray]:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if classes is None:
        classes = np.unique(np.concatenate([truth, predicted]))
    classes = np.asarray(classes)
    lookup = {c: i for i, c in enumerate(classes.tolist())}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth.tolist(), predicted.tolist()):
        cm[lookup[t], lookup[p]] += 1
    return cm, classes


def classification_scores(predicted, truth) -> ClassReport:
    if len(truth) == 0:
        raise ValueError("empty test set")
    cm, classes = confusion_matrix(predicted, truth)
    return scores_from_confusion(cm, classes)


# --- unmixing ------------------------------------------------------------------


class FclsuError(RuntimeError):
    """The active-set iteration did not terminate for some pixel."""


def _fclsu_pixel(gram: np.ndarray, rhs: np.ndarray, index: int, max_iter: int) -> np.ndarray:
    """Primal active-set method for min 1/2 a'Ga - c'a  s.t.  a >= 0, 1'a = 1.

    The working set holds indices fixed at zero; each subproblem over the
    free set is an equality-constrained QP with a closed-form solution.
    """
    k = len(rhs)
    free = np.ones(k, dtype=bool)
    a = np.full(k, 1.0 / k)
    for _ in range(max_iter):
        idx = np.flatnonzero(free)
        cand = _sum_to_one_subproblem(gram[np.ix_(idx, idx)], rhs[idx])
        if np.all(cand >= 0):
            a = np.zeros(k)
            a[idx] = cand
            grad = gram @ a - rhs
            nu = float(np.mean(grad[idx]))
            w = grad - nu  # multipliers of a >= 0 on the working set
            w[idx] = 0.0
            j = int(np.argmin(w))
            if w[j] >= -1e-12:
                return a
            free[j] = True
        else:
            # step from a toward cand until the first free coordinate hits zero
            cur = a[idx]
            neg = cand < 0
            ratios = cur[neg] / (cur[neg] - cand[neg])
            pick = int(np.argmin(ratios))
            step = ratios[pick]
            a_new = np.zeros(k)
            a_new[idx] = cur + step * (cand - cur)
            blocking = idx[np.flatnonzero(neg)[pick]]
            a_new[blocking] = 0.0
            free[blocking] = False
            a_new[free] += (1.0 - a_new.sum()) / free.sum()
            a = np.where(free, np.maximum(a_new, 0.0), 0.0)
    raise FclsuError(f"FCLSU did not converge for pixel {index}")


def _sum_to_one_subproblem(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return SumToOneSolver(gram)(rhs[:, None])[:, 0]
    except FactorizationError:
        # dependent endmembers: minimum-norm KKT solution
        k = len(rhs)
        kkt = np.block([[gram, np.ones((k, 1))], [np.ones((1, k)), np.zeros((1, 1))]])
        sol = np.linalg.lstsq(kkt, np.append(rhs, 1.0), rcond=None)[0]
        return sol[:k]


def fclsu(spectra, endmembers, max_iter: int | None = None) -> np.ndarray:
    """Fully constrained (nonnegative, sum-to-one) least squares abundances, ``K x N``."""
    spectra = np.asarray(spectra, dtype=np.float64)
    endmembers = np.asarray(endmembers, dtype=np.float64)
    if endmembers.ndim != 2 or endmembers.shape[1] < 1:
        raise ValueError("need a P x K endmember matrix with K >= 1")
    if spectra.shape[0] != endmembers.shape[0]:
        raise ValueError("spectra and endmembers must have the same number of bands")
    k = endmembers.shape[1]
    if k == 1:
        return np.ones((1, spectra.shape[1]))
    gram = endmembers.T @ endmembers
    rhs = endmembers.T @ spectra
    limit = max_iter if max_iter is not None else 10 * k + 10
    out = np.empty((k, spectra.shape[1]))
    for i in range(spectra.shape[1]):
        out[:, i] = _fclsu_pixel(gram, rhs[:, i], i, limit)
    return out


def fclsu_kkt_residual(abund, spectra, endmembers) -> np.ndarray:
    """Per-pixel KKT violation of the fully constrained problem.

    Maximum of primal infeasibility, stationarity error on the support,
    negative multipliers off the support and complementarity.
    """
    abund = np.asarray(abund, dtype=np.float64)
    grad = endmembers.T @ (endmembers @ abund - spectra)
    res = np.empty(abund.shape[1])
    for i in range(abund.shape[1]):
        a, g = abund[:, i], grad[:, i]
        support = a > 1e-12
        nu = float(np.mean(g[support])) if np.any(support) else float(np.min(g))
        w = g - nu
        res[i] = max(
            abs(a.sum() - 1.0),
            float(np.max(np.maximum(-a, 0.0))),
            float(np.max(np.abs(w[support]), initial=0.0)),
            float(np.max(np.maximum(-w[~support], 0.0), initial=0.0)),
        )
    return res


@dataclass(frozen=True)
class UnmixReport:
    armse: tuple[float, float]
    rrmse: tuple[float, float]
    asam: tuple[float, float]

    def to_dict(self) -> dict:
        return {k: {"mean": v[0], "std": v[1]} for k, v in asdict(self).items()}


def _mean_std(values: np.ndarray) -> tuple[float, float]:
    return float(np.mean(values)), float(np.std(values))


def unmix_scores(est_abund, true_abund, spectra, endmembers) -> UnmixReport:
    """Per-pixel abundance RMSE, spectral RMSE of ``E a_hat`` and spectral angle, as mean and std."""
    est_abund = np.asarray(est_abund, dtype=np.float64)
    true_abund = np.asarray(true_abund, dtype=np.float64)
    spectra = np.asarray(spectra, dtype=np.float64)
    remix = np.asarray(endmembers, dtype=np.float64) @ est_abund
    armse = np.sqrt(np.mean((est_abund - true_abund) ** 2, axis=0))
    rrmse = np.sqrt(np.mean((spectra - remix) ** 2, axis=0))
    asam = spectral_angle(spectra, remix)
    return UnmixReport(_mean_std(armse), _mean_std(rrmse), _mean_std(asam))
