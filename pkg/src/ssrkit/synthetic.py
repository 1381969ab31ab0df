"""Planted synthetic scenes with known dictionaries and sparse simplex codes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import LabelField, SpectralCube, Srf, box_srf, simulate_ms


@dataclass(frozen=True)
class PlantedScene:
    hs: SpectralCube
    ms: SpectralCube
    srf: Srf
    d_h: np.ndarray  # P x L planted HS atoms
    codes: np.ndarray  # L x (height*width), columns on the simplex
    base: np.ndarray  # P x (affine_dim+1) independent spectra generating the atoms
    mixing: np.ndarray  # (affine_dim+1) x L, d_h = base @ mixing
    overlap: tuple[int, int]
    labels: LabelField

    @property
    def d_m(self) -> np.ndarray:
        return self.srf.matrix @ self.d_h

    @property
    def abundances(self) -> np.ndarray:
        """Per-pixel fractions of the base spectra (nonnegative, sum to one)."""
        return self.mixing @ self.codes


def smooth_atoms(p: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Nonnegative spectra built from a few Gaussian absorption/reflection bumps."""
    grid = np.linspace(0.0, 1.0, p)
    atoms = np.empty((p, size))
    for i in range(size):
        curve = rng.uniform(0.05, 0.3) + rng.uniform(-0.15, 0.15) * grid
        for _ in range(rng.integers(2, 5)):
            center = rng.uniform(0.0, 1.0)
            width = rng.uniform(0.04, 0.2)
            curve += rng.uniform(-0.25, 0.5) * np.exp(-0.5 * ((grid - center) / width) ** 2)
        atoms[:, i] = curve
    atoms -= min(0.0, atoms.min()) - 0.02
    return atoms / atoms.max() * 0.95


def sparse_simplex_codes(size: int, n: int, sparsity: int, rng: np.random.Generator) -> np.ndarray:
    codes = np.zeros((size, n))
    for col in range(n):
        support = rng.choice(size, size=sparsity, replace=False)
        codes[support, col] = rng.dirichlet(np.ones(sparsity))
    return codes


def planted_scene(
    p: int = 40,
    q: int = 4,
    size: int = 30,
    height: int = 20,
    width: int = 40,
    overlap_width: int = 25,
    sparsity: int = 3,
    seed: int = 0,
    train_fraction: float = 0.2,
    affine_dim: int | None = None,
) -> PlantedScene:
    """Noise-free scene ``H = D_h* X*`` with MS simulated by a box SRF.

    The `size` atoms are convex mixtures of ``affine_dim + 1`` smooth base
    spectra, so they span an affine subspace of dimension `affine_dim`
    (default `q`). With ``affine_dim <= q`` each HS pixel is an affine
    function of its MS pixel, which sum-to-one codes can express and a
    rank-q linear map cannot.

    The overlap strip is the leftmost `overlap_width` columns. Class labels are
    the pixel's dominant base spectrum (renumbered contiguously); a random
    `train_fraction` of pixels is tagged train, the rest test.
    """
    rng = np.random.default_rng(seed)
    if affine_dim is None:
        affine_dim = q
    base = smooth_atoms(p, affine_dim + 1, rng)
    mixing = rng.dirichlet(np.full(affine_dim + 1, 0.5), size=size).T
    d_h = base @ mixing
    codes = sparse_simplex_codes(size, height * width, sparsity, rng)
    hs = SpectralCube.from_pixels(d_h @ codes, height, width)
    srf = box_srf(p, q)
    ms = simulate_ms(hs, srf)

    dominant = np.argmax(mixing @ codes, axis=0)
    labels = (np.unique(dominant, return_inverse=True)[1] + 1).reshape(height, width)
    split = np.where(rng.random((height, width)) < train_fraction, LabelField.TRAIN, LabelField.TEST).astype(np.int8)
    return PlantedScene(hs, ms, srf, d_h, codes, base, mixing, (0, overlap_width), LabelField(labels, split))
