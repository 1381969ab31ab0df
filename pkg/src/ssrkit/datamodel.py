"""Spectral image containers, MS simulation, overlap splitting and file I/O.

Cubes are stored band-sequential: ``data`` has shape ``(bands, height, width)``.
Pixel matrices have one column per pixel, taken in row-major ``(row, col)``
order over whichever pixels are selected.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numkit import as_matrix

log = logging.getLogger(__name__)


class CubeFormatError(ValueError):
    """Malformed cube header or payload."""


@dataclass(frozen=True)
class SpectralCube:
    data: np.ndarray  # (bands, height, width)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"cube data must be 3-D (bands, height, width), got {data.shape}")
        if data.shape[0] < 1:
            raise ValueError("cube must have at least one band")
        if not np.all(np.isfinite(data)):
            raise ValueError("cube contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def pixels(self) -> np.ndarray:
        """All pixel spectra as a ``bands x (height*width)`` matrix."""
        return self.data.reshape(self.bands, -1).astype(np.float64)

    @classmethod
    def from_pixels(cls, mat, height: int, width: int) -> "SpectralCube":
        mat = np.asarray(mat, dtype=np.float64)
        return cls(mat.reshape(mat.shape[0], height, width))


@dataclass(frozen=True)
class Srf:
    """Spectral response matrix, ``Q x P``, rows summing to one."""

    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix, "SRF")
        if np.any(m < 0):
            raise ValueError("SRF entries must be nonnegative")
        sums = m.sum(axis=1)
        if np.any(sums <= 0):
            raise ValueError("SRF has an all-zero row")
        if np.max(np.abs(sums - 1.0)) > 1e-8:
            raise ValueError("SRF rows must sum to 1; use Srf.normalized()")
        if m.shape[0] >= m.shape[1]:
            raise ValueError(f"SRF must map P bands to Q < P channels, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def normalized(cls, matrix) -> "Srf":
        m = as_matrix(matrix, "SRF")
        return cls(m / m.sum(axis=1, keepdims=True))

    @property
    def q(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]


def box_srf(p: int, q: int) -> Srf:
    """Synthetic SRF: each MS channel averages one contiguous run of HS bands.

    Channel edges are spread evenly over the band axis, so run lengths differ
    by at most one band.
    """
    if not 1 <= q < p:
        raise ValueError(f"need 1 <= q < p, got q={q}, p={p}")
    edges = np.linspace(0, p, q + 1).round().astype(int)
    m = np.zeros((q, p))
    for k in range(q):
        m[k, edges[k]:edges[k + 1]] = 1.0
    return Srf.normalized(m)


def simulate_ms(hs: SpectralCube, srf: Srf) -> SpectralCube:
    """Apply the SRF to every pixel spectrum."""
    if srf.p != hs.bands:
        raise ValueError(f"SRF expects {srf.p} bands, cube has {hs.bands}")
    out = srf.matrix @ hs.pixels()
    return SpectralCube.from_pixels(out, hs.height, hs.width)


@dataclass(frozen=True)
class OverlapSplit:
    """Paired pixel matrices for the overlap strip and the MS-only remainder.

    ``in_index`` / ``out_index`` are flat row-major pixel indices into the
    source grid, one per column of the corresponding matrices.
    """

    h_in: np.ndarray
    m_in: np.ndarray
    m_out: np.ndarray
    h_out_ref: np.ndarray | None
    height: int
    width: int
    overlap: tuple[int, int]
    in_index: np.ndarray = field(repr=False)
    out_index: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.h_in.shape[1] != self.m_in.shape[1]:
            raise ValueError("h_in and m_in must have the same number of pixels")
        if self.m_out.shape[1] != len(self.out_index) or self.h_in.shape[1] != len(self.in_index):
            raise ValueError("pixel index length does not match matrix columns")

    @property
    def n(self) -> int:
        return self.h_in.shape[1]

    @property
    def n1(self) -> int:
        return self.m_out.shape[1]

    @property
    def p(self) -> int:
        return self.h_in.shape[0]

    @property
    def q(self) -> int:
        return self.m_in.shape[0]

    @property
    def out_width(self) -> int:
        return self.width - (self.overlap[1] - self.overlap[0])

    def out_cube(self, mat) -> SpectralCube:
        """Lay out a matrix over the out-of-overlap pixels as a cube.

        The overlap strip is removed and the remaining columns keep their order,
        giving a ``height x (width - overlap width)`` grid.
        """
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape[1] != self.n1:
            raise ValueError(f"expected {self.n1} columns, got {mat.shape[1]}")
        return SpectralCube(mat.reshape(mat.shape[0], self.height, self.out_width))

    def assemble(self, in_mat, out_mat) -> np.ndarray:
        """Scatter column sets back into a ``bands x (height*width)`` matrix."""
        in_mat = np.asarray(in_mat, dtype=np.float64)
        out_mat = np.asarray(out_mat, dtype=np.float64)
        full = np.empty((in_mat.shape[0], self.height * self.width))
        full[:, self.in_index] = in_mat
        full[:, self.out_index] = out_mat
        return full


def split_overlap(hs: SpectralCube, ms: SpectralCube, overlap_cols) -> OverlapSplit:
    """Split co-registered HS/MS cubes at a vertical overlap strip.

    `overlap_cols` is a half-open column range ``(start, stop)``.
    """
    if (hs.height, hs.width) != (ms.height, ms.width):
        raise ValueError("HS and MS cubes must share width and height")
    start, stop = (int(c) for c in overlap_cols)
    if not 0 <= start < stop <= hs.width:
        raise ValueError(f"overlap columns [{start}, {stop}) empty or outside [0, {hs.width})")
    if stop - start == hs.width:
        log.warning("overlap covers the full width; no pixels left to reconstruct")

    rows, cols = np.indices((hs.height, hs.width))
    inside = ((cols >= start) & (cols < stop)).ravel()
    in_index = np.flatnonzero(inside)
    out_index = np.flatnonzero(~inside)

    h = hs.pixels()
    m = ms.pixels()
    return OverlapSplit(
        h_in=h[:, in_index],
        m_in=m[:, in_index],
        m_out=m[:, out_index],
        h_out_ref=h[:, out_index],
        height=hs.height,
        width=hs.width,
        overlap=(start, stop),
        in_index=in_index,
        out_index=out_index,
    )


# --- cube file format -------------------------------------------------------
# payload: little-endian float32, band-sequential; sidecar <stem>.json holds
# {width, height, bands, data_max}.


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_cube(cube: SpectralCube, path, data_max: float = 1.0) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"width": cube.width, "height": cube.height, "bands": cube.bands, "data_max": data_max}
    path.write_bytes(np.ascontiguousarray(cube.data, dtype="<f4").tobytes())
    sidecar_path(path).write_text(json.dumps(header, indent=2) + "\n")


def _read_cube_payload(path) -> tuple[np.ndarray, float]:
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise CubeFormatError(f"missing header {side}")
    try:
        header = json.loads(side.read_text())
        width, height, bands = (int(header[k]) for k in ("width", "height", "bands"))
        data_max = float(header.get("data_max", 1.0))
    except (KeyError, ValueError, TypeError) as exc:
        raise CubeFormatError(f"bad header {side}: {exc}") from exc
    if bands < 1 or width < 0 or height < 0:
        raise CubeFormatError(f"invalid geometry in {side}: bands={bands}, height={height}, width={width}")
    if not (math.isfinite(data_max) and data_max > 0):
        raise CubeFormatError(f"data_max must be positive, got {data_max}")

    raw = path.read_bytes()
    expected = 4 * width * height * bands
    if len(raw) != expected:
        raise CubeFormatError(f"{path}: payload has {len(raw)} bytes, header promises {expected}")
    data = np.frombuffer(raw, dtype="<f4").reshape(bands, height, width).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise CubeFormatError(f"{path}: payload contains non-finite values")
    return data, data_max


def load_cube(path, clip: bool = True) -> SpectralCube:
    """Read a cube and normalize it by the header's ``data_max``.

    Values that land outside [0, 1] after normalization are clipped with a
    warning unless `clip` is False, in which case they are an error.
    """
    data, data_max = _read_cube_payload(path)
    if data_max != 1.0:
        data = data / data_max
    if data.size and (data.min() < 0 or data.max() > 1):
        if not clip:
            raise CubeFormatError(f"{path}: values outside [0, 1] after normalization")
        log.warning("%s: clipping %d values outside [0, 1]", path, int(np.sum((data < 0) | (data > 1))))
        data = np.clip(data, 0.0, 1.0)
    return SpectralCube(data)


def save_matrix_cube(mat, path) -> None:
    """Store an arbitrary real matrix in cube format (bands = rows, height 1)."""
    mat = np.asarray(mat, dtype=np.float64)
    save_cube(SpectralCube(mat.reshape(mat.shape[0], 1, mat.shape[1])), path)


def load_matrix_cube(path) -> np.ndarray:
    """Inverse of :func:`save_matrix_cube`; no range normalization."""
    data, _ = _read_cube_payload(path)
    return data.reshape(data.shape[0], -1)


# --- CSV matrices ------------------------------------------------------------


def load_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric entry") from exc
            if len(rows[-1]) != len(rows[0]):
                raise ValueError(f"{path}:{lineno}: ragged row ({len(rows[-1])} vs {len(rows[0])} columns)")
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    return as_matrix(np.array(rows), str(path))


def save_matrix_csv(mat, path) -> None:
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in mat:
            w.writerow([repr(float(v)) for v in row])


def load_srf_csv(path) -> Srf:
    return Srf.normalized(load_matrix_csv(path))


@dataclass(frozen=True)
class LabelField:
    """Per-pixel class ids (0 = unlabeled) and a train/test split tag.

    ``split`` holds 0 (none), 1 (train) or 2 (test).
    """

    labels: np.ndarray  # (height, width) int
    split: np.ndarray  # (height, width) int8

    TRAIN = 1
    TEST = 2

    def __post_init__(self):
        if self.labels.shape != self.split.shape:
            raise ValueError("labels and split must have the same shape")
        ids = np.unique(self.labels[self.labels > 0])
        if ids.size and not np.array_equal(ids, np.arange(1, ids.size + 1)):
            raise ValueError(f"class ids must be contiguous from 1, got {ids.tolist()}")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def indices(self, which: int) -> np.ndarray:
        """Flat row-major indices of labelled pixels in the given split."""
        return np.flatnonzero(((self.split == which) & (self.labels > 0)).ravel())


def load_labels_csv(path, height: int, width: int) -> LabelField:
    """Read ``row,col,class_id,split`` records (an optional header line is skipped)."""
    labels = np.zeros((height, width), dtype=np.int64)
    split = np.zeros((height, width), dtype=np.int8)
    tags = {"train": LabelField.TRAIN, "test": LabelField.TEST}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected row,col,class_id,split")
            r, c, k = int(row[0]), int(row[1]), int(row[2])
            tag = row[3].strip().lower()
            if tag not in tags:
                raise ValueError(f"{path}:{lineno}: split must be train or test, got {tag!r}")
            if not (0 <= r < height and 0 <= c < width):
                raise ValueError(f"{path}:{lineno}: pixel ({r}, {c}) outside {height}x{width}")
            if split[r, c]:
                raise ValueError(f"{path}:{lineno}: pixel ({r}, {c}) listed twice")
            labels[r, c] = k
            split[r, c] = tags[tag]
    return LabelField(labels, split)


def save_labels_csv(field_: LabelField, path) -> None:
    names = {LabelField.TRAIN: "train", LabelField.TEST: "test"}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "class_id", "split"])
        for r, c in zip(*np.nonzero(field_.split)):
            w.writerow([int(r), int(c), int(field_.labels[r, c]), names[int(field_.split[r, c])]])


def write_pgm(band, path) -> None:
    """Plain (P2) PGM dump of one band, values in [0, 1] scaled to 0..255."""
    band = np.clip(np.asarray(band, dtype=np.float64), 0.0, 1.0)
    levels = np.rint(band * 255).astype(int)
    h, w = levels.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines += [" ".join(str(v) for v in row) for row in levels]
    Path(path).write_text("\n".join(lines) + "\n")
