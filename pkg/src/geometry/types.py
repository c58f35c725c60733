from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from errors import BatchTooSmall, DimensionMismatch, NonFiniteValue, NotUnitNorm, ZeroVector

UNIT_TOL = 1e-5
ZERO_NORM = 1e-12

Batch = NDArray[np.float64]


def as_batch(rows: ArrayLike, *, unit: bool = True, name: str = "batch") -> Batch:
    """Validate an M×d matrix of embedding rows and return a read-only float64 copy.

    Args:
        rows: array-like of shape (M, d); a single vector is promoted to (1, d).
        unit: require every row to be unit-norm within UNIT_TOL. Raw (pre-normalization)
            rows only need to be finite and nonzero.
        name: used in error messages.
    """
    arr = np.array(rows, dtype=np.float64, copy=True)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise BatchTooSmall(f"{name} has no rows")
    if arr.shape[1] < 2:
        raise DimensionMismatch(f"{name} has dimension {arr.shape[1]}, need d >= 2")

    finite = np.isfinite(arr).all(axis=1)
    if not finite.all():
        raise NonFiniteValue(f"{name} contains non-finite values", row=int(np.argmin(finite)))

    norms = np.linalg.norm(arr, axis=1)
    if unit:
        bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
        if bad.size:
            raise NotUnitNorm(f"{name} row norm is {norms[bad[0]]:.8f}", row=int(bad[0]))
    else:
        zero = np.flatnonzero(norms < ZERO_NORM)
        if zero.size:
            raise ZeroVector(f"{name} has a zero row", row=int(zero[0]))

    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PairedEmbeddings:
    """Image-side and text-side embeddings paired by row index.

    With ``unit=False`` the rows are raw, pre-normalization vectors (e.g. projected
    features fed to the gradient routines).
    """

    image: Batch
    text: Batch
    unit: bool = field(default=True)

    def __post_init__(self) -> None:
        image = as_batch(self.image, unit=self.unit, name="image")
        text = as_batch(self.text, unit=self.unit, name="text")
        if image.shape != text.shape:
            raise DimensionMismatch(f"image batch {image.shape} and text batch {text.shape} differ in shape")
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "text", text)

    @classmethod
    def raw(cls, image: ArrayLike, text: ArrayLike) -> "PairedEmbeddings":
        return cls(np.asarray(image), np.asarray(text), unit=False)

    @property
    def size(self) -> int:
        return self.image.shape[0]

    @property
    def dim(self) -> int:
        return self.image.shape[1]

    def swapped(self) -> "PairedEmbeddings":
        return PairedEmbeddings(self.text, self.image, unit=self.unit)
