import json
import logging
import os
import struct
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from errors import (
    BadMagic,
    ConfigError,
    DimensionMismatch,
    NonFiniteValue,
    NotUnitNorm,
    TruncatedFile,
    UnsupportedDtype,
)
from geometry.types import PairedEmbeddings, as_batch

logger = logging.getLogger(__name__)

MAGIC = b"EMB1"
VERSION = 1
DTYPE_F32 = 0
HEADER = struct.Struct("<4sHBII")

# rows within this band of unit norm are kept bit-exact
RENORM_TOL = 1e-6
LOAD_TOL = 1e-3


def encode_emb(rows: ArrayLike, *, unit: bool = True) -> bytes:
    batch = as_batch(rows, unit=unit) if unit else np.asarray(rows, dtype=np.float64)
    if batch.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {batch.shape}")
    finite = np.isfinite(batch).all(axis=1)
    if not finite.all():
        raise NonFiniteValue("cannot store non-finite values", row=int(np.argmin(finite)))
    m, d = batch.shape
    return HEADER.pack(MAGIC, VERSION, DTYPE_F32, m, d) + batch.astype("<f4").tobytes()


def decode_emb(data: bytes, *, source: str = "<bytes>", unit: bool = True) -> tuple[NDArray[np.float64], int]:
    """Parse one EMB1 section from the start of ``data``.

    Returns the float64 matrix and the number of bytes consumed. With ``unit`` set,
    rows are checked against LOAD_TOL and re-normalized when off by more than RENORM_TOL.
    """
    if len(data) < HEADER.size:
        raise TruncatedFile(f"{source}: header needs {HEADER.size} bytes, found {len(data)}")
    magic, version, dtype, m, d = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"{source}: expected magic {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise UnsupportedDtype(f"{source}: unsupported format version {version}")
    if dtype != DTYPE_F32:
        raise UnsupportedDtype(f"{source}: unsupported dtype code {dtype}")

    end = HEADER.size + m * d * 4
    if len(data) < end:
        raise TruncatedFile(f"{source}: payload needs {m * d * 4} bytes, found {len(data) - HEADER.size}")
    rows = np.frombuffer(data, dtype="<f4", count=m * d, offset=HEADER.size).astype(np.float64).reshape(m, d)

    finite = np.isfinite(rows).all(axis=1)
    if not finite.all():
        raise NonFiniteValue(f"{source}: non-finite value", row=int(np.argmin(finite)))

    if unit:
        norms = np.linalg.norm(rows, axis=1)
        off = np.abs(norms - 1.0)
        bad = np.flatnonzero(off >= LOAD_TOL)
        if bad.size:
            raise NotUnitNorm(f"{source}: row norm {norms[bad[0]]:.6f} is not unit", row=int(bad[0]))
        renorm = off > RENORM_TOL
        if renorm.any():
            logger.debug(f"{source}: re-normalizing {int(renorm.sum())} rows")
            rows[renorm] /= norms[renorm, None]
    return rows, end


def write_emb(path: Path | str, rows: ArrayLike, *, unit: bool = True) -> None:
    path = Path(path)
    payload = encode_emb(rows, unit=unit)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
    logger.debug(f"Wrote {len(payload)} bytes to {path}")


def read_emb(path: Path | str, *, unit: bool = True) -> NDArray[np.float64]:
    path = Path(path)
    data = path.read_bytes()
    rows, consumed = decode_emb(data, source=str(path), unit=unit)
    if consumed != len(data):
        raise TruncatedFile(f"{path}: {len(data) - consumed} unexpected bytes after the payload")
    return rows


def load_pair(image_path: Path | str, text_path: Path | str) -> PairedEmbeddings:
    image = read_emb(image_path)
    text = read_emb(text_path)
    if image.shape != text.shape:
        raise DimensionMismatch(f"{image_path} has shape {image.shape} but {text_path} has shape {text.shape}")
    return PairedEmbeddings(image, text)


class PairingManifest(BaseModel):
    """JSON document naming the two embedding files of a paired set."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    image_emb: Path
    text_emb: Path
    names: list[str] | None = None

    @field_validator("names")
    @classmethod
    def unique_names(cls, v: list[str] | None) -> list[str] | None:
        if v is not None and len(set(v)) != len(v):
            raise ValueError("pair names must be unique")
        return v

    @classmethod
    def load(cls, path: Path | str) -> "PairingManifest":
        path = Path(path)
        try:
            manifest = cls.model_validate_json(path.read_text())
        except ValidationError as e:
            raise ConfigError(f"{path}: invalid manifest: {e}") from e
        # relative entries are relative to the manifest itself
        base = path.parent
        return manifest.model_copy(
            update={
                "image_emb": manifest.image_emb if manifest.image_emb.is_absolute() else base / manifest.image_emb,
                "text_emb": manifest.text_emb if manifest.text_emb.is_absolute() else base / manifest.text_emb,
            }
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.model_dump(mode="json"), indent=2))

    def pairs(self) -> PairedEmbeddings:
        P = load_pair(self.image_emb, self.text_emb)
        if self.names is not None and len(self.names) != P.size:
            raise DimensionMismatch(f"manifest lists {len(self.names)} names for {P.size} pairs")
        return P
