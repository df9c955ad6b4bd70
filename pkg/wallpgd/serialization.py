"""Bit-exact array payloads for the JSON envelopes of bases and PGD models."""
import base64
import os
import tempfile
from pathlib import Path
from typing import List

import numpy as np
from pydantic import BaseModel, Field

from .errors import ModelFormatError


class ArrayPayload(BaseModel):
    shape: List[int]
    dtype: str = "<f8"
    data: str = Field(..., description="base64 of the little-endian float64 buffer")

    @classmethod
    def encode(cls, arr: np.ndarray) -> "ArrayPayload":
        arr = np.ascontiguousarray(arr, dtype="<f8")
        return cls(shape=list(arr.shape), data=base64.b64encode(arr.tobytes()).decode("ascii"))

    def decode(self) -> np.ndarray:
        if self.dtype != "<f8":
            raise ModelFormatError(f"Unsupported array dtype '{self.dtype}'.")
        try:
            raw = base64.b64decode(self.data.encode("ascii"), validate=True)
        except (ValueError, UnicodeEncodeError) as e:
            raise ModelFormatError(f"Corrupt array payload: {e}") from e
        expected = int(np.prod(self.shape, dtype=np.int64)) * 8
        if len(raw) != expected:
            raise ModelFormatError(f"Array payload holds {len(raw)} bytes, shape {self.shape} needs {expected}.")
        return np.frombuffer(raw, dtype="<f8").reshape(self.shape).astype(float)


def atomic_write_text(path, text: str) -> Path:
    """Write through a temporary file in the same directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise
    return path


def write_profiles_csv(path, times: np.ndarray, profiles: np.ndarray, physical_nodes: np.ndarray,
                       time_label: str = "time") -> Path:
    """One row per time stamp: time first, then one column per node headed by its physical coordinate."""
    import pandas as pd

    header = [time_label] + [repr(float(x)) for x in physical_nodes]
    frame = pd.DataFrame(np.column_stack([times, profiles]), columns=header)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def read_profiles_csv(path):
    """Inverse of `write_profiles_csv`: (times, profiles, physical_nodes)."""
    import pandas as pd

    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ModelFormatError(f"Cannot read profile table {path}: {e}") from e
    if frame.shape[1] < 3 or frame.shape[0] < 1:
        raise ModelFormatError(f"Profile table {path} needs a time column, two or more nodes and one row.")
    try:
        nodes = np.array([float(c) for c in frame.columns[1:]])
    except ValueError as e:
        raise ModelFormatError(f"Profile table {path} has a non-numeric node header: {e}") from e
    values = frame.to_numpy(dtype=float)
    if np.isnan(values).any():
        raise ModelFormatError(f"Profile table {path} has missing values.")
    return values[:, 0], values[:, 1:], nodes
