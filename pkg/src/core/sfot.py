"""
SFOT 텐서 파일 형식

레이아웃: magic `SFOT` | version(1) | dtype(1=f32, 2=u8) | rank | dims(u32 LE × rank) | row-major payload (LE)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from src.utils.errors import DataError

MAGIC = b"SFOT"
VERSION = 1
DTYPE_CODES = {np.dtype(np.float32): 1, np.dtype(np.uint8): 2}
CODE_DTYPES = {1: np.dtype("<f4"), 2: np.dtype(np.uint8)}

PathLike = Union[str, Path]


def encode_tensor(array: np.ndarray) -> bytes:
    """배열을 SFOT 바이트열로 직렬화합니다."""
    array = np.asarray(array)
    code = DTYPE_CODES.get(array.dtype)
    if code is None:
        raise DataError(f"SFOT는 float32/uint8만 지원합니다: {array.dtype}")
    if array.ndim > 255:
        raise DataError(f"rank가 너무 큽니다: {array.ndim}")
    header = MAGIC + struct.pack("<BBB", VERSION, code, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype=CODE_DTYPES[code]).tobytes(order="C")
    return header + payload


def decode_tensor(blob: bytes) -> np.ndarray:
    """SFOT 바이트열을 배열로 복원합니다.

    Raises:
        DataError: magic/버전/dtype/길이가 올바르지 않을 때
    """
    if len(blob) < 7 or blob[:4] != MAGIC:
        raise DataError("SFOT magic 바이트가 없습니다.")
    version, code, rank = struct.unpack_from("<BBB", blob, 4)
    if version != VERSION:
        raise DataError(f"지원하지 않는 SFOT 버전입니다: {version}")
    if code not in CODE_DTYPES:
        raise DataError(f"알 수 없는 SFOT dtype 코드입니다: {code}")
    offset = 7 + 4 * rank
    if len(blob) < offset:
        raise DataError("SFOT 헤더가 잘렸습니다.")
    dims = struct.unpack_from(f"<{rank}I", blob, 7)
    dtype = CODE_DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) - offset != expected:
        raise DataError(f"SFOT 페이로드 길이가 맞지 않습니다: {len(blob) - offset} != {expected}")
    data = np.frombuffer(blob, dtype=dtype, offset=offset).reshape(dims)
    return data.astype(dtype.newbyteorder("="), copy=True)


def write_tensor(path: PathLike, array: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(array))


def read_tensor(path: PathLike) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())
