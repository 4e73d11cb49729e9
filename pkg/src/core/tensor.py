"""
NCHW 텐서 연산과 역전파(reverse-mode autodiff)

작은 합성곱 분할 네트워크를 학습시키는 데 필요한 만큼만 구현한 numpy 기반 자동 미분 엔진입니다.
- 저장 타입은 float32가 기본이며, float64 입력은 그대로 유지됩니다(수치 미분 검증용).
- 모든 합산은 float64로 누적한 뒤 원래 타입으로 되돌립니다.
- backward()는 그래디언트를 덮어쓰지 않고 누적합니다.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.utils.errors import ContractError, DataError, ShapeError

_FLOAT_TYPES = (np.float32, np.float64)
_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """블록 안에서는 계산 그래프를 만들지 않습니다 (평가/의사 라벨 생성용)."""
    previous = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """그래디언트 버퍼를 가진 밀집 배열.

    Attributes:
        data: numpy 배열 (float32 또는 float64)
        grad: data와 같은 모양의 그래디언트 버퍼 또는 None
        requires_grad: 그래디언트 추적 여부
    """

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        dtype=None,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
        _op: str = "",
    ):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in _FLOAT_TYPES else np.float32
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    # --- 기본 속성 ---
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"스칼라가 아닌 텐서입니다: shape={self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # --- 역전파 ---
    def backward(self) -> None:
        """스칼라 손실에서 도달 가능한 모든 leaf 텐서에 ∂loss/∂·를 누적합니다.

        Raises:
            ContractError: 루트가 스칼라가 아닐 때
        """
        if self.data.size != 1:
            raise ContractError(f"backward()는 스칼라 손실에서만 호출할 수 있습니다: shape={self.shape}")
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=parent.dtype)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # --- 연산자 오버로드 ---
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other, self), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes)


def _topological_order(root: Tensor) -> list:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype), dtype=like.dtype)


def _make(data: np.ndarray, parents: Iterable[Tensor], backward, op: str) -> Tensor:
    parents = tuple(parents)
    needs = _grad_enabled() and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, dtype=data.dtype)
    return Tensor(data, requires_grad=True, dtype=data.dtype, _parents=parents, _backward=backward, _op=op)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0, dtype=np.float64)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True, dtype=np.float64)
    return grad


def _check_same_dtype(a: Tensor, b: Tensor) -> None:
    if a.dtype != b.dtype:
        raise ContractError(f"dtype이 일치하지 않습니다: {a.dtype} vs {b.dtype}")


# ---------------------------------------------------------------------------
# 원소 단위 연산
# ---------------------------------------------------------------------------
def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)
    _check_same_dtype(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)
    _check_same_dtype(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)
    _check_same_dtype(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)
    _check_same_dtype(a, b)
    out = a.data / b.data

    def backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _make(out, (a, b), backward, "div")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return _make(np.where(mask, x.data, 0).astype(x.dtype), (x,), backward, "relu")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(np.maximum(x.data, 0))

    def backward(g):
        safe = np.where(out > 0, out, 1)
        return (np.where(out > 0, g / (2 * safe), 0),)

    return _make(out, (x,), backward, "sqrt")


def clamp_min(x: Tensor, low: float) -> Tensor:
    """x를 low 이상으로 자릅니다. 잘린 위치로는 그래디언트가 흐르지 않습니다."""
    keep = x.data > low

    def backward(g):
        return (g * keep,)

    return _make(np.where(keep, x.data, x.dtype.type(low)), (x,), backward, "clamp_min")


# ---------------------------------------------------------------------------
# 축약/모양 연산
# ---------------------------------------------------------------------------
def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.dtype)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _make(np.asarray(out), (x,), backward, "sum")


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return tsum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    def backward(g):
        return (g.reshape(x.shape),)

    return _make(x.data.reshape(shape), (x,), backward, "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inverse),)

    return _make(x.data.transpose(axes), (x,), backward, "transpose")


def getitem(x: Tensor, index) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(np.array(x.data[index]), (x,), backward, "getitem")


def take(x: Tensor, indices: np.ndarray, axis: int = 0) -> Tensor:
    """axis 방향으로 indices 위치의 원소를 모읍니다 (중복 인덱스 허용)."""
    indices = np.asarray(indices, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(x.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)

    return _make(np.take(x.data, indices, axis=axis), (x,), backward, "take")


# ---------------------------------------------------------------------------
# 패치 단위 합산/전개 (스타일 통계용)
# ---------------------------------------------------------------------------
def patch_sum(x: Tensor, row_starts: np.ndarray, col_starts: np.ndarray) -> Tensor:
    """[N,C,H,W]를 직사각형 패치 격자마다 합산하여 [N,C,n_h,n_w]를 반환합니다."""
    rows = np.add.reduceat(x.data.astype(np.float64), row_starts, axis=2)
    out = np.add.reduceat(rows, col_starts, axis=3).astype(x.dtype)
    row_sizes = np.diff(np.append(row_starts, x.shape[2]))
    col_sizes = np.diff(np.append(col_starts, x.shape[3]))

    def backward(g):
        return (np.repeat(np.repeat(g, row_sizes, axis=2), col_sizes, axis=3),)

    return _make(out, (x,), backward, "patch_sum")


def patch_expand(s: Tensor, row_sizes: np.ndarray, col_sizes: np.ndarray) -> Tensor:
    """[N,C,n_h,n_w] 통계를 각 패치 영역으로 복제하여 [N,C,H,W]를 만듭니다."""
    row_starts = np.concatenate([[0], np.cumsum(row_sizes)[:-1]])
    col_starts = np.concatenate([[0], np.cumsum(col_sizes)[:-1]])
    out = np.repeat(np.repeat(s.data, row_sizes, axis=2), col_sizes, axis=3)

    def backward(g):
        rows = np.add.reduceat(g.astype(np.float64), row_starts, axis=2)
        return (np.add.reduceat(rows, col_starts, axis=3),)

    return _make(out, (s,), backward, "patch_expand")


# ---------------------------------------------------------------------------
# 합성곱 네트워크 연산
# ---------------------------------------------------------------------------
def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, pad: int = 0) -> Tensor:
    """교차 상관(cross-correlation) 합성곱.

    Args:
        x: [N, Cin, H, W] 입력
        weight: [Cout, Cin, kh, kw] 커널
        bias: [Cout] 편향 (없으면 None)
        stride: 보폭
        pad: 상하좌우 0 패딩 크기

    Returns:
        [N, Cout, Ho, Wo] 출력

    Raises:
        ShapeError: 채널 수나 공간 크기가 맞지 않을 때
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d는 4차원 입력/커널이 필요합니다: {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    cout, cin, kh, kw = weight.shape
    if c != cin:
        raise ShapeError(f"입력 채널({c})과 커널 채널({cin})이 다릅니다.")
    if stride < 1 or pad < 0:
        raise ShapeError(f"잘못된 stride/pad 값입니다: stride={stride}, pad={pad}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"bias 모양이 ({cout},)이어야 합니다: {bias.shape}")
    hp, wp = h + 2 * pad, w + 2 * pad
    if hp < kh or wp < kw:
        raise ShapeError(f"커널({kh}x{kw})이 패딩된 입력({hp}x{wp})보다 큽니다.")
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def backward(g):
        gw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        gb = g.sum(axis=(0, 2, 3), dtype=np.float64) if bias is not None else None
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                gxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += contrib
        gx = gxp[:, :, pad:pad + h, pad:pad + w]
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, backward, "conv2d")


def maxpool2d(x: Tensor, factor: int) -> Tensor:
    """factor×factor 최대 풀링. 동률이면 창 안에서 선형 인덱스가 가장 작은 위치가 선택됩니다."""
    if factor < 1:
        raise ShapeError(f"풀링 배율은 1 이상이어야 합니다: {factor}")
    if factor == 1:
        return x
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise ShapeError(f"공간 크기({h}x{w})가 풀링 배율 {factor}로 나누어떨어지지 않습니다.")
    ho, wo = h // factor, w // factor
    blocks = x.data.reshape(n, c, ho, factor, wo, factor).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, factor * factor)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gx = gb.reshape(n, c, ho, wo, factor, factor).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)

    return _make(np.ascontiguousarray(out), (x,), backward, "maxpool2d")


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """최근접 이웃 업샘플링 (각 값을 factor×factor 블록으로 복제)."""
    if factor < 1:
        raise ShapeError(f"업샘플 배율은 1 이상이어야 합니다: {factor}")
    if factor == 1:
        return x
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def backward(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5), dtype=np.float64),)

    return _make(out, (x,), backward, "upsample_nearest")


def softmax_channels(x: Tensor) -> Tensor:
    """채널 축(axis=1) 소프트맥스. 최대값을 빼서 수치적으로 안정화합니다."""
    if x.ndim != 4 or x.shape[1] < 1:
        raise ShapeError(f"softmax_channels는 [N,C,H,W] 입력이 필요합니다: {x.shape}")
    p = _softmax(x.data.astype(np.float64)).astype(x.dtype)

    def backward(g):
        inner = np.sum(g * p, axis=1, keepdims=True, dtype=np.float64)
        return (p * (g - inner),)

    return _make(p, (x,), backward, "softmax_channels")


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def masked_cross_entropy(logits: Tensor, labels: np.ndarray, ignore_index: int) -> Tensor:
    """ignore_index를 제외한 픽셀에 대한 평균 음의 로그 우도.

    마스크가 비어 있으면 0을 반환하고 그래디언트도 0입니다.

    Raises:
        ShapeError: labels 모양이 [N,H,W]가 아닐 때
        DataError: ignore가 아닌 라벨이 클래스 수 이상일 때
    """
    n, c, h, w = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n, h, w):
        raise ShapeError(f"라벨 모양 {labels.shape}이 로짓 {logits.shape}과 맞지 않습니다.")
    labels = labels.astype(np.int64)
    mask = labels != ignore_index
    invalid = mask & ((labels < 0) | (labels >= c))
    if invalid.any():
        raise DataError(f"클래스 범위(0..{c - 1})를 벗어난 라벨이 있습니다: {np.unique(labels[invalid]).tolist()}")
    count = int(mask.sum())
    if count == 0:
        def backward_empty(g):
            return (np.zeros_like(logits.data),)

        return _make(np.zeros((), dtype=logits.dtype), (logits,), backward_empty, "masked_ce")

    z = logits.data.astype(np.float64)
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_norm
    safe = np.where(mask, labels, 0)
    picked = np.take_along_axis(log_p, safe[:, None], axis=1)[:, 0]
    loss = -np.sum(picked[mask], dtype=np.float64) / count

    def backward(g):
        p = np.exp(log_p)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, safe[:, None], 1.0, axis=1)
        grad = (p - onehot) * mask[:, None] / count
        return (grad * g,)

    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), backward, "masked_ce")
