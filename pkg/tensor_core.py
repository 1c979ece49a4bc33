"""
Dense Tensor Engine with Reverse-Mode Differentiation
Supplies every numeric operation used by the backbone, the generator and the metric head
"""

import contextlib
import logging
import threading
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ContractError, DimensionError, NumericError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]

_precision = threading.local()


def default_dtype() -> type:
    """Float type used for newly created tensors in the current thread"""
    return getattr(_precision, 'dtype', np.float32)


@contextlib.contextmanager
def float64_shadow():
    """Create tensors in 64-bit while the block runs (gradient oracles only)"""
    previous = default_dtype()
    _precision.dtype = np.float64
    try:
        yield
    finally:
        _precision.dtype = previous


class Tensor:
    """N-dimensional float array taking part in a differentiation graph"""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=default_dtype())
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._ctx: Optional["Function"] = None

    @classmethod
    def _from_op(cls, data: np.ndarray, ctx: Optional["Function"], requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = None
        out.name = None
        out._ctx = ctx
        return out

    @classmethod
    def constant(cls, value: float, shape: Tuple[int, ...]) -> "Tensor":
        return cls(np.full(shape, value))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def check_finite(self, name: Optional[str] = None) -> "Tensor":
        """Raise NumericError when the tensor holds NaN or Inf"""
        if not self.is_finite():
            raise NumericError(f"non-finite values in tensor '{name or self.name or '?'}'")
        return self

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._from_op(self.data.copy(), None, False)

    def backward(self):
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


class Function:
    """
    Base class for differentiable operations.

    `forward` receives raw arrays and returns the output array; `backward`
    receives dLoss/dOutput and returns one gradient (or None) per input.
    """

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs) -> Tensor:
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        out = np.asarray(out, dtype=inputs[0].data.dtype)
        requires_grad = any(t.requires_grad for t in inputs)
        return Tensor._from_op(out, fn if requires_grad else None, requires_grad)


class Graph:
    """Operation records reachable from a root, inputs always before outputs"""

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Graph":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in reversed(node._ctx.inputs):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor):
    """Accumulate dLoss/dLeaf into every requires_grad leaf reachable from loss"""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any tensor requiring gradients")

    graph = Graph.from_root(loss)
    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    for node in reversed(graph.nodes):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._ctx is None:
            if node.grad is None:
                node.grad = grad.astype(node.data.dtype, copy=True)
            else:
                node.grad += grad
            continue
        input_grads = node._ctx.backward(grad)
        for parent, parent_grad in zip(node._ctx.inputs, input_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + parent_grad
            else:
                pending[key] = parent_grad


def _require_same_shape(op: str, a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# Elementwise suite

class Add(Function):
    def forward(self, a, b):
        _require_same_shape('add', a, b)
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        _require_same_shape('sub', a, b)
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        _require_same_shape('mul', a, b)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Scale(Function):
    def forward(self, x, k: float = 1.0):
        self.k = k
        return x * x.dtype.type(k)

    def backward(self, grad):
        return (grad * grad.dtype.type(self.k),)


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad):
        return (grad * self.mask,)


class LeakyReLU(Function):
    def forward(self, x, slope: float = 0.2):
        self.mask = x > 0
        self.slope = x.dtype.type(slope)
        return np.where(self.mask, x, x * self.slope)

    def backward(self, grad):
        return (np.where(self.mask, grad, grad * self.slope),)


class Tanh(Function):
    def forward(self, x):
        self.y = np.tanh(x)
        return self.y

    def backward(self, grad):
        return (grad * (1 - self.y * self.y),)


# Linear algebra and shape plumbing

class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


class Reshape(Function):
    def forward(self, x, shape: Tuple[int, ...] = ()):
        self.in_shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError as e:
            raise DimensionError(f"reshape: cannot view {x.shape} as {shape}") from e

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Transpose(Function):
    def forward(self, x, axes: Optional[Tuple[int, ...]] = None):
        self.axes = axes if axes is not None else tuple(reversed(range(x.ndim)))
        return np.ascontiguousarray(np.transpose(x, self.axes))

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class Sum(Function):
    def forward(self, x, axis=None, keepdims: bool = False):
        self.in_shape = x.shape
        self.axis = axis
        self.keepdims = keepdims
        return np.sum(x, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.in_shape).copy(),)


class Mean(Sum):
    def forward(self, x, axis=None, keepdims: bool = False):
        total = super().forward(x, axis=axis, keepdims=keepdims)
        self.count = x.size // max(total.size, 1)
        return total / x.dtype.type(self.count)

    def backward(self, grad):
        (expanded,) = super().backward(grad)
        return (expanded / expanded.dtype.type(self.count),)


class BiasAdd(Function):
    """x + b with b broadcast along one axis of x"""

    def forward(self, x, b, axis: int = 1):
        axis = axis % x.ndim
        if b.ndim != 1 or b.shape[0] != x.shape[axis]:
            raise DimensionError(f"bias_add: bias {b.shape} does not match axis {axis} of {x.shape}")
        self.axis = axis
        shape = [1] * x.ndim
        shape[axis] = b.shape[0]
        return x + b.reshape(shape)

    def backward(self, grad):
        other_axes = tuple(i for i in range(grad.ndim) if i != self.axis)
        return grad, np.sum(grad, axis=other_axes)


class Concat(Function):
    def forward(self, *arrays, axis: int = 0):
        try:
            out = np.concatenate(arrays, axis=axis)
        except ValueError as e:
            raise DimensionError(f"concat: incompatible shapes {[a.shape for a in arrays]}") from e
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return out

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


class RowSlice(Function):
    def forward(self, x, start: int = 0, stop: Optional[int] = None):
        self.in_shape = x.shape
        self.start, self.stop = start, stop
        return x[start:stop].copy()

    def backward(self, grad):
        full = np.zeros(self.in_shape, dtype=grad.dtype)
        full[self.start:self.stop] = grad
        return (full,)


class L2Norm(Function):
    """Euclidean norm of the whole tensor, or of each row with axis=-1"""

    def forward(self, v, axis: Optional[int] = None):
        self.v = v
        self.axis = axis
        if axis is None:
            self.norm = np.sqrt(np.sum(v * v))
        else:
            self.norm = np.sqrt(np.sum(v * v, axis=axis))
        return self.norm

    def backward(self, grad):
        if self.axis is None:
            if self.norm == 0:
                return (np.zeros_like(self.v),)
            return (grad * self.v / self.norm,)
        norm = np.expand_dims(self.norm, self.axis)
        safe = np.where(norm > 0, norm, 1)
        scaled = np.where(norm > 0, self.v / safe, 0)
        return (np.expand_dims(grad, self.axis) * scaled,)


# Convolution family (NCHW, row-major)

def _as_batch(x: np.ndarray, op: str) -> Tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[np.newaxis], True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"{op}: expected C×H×W or N×C×H×W input, got {x.shape}")


def im2col(xp: np.ndarray, k: int, stride: int) -> Tuple[np.ndarray, int, int]:
    """Unfold an already padded N×C×H×W array into N×(C·k·k)×(Ho·Wo) columns"""
    n, c, h, w = xp.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    sn, sc, sh, sw = xp.strides
    patches = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return patches.reshape(n, c * k * k, ho * wo), ho, wo


def col2im(cols: np.ndarray, padded_shape: Tuple[int, int, int, int], k: int, stride: int,
           ho: int, wo: int) -> np.ndarray:
    """Scatter-add columns back into a padded image (adjoint of im2col)"""
    n, c, h, w = padded_shape
    out = np.zeros(padded_shape, dtype=cols.dtype)
    cols = cols.reshape(n, c, k, k, ho, wo)
    for kh in range(k):
        for kw in range(k):
            out[:, :, kh:kh + stride * ho:stride, kw:kw + stride * wo:stride] += cols[:, :, kh, kw]
    return out


def _check_stride_pad(op: str, stride: int, pad: int):
    if stride < 1:
        raise ContractError(f"{op}: stride must be >= 1, got {stride}")
    if pad < 0:
        raise ContractError(f"{op}: pad must be >= 0, got {pad}")


class Conv2d(Function):
    """Cross-correlation of C_in×H×W input with C_out×C_in×k×k kernels"""

    def forward(self, x, kernels, stride: int = 1, pad: int = 0):
        _check_stride_pad('conv2d', stride, pad)
        x4, self.squeeze = _as_batch(x, 'conv2d')
        if kernels.ndim != 4 or kernels.shape[2] != kernels.shape[3]:
            raise DimensionError(f"conv2d: kernels must be C_out×C_in×k×k, got {kernels.shape}")
        c_out, c_in, k, _ = kernels.shape
        n, c, h, w = x4.shape
        if c != c_in:
            raise DimensionError(f"conv2d: input has {c} channels, kernels expect {c_in} ({x.shape} vs {kernels.shape})")
        if k > h + 2 * pad or k > w + 2 * pad:
            raise DimensionError(f"conv2d: kernel {k} exceeds padded input {h + 2 * pad}×{w + 2 * pad}")

        xp = np.pad(x4, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x4
        cols, ho, wo = im2col(xp, k, stride)
        self.cols = cols
        self.kernels = kernels
        self.padded_shape = xp.shape
        self.k, self.stride, self.pad = k, stride, pad
        self.ho, self.wo = ho, wo

        out = np.matmul(kernels.reshape(c_out, -1), cols).reshape(n, c_out, ho, wo)
        return out[0] if self.squeeze else out

    def backward(self, grad):
        g4 = grad[np.newaxis] if self.squeeze else grad
        n, c_out = g4.shape[:2]
        gflat = g4.reshape(n, c_out, -1)
        wmat = self.kernels.reshape(c_out, -1)

        grad_kernels = np.einsum('nol,nkl->ok', gflat, self.cols).reshape(self.kernels.shape)
        gcols = np.matmul(wmat.T, gflat)
        gxp = col2im(gcols, self.padded_shape, self.k, self.stride, self.ho, self.wo)
        p = self.pad
        gx = gxp[:, :, p:gxp.shape[2] - p, p:gxp.shape[3] - p] if p else gxp
        return (gx[0] if self.squeeze else gx), grad_kernels


class ConvTranspose2d(Function):
    """Fractionally strided convolution; kernels are C_in×C_out×k×k"""

    def forward(self, x, kernels, stride: int = 1, pad: int = 0):
        _check_stride_pad('conv2d_transpose', stride, pad)
        x4, self.squeeze = _as_batch(x, 'conv2d_transpose')
        if kernels.ndim != 4 or kernels.shape[2] != kernels.shape[3]:
            raise DimensionError(f"conv2d_transpose: kernels must be C_in×C_out×k×k, got {kernels.shape}")
        c_in, c_out, k, _ = kernels.shape
        n, c, h, w = x4.shape
        if c != c_in:
            raise DimensionError(f"conv2d_transpose: input has {c} channels, kernels expect {c_in}")
        hp = (h - 1) * stride + k
        wp = (w - 1) * stride + k
        h_out, w_out = hp - 2 * pad, wp - 2 * pad
        if h_out <= 0 or w_out <= 0:
            raise DimensionError(f"conv2d_transpose: non-positive output extent {h_out}×{w_out}")

        self.x4 = x4
        self.kernels = kernels
        self.k, self.stride, self.pad = k, stride, pad
        self.h, self.w = h, w

        xflat = x4.reshape(n, c_in, h * w)
        cols = np.matmul(kernels.reshape(c_in, -1).T, xflat)
        outp = col2im(cols, (n, c_out, hp, wp), k, stride, h, w)
        out = outp[:, :, pad:pad + h_out, pad:pad + w_out]
        out = np.ascontiguousarray(out)
        return out[0] if self.squeeze else out

    def backward(self, grad):
        g4 = grad[np.newaxis] if self.squeeze else grad
        p = self.pad
        gp = np.pad(g4, ((0, 0), (0, 0), (p, p), (p, p))) if p else g4
        gcols, _, _ = im2col(np.ascontiguousarray(gp), self.k, self.stride)
        n, c_in = self.x4.shape[:2]
        wmat = self.kernels.reshape(c_in, -1)
        xflat = self.x4.reshape(n, c_in, -1)

        gx = np.matmul(wmat, gcols).reshape(self.x4.shape)
        grad_kernels = np.einsum('nil,nkl->ik', xflat, gcols).reshape(self.kernels.shape)
        return (gx[0] if self.squeeze else gx), grad_kernels


class MaxPool2d(Function):
    """Max pooling; ties route the gradient to the first maximum in scan order"""

    def forward(self, x, k: int = 2, stride: Optional[int] = None):
        stride = stride or k
        x4, self.squeeze = _as_batch(x, 'maxpool2d')
        n, c, h, w = x4.shape
        if k > h or k > w:
            raise DimensionError(f"maxpool2d: window {k} exceeds input {h}×{w}")
        ho = (h - k) // stride + 1
        wo = (w - k) // stride + 1
        sn, sc, sh, sw = x4.strides
        windows = np.lib.stride_tricks.as_strided(
            x4,
            shape=(n, c, ho, wo, k, k),
            strides=(sn, sc, stride * sh, stride * sw, sh, sw),
            writeable=False,
        ).reshape(n, c, ho, wo, k * k)
        self.argmax = np.argmax(windows, axis=-1)
        self.in_shape = x4.shape
        self.k, self.stride = k, stride
        out = np.take_along_axis(windows, self.argmax[..., np.newaxis], axis=-1)[..., 0]
        return out[0] if self.squeeze else out

    def backward(self, grad):
        g4 = grad[np.newaxis] if self.squeeze else grad
        n, c, ho, wo = g4.shape
        gx = np.zeros(self.in_shape, dtype=g4.dtype)
        ni, ci, hi, wi = np.indices((n, c, ho, wo))
        rows = hi * self.stride + self.argmax // self.k
        cols = wi * self.stride + self.argmax % self.k
        np.add.at(gx, (ni, ci, rows, cols), g4)
        return (gx[0] if self.squeeze else gx,)


class BatchNorm2d(Function):
    """Per-channel normalization over every non-channel axis, then affine"""

    def forward(self, x, gamma, beta, eps: float = 1e-5, training: bool = True,
                running_mean: Optional[np.ndarray] = None, running_var: Optional[np.ndarray] = None,
                momentum: float = 0.1):
        if eps <= 0:
            raise ContractError(f"batchnorm2d: eps must be positive, got {eps}")
        x4, self.squeeze = _as_batch(x, 'batchnorm2d')
        c = x4.shape[1]
        if gamma.shape != (c,) or beta.shape != (c,):
            raise DimensionError(f"batchnorm2d: {c} channels but gamma {gamma.shape}, beta {beta.shape}")
        axes = (0, 2, 3)
        dtype = x4.dtype.type
        self.training = training
        if training:
            mean = x4.mean(axis=axes)
            var = x4.var(axis=axes)
            count = x4.size // c
            if running_mean is not None and running_var is not None:
                unbiased = var * dtype(count / max(count - 1, 1))
                running_mean *= dtype(1 - momentum)
                running_mean += dtype(momentum) * mean.astype(running_mean.dtype)
                running_var *= dtype(1 - momentum)
                running_var += dtype(momentum) * unbiased.astype(running_var.dtype)
        else:
            if running_mean is None or running_var is None:
                raise ContractError("batchnorm2d: eval mode needs running statistics")
            mean = running_mean.astype(x4.dtype)
            var = running_var.astype(x4.dtype)

        shape = (1, c, 1, 1)
        self.inv_std = (1 / np.sqrt(var + dtype(eps))).reshape(shape)
        self.x_hat = (x4 - mean.reshape(shape)) * self.inv_std
        self.gamma = gamma
        out = self.x_hat * gamma.reshape(shape) + beta.reshape(shape)
        return out[0] if self.squeeze else out

    def backward(self, grad):
        g4 = grad[np.newaxis] if self.squeeze else grad
        axes = (0, 2, 3)
        c = g4.shape[1]
        shape = (1, c, 1, 1)
        grad_gamma = np.sum(g4 * self.x_hat, axis=axes)
        grad_beta = np.sum(g4, axis=axes)
        g_hat = g4 * self.gamma.reshape(shape)
        if self.training:
            m = g4.size // c
            gx = (self.inv_std / m) * (
                m * g_hat
                - np.sum(g_hat, axis=axes, keepdims=True)
                - self.x_hat * np.sum(g_hat * self.x_hat, axis=axes, keepdims=True)
            )
        else:
            gx = g_hat * self.inv_std
        return (gx[0] if self.squeeze else gx), grad_gamma, grad_beta


# Functional API

def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def conv2d(x: Tensor, kernels: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    return Conv2d.apply(x, kernels, stride=stride, pad=pad)


def conv2d_transpose(x: Tensor, kernels: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    return ConvTranspose2d.apply(x, kernels, stride=stride, pad=pad)


def maxpool2d(x: Tensor, k: int = 2, stride: Optional[int] = None) -> Tensor:
    return MaxPool2d.apply(x, k=k, stride=stride)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    return LeakyReLU.apply(x, slope=slope)


def tanh(x: Tensor) -> Tensor:
    return Tanh.apply(x)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


def scale(x: Tensor, k: float) -> Tensor:
    return Scale.apply(x, k=k)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Tensor, axes: Optional[Tuple[int, ...]] = None) -> Tensor:
    return Transpose.apply(x, axes=axes)


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def bias_add(x: Tensor, b: Tensor, axis: int = 1) -> Tensor:
    return BiasAdd.apply(x, b, axis=axis)


def concat(tensors: List[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def row_slice(x: Tensor, start: int, stop: Optional[int] = None) -> Tensor:
    return RowSlice.apply(x, start=start, stop=stop)


def l2_norm(v: Tensor, axis: Optional[int] = None) -> Tensor:
    return L2Norm.apply(v, axis=axis)


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5, training: bool = True,
                running_mean: Optional[Tensor] = None, running_var: Optional[Tensor] = None,
                momentum: float = 0.1) -> Tensor:
    return BatchNorm2d.apply(
        x, gamma, beta,
        eps=eps,
        training=training,
        running_mean=None if running_mean is None else running_mean.data,
        running_var=None if running_var is None else running_var.data,
        momentum=momentum,
    )


class ParameterSet:
    """Ordered, uniquely named tensors belonging to one network"""

    def __init__(self, tensors: Optional[Dict[str, Tensor]] = None):
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, tensor in (tensors or {}).items():
            self.add(name, tensor)

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._tensors:
            raise ContractError(f"duplicate parameter name '{name}'")
        tensor.name = name
        self._tensors[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def trainable_items(self) -> List[Tuple[str, Tensor]]:
        return [(name, t) for name, t in self._tensors.items() if t.requires_grad]

    def count(self, trainable_only: bool = True) -> int:
        return sum(t.size for t in self._tensors.values() if t.requires_grad or not trainable_only)

    def zero_grad(self):
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def clone(self) -> "ParameterSet":
        twin = type(self).__new__(type(self))
        twin.__dict__.update(self.__dict__)
        twin._tensors = OrderedDict()
        for name, tensor in self._tensors.items():
            twin._tensors[name] = Tensor(tensor.data.copy(), requires_grad=tensor.requires_grad, name=name)
        return twin

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self._tensors.items()}

    def bit_equal(self, other: "ParameterSet") -> bool:
        if list(self._tensors) != list(other._tensors):
            return False
        return all(
            self[name].data.dtype == other[name].data.dtype
            and np.array_equal(self[name].data, other[name].data)
            for name in self._tensors
        )
