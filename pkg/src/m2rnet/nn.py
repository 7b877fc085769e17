"""Layers, parameter containers and the SGD optimizer."""

from __future__ import annotations

import numpy as np

from . import ops
from .errors import ContractError
from .tensor import Tensor


class Parameter(Tensor):
    """Trainable tensor carrying its own momentum buffer."""

    __slots__ = ("momentum_buffer",)

    def __init__(self, data, name=None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.momentum_buffer = np.zeros_like(self.data)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Minimal module tree: attribute-registered parameters and children."""

    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self):
        for key, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield key, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{key}.{i}", item
            elif isinstance(value, dict):
                for k, item in value.items():
                    if isinstance(item, (Parameter, Module)):
                        yield f"{key}.{k}", item

    def named_parameters(self, prefix: str = ""):
        for key, value in self._children():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                if value.name is None:
                    value.name = name
                yield name, value
            else:
                yield from value.named_parameters(name + ".")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for key, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{key}.")

    def modules(self):
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator, stride: int = 1, pad=None):
        fan_in = c_in * k * k
        self.weight = Parameter(uniform_init(rng, (c_out, c_in, k, k), fan_in))
        self.bias = Parameter(np.zeros(c_out))
        self.stride = stride
        self.pad = k // 2 if pad is None else pad

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.pad)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.weight = Parameter(uniform_init(rng, (n_out, n_in), n_in))
        self.bias = Parameter(np.zeros(n_out))

    def forward(self, x):
        return ops.matmul(x, self.weight.T) + self.bias


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def named_buffers(self, prefix: str = ""):
        yield f"{prefix}running_mean", self.running_mean
        yield f"{prefix}running_var", self.running_var

    def forward(self, x):
        return ops.batchnorm2d(x, self.gamma, self.beta, self.running_mean, self.running_var,
                               self.training, self.momentum, self.eps)


class ConvBNReLU(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, k: int = 3):
        self.conv = Conv2d(c_in, c_out, k, rng)
        self.bn = BatchNorm2d(c_out)

    def forward(self, x):
        return ops.relu(self.bn(self.conv(x)))


def sgd_step(params, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
    """One SGD update with momentum and L2 weight decay; clears the grads.

    ``v <- momentum * v + grad + weight_decay * w`` then ``w <- w - lr * v``.
    """
    params = list(params)
    for p in params:
        if p.grad is None:
            raise ContractError(f"parameter {p.name or '<unnamed>'} {p.shape} has no gradient")
    for p in params:
        v = p.momentum_buffer
        v *= momentum
        v += p.grad + weight_decay * p.data
        p.data = p.data - lr * v
        p.grad = None
