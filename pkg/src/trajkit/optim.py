"""Parameter bookkeeping and the Adam optimizer.

Parameter containers across the package are dataclasses whose fields are
either :class:`~trajkit.autodiff.Tensor` leaves or nested containers.
``collect_tensors`` flattens any such structure into an ordered
``{name: Tensor}`` mapping, which is what the optimizer, the checkpoint
writer, and the finite-difference tests operate on.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .autodiff import Tensor


def collect_tensors(obj, prefix: str = "") -> dict[str, Tensor]:
    """Flatten a parameter structure into an ordered name -> Tensor map."""
    out: dict[str, Tensor] = {}
    if isinstance(obj, Tensor):
        out[prefix or "param"] = obj
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            key = f"{prefix}.{f.name}" if prefix else f.name
            out.update(collect_tensors(getattr(obj, f.name), key))
    elif isinstance(obj, dict):
        for k, v in obj.items():
            key = f"{prefix}.{k}" if prefix else str(k)
            out.update(collect_tensors(v, key))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            key = f"{prefix}.{i}" if prefix else str(i)
            out.update(collect_tensors(v, key))
    return out


def detach_params(obj):
    """Copy of a parameter structure with Tensors replaced by ndarrays.

    Forward functions run tape-free (plain numpy) on the result, which is
    what evaluation and latency-sensitive inference use.
    """
    if isinstance(obj, Tensor):
        return obj.data
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        kwargs = {
            f.name: detach_params(getattr(obj, f.name)) for f in dataclasses.fields(obj)
        }
        return type(obj)(**kwargs)
    if isinstance(obj, dict):
        return {k: detach_params(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [detach_params(v) for v in obj]
    if isinstance(obj, tuple):
        return tuple(detach_params(v) for v in obj)
    return obj


def state_arrays(obj) -> dict[str, np.ndarray]:
    """Copies of all parameter arrays, keyed by flattened name."""
    return {k: t.data.copy() for k, t in collect_tensors(obj).items()}


def load_state(obj, arrays: dict[str, np.ndarray]) -> None:
    """Assign ``arrays`` into an existing parameter structure, in place."""
    tensors = collect_tensors(obj)
    missing = set(tensors) - set(arrays)
    if missing:
        raise KeyError(f"missing parameter arrays: {sorted(missing)}")
    for name, t in tensors.items():
        arr = np.asarray(arrays[name], dtype=np.float64)
        if arr.shape != t.data.shape:
            raise ValueError(
                f"shape mismatch for {name}: {arr.shape} vs {t.data.shape}"
            )
        t.data = arr.copy()


def global_grad_norm(tensors) -> float:
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float(np.sum(t.grad * t.grad))
    return float(np.sqrt(total))


class Adam:
    """Adaptive-moment optimizer with optional global-norm gradient clipping."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm=None):
        if isinstance(params, dict):
            params = list(params.values())
        else:
            params = list(params)
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in params]
        self._v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        scale = 1.0
        if self.clip_norm is not None:
            norm = global_grad_norm(self.params)
            if norm > self.clip_norm and norm > 0.0:
                scale = self.clip_norm / norm
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if g is None:
                continue
            g = g * scale
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.data = p.data - self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
