"""Finite-difference verification of analytic gradients.

The harness reduces an op's output to a scalar via sum, backpropagates, and
compares every input element's analytic gradient against central differences.
All checks run in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, tsum

DEFAULT_RTOL = 1e-3
DEFAULT_ATOL = 1e-4
DEFAULT_STEP = 1e-5


@dataclass
class GradCheckReport:
    op_name: str
    max_abs_err: float
    max_rel_err: float
    passed: bool

    def __str__(self):
        flag = "pass" if self.passed else "FAIL"
        return f"{self.op_name:32s} abs={self.max_abs_err:.3e} rel={self.max_rel_err:.3e} [{flag}]"


def grad_check_tensors(fn: Callable[[], Tensor], tensors: Sequence[Tensor], *,
                       op_name: str = "op", rtol: float = DEFAULT_RTOL,
                       atol: float = DEFAULT_ATOL, h: float = DEFAULT_STEP,
                       max_probes_per_tensor: int | None = None,
                       probe_seed: int = 0) -> GradCheckReport:
    """Check d(sum fn())/d(tensor) for each given tensor by central differences.

    fn must be pure in the tensors' current values; their .data buffers are
    perturbed in place and restored. For large tensors a seeded random subset
    of max_probes_per_tensor elements can be probed instead of every element.
    """
    for t in tensors:
        t.data = np.ascontiguousarray(t.data)  # FD perturbs a flat view in place
        t.requires_grad = True
        t.grad = None
    try:
        out = tsum(fn())
        out.backward()
    except FloatingPointError:
        return GradCheckReport(op_name, float("inf"), float("inf"), False)

    analytic_grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    # finite differences do not need the tape
    for t in tensors:
        t.requires_grad = False
        t.grad = None
    probe_rng = np.random.default_rng(probe_seed)
    max_abs = 0.0
    max_rel = 0.0
    try:
        for t, analytic in zip(tensors, analytic_grads):
            if not np.all(np.isfinite(analytic)):
                return GradCheckReport(op_name, float("inf"), float("inf"), False)
            flat = t.data.reshape(-1)
            aflat = analytic.reshape(-1)
            if max_probes_per_tensor is not None and flat.size > max_probes_per_tensor:
                probes = probe_rng.choice(flat.size, max_probes_per_tensor, replace=False)
            else:
                probes = range(flat.size)
            for i in probes:
                orig = flat[i]
                flat[i] = orig + h
                fp = float(fn().data.sum())
                flat[i] = orig - h
                fm = float(fn().data.sum())
                flat[i] = orig
                num = (fp - fm) / (2.0 * h)
                if not np.isfinite(num):
                    return GradCheckReport(op_name, float("inf"), float("inf"), False)
                abs_err = abs(float(aflat[i]) - num)
                rel_err = abs_err / max(abs(float(aflat[i])), abs(num), 1e-12)
                max_abs = max(max_abs, abs_err)
                max_rel = max(max_rel, rel_err)
    finally:
        for t in tensors:
            t.requires_grad = True
    ok = (max_rel <= rtol) or (max_abs <= atol)
    return GradCheckReport(op_name, max_abs, max_rel, ok)


def grad_check(op: Callable[..., Tensor], input_shapes: Sequence[Sequence[int]], *,
               rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
               seed: int = 0, h: float = DEFAULT_STEP, op_name: str | None = None,
               transform: Callable[[np.ndarray], np.ndarray] | None = None) -> GradCheckReport:
    """Sample double-precision uniform(-1,1) inputs and verify op's gradients.

    transform, when given, post-processes each sampled array (e.g. to push
    values away from a kink).
    """
    rng = np.random.default_rng(seed)
    tensors = []
    for shape in input_shapes:
        arr = rng.uniform(-1.0, 1.0, size=tuple(shape)).astype(np.float64)
        if transform is not None:
            arr = transform(arr)
        tensors.append(Tensor(arr, requires_grad=True))
    name = op_name or getattr(op, "__name__", "op")
    return grad_check_tensors(lambda: op(*tensors), tensors,
                              op_name=name, rtol=rtol, atol=atol, h=h)
