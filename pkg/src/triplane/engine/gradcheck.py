"""Central finite-difference verification of tape gradients."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, Tape, EngineError


@dataclass
class GradCheckReport:
    max_rel_err: float
    tol: float
    checked: int
    passed: bool
    worst: tuple = field(default=())

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (f"grad_check {status}: max_rel_err={self.max_rel_err:.3e} "
                f"tol={self.tol:.1e} over {self.checked} entries")


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(1.0, abs(a), abs(n))


def grad_check(f, xs, eps: float = 1e-5, tol: float = 1e-4,
               max_entries: int | None = None, rng=None) -> GradCheckReport:
    """Compare tape gradients of scalar `f(*xs)` against central differences.

    `xs` is one tensor or a sequence; each is checked entry by entry
    (optionally a random subset of `max_entries` per tensor).  `f` must be
    deterministic - two baseline evaluations are compared bitwise and a
    mismatch is an error.  Run under `check_mode()` for f64 headroom.
    """
    if isinstance(xs, Tensor):
        xs = [xs]
    xs = list(xs)
    for x in xs:
        x.requires_grad = True
        x.zero_grad()

    base1 = f(*xs)
    base2 = f(*xs)
    if not np.array_equal(base1.data, base2.data):
        raise EngineError("grad_check: f is not deterministic "
                          "(two evaluations differ)")

    with Tape() as tape:
        loss = f(*xs)
    tape.backward(loss)

    rng = rng or np.random.default_rng(0)
    max_err = 0.0
    worst = ()
    checked = 0
    for xi, x in enumerate(xs):
        if x.grad is None:
            raise EngineError(f"grad_check: no gradient reached input {xi}")
        flat = x.data.reshape(-1)
        grad = x.grad.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            idxs = rng.choice(n, size=max_entries, replace=False)
        else:
            idxs = range(n)
        for j in idxs:
            saved = flat[j]
            h = eps * max(1.0, abs(saved))
            flat[j] = saved + h
            up = f(*xs).item()
            flat[j] = saved - h
            down = f(*xs).item()
            flat[j] = saved
            numeric = (up - down) / (2.0 * h)
            err = _rel_err(float(grad[j]), numeric)
            checked += 1
            if err > max_err:
                max_err = err
                worst = (xi, int(j), float(grad[j]), numeric)
    return GradCheckReport(max_rel_err=max_err, tol=tol, checked=checked,
                           passed=max_err <= tol, worst=worst)
