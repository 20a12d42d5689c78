"""Gradient verification against central finite differences.

This is the project's primary verification instrument: every cell and the
full encoder/decoder pipelines are checked against it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..errors import NumericError
from .tape import Tape, Tensor, backward, check_finite


@dataclass
class GradCheckReport:
    max_rel_err: float = 0.0
    worst_param: str = ""
    worst_index: int = -1
    worst_autodiff: float = 0.0
    worst_central: float = 0.0
    entries: int = 0
    per_param: dict = field(default_factory=dict)

    def ok(self, tolerance: float) -> bool:
        return self.max_rel_err < tolerance

    def __str__(self) -> str:
        return (
            f"max rel err {self.max_rel_err:.3e} at {self.worst_param}[{self.worst_index}] "
            f"(autodiff {self.worst_autodiff:.6e}, central {self.worst_central:.6e}, "
            f"{self.entries} entries)"
        )


def _eval_scalar(f: Callable[[], Tensor]) -> float:
    v = float(f().data)
    if not np.isfinite(v):
        raise NumericError("grad_check: objective returned a non-finite value")
    return v


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    step: float = 1e-5,
    denom_floor: float = 1e-3,
    corrupt_param: str | None = None,
) -> GradCheckReport:
    """Compare autodiff gradients of f() against central finite differences.

    `f` must be a deterministic scalar function of the given parameters.
    Per-entry relative error is |ad - cd| / max(|ad|, |cd|, denom_floor);
    the floor keeps finite-difference rounding noise on near-zero entries
    from registering as huge relative errors.

    `corrupt_param` is a debug hook: it offsets entry 0 of that parameter's
    autodiff gradient before comparison, so a failure report naming the
    parameter can be exercised end to end.
    """
    for p in params.values():
        p.grad = None
    with check_finite():
        with Tape() as tape:
            loss = f()
            backward(loss, tape)
        ad = {
            name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
            for name, p in params.items()
        }
        if corrupt_param is not None:
            if corrupt_param not in ad:
                raise NumericError(
                    f"grad_check: corrupt hook names unknown parameter {corrupt_param!r}"
                )
            ad[corrupt_param].reshape(-1)[0] += 1.0

        report = GradCheckReport()
        for name, p in params.items():
            flat = p.data.reshape(-1)
            ad_flat = ad[name].reshape(-1)
            worst = 0.0
            for i in range(flat.shape[0]):
                orig = flat[i]
                flat[i] = orig + step
                fp = _eval_scalar(f)
                flat[i] = orig - step
                fm = _eval_scalar(f)
                flat[i] = orig
                cd = (fp - fm) / (2.0 * step)
                a = ad_flat[i]
                rel = abs(a - cd) / max(abs(a), abs(cd), denom_floor)
                report.entries += 1
                if rel > worst:
                    worst = rel
                if rel > report.max_rel_err:
                    report.max_rel_err = rel
                    report.worst_param = name
                    report.worst_index = i
                    report.worst_autodiff = a
                    report.worst_central = cd
            report.per_param[name] = worst
    for p in params.values():
        p.grad = None
    return report
