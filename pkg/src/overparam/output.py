from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RecoveryOutput:
    """Result of a recovery run (SSCoSaMP or BGAPN).

    ``coeff_vectors`` has shape ``(n_coef, d)`` and ``estimate`` equals
    ``sum_j X_j b_j`` under the parameterization that was passed in. For 1D
    signals ``jump_set`` holds breakpoints (see :mod:`overparam.projection`);
    for images it holds the removed analysis-operator rows.
    """

    coeff_vectors: np.ndarray
    estimate: np.ndarray
    jump_set: tuple[int, ...]
    residual_history: list[float]
    iterations: int
    converged: bool
    info: dict = field(default_factory=dict)
