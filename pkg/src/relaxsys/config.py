from dataclasses import dataclass, asdict

import numpy as np


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical thresholds used for every verdict in the package.

    Attributes
    ----------
    tau_sym : float
        Relative tolerance for symmetry / equality residuals.
    tau_psd : float
        Absolute slack allowed when testing semi-definiteness.
    tau_rank : float or None
        Relative singular-value cutoff for rank decisions and
        pseudo-inverses.  ``None`` means ``max(shape) * eps``.
    tau_singular : float
        Relative threshold below which a matrix is treated as singular.
    """

    tau_sym: float = 1e-8
    tau_psd: float = 1e-9
    tau_rank: float | None = None
    tau_singular: float = 1e-12

    def rank_cutoff(self, shape):
        if self.tau_rank is not None:
            return self.tau_rank
        return max(shape) * np.finfo(float).eps

    def to_dict(self):
        return asdict(self)


DEFAULT_TOL = ToleranceConfig()
