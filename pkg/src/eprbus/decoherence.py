"""Closed-form perturbative corrections: coupling mismatch, mechanical
thermalization, and linear optical loss.

These are the leading-order penalty formulas; the moment-propagation oracle
realizes the same imperfections physically and is the reference for their
range of validity (see the test suite: the mismatch formula overstates the
physically realized excess once the measurement itself is strong, and the
damping term ignores the part of the injected noise that the readout
conditions away).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .gaussian import EPRReport

#: Above this value of gamma_m * tau * n_th the perturbative damping
#: treatment is unreliable.
DAMPING_PERTURBATIVE_LIMIT = 0.1


@dataclass(frozen=True)
class LossBudget:
    """The three imperfection channels, all entries dimensionless."""

    eps_mismatch: float = 0.0
    photon_loss: float = 0.0
    gamma_m_tau: float = 0.0
    n_th: float = 0.0

    def __post_init__(self) -> None:
        for name in ("eps_mismatch", "photon_loss", "gamma_m_tau", "n_th"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.photon_loss > 1.0:
            raise ValueError("photon_loss must not exceed 1")

    @property
    def empty(self) -> bool:
        return self.eps_mismatch == 0.0 and self.photon_loss == 0.0 and self.gamma_m_tau == 0.0


def mismatch_penalty(eps: float, kappa: float, n_i: float) -> float:
    """Leading-order EPR-variance addition ``(eps * kappa * (n_i + 2))^2``."""
    if eps < 0.0:
        raise ValueError("eps must be non-negative")
    return (eps * kappa * (n_i + 2.0)) ** 2


def damping_penalty(gamma_m_tau: float, n_th: float) -> float:
    """Thermalization noise per quadrature, ``gamma_m tau (n_th + 1)``.

    The total EPR-variance addition is twice this value (one term per
    quadrature; the Langevin model is quadrature-symmetric).
    """
    if gamma_m_tau < 0.0 or n_th < 0.0:
        raise ValueError("gamma_m_tau and n_th must be non-negative")
    if gamma_m_tau * n_th > DAMPING_PERTURBATIVE_LIMIT:
        warnings.warn(
            f"gamma_m*tau*n_th = {gamma_m_tau * n_th:.3g} exceeds the "
            f"perturbative regime (< {DAMPING_PERTURBATIVE_LIMIT})",
            stacklevel=2,
        )
    return gamma_m_tau * (n_th + 1.0)


def photon_loss_map(delta_epr: float, eps_opt: float) -> float:
    """Linear loss of the correlated light: ``(1 - eps) delta + 2 eps``.

    The fixed point sits at 2, so loss can degrade but never fake
    entanglement.
    """
    if not 0.0 <= eps_opt <= 1.0:
        raise ValueError("eps_opt must lie in [0, 1]")
    return (1.0 - eps_opt) * delta_epr + 2.0 * eps_opt


def apply_budget(
    report: EPRReport, budget: LossBudget, kappa: float, n_i: float
) -> EPRReport:
    """Fold a full loss budget into an EPR report.

    System-side imperfections (mismatch, damping) are added before the
    optical loss map because they occur before the light reaches the
    detector:

        delta' = (1 - eps_opt) [delta + mismatch + 2 damping] + 2 eps_opt

    The penalties split evenly between the two quadratures; provenance is
    preserved and the individual corrections are annotated.
    """
    mismatch = mismatch_penalty(budget.eps_mismatch, kappa, n_i)
    damping = damping_penalty(budget.gamma_m_tau, budget.n_th) if budget.gamma_m_tau else 0.0
    eps_opt = budget.photon_loss
    var_xsum = (1.0 - eps_opt) * (report.var_xsum + mismatch / 2.0 + damping) + eps_opt
    var_pdiff = (1.0 - eps_opt) * (report.var_pdiff + mismatch / 2.0 + damping) + eps_opt
    corrections = {
        "mismatch_penalty": mismatch,
        "damping_penalty_per_quadrature": damping,
        "photon_loss": eps_opt,
    }
    return EPRReport.from_variances(
        var_xsum, var_pdiff, report.provenance, corrections=corrections, stderr=report.stderr
    )
