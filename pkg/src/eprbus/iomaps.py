"""Idealized big-step input-output maps of the cascaded protocol.

Three levels are exposed:

* :func:`cavity_io_map` -- reflection off the optomechanical cavity after
  adiabatic elimination: ``x_out = -x_in``,
  ``p_out = -p_in - g sqrt(2/gamma_c) X_m``,
* :func:`cascade_io_map` -- the same after the beam has also crossed the
  ensemble, with matched strengths:
  ``p'_out = -p_in - kappa sqrt(2/tau) (X_m + X_a)``,
* :func:`qnd_bigstep` -- the whole pulse collapsed into one symplectic map
  that attaches two temporal light modes (cos/sin Fourier components at the
  Larmor frequency) carrying the EPR observables:

      p_out_cos = p_in_cos + kappa (X_m + X_a)
      p_out_sin = p_in_sin + kappa (P_m - P_a)

  The EPR combinations themselves are conserved exactly.  The map is
  completed into a valid symplectic transformation by the back-action the
  shared drive puts on the orthogonal combinations: ``X_m - X_a`` and
  ``P_m + P_a`` each gain ``2 kappa^2`` of variance.  This completion is the
  unique one consistent with the underlying Langevin model and is
  cross-checked against the moment-propagation oracle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .gaussian import (
    GaussianState,
    ModeKind,
    ModeLabel,
    apply_linear_map,
    light_mode,
    loss_channel,
    make_state,
    symplectic_form,
    tensor,
)

#: Below this value of Omega*tau the cos/sin temporal modes are not cleanly
#: independent and only the oracle should be trusted.
OMEGA_TAU_INDEPENDENT = 50.0

COS_MODE = light_mode("cos")
SIN_MODE = light_mode("sin")


class MatchingError(ValueError):
    """Coupling strengths violate the time-scale matching condition."""


@dataclass(frozen=True)
class ProtocolParams:
    """Model parameters of one pulse, dimensionless strengths plus SI rates.

    ``kappa`` is the QND measurement strength and ``n_i`` the initial thermal
    occupation of the mechanical mode.  The physical rates are only needed by
    the dynamics modules; :meth:`dimensionless` builds a consistent set with
    the matching condition ``kappa = g sqrt(tau / gamma_c)`` satisfied
    exactly.
    """

    kappa: float
    n_i: float = 0.0
    g: float = 0.0
    gamma_c: float = 1.0
    omega_m: float = 0.0
    Omega: float = 0.0
    tau: float = 1.0
    gamma_m: float = 0.0
    n_th: float = 0.0
    eps_mismatch: float = 0.0
    eta_light: float = 1.0
    eta_det: float = 1.0

    def __post_init__(self) -> None:
        for name in ("kappa", "n_i", "gamma_c", "tau", "gamma_m", "n_th"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.tau <= 0.0 or self.gamma_c <= 0.0:
            raise ValueError("tau and gamma_c must be positive")
        for name in ("eta_light", "eta_det"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def omega_tau(self) -> float:
        return self.Omega * self.tau

    @property
    def kappa_optical(self) -> float:
        """The light-side measurement strength ``g sqrt(tau / gamma_c)``."""
        return self.g * math.sqrt(self.tau / self.gamma_c)

    def matching_residual(self) -> float:
        """Signed mismatch ``(kappa - g sqrt(tau/gamma_c)) / (kappa + ...)``.

        Returns NaN when both sides vanish (degenerate).
        """
        other = self.kappa_optical
        total = self.kappa + other
        if total == 0.0:
            return float("nan")
        return (self.kappa - other) / total

    @classmethod
    def dimensionless(
        cls,
        kappa: float,
        n_i: float = 0.0,
        *,
        larmor_periods: int = 64,
        tau: float = 1.0,
        gamma_m: float = 0.0,
        n_th: float = 0.0,
        eps_mismatch: float = 0.0,
        eta_light: float = 1.0,
        eta_det: float = 1.0,
    ) -> "ProtocolParams":
        """Consistent parameter set for unit pulse time.

        An integer number of Larmor periods makes the temporal-mode
        normalization integrals exact, so the idealized map and the oracle
        agree to integration accuracy.  ``gamma_c`` is set far above every
        other rate (adiabatic elimination regime) and ``g`` is chosen so the
        matching condition holds exactly.
        """
        if larmor_periods < 1:
            raise ValueError("larmor_periods must be at least 1")
        omega = 2.0 * math.pi * larmor_periods / tau
        gamma_c = 1e6 / tau
        g = kappa * math.sqrt(gamma_c / tau)
        return cls(
            kappa=kappa,
            n_i=n_i,
            g=g,
            gamma_c=gamma_c,
            omega_m=omega,
            Omega=omega,
            tau=tau,
            gamma_m=gamma_m,
            n_th=n_th,
            eps_mismatch=eps_mismatch,
            eta_light=eta_light,
            eta_det=eta_det,
        )


@dataclass(frozen=True)
class PulseOutput:
    """Joint state after one pulse: system modes plus the cos/sin readout."""

    joint: GaussianState
    params_used: ProtocolParams
    positive_mass: ModeLabel
    negative_mass: ModeLabel

    def __post_init__(self) -> None:
        names = {m.name for m in self.joint.modes}
        for required in (COS_MODE.name, SIN_MODE.name):
            if required not in names:
                raise ValueError(f"joint state is missing temporal mode {required!r}")


def _require_matching(params: ProtocolParams) -> None:
    eps = params.matching_residual()
    if math.isnan(eps):
        return  # both strengths zero: trivially matched
    if abs(eps) > abs(params.eps_mismatch) + 1e-12:
        raise MatchingError(
            f"matching residual {eps:.3e} exceeds declared mismatch "
            f"{params.eps_mismatch:.3e}; model the mismatch through the "
            "decoherence corrections or the oracle instead"
        )


def cavity_io_map(g: float, gamma_c: float) -> tuple[np.ndarray, np.ndarray]:
    """Input-output matrix of the driven cavity on ``(x, p, X_m, P_m)``.

    Returns ``(S, noise)`` with zero noise.  The mechanical quadratures are
    passed through untouched -- the momentum back-action belongs to the pulse
    dynamics, not to this instantaneous reflection relation -- so the pair is
    only a valid channel on states with enough mechanical uncertainty.
    """
    if gamma_c <= 0.0:
        raise ValueError("gamma_c must be positive")
    c = g * math.sqrt(2.0 / gamma_c)
    s = np.eye(4)
    s[0, 0] = -1.0
    s[1, 1] = -1.0
    s[1, 2] = -c
    return s, np.zeros((4, 4))


def cascade_io_map(params: ProtocolParams) -> tuple[np.ndarray, np.ndarray]:
    """Total input-output matrix on ``(x, p, X_m, P_m, X_a, P_a)``.

    Requires the matching condition within the declared mismatch; the
    mechanical and atomic signals then enter with equal weight
    ``kappa sqrt(2/tau)``.
    """
    _require_matching(params)
    c = params.kappa * math.sqrt(2.0 / params.tau)
    s = np.eye(6)
    s[0, 0] = -1.0
    s[1, 1] = -1.0
    s[1, 2] = -c
    s[1, 4] = -c
    return s, np.zeros((6, 6))


def _resolve_roles(
    state: GaussianState,
    positive_mass: ModeLabel | str | None,
    negative_mass: ModeLabel | str | None,
) -> tuple[ModeLabel, ModeLabel]:
    def unique(kind: ModeKind) -> ModeLabel:
        found = [m for m in state.modes if m.kind is kind]
        if len(found) != 1:
            raise ValueError(
                f"state must contain exactly one {kind.value} mode to infer the "
                f"readout roles, found {len(found)}; pass the modes explicitly"
            )
        return found[0]

    pos = (
        state.modes[state.mode_index(positive_mass)]
        if positive_mass is not None
        else unique(ModeKind.MECHANICAL)
    )
    neg = (
        state.modes[state.mode_index(negative_mass)]
        if negative_mass is not None
        else unique(ModeKind.ATOMIC)
    )
    if pos == neg:
        raise ValueError("positive- and negative-mass roles must differ")
    return pos, neg


def qnd_bigstep(
    state: GaussianState,
    params: ProtocolParams,
    *,
    positive_mass: ModeLabel | str | None = None,
    negative_mass: ModeLabel | str | None = None,
) -> PulseOutput:
    """One pulse of the cascaded QND measurement as an exact symplectic map.

    The positive-mass oscillator contributes ``(+X, +P)`` and the
    negative-mass one ``(+X, -P)`` to the readout, so the cos mode reads
    ``X_pos + X_neg`` and the sin mode ``P_pos - P_neg``.  By default the
    roles are assigned to the state's mechanical and atomic mode; for a Bell
    measurement between two ensembles pass them explicitly.

    Fresh vacuum modes named ``cos`` and ``sin`` are appended.
    """
    pos, neg = _resolve_roles(state, positive_mass, negative_mass)
    _require_matching(params)
    if 0.0 < params.omega_tau < OMEGA_TAU_INDEPENDENT:
        warnings.warn(
            f"Omega*tau = {params.omega_tau:.1f} is below "
            f"{OMEGA_TAU_INDEPENDENT:.0f}; the cos/sin temporal modes are not "
            "independent there and the idealized map is unreliable",
            stacklevel=2,
        )
    kappa = params.kappa

    joint = tensor(
        state,
        make_state([(COS_MODE, 0.0, (0.0, 0.0)), (SIN_MODE, 0.0, (0.0, 0.0))]),
    )
    xm, pm = joint.x_index(pos), joint.p_index(pos)
    xa, pa = joint.x_index(neg), joint.p_index(neg)
    xc, pc = joint.x_index(COS_MODE), joint.p_index(COS_MODE)
    xs, ps = joint.x_index(SIN_MODE), joint.p_index(SIN_MODE)

    s = np.eye(joint.dim)
    # back-action of the shared drive, split across the cos/sin input modes
    s[xm, xs] = -kappa
    s[pm, xc] = kappa
    s[xa, xs] = kappa
    s[pa, xc] = kappa
    # readout
    s[pc, xm] = kappa
    s[pc, xa] = kappa
    s[ps, pm] = kappa
    s[ps, pa] = -kappa

    out = apply_linear_map(joint, s)
    return PulseOutput(joint=out, params_used=params, positive_mass=pos, negative_mass=neg)


def is_symplectic(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    """Check ``S Omega S^T = Omega`` for XPXP ordering."""
    matrix = np.asarray(matrix, dtype=float)
    omega = symplectic_form(matrix.shape[0] // 2)
    return bool(np.max(np.abs(matrix @ omega @ matrix.T - omega)) <= tol)


def apply_light_loss(
    pulse: PulseOutput, modes: Iterable[ModeLabel | str] | None = None
) -> PulseOutput:
    """Propagation plus detection loss on the temporal modes, vacuum noise in."""
    params = pulse.params_used
    eta = params.eta_light * params.eta_det
    if eta >= 1.0:
        return pulse
    joint = pulse.joint
    for mode in modes if modes is not None else (COS_MODE, SIN_MODE):
        joint = loss_channel(joint, mode, eta)
    return replace(pulse, joint=joint)
