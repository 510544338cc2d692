"""Hardware feasibility: converts SI-unit setups into protocol parameters
and checks every validity condition the pulsed scheme relies on.

Conventions (the literature leaves several free; these are the ones used
here, and the corresponding acceptance tolerances are deliberately loose):

* cavity amplitude decay rate ``gamma_c = pi c / (2 F L)`` (half width),
* linearized optomechanical coupling ``g = g0 * alpha`` with
  ``g0 = (x0 / L) omega_c`` and ``alpha = sqrt(N_ph / (tau gamma_c))``,
* optical wavelength defaults to 1064 nm when a setup does not pin it,
* every "much greater/less than" condition is encoded as a factor-10 margin,
  warning from factor 5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .iomaps import OMEGA_TAU_INDEPENDENT, ProtocolParams

HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K
C_LIGHT = 299792458.0  # m / s

DEFAULT_WAVELENGTH = 1.064e-6  # m

#: x >= MARGIN_PASS * y counts as "x much greater than y"; between
#: MARGIN_WARN and MARGIN_PASS the condition is flagged but not failed.
MARGIN_PASS = 10.0
MARGIN_WARN = 5.0


class CheckStatus(Enum):
    PASS = "pass"
    WARN = "warn"
    FAIL = "fail"


@dataclass(frozen=True)
class MechanicalSpec:
    omega_m: float  # rad/s
    mass: float  # kg
    q_factor: float
    temperature: float  # K


@dataclass(frozen=True)
class CavitySpec:
    finesse: float
    length: float  # m
    power: float  # W
    tau: float  # s
    wavelength: float = DEFAULT_WAVELENGTH  # m


@dataclass(frozen=True)
class AtomSpec:
    gamma: float  # spontaneous decay rate, rad/s
    delta: float  # detuning, rad/s
    sigma_scatter: float  # m^2
    beam_area: float  # m^2
    n_atoms: float
    larmor: float  # rad/s


@dataclass(frozen=True)
class PhysicalSetup:
    mech: MechanicalSpec
    cavity: CavitySpec
    atoms: AtomSpec
    cooling_factor: float = 1.0

    def __post_init__(self) -> None:
        positive = {
            "mech.omega_m": self.mech.omega_m,
            "mech.mass": self.mech.mass,
            "mech.q_factor": self.mech.q_factor,
            "mech.temperature": self.mech.temperature,
            "cavity.finesse": self.cavity.finesse,
            "cavity.length": self.cavity.length,
            "cavity.wavelength": self.cavity.wavelength,
            "cavity.tau": self.cavity.tau,
            "atoms.gamma": self.atoms.gamma,
            "atoms.delta": self.atoms.delta,
            "atoms.sigma_scatter": self.atoms.sigma_scatter,
            "atoms.beam_area": self.atoms.beam_area,
            "atoms.n_atoms": self.atoms.n_atoms,
            "atoms.larmor": self.atoms.larmor,
        }
        for name, value in positive.items():
            if value <= 0.0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.cavity.power < 0.0:
            raise ValueError("cavity.power must be non-negative")
        if self.cooling_factor < 1.0:
            raise ValueError("cooling_factor must be at least 1")


@dataclass(frozen=True)
class FeasibilityCheck:
    name: str
    ratio: float
    status: CheckStatus
    detail: str


@dataclass(frozen=True)
class FeasibilityReport:
    checks: tuple[FeasibilityCheck, ...]
    derived: dict

    @property
    def ok(self) -> bool:
        return all(c.status is not CheckStatus.FAIL for c in self.checks)


def _grade(ratio: float) -> CheckStatus:
    if ratio >= MARGIN_PASS:
        return CheckStatus.PASS
    if ratio >= MARGIN_WARN:
        return CheckStatus.WARN
    return CheckStatus.FAIL


def thermal_occupation(omega_m: float, temperature: float) -> float:
    """Equilibrium occupation ``k_B T / (hbar omega_m)`` (high-T form)."""
    return K_B * temperature / (HBAR * omega_m)


def derive_params(setup: PhysicalSetup) -> tuple[ProtocolParams, FeasibilityReport]:
    """Dimensionless protocol parameters plus a validity scorecard.

    The QND strength comes from the atomic side,
    ``kappa^2 = (sigma Gamma / (A Delta))^2 N_at N_ph``; the light side
    independently yields ``g sqrt(tau / gamma_c)``, and their signed relative
    difference is the stored matching residual.
    """
    mech, cav, atoms = setup.mech, setup.cavity, setup.atoms
    x0 = math.sqrt(HBAR / (2.0 * mech.mass * mech.omega_m))
    omega_c = 2.0 * math.pi * C_LIGHT / cav.wavelength
    g0 = (x0 / cav.length) * omega_c
    gamma_c = math.pi * C_LIGHT / (2.0 * cav.finesse * cav.length)
    n_ph = cav.power * cav.tau / (HBAR * omega_c)
    alpha = math.sqrt(n_ph / (cav.tau * gamma_c))
    g = g0 * alpha
    kappa = (atoms.sigma_scatter * atoms.gamma / (atoms.beam_area * atoms.delta)) * math.sqrt(
        atoms.n_atoms * n_ph
    )
    kappa_optical = g * math.sqrt(cav.tau / gamma_c)
    n_th = thermal_occupation(mech.omega_m, mech.temperature)
    n_i = n_th / setup.cooling_factor
    gamma_m = mech.omega_m / mech.q_factor

    total = kappa + kappa_optical
    eps = (kappa - kappa_optical) / total if total > 0.0 else 1.0

    params = ProtocolParams(
        kappa=kappa,
        n_i=n_i,
        g=g,
        gamma_c=gamma_c,
        omega_m=mech.omega_m,
        Omega=atoms.larmor,
        tau=cav.tau,
        gamma_m=gamma_m,
        n_th=n_th,
        eps_mismatch=abs(eps),
    )

    checks = []

    def add(name: str, ratio: float, detail: str, status: CheckStatus | None = None):
        checks.append(
            FeasibilityCheck(name, ratio, status if status else _grade(ratio), detail)
        )

    add(
        "adiabatic_elimination_vs_g",
        gamma_c / g if g > 0 else math.inf,
        f"gamma_c/g = {gamma_c / g if g > 0 else math.inf:.1f}",
    )
    add(
        "adiabatic_elimination_vs_omega_m",
        gamma_c / mech.omega_m,
        f"gamma_c/omega_m = {gamma_c / mech.omega_m:.1f}",
    )
    add(
        "temporal_mode_separation",
        atoms.larmor * cav.tau / 1.0,
        f"Omega*tau = {atoms.larmor * cav.tau:.1f} "
        f"(idealized map reliable above {OMEGA_TAU_INDEPENDENT:.0f})",
    )
    thermal_ratio = (
        1.0 / (gamma_m * cav.tau * n_th) if gamma_m * cav.tau * n_th > 0 else math.inf
    )
    add(
        "pulse_within_coherence",
        thermal_ratio,
        f"1/(gamma_m tau n_th) = {thermal_ratio:.1f}",
    )
    eps_limit = 1.0 / (10.0 * n_i) if n_i > 0 else math.inf
    mismatch_ok = abs(eps) <= eps_limit
    add(
        "matching_within_tolerance",
        eps_limit / abs(eps) if eps != 0.0 else math.inf,
        f"|eps| = {abs(eps):.2e} vs tolerable {eps_limit:.2e}",
        status=CheckStatus.PASS if mismatch_ok else CheckStatus.FAIL,
    )

    derived = {
        "x0_m": x0,
        "omega_c_rad_s": omega_c,
        "g0_rad_s": g0,
        "gamma_c_rad_s": gamma_c,
        "n_ph": n_ph,
        "alpha": alpha,
        "g_rad_s": g,
        "kappa": kappa,
        "kappa_optical": kappa_optical,
        "eps_mismatch_signed": eps,
        "n_th": n_th,
        "n_i": n_i,
        "gamma_m_rad_s": gamma_m,
    }
    return params, FeasibilityReport(tuple(checks), derived)


def check_matching(params: ProtocolParams) -> float:
    """Signed residual of the time-scale matching condition.

    Zero iff ``kappa / sqrt(tau) = g / sqrt(gamma_c)``; negative when the
    atomic strength is the smaller side.
    """
    eps = params.matching_residual()
    if math.isnan(eps):
        raise ValueError("matching is degenerate: both coupling strengths vanish")
    return eps


@dataclass(frozen=True)
class CoherenceBudget:
    tau_thermal: float  # raw bound Q_m hbar / (k_B T)
    tau_max: float  # bound with the factor-10 margin applied
    limiting: str


def coherence_budget(setup: PhysicalSetup) -> CoherenceBudget:
    """Longest usable pulse before mechanical thermalization bites.

    The raw bound is ``Q_m hbar / (k_B T)``; the recommended maximum applies
    the factor-10 margin for the strict inequality.
    """
    tau_thermal = setup.mech.q_factor * HBAR / (K_B * setup.mech.temperature)
    if math.isinf(tau_thermal):
        return CoherenceBudget(math.inf, math.inf, "none")
    return CoherenceBudget(tau_thermal, tau_thermal / MARGIN_PASS, "mechanical_thermalization")


def solve_power_for_matching(setup: PhysicalSetup, kappa_target: float | None = None) -> float:
    """Drive power putting the light side exactly on a target QND strength.

    Both ``kappa`` and ``g sqrt(tau/gamma_c)`` scale as ``sqrt(P tau)``, so
    the residual between them is power independent; matching by power only
    makes sense against a fixed target strength (by default the atomic-side
    ``kappa`` of the setup as given, e.g. after the ensemble and detuning
    have been frozen).
    """
    params, report = derive_params(setup)
    if kappa_target is None:
        kappa_target = params.kappa
    if kappa_target <= 0.0:
        raise ValueError("kappa_target must be positive")
    g0 = report.derived["g0_rad_s"]
    gamma_c = report.derived["gamma_c_rad_s"]
    omega_c = report.derived["omega_c_rad_s"]
    # g sqrt(tau/gamma_c) = g0 sqrt(P tau) / (gamma_c sqrt(hbar omega_c))
    return (kappa_target * gamma_c / g0) ** 2 * HBAR * omega_c / setup.cavity.tau


def matched_atom_number(setup: PhysicalSetup) -> float:
    """Ensemble size making the atomic strength equal the light side."""
    params, report = derive_params(setup)
    kappa_opt = report.derived["kappa_optical"]
    n_ph = report.derived["n_ph"]
    prefactor = setup.atoms.sigma_scatter * setup.atoms.gamma / (
        setup.atoms.beam_area * setup.atoms.delta
    )
    return (kappa_opt / prefactor) ** 2 / n_ph


# ---------------------------------------------------------------------------
# reference setups


_DEFAULT_ATOMS = AtomSpec(
    gamma=2.0 * math.pi * 5.2e6,  # alkali D-line scale
    delta=2.0 * math.pi * 1.0e9,
    sigma_scatter=1.0e-13,
    beam_area=1.0e-8,
    n_atoms=1.0e5,  # placeholder, matched below
    larmor=0.0,  # filled per setup: Larmor tuned to omega_m
)


def _with_matched_atoms(setup: PhysicalSetup) -> PhysicalSetup:
    n_at = matched_atom_number(setup)
    return replace(setup, atoms=replace(setup.atoms, n_atoms=n_at))


def micromirror_setup() -> PhysicalSetup:
    """Moving end-mirror example: 5 MHz, 1 ng, Q = 5e5 at 0.2 K, pre-cooled
    by a factor 30; finesse 4500, 100 uW drive, 300 um cavity."""
    omega_m = 2.0 * math.pi * 5.0e6
    setup = PhysicalSetup(
        mech=MechanicalSpec(omega_m=omega_m, mass=1.0e-12, q_factor=5.0e5, temperature=0.2),
        cavity=CavitySpec(finesse=4500.0, length=300.0e-6, power=100.0e-6, tau=2.0e-6),
        atoms=replace(_DEFAULT_ATOMS, larmor=omega_m),
        cooling_factor=30.0,
    )
    return _with_matched_atoms(setup)


def membrane_setup() -> PhysicalSetup:
    """Dispersively coupled membrane example: 30 MHz, 10 fg, Q = 1e5 at
    0.04 K, no pre-cooling; finesse 1100, 100 uW drive, 250 um cavity."""
    omega_m = 2.0 * math.pi * 30.0e6
    setup = PhysicalSetup(
        mech=MechanicalSpec(omega_m=omega_m, mass=1.0e-14, q_factor=1.0e5, temperature=0.04),
        cavity=CavitySpec(finesse=1100.0, length=250.0e-6, power=100.0e-6, tau=2.0e-6),
        atoms=replace(_DEFAULT_ATOMS, larmor=omega_m),
        cooling_factor=1.0,
    )
    return _with_matched_atoms(setup)
