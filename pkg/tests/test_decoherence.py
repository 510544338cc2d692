import numpy as np
import pytest

from eprbus.decoherence import (
    LossBudget,
    apply_budget,
    damping_penalty,
    mismatch_penalty,
    photon_loss_map,
)
from eprbus.gaussian import EPRReport, Provenance


def report_for(delta: float) -> EPRReport:
    return EPRReport.from_variances(delta / 2, delta / 2, Provenance.PREDICTED)


class TestMismatchPenalty:
    def test_zero(self):
        assert mismatch_penalty(0.0, 1.0, 30.0) == 0.0

    def test_reference_value(self):
        assert mismatch_penalty(0.01, 1.0, 30.0) == pytest.approx(0.1024, rel=1e-12)

    def test_tolerable_mismatch_is_small(self):
        n_i = 100.0
        penalty = mismatch_penalty(1.0 / (10.0 * n_i), 1.0, n_i)
        assert penalty == pytest.approx(0.010404, rel=1e-9)
        assert penalty < 0.02  # small against the entanglement bound of 2

    def test_negative_eps_rejected(self):
        with pytest.raises(ValueError):
            mismatch_penalty(-0.01, 1.0, 0.0)


class TestDampingPenalty:
    def test_zero(self):
        assert damping_penalty(0.0, 830.0) == 0.0

    def test_reference_value(self):
        # gamma_m tau n_th = 0.83 also exercises the perturbative-limit warning
        with pytest.warns(UserWarning, match="perturbative"):
            assert damping_penalty(1e-3, 830.0) == pytest.approx(0.831, rel=1e-12)

    def test_warns_outside_perturbative_regime(self):
        with pytest.warns(UserWarning, match="perturbative"):
            damping_penalty(2e-4, 830.0)


class TestPhotonLossMap:
    def test_identity(self):
        assert photon_loss_map(0.55, 0.0) == 0.55

    def test_reference_value(self):
        assert photon_loss_map(2.0 / 3.0, 0.1) == pytest.approx(0.8, rel=1e-14)

    def test_fixed_point(self):
        for eps in (0.0, 0.3, 0.9, 1.0):
            assert photon_loss_map(2.0, eps) == pytest.approx(2.0)

    def test_monotone_and_contracting(self, rng):
        for _ in range(50):
            d1, d2 = sorted(rng.uniform(0.0, 4.0, size=2))
            eps = rng.uniform(0.0, 1.0)
            m1, m2 = photon_loss_map(d1, eps), photon_loss_map(d2, eps)
            assert m1 <= m2 + 1e-14
            assert abs(m1 - 2.0) <= abs(d1 - 2.0) + 1e-14

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            photon_loss_map(1.0, 1.5)


class TestApplyBudget:
    def test_empty_budget_is_identity(self):
        rep = report_for(2.0 / 3.0)
        out = apply_budget(rep, LossBudget(), 1.0, 0.0)
        assert out.delta_epr == pytest.approx(rep.delta_epr)
        assert out.provenance is rep.provenance

    def test_optical_loss_only(self):
        out = apply_budget(report_for(2.0 / 3.0), LossBudget(photon_loss=0.05), 1.0, 0.0)
        assert out.delta_epr == pytest.approx(0.95 * 2.0 / 3.0 + 0.1, rel=1e-12)
        assert out.corrections["photon_loss"] == 0.05

    def test_ordering_system_terms_inside(self):
        budget = LossBudget(eps_mismatch=0.01, photon_loss=0.1, gamma_m_tau=1e-4, n_th=500.0)
        rep = report_for(2.0 / 3.0)
        out = apply_budget(rep, budget, 1.0, 30.0)
        expected = 0.9 * (2.0 / 3.0 + 0.1024 + 2.0 * 1e-4 * 501.0) + 0.2
        assert out.delta_epr == pytest.approx(expected, rel=1e-12)

    def test_can_destroy_entanglement(self):
        budget = LossBudget(eps_mismatch=0.05, photon_loss=0.0)
        out = apply_budget(report_for(0.5), budget, 1.0, 30.0)
        assert out.delta_epr > 2.0
        assert not out.entangled

    def test_never_decreases_delta(self, rng):
        for _ in range(50):
            rep = report_for(float(rng.uniform(0.05, 1.9)))
            budget = LossBudget(
                eps_mismatch=float(rng.uniform(0.0, 0.02)),
                photon_loss=float(rng.uniform(0.0, 0.3)),
                gamma_m_tau=float(rng.uniform(0.0, 1e-5)),
                n_th=float(rng.uniform(0.0, 1000.0)),
            )
            out = apply_budget(rep, budget, 1.0, 10.0)
            assert out.delta_epr >= rep.delta_epr - 1e-14

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            LossBudget(photon_loss=1.2)
        with pytest.raises(ValueError):
            LossBudget(eps_mismatch=-0.1)
