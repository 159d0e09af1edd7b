import numpy as np
import pytest

from idprisk.accountant import (SubsampledGaussian, TradeoffCurve, delta_for, gaussian_tradeoff,
                                mechanism_advantage, mechanism_tradeoff)
from idprisk.calibration import PrivacySpec, calibrate_sampling_idp, calibrate_sensitivity_idp
from idprisk.divergence import (DeltaResult, baseline_mechanism, contract_band, delta_divergence,
                                meta_select, padded_spec, padding_verdict, symmetric_delta,
                                validate_contract)
from idprisk.errors import DomainError

ALPHA = np.linspace(0.0, 1.0, 20001)


def gauss(mu):
    return TradeoffCurve(ALPHA, gaussian_tradeoff(mu, ALPHA))


IDENTITY = TradeoffCurve(np.array([0.0, 1.0]), np.array([1.0, 0.0]))


def brute_delta(f, g, grid=np.linspace(0.0, 1.0, 4001), ks=np.linspace(0.0, 0.5, 50001)):
    """Smallest k on a fine grid with f(a + k) - k <= g(a) everywhere."""
    ga = g(grid)
    for k in ks:
        if np.all(f(grid + k) - k <= ga + 1e-9):
            return k
    return 1.0


# --------------------------------------------------------------------------
# divergence


@pytest.mark.parametrize("mu", [0.0, 0.5, 2.0])
def test_self_divergence_is_zero(mu):
    assert symmetric_delta(gauss(mu), gauss(mu)).kappa == 0.0


def test_perfect_privacy_gap_is_half_the_advantage():
    # Id(a + k) - k <= g(a) iff k >= (1 - a - g(a)) / 2
    for mu in (0.5, 1.0, 3.0):
        g = gauss(mu)
        adv = g.advantage()
        assert delta_divergence(IDENTITY, g).kappa == pytest.approx(adv / 2, abs=2e-5)
        assert delta_divergence(g, IDENTITY).kappa == 0.0
        assert symmetric_delta(IDENTITY, g).kappa == pytest.approx(adv / 2, abs=2e-5)


@pytest.mark.parametrize("mu1,mu2", [(0.5, 1.0), (1.0, 3.0), (2.0, 0.2), (0.8, 0.9)])
def test_divergence_matches_brute_force(mu1, mu2):
    f, g = gauss(mu1), gauss(mu2)
    assert delta_divergence(f, g).kappa == pytest.approx(brute_delta(f, g), abs=5e-5)


def test_weaker_curve_needs_no_shift():
    # a weaker guarantee already lies below the stronger curve
    assert delta_divergence(gauss(2.0), gauss(0.5)).kappa == 0.0
    assert delta_divergence(gauss(0.5), gauss(2.0)).kappa > 0.0


def test_symmetric_is_the_larger_direction():
    rng = np.random.default_rng(3)
    for _ in range(5):
        mu1, mu2 = rng.uniform(0.1, 3.0, 2)
        res = symmetric_delta(gauss(mu1), gauss(mu2))
        assert res.kappa == max(res.forward, res.backward)
        assert res.direction == "symmetric"


def test_divergence_bounded_by_advantage_gap():
    # g must shift at most as far as the identity would: Delta(f || g) <= adv(g) / 2
    rng = np.random.default_rng(11)
    for _ in range(5):
        mu1, mu2 = rng.uniform(0.1, 4.0, 2)
        f, g = gauss(mu1), gauss(mu2)
        assert delta_divergence(f, g).kappa <= g.advantage() / 2 + 1e-4


def test_divergence_input_validation():
    with pytest.raises(DomainError):
        delta_divergence(np.zeros(3), gauss(1.0))
    with pytest.raises(DomainError):
        DeltaResult(1.5, "forward", 0.0)
    with pytest.raises(DomainError):
        DeltaResult(0.1, "sideways", 0.0)


def test_band_contains_exactly_the_close_curves():
    f = gauss(1.0)
    a, lo, hi = contract_band(f, 0.05, ALPHA)
    assert np.all(lo <= f(a) + 1e-12) and np.all(f(a) <= hi + 1e-12)
    for mu in (0.9, 1.1, 2.0, 0.3):
        g = gauss(mu)
        inside = bool(np.all((g(a) >= lo - 1e-9) & (g(a) <= hi + 1e-9)))
        assert inside == (symmetric_delta(f, g).kappa <= 0.05 + 1e-4)
    with pytest.raises(DomainError):
        contract_band(f, 1.5)


# --------------------------------------------------------------------------
# mechanisms that share one (eps, delta)


@pytest.fixture(scope="module")
def reference_curves():
    base = SubsampledGaussian(0.1, 0.66, 10)
    near = SubsampledGaussian(0.1, 0.68, 10)
    far = SubsampledGaussian(1.0, 2.0, 10)
    return {m: mechanism_tradeoff(m) for m in (base, near, far)}, (base, near, far)


def test_nearby_mechanism_stays_in_band(reference_curves):
    curves, (base, near, _) = reference_curves
    assert symmetric_delta(curves[base], curves[near]).kappa < 0.01


def test_same_guarantee_different_vulnerability(reference_curves):
    curves, (base, _, far) = reference_curves
    # both satisfy (8, 1e-5), yet their curves are far apart
    for m in (base, far):
        assert delta_for(m, 8.0, "pld") <= 1e-5
    assert symmetric_delta(curves[base], curves[far]).kappa > 0.1


# --------------------------------------------------------------------------
# contract


def test_single_group_candidate_equals_its_baseline():
    spec = PrivacySpec.from_lists([2.0], 1e-5, [100])
    p = calibrate_sampling_idp(spec, 0.1, 50)
    verdict = validate_contract(spec, p, 0.01)
    assert verdict.passed
    g = verdict.groups[0]
    assert g.baseline == baseline_mechanism(spec.groups[0], 0.1, 50)
    assert g.delta < 1e-3


def test_contract_rejects_distant_budgets():
    spec = PrivacySpec.from_lists([1.0, 8.0], 1e-5, [500, 500])
    p = calibrate_sampling_idp(spec, 0.1, 50)
    verdict = validate_contract(spec, p, 0.01)
    assert not verdict.passed
    assert all(not g.passed for g in verdict.groups)
    assert all(g.delta > 0.01 for g in verdict.groups)
    d = verdict.to_dict()
    assert d["passed"] is False and len(d["groups"]) == 2


def test_contract_records_group_failures_without_aborting():
    p = calibrate_sampling_idp(PrivacySpec.from_lists([2.0, 3.0], 1e-12, [10, 10]), 0.9, 100)
    # the second budget has no certifiable baseline at this rate
    verdict = validate_contract(PrivacySpec.from_lists([2.0, 1e-4], 1e-12, [10, 10]), p, 0.05)
    first, second = verdict.groups
    assert first.passed and first.error is None
    assert not second.passed and np.isnan(second.delta) and "not reachable" in second.error
    assert not verdict.passed


def test_contract_input_validation():
    spec = PrivacySpec.from_lists([2.0, 3.0], 1e-5, [10, 10])
    p = calibrate_sampling_idp(spec, 0.1, 20)
    with pytest.raises(DomainError):
        validate_contract(spec, p, 1.5)
    with pytest.raises(DomainError):
        validate_contract(spec, p, 0.05, baseline_rate=1.0)


def test_meta_selection_keeps_sampling_when_budgets_are_close():
    spec = PrivacySpec.from_lists([2.0, 3.0], 1e-5, [500, 500])
    d = meta_select(spec, 0.05, 0.1, 50)
    assert d.recommendation == "sampling" and d.verdict.passed
    assert d.sensitivity is None and d.failing == ()


def test_meta_selection_falls_back_and_finds_padding():
    spec = PrivacySpec.from_lists([1.0, 8.0], 1e-5, [500, 500])
    d = meta_select(spec, 0.034, 0.1, 50, padding_factors=(0.25,), padding_eps=(3.0, 12.0))
    assert d.recommendation == "sensitivity"
    assert [i for i, _ in d.failing] == [1]
    assert d.sensitivity is not None
    assert d.padding is not None and (d.padding.size, d.padding.eps) == (250, 12.0)
    assert d.padding.verdict.passed
    assert len(d.padding.verdict.groups) == 2
    assert padded_spec(spec, 250, 12.0).total == 1250
    assert "padding" in d.to_dict()


def test_padding_at_a_groups_own_budget_never_raises_its_delta():
    spec = PrivacySpec.from_lists([1.0, 8.0], 1e-5, [500, 500])
    for i, eps in enumerate((1.0, 8.0)):
        deltas = [padding_verdict(spec, size, eps, 0.03, 0.1, 50)[1].groups[i].delta
                  for size in (1, 250, 1000, 4000)]
        assert all(b <= a + 1e-4 for a, b in zip(deltas, deltas[1:])), (eps, deltas)
    # the other group moves the opposite way, so no single padding budget helps both
    other = [padding_verdict(spec, size, 8.0, 0.03, 0.1, 50)[1].groups[0].delta
             for size in (1, 1000)]
    assert other[1] > other[0]


def test_extreme_budget_gap_takes_the_fallback():
    spec = PrivacySpec.from_lists([1.0, 50.0], 1e-12, [500, 500])
    d = meta_select(spec, 0.01, 0.1, 50, padding_factors=(0.5,))
    assert d.recommendation == "sensitivity" and d.failing
    assert validate_contract(spec, d.sensitivity, 0.01).passed


def test_sensitivity_candidates_meet_the_contract():
    spec = PrivacySpec.from_lists([1.0, 4.0, 16.0], 1e-5, [200, 300, 500])
    params = calibrate_sensitivity_idp(spec, 0.1, 50)
    verdict = validate_contract(spec, params, 1e-3)
    assert verdict.passed
    assert max(g.delta for g in verdict.groups) <= 1e-4


def test_passing_candidates_stay_within_twice_the_bound():
    spec = PrivacySpec.from_lists([2.0, 3.0], 1e-5, [500, 500])
    p = calibrate_sampling_idp(spec, 0.1, 50)
    verdict = validate_contract(spec, p, 0.05)
    assert verdict.passed
    for g in verdict.groups:
        gap = abs(mechanism_advantage(g.candidate) - mechanism_advantage(g.baseline))
        assert gap <= 2 * g.delta + 1e-3


def test_feasibility_is_monotone_past_the_returned_kappa():
    for mu1, mu2 in ((0.5, 1.5), (3.0, 1.0)):
        f, g = gauss(mu1), gauss(mu2)
        k = delta_divergence(f, g).kappa
        for extra in (1e-3, 1e-2, 0.1):
            kk = min(1.0, k + extra)
            assert np.max(f(ALPHA + kk) - kk - g(ALPHA)) <= 1e-9


# worked examples


def test_same_guarantee_pair_is_apart_in_delta():
    full = mechanism_tradeoff(SubsampledGaussian(1.0, 0.7722, 1))
    sub = mechanism_tradeoff(SubsampledGaussian(0.01, 0.5711, 1000))
    res = symmetric_delta(full, sub)
    assert max(res.forward, res.backward) > 0.0


def test_symmetric_delta_commutes():
    f, g = gauss(0.7), gauss(2.1)
    assert symmetric_delta(f, g).kappa == symmetric_delta(g, f).kappa


def test_trivial_bound_always_passes():
    spec = PrivacySpec.from_lists([1.0, 8.0], 1e-5, [500, 500])
    params = calibrate_sampling_idp(spec, 0.1, 50)
    assert validate_contract(spec, params, 1.0).passed
