import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featprobe.health import (
    FhsConfig,
    ModuleCurve,
    feature_health_score,
    four_score_profile,
    growth_factor,
    render_profile_percent,
    volatility_penalty,
)


def curve(values, module="V"):
    return ModuleCurve(module, np.asarray(values, dtype=float))


def direct_scores(values, lam=0.2, eps=1e-6):
    """Independent scalar-loop evaluation of the three score formulas."""
    vals = [max(v, eps) for v in values]
    gf = math.log(vals[-1] / math.sqrt(vals[0] * min(vals)))
    tv = sum(abs(vals[i + 1] - vals[i]) for i in range(len(vals) - 1))
    vp = math.exp(-lam * tv / vals[-1])
    return gf, vp, vals[-1] * (1 + gf) * vp


# -- growth factor -----------------------------------------------------------


def test_constant_curve_has_zero_growth():
    assert growth_factor(curve([0.7, 0.7, 0.7])) == 0.0


def test_growth_factor_reference_curve():
    assert growth_factor(curve([0.5, 0.4, 0.7])) == pytest.approx(
        0.4480440122783178, abs=1e-6
    )


def test_single_layer_curve_growth_is_zero():
    assert growth_factor(curve([0.42])) == 0.0


def test_growth_positive_iff_end_beats_geometric_mean():
    assert growth_factor(curve([0.5, 0.4, 0.7])) > 0
    assert growth_factor(curve([0.7, 0.4, 0.3])) < 0


# -- volatility penalty --------------------------------------------------------


def test_flat_curve_has_unit_penalty():
    assert volatility_penalty(curve([0.6, 0.6, 0.6, 0.6])) == 1.0


def test_volatility_reference_curve():
    assert volatility_penalty(curve([0.5, 0.4, 0.7])) == pytest.approx(
        0.8920030614530944, abs=1e-6
    )


def test_lambda_zero_disables_penalty():
    cfg = FhsConfig(lam=0.0)
    assert volatility_penalty(curve([0.9, 0.1, 0.9, 0.1, 0.9]), cfg) == 1.0


def test_single_layer_curve_penalty_is_one():
    assert volatility_penalty(curve([0.3])) == 1.0


def test_penalty_unchanged_by_reversal_with_equal_endpoints():
    # Total variation is reversal-invariant; with matching first/last
    # values the endpoint normalization is too, so VP must agree. (Growth
    # generally still changes under reversal when the minimum moves.)
    values = [0.5, 0.35, 0.8, 0.6, 0.5]
    assert volatility_penalty(curve(values[::-1])) == pytest.approx(
        volatility_penalty(curve(values)), rel=1e-12
    )
    asym = [0.4, 0.3, 0.9, 0.55, 0.6]
    assert growth_factor(curve(asym[::-1])) != growth_factor(curve(asym))


# -- feature health score -------------------------------------------------------


def test_constant_curve_health_equals_level():
    for p in (0.25, 0.5, 0.99):
        gf, vp, fhs = feature_health_score(curve([p, p, p, p]))
        assert (gf, vp) == (0.0, 1.0)
        assert fhs == pytest.approx(p, rel=1e-12)


def test_health_reference_curve():
    gf, vp, fhs = feature_health_score(curve([0.5, 0.4, 0.7]))
    assert gf == pytest.approx(0.4480440122783178, abs=1e-6)
    assert vp == pytest.approx(0.8920030614530944, abs=1e-6)
    assert fhs == pytest.approx(0.9041617844497571, abs=1e-6)


def test_health_matches_direct_evaluation_on_random_curves():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(1, 30))
        values = rng.uniform(0.01, 1.0, size=n)
        got = feature_health_score(curve(values))
        expected = direct_scores(list(values))
        for g, e in zip(got, expected):
            assert g == pytest.approx(e, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(0.05, 1.0))
def test_scale_equivariance(seed, c):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 20))
    values = rng.uniform(0.01, 1.0, size=n)
    scaled = values * c
    gf0, vp0, fhs0 = feature_health_score(curve(values))
    gf1, vp1, fhs1 = feature_health_score(curve(scaled))
    assert gf1 == pytest.approx(gf0, abs=1e-12, rel=1e-12)
    assert vp1 == pytest.approx(vp0, abs=1e-12, rel=1e-12)
    assert fhs1 == pytest.approx(c * fhs0, rel=1e-12)


def test_health_upper_bound_tight_only_when_flat():
    values = [0.5, 0.4, 0.7]
    gf, vp, fhs = feature_health_score(curve(values))
    assert fhs < values[-1] * (1 + gf)
    gf, vp, fhs = feature_health_score(curve([0.7, 0.7]))
    assert fhs == pytest.approx(0.7 * (1 + gf), rel=1e-12)


def test_zero_values_are_clamped_not_fatal():
    gf, vp, fhs = feature_health_score(curve([0.0, 0.5]))
    assert math.isfinite(gf) and math.isfinite(vp) and math.isfinite(fhs)


def test_curve_rejects_out_of_range_values():
    with pytest.raises(ValueError):
        curve([0.5, 1.2])
    with pytest.raises(ValueError):
        curve([-0.1, 0.5])
    with pytest.raises(ValueError):
        curve([])


# -- four-score profile -----------------------------------------------------------


def test_profile_constant_curves():
    p = 0.8
    profile = four_score_profile(
        curve([p, p], "V"), curve([p], "C"), curve([p, p, p], "L"), p
    )
    assert profile.four_scores() == pytest.approx((p, p, p, p))
    assert not profile.partial
    assert render_profile_percent(profile) == "80.00 → 80.00 → 80.00 → 80.00"


def test_profile_percent_rendering_fixture():
    # Display-format fixture: stored fractions render as an arrow-joined
    # percent chain with two decimals.
    profile = four_score_profile(
        curve([0.9142, 0.9142], "V"),
        curve([0.8841], "C"),
        curve([0.8121, 0.8121], "L"),
        0.8133,
    )
    assert render_profile_percent(profile) == "91.42 → 88.41 → 81.21 → 81.33"


def test_profile_module_scores_match_standalone():
    cv, cc, cl = curve([0.5, 0.4, 0.7], "V"), curve([0.68, 0.69], "C"), curve([0.6, 0.8], "L")
    profile = four_score_profile(cv, cc, cl, 0.75)
    for name, c in (("V", cv), ("C", cc), ("L", cl)):
        gf, vp, fhs = feature_health_score(c)
        h = profile.modules[name]
        assert (h.gf, h.vp, h.fhs) == (gf, vp, fhs)
        # Stored components reproduce the score.
        assert h.fhs == pytest.approx(h.p_end * (1 + h.gf) * h.vp, abs=1e-12)


def test_profile_missing_module_marks_partial():
    profile = four_score_profile(curve([0.5], "V"), None, curve([0.6], "L"), 0.5)
    assert profile.partial
    assert profile.missing == ("C",)
    assert render_profile_percent(profile).split(" → ")[1] == "--"


def test_profile_records_clamp_warning():
    profile = four_score_profile(
        curve([0.0, 0.5], "V"), curve([0.5], "C"), curve([0.5], "L"), 0.5
    )
    assert any("clamped" in w for w in profile.warnings)
    assert profile.modules["V"].clamped


def test_profile_rejects_out_of_range_final():
    with pytest.raises(ValueError):
        four_score_profile(curve([0.5], "V"), curve([0.5], "C"), curve([0.5], "L"), 1.5)


def test_profile_json_roundtrip():
    from featprobe.health import FhsProfile

    profile = four_score_profile(
        curve([0.5, 0.6], "V"), curve([0.6], "C"), curve([0.55, 0.65], "L"), 0.6
    )
    assert FhsProfile.from_dict(profile.to_dict()) == profile
