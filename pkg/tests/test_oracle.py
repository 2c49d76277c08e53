import math

import pytest

from biasprobe_lib.analytic.services.oracle_service import oracle_table, theoretical_signals
from biasprobe_lib.signals.models.report import SignalChannel, Verdict
from biasprobe_lib.signals.services.signal_service import classify
from biasprobe_lib.synthgen.models.mechanism import MechanismKind, SelectionTable, Target, UModel
from biasprobe_lib.utils.errors import ConfigurationError

SIGN_TABLE = {
    "transportability": (0, 0, 1),
    "confounding": (0, 1, 1),
    "selection_type1": (1, 0, 1),
    "no_bias": (0, 0, 0),
}

SELECTION_REGIMES = [
    SelectionTable(p00=0.1, p01=0.1, p10=0.1, p11=0.9),
    SelectionTable(p00=0.1, p01=0.5, p10=0.5, p11=0.9),
    SelectionTable(p00=0.9, p01=0.5, p10=0.5, p11=0.1),
    SelectionTable(p00=0.9, p01=0.9, p10=0.9, p11=0.1),
]


@pytest.mark.parametrize("kind, signs", SIGN_TABLE.items())
def test_sign_table(kind, signs):
    """Test that each mechanism produces its characteristic sign pattern."""
    signals = theoretical_signals(kind, 0.3, n_mc=200_000, rng=11)
    assert signals.signs(n_se=4.0) == signs


def test_no_bias_channels_undefined():
    """Test that a constant bias makes every channel undefined."""
    signals = theoretical_signals("no_bias", 0.4, n_mc=20_000, rng=0)
    assert all(not signals.channels[t].defined for t in Target)
    assert all(math.isnan(signals.to_row()[f"rho_{t.value}"]) for t in Target)


def test_minimum_samples():
    """Test that fewer than 10^4 draws raise a ConfigurationError."""
    with pytest.raises(ConfigurationError, match="at least 10000"):
        theoretical_signals("confounding", 0.3, n_mc=5000, rng=0)


def test_reproducible():
    """Test that a fixed seed yields identical correlations."""
    first = theoretical_signals("selection_type1", 0.25, n_mc=20_000, rng=5)
    second = theoretical_signals("selection_type1", 0.25, n_mc=20_000, rng=5)
    assert first.to_row() == second.to_row()


def test_standard_errors_positive():
    """Test that defined channels carry a positive standard error."""
    signals = theoretical_signals("confounding", 0.3, n_mc=50_000, rng=2)
    assert all(signals.channels[t].standard_error > 0 for t in Target)
    assert signals.mc_samples == 50_000


@pytest.mark.parametrize("table", [SELECTION_REGIMES[0], SELECTION_REGIMES[3]])
def test_type2_selection_sign(table):
    """Test that the selection channel sign follows the direction of the selection table."""
    signals = theoretical_signals("selection_type2", 0.5, n_mc=100_000, rng=3, selection_table=table)
    expected = -1 if table.p11 > table.p00 else 1
    assert math.copysign(1, signals.rho_S) == expected
    assert signals.rho_Y > 0
    assert signals.selection_table == table.as_tuple()


@pytest.mark.parametrize("table", SELECTION_REGIMES)
def test_type2_non_null(table):
    """Test that every selection regime has at least one clearly nonzero channel."""
    signals = theoretical_signals("selection_type2", 0.4, n_mc=50_000, rng=4, selection_table=table)
    assert max(abs(signals.rho_S), abs(signals.rho_A), abs(signals.rho_Y)) > 0.1


def test_continuous_transportability():
    """Test that a continuous U keeps the transportability pattern."""
    signals = theoretical_signals(
        "transportability", 0.3, n_mc=100_000, rng=8, u_model=UModel.CONTINUOUS
    )
    assert signals.signs(n_se=4.0) == (0, 0, 1)


def test_oracle_table_grid():
    """Test that the oracle evaluates every mechanism and p combination in order."""
    rows = oracle_table(["confounding", "transportability"], [0.2, 0.4], n_mc=10_000, seed=1)
    assert [(r.mechanism, r.p) for r in rows] == [
        ("confounding", 0.2),
        ("confounding", 0.4),
        ("transportability", 0.2),
        ("transportability", 0.4),
    ]


def test_oracle_table_points_are_independent():
    """Test that adding grid points leaves existing points unchanged."""
    small = oracle_table(["confounding"], [0.3], n_mc=10_000, seed=1)
    large = oracle_table(["confounding"], [0.3, 0.5], n_mc=10_000, seed=1)
    assert small[0].to_row() == large[0].to_row()


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.2, 0.3, 0.4, 0.5])
@pytest.mark.parametrize("kind, signs", SIGN_TABLE.items())
def test_sign_table_full_scale(kind, signs, p):
    """Test the sign table at 10^6 draws under the three standard error zero rule."""
    signals = theoretical_signals(kind, p, n_mc=1_000_000, rng=2024)
    assert signals.signs() == signs


# Correlations of the four selection regimes at p=0.2, from an independent closed-form
# Monte-Carlo of the same model.
REGIME_P = 0.2
REGIME_RHO = [
    (-0.660, 0.013, 0.980),
    (0.331, -0.010, 0.954),
    (-0.374, 0.058, 0.981),
    (0.695, 0.084, 0.980),
]


@pytest.mark.parametrize("table, expected", zip(SELECTION_REGIMES, REGIME_RHO))
def test_type2_regime_magnitudes(table, expected):
    """Test that each selection regime reaches its reference correlations at p=0.2."""
    signals = theoretical_signals(
        "selection_type2", REGIME_P, n_mc=300_000, rng=21, selection_table=table
    )
    observed = (signals.rho_S, signals.rho_A, signals.rho_Y)
    assert observed == pytest.approx(expected, abs=0.03)


@pytest.mark.parametrize("p", [0.2, 0.3, 0.4, 0.5])
def test_type2_rejecting_regime_is_stable(p):
    """Test that the regime rejecting only treated positives keeps a strong selection channel."""
    signals = theoretical_signals(
        "selection_type2", p, n_mc=100_000, rng=22, selection_table=SELECTION_REGIMES[3]
    )
    assert 0.64 <= signals.rho_S <= 0.74


def test_whi_table_weakens_outcome_channel():
    """Test that the WHI-style table lowers the outcome channel relative to uniform selection."""
    kinds = ["selection_type2", "transportability"]
    combined = theoretical_signals(
        kinds, 0.2, n_mc=100_000, rng=23, selection_table=SelectionTable.whi_like()
    )
    corrected = theoretical_signals(
        kinds, 0.2, n_mc=100_000, rng=23, selection_table=SelectionTable.uniform(0.99)
    )
    assert abs(corrected.rho_S) < 0.02
    assert combined.rho_S > 0.05
    assert corrected.rho_Y > combined.rho_Y + 0.15


@pytest.mark.parametrize("kind", list(MechanismKind))
def test_classifier_recovers_theoretical_pattern(kind):
    """Test that a sample showing exactly the theoretical sign pattern is classified as its mechanism."""
    signs = theoretical_signals(kind.value, 0.3, n_mc=200_000, rng=31).signs(n_se=4.0)
    channels = {
        target: SignalChannel(
            target=target,
            n_used=1000,
            pearson_r=0.4 * sign,
            p_value=1e-5 if sign else 0.6,
        )
        for target, sign in zip(Target, signs)
    }
    assert classify(channels, alpha=0.01) == Verdict.from_kind(kind)
