import numpy as np
import pytest
from pydantic import ValidationError

from biasprobe_lib.signals.models.report import SignalChannel, Sign, Verdict
from biasprobe_lib.signals.services.signal_service import (
    aggregate_cells,
    classify,
    correlation_p_value,
    covariance_estimate,
    pearson_signal,
    score_channel,
)
from biasprobe_lib.synthgen.models.mechanism import Target
from biasprobe_lib.utils.errors import EstimationError, UndefinedCorrelationError

NS = (0.0, 0.5)
POS = (0.3, 1e-5)
NEG = (-0.3, 1e-5)


def _channels(s, a, y, defined=(True, True, True)):
    return {
        target: SignalChannel(
            target=target, n_used=500, pearson_r=r, p_value=p, defined=ok
        )
        for target, (r, p), ok in zip(Target, (s, a, y), defined)
    }


def _naive_cross(b, t, eta):
    n = len(b)
    first = np.mean(b * (t - eta) ** 2)
    second = np.sum(b[:, None] * (t[None, :] - eta[:, None]) ** 2) / n**2
    return n / (n - 1) * (first - second)


def test_covariance_two_rows():
    """Test the cross-paired covariance on two hand-computed rows."""
    value = covariance_estimate([0.0, 1.0], [0, 1], [0.2, 0.8])
    assert value == pytest.approx(-0.30, abs=1e-12)


def test_covariance_expansion_matches_double_sum():
    """Test that the linear-time expansion equals the explicit double sum."""
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 501))
        b = rng.random(n)
        t = (rng.random(n) < 0.5).astype(float)
        eta = rng.uniform(0.1, 0.9, n)
        assert covariance_estimate(b, t, eta) == pytest.approx(
            _naive_cross(b, t, eta), abs=1e-12
        )


def test_matched_covariance_constant_bias():
    """Test that a constant bias gives exactly zero matched covariance."""
    rng = np.random.default_rng(1)
    t = (rng.random(100) < 0.5).astype(float)
    eta = rng.uniform(0.1, 0.9, 100)
    assert covariance_estimate(np.full(100, 0.25), t, eta, pairing="matched") == 0.0


def test_matched_covariance_is_sample_covariance():
    """Test that matched pairing is the unbiased sample covariance."""
    rng = np.random.default_rng(2)
    b, t, eta = rng.random(50), (rng.random(50) < 0.3).astype(float), rng.random(50)
    expected = np.cov(b, (t - eta) ** 2)[0, 1]
    assert covariance_estimate(b, t, eta, pairing="matched") == pytest.approx(expected)


def test_covariance_too_few_rows():
    """Test that a single row raises an EstimationError."""
    with pytest.raises(EstimationError, match="at least 2 rows"):
        covariance_estimate([0.1], [1], [0.5])


def test_covariance_length_mismatch():
    """Test that inputs of different lengths raise an EstimationError."""
    with pytest.raises(EstimationError, match="equal-length"):
        covariance_estimate([0.1, 0.2], [1, 0, 1], [0.5, 0.5])


def test_unknown_pairing():
    """Test that an unknown pairing raises a ValueError."""
    with pytest.raises(ValueError, match="Unknown pairing"):
        covariance_estimate([0.1, 0.2], [1, 0], [0.5, 0.5], pairing="diagonal")


def test_perfect_correlation():
    """Test that identical inputs give r = 1 and the p-value floor."""
    x = np.linspace(0.0, 1.0, 40)
    r, p = pearson_signal(x, x)
    assert r == pytest.approx(1.0)
    assert p == 1e-5


def test_p_value_clipped():
    """Test that r = 0.1 at n = 2000 is clipped to the floor."""
    assert correlation_p_value(0.1, 2000) == 1e-5


def test_p_value_two_sided():
    """Test that the p-value only depends on |r|."""
    assert correlation_p_value(0.05, 500) == pytest.approx(correlation_p_value(-0.05, 500))
    assert 0.2 < correlation_p_value(0.05, 500) < 0.3


def test_null_calibration():
    """Test that independent inputs reject at alpha = 0.01 in about 1% of trials."""
    rng = np.random.default_rng(3)
    rejections = sum(
        pearson_signal(rng.standard_normal(2000), rng.standard_normal(2000))[1] < 0.01
        for _ in range(200)
    )
    assert rejections <= 6


def test_constant_input_undefined():
    """Test that a constant input raises an UndefinedCorrelationError."""
    with pytest.raises(UndefinedCorrelationError, match="constant input"):
        pearson_signal(np.zeros(10), np.arange(10.0))


def test_too_few_rows_for_correlation():
    """Test that fewer than three rows raise an EstimationError."""
    with pytest.raises(EstimationError, match=">= 3 rows"):
        pearson_signal([0.1, 0.2], [0.3, 0.1])


def test_permutation_test():
    """Test that the permutation test keeps r and rejects a strong correlation."""
    rng = np.random.default_rng(4)
    x = rng.random(300)
    y = x + 0.1 * rng.standard_normal(300)
    r, p = pearson_signal(x, y, permutations=999, rng=0)
    assert r == pytest.approx(pearson_signal(x, y)[0])
    assert p <= 0.01


@pytest.mark.parametrize(
    "signals, verdict",
    [
        ((NS, NS, NS), Verdict.NO_BIAS),
        ((NS, NS, POS), Verdict.TRANSPORTABILITY),
        ((NS, POS, POS), Verdict.CONFOUNDING),
        ((POS, NS, POS), Verdict.SELECTION_TYPE1),
        ((NEG, POS, POS), Verdict.SELECTION_TYPE2),
        ((POS, NS, NEG), Verdict.SELECTION_TYPE2),
        ((POS, POS, POS), Verdict.INDETERMINATE),
        ((POS, NS, NS), Verdict.INDETERMINATE),
        ((NS, POS, NS), Verdict.INDETERMINATE),
    ],
)
def test_classify(signals, verdict):
    """Test that each significance pattern maps to its mechanism."""
    assert classify(_channels(*signals), alpha=0.01) is verdict


def test_negative_not_significant_is_ignored():
    """Test that a negative but nonsignificant channel does not signal type 2 selection."""
    assert classify(_channels((-0.3, 0.5), NS, POS), alpha=0.01) is Verdict.TRANSPORTABILITY


def test_undefined_channel_is_indeterminate():
    """Test that an undefined channel makes the verdict indeterminate."""
    channels = _channels(NS, NS, POS, defined=(True, False, True))
    assert classify(channels, alpha=0.01) is Verdict.INDETERMINATE


def test_undefined_channel_with_negative_signal():
    """Test that a significant negative channel still wins over an undefined one."""
    channels = _channels(NEG, NS, POS, defined=(True, False, True))
    assert classify(channels, alpha=0.01) is Verdict.SELECTION_TYPE2


def test_classify_needs_three_channels():
    """Test that a missing channel raises a ValueError."""
    channels = _channels(NS, NS, NS)
    del channels[Target.A]
    with pytest.raises(ValueError, match="S, A and Y"):
        classify(channels, alpha=0.01)


def test_score_channel_sign():
    """Test that a significant channel takes the sign of r."""
    rng = np.random.default_rng(5)
    b = rng.random(400)
    preds = np.full(400, 0.5)
    targets = (rng.random(400) < 0.5).astype(float)
    channel = score_channel(Target.Y, b, targets, preds + 0.4 * b * (1 - 2 * targets), 0.01)
    assert channel.defined
    assert channel.n_used == 400
    assert channel.sign is (Sign.POSITIVE if channel.pearson_r > 0 else Sign.NEGATIVE)


def test_score_channel_undefined():
    """Test that a constant bias marks the channel undefined instead of raising."""
    channel = score_channel(Target.S, np.zeros(10), np.ones(10), np.full(10, 0.5), 0.01)
    assert not channel.defined
    assert channel.cov_hat == 0.0
    assert channel.sign is Sign.ZERO


def test_score_channel_too_few_rows():
    """Test that fewer than three rows give an undefined channel."""
    channel = score_channel(Target.A, np.array([0.1, 0.2]), np.ones(2), np.ones(2), 0.01)
    assert not channel.defined
    assert channel.cov_hat is None


def test_p_value_bounds():
    """Test that a p-value below the floor raises a ValidationError."""
    with pytest.raises(ValidationError, match="p-value"):
        SignalChannel(target=Target.S, n_used=10, p_value=1e-9)


def _graded_rows(rng, n, strength):
    b = rng.random(n)
    targets = (rng.random(n) < 0.5).astype(float)
    preds = 0.5 + strength * b * (1 - 2 * targets) + 0.2 * (rng.random(n) - 0.5)
    return b, targets, preds


@pytest.mark.parametrize("scale", [0.25, 4.0])
def test_scale_equivariance(scale):
    """Test that scaling |b1_hat| scales the covariances and leaves r and the verdict alone."""
    rng = np.random.default_rng(8)
    rows = {
        Target.S: _graded_rows(rng, 600, 0.0),
        Target.A: _graded_rows(rng, 600, 0.4),
        Target.Y: _graded_rows(rng, 600, 0.4),
    }
    plain = {t: score_channel(t, b, tg, p, 0.01) for t, (b, tg, p) in rows.items()}
    scaled = {t: score_channel(t, scale * b, tg, p, 0.01) for t, (b, tg, p) in rows.items()}
    for target in Target:
        assert scaled[target].cov_hat == pytest.approx(scale * plain[target].cov_hat)
        assert scaled[target].cov_cross == pytest.approx(scale * plain[target].cov_cross)
        assert scaled[target].pearson_r == pytest.approx(plain[target].pearson_r)
        assert scaled[target].sign is plain[target].sign
    assert classify(scaled, 0.01) is classify(plain, 0.01)


def test_aggregate_cells():
    """Test that cells are averaged and thin cells are dropped."""
    cells = np.array([0, 0, 2, 2, 2, 5])
    magnitude, variance = aggregate_cells(
        cells,
        np.array([0.1, 0.3, 0.2, 0.2, 0.5, 0.9]),
        np.array([1.0, 0.0, 0.0, 0.3, 0.3, 1.0]),
        min_rows=2,
    )
    np.testing.assert_allclose(magnitude, [0.2, 0.3])
    np.testing.assert_allclose(variance, [0.5, 0.2])


def test_score_channel_cell_unit():
    """Test that the cell unit correlates per-cell means but keeps row covariances."""
    rng = np.random.default_rng(9)
    cells = np.repeat(np.arange(8), 25)
    b = 0.05 * cells + 0.01 * rng.random(cells.size)
    targets = (rng.random(cells.size) < 0.5).astype(float)
    preds = 0.5 + 0.4 * b * (1 - 2 * targets)

    by_row = score_channel(Target.Y, b, targets, preds, 0.01)
    by_cell = score_channel(Target.Y, b, targets, preds, 0.01, cells=cells, min_cell_rows=5)
    assert by_cell.n_used == by_row.n_used == 200
    assert by_cell.n_units == 8
    assert by_row.n_units is None
    assert by_cell.cov_hat == pytest.approx(by_row.cov_hat)
    magnitude, variance = aggregate_cells(cells, b, (targets - preds) ** 2, 5)
    assert by_cell.pearson_r == pytest.approx(np.corrcoef(magnitude, variance)[0, 1])


def test_score_channel_too_few_cells():
    """Test that fewer than three sufficiently large cells give an undefined channel."""
    cells = np.array([0] * 10 + [1] * 10 + [2] * 2)
    b = np.linspace(0.0, 1.0, cells.size)
    channel = score_channel(
        Target.A, b, np.ones(cells.size), np.full(cells.size, 0.5), 0.01, cells=cells
    )
    assert not channel.defined
    assert channel.n_units == 2
