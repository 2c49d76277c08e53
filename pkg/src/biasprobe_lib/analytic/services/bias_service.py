import numpy as np

from ...utils.errors import SingularityError


def _output(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def _check_denominator(denominator, name: str) -> None:
    if np.any(np.asarray(denominator) <= 0.0):
        raise SingularityError(f"Zero denominator in {name}")


def bias_transportability(pu_r1, pu_r0, py_u1, py_u0):
    """
    Bias induced by an effect modifier U distributed differently in the two populations.

    Args:
        pu_r1: P(U=1 | x) in the RCT.
        pu_r0: P(U=1 | x) in the OS.
        py_u1: P(Y1=1 | x, U=1).
        py_u0: P(Y1=1 | x, U=0).

    Returns:
        ``(pu_r1 - pu_r0) * (py_u1 - py_u0)``, elementwise for arrays.

    Example:
        >>> round(bias_transportability(0.9, 0.1, 0.8, 0.2), 12)
        0.48
    """
    pu_r1, pu_r0, py_u1, py_u0 = map(np.asarray, (pu_r1, pu_r0, py_u1, py_u0))
    return _output((pu_r1 - pu_r0) * (py_u1 - py_u0))


def bias_confounding(py_u1, py_u0, pa_u1, pa_u0):
    """
    Bias magnitude of hidden confounding with P(U=1 | x) = 1/2.

    Returns ``(py_u1 - py_u0)(pa_u1 - pa_u0) / (2 (pa_u1 + pa_u0))``. This is f1 - g1;
    the RCT-minus-OS bias is its negation.

    Raises:
        SingularityError: If ``pa_u1 + pa_u0 = 0``.
    """
    py_u1, py_u0, pa_u1, pa_u0 = map(np.asarray, (py_u1, py_u0, pa_u1, pa_u0))
    _check_denominator(pa_u1 + pa_u0, "bias_confounding")
    return _output((py_u1 - py_u0) * (pa_u1 - pa_u0) / (2.0 * (pa_u1 + pa_u0)))


def bias_selection1(py_u1, py_u0, ps_u1, ps_u0):
    """
    Bias magnitude of selection driven by U, with P(U=1 | x) = 1/2.

    Same algebra as ``bias_confounding`` with selection in place of treatment, and the
    same orientation (f1 - g1).

    Raises:
        SingularityError: If ``ps_u1 + ps_u0 = 0``.
    """
    py_u1, py_u0, ps_u1, ps_u0 = map(np.asarray, (py_u1, py_u0, ps_u1, ps_u0))
    _check_denominator(ps_u1 + ps_u0, "bias_selection1")
    return _output((py_u1 - py_u0) * (ps_u1 - ps_u0) / (2.0 * (ps_u1 + ps_u0)))


def bias_selection2(py1, ps_11, ps_01):
    """
    Bias g1 - f1 of selection caused by treatment and outcome.

    Args:
        py1: P(Y1=1 | x).
        ps_11: P(S=1 | Y=1, A=1).
        ps_01: P(S=1 | Y=0, A=1).

    Returns:
        ``py1 * (1 - ps_11 / (ps_11 py1 + ps_01 (1 - py1)))``.

    Raises:
        SingularityError: If the denominator is zero.
    """
    py1, ps_11, ps_01 = map(np.asarray, (py1, ps_11, ps_01))
    denominator = ps_11 * py1 + ps_01 * (1.0 - py1)
    _check_denominator(denominator, "bias_selection2")
    return _output(py1 * (1.0 - ps_11 / denominator))
