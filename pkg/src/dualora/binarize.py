"""Forward and backward rules for the sign nonlinearity of the direction group."""

from __future__ import annotations

import enum

import numpy as np

from dualora.matrix import Matrix


class SignScheme(str, enum.Enum):
    STE = "ste"
    XNOR = "xnor"
    DOREFA = "dorefa"

    @classmethod
    def parse(cls, value: "SignScheme | str") -> "SignScheme":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            raise ValueError(
                f"unknown sign scheme {value!r}; expected one of {[s.value for s in cls]}"
            ) from None


def clip(g: Matrix, lo: float = -1.0, hi: float = 1.0) -> Matrix:
    """Three-branch clamp: ``lo`` below ``lo``, ``hi`` at or above ``hi``, identity between."""
    if not lo < hi:
        raise ValueError(f"clip bounds must satisfy lo < hi, got lo={lo}, hi={hi}")
    return np.where(g < lo, lo, np.where(g < hi, g, hi))


def sign(m: Matrix) -> Matrix:
    """+1 where ``m > 0``, -1 everywhere else (zero maps to -1)."""
    return np.where(m > 0, 1.0, -1.0)


def row_scales(m: Matrix) -> Matrix:
    """Per-output-row mean absolute value, as a (rows, 1) column."""
    return np.mean(np.abs(m), axis=1, keepdims=True)


def sign_forward(m: Matrix, scheme: SignScheme | str = SignScheme.STE) -> Matrix:
    scheme = SignScheme.parse(scheme)
    s = sign(m)
    if scheme is SignScheme.STE:
        return s
    if scheme is SignScheme.XNOR:
        # a zero row gives scale 0 and therefore a zero output row
        return s * row_scales(m)
    return s * float(np.mean(np.abs(m)))


def sign_backward(
    upstream: Matrix,
    saved_input: Matrix,
    scheme: SignScheme | str = SignScheme.STE,
    gate_on_input: bool = False,
) -> Matrix:
    """Surrogate gradient of the sign node.

    STE clips the incoming gradient to [-1, 1]. XNOR and DoReFa pass it through
    untouched. ``gate_on_input`` additionally zeroes positions where
    ``|saved_input| > 1`` (the usual binary-network gate); it only affects STE.
    """
    if upstream.shape != saved_input.shape:
        raise ValueError(
            f"sign_backward: shape mismatch {upstream.shape} vs {saved_input.shape}"
        )
    scheme = SignScheme.parse(scheme)
    if scheme is not SignScheme.STE:
        return upstream.copy()
    g = clip(upstream, -1.0, 1.0)
    if gate_on_input:
        g = np.where(np.abs(saved_input) <= 1.0, g, 0.0)
    return g
