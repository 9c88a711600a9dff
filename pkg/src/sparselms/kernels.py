"""Filter kernels: one-iteration updates for LMS and its sparsity-aware
variants, plus the zero-point attractor functions they share.

All kernels are pure functions of their inputs.  The regressor convention
is most-recent-first: ``x = [x_n, x_{n-1}, ..., x_{n-L+1}]``.  The harness
in :mod:`sparselms.simulate` maintains the sliding window; the kernels are
window-agnostic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Variant(str, enum.Enum):
    """Algorithm selector."""

    LMS = "LMS"
    L0LMS = "L0LMS"
    ZALMS = "ZALMS"
    RZALMS = "RZALMS"


@dataclass(frozen=True)
class AlgoParams:
    """Algorithm variant plus its scalar controls.

    Fields irrelevant to the selected variant are ignored by every
    operation (an LMS step never looks at ``kappa``).

    Parameters
    ----------
    variant : Variant
        Which update rule to run.
    mu : float
        Step size, > 0.
    kappa : float
        Zero-point attraction weight (L0LMS only), >= 0.
    alpha : float
        Reciprocal of the attraction-range half-width (L0LMS only), > 0.
        The attractor acts on taps with ``|t| <= 1/alpha``.
    rho : float
        Attraction weight for ZALMS / RZALMS, >= 0.
    epsilon : float
        Shrink shape parameter (RZALMS only), > 0.
    """

    variant: Variant
    mu: float
    kappa: float = 0.0
    alpha: float = 1.0
    rho: float = 0.0
    epsilon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if self.kappa < 0 or self.rho < 0:
            raise ValueError("attraction weights must be >= 0")
        if self.variant is Variant.L0LMS and not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.variant is Variant.RZALMS and not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass
class FilterState:
    """Adaptive tap-weights plus the iteration counter.

    The weight vector length is fixed for the lifetime of the state and
    starts at all zeros (so the squared deviation at n=0 equals the
    squared norm of the unknown system).
    """

    w: np.ndarray
    n: int = 0

    @classmethod
    def zeros(cls, L: int) -> "FilterState":
        return cls(w=np.zeros(L), n=0)


@dataclass(frozen=True)
class SparseSystem:
    """The unknown impulse response: length L with exactly Q non-zeros."""

    s: np.ndarray
    L: int
    Q: int

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        object.__setattr__(self, "s", s)
        if s.shape != (self.L,):
            raise ValueError(f"s has shape {s.shape}, expected ({self.L},)")
        nnz = int(np.count_nonzero(s))
        if nnz != self.Q:
            raise ValueError(f"s has {nnz} non-zeros, declared Q={self.Q}")

    @classmethod
    def from_vector(cls, s) -> "SparseSystem":
        s = np.asarray(s, dtype=float)
        return cls(s=s, L=s.size, Q=int(np.count_nonzero(s)))

    @property
    def norm_sq(self) -> float:
        return float(self.s @ self.s)


# ---------------------------------------------------------------------------
# attractor functions
# ---------------------------------------------------------------------------

def _attract_l0(t: np.ndarray, alpha: float) -> np.ndarray:
    """Piecewise-linear zero-point attractor: 2*alpha^2*t - 2*alpha*sgn(t)
    inside |t| <= 1/alpha, zero outside.  sgn(0) = 0, and at the boundary
    |t| = 1/alpha the linear branch evaluates to 0, so the function is
    continuous."""
    inside = np.abs(t) <= 1.0 / alpha
    return np.where(inside, 2.0 * alpha * alpha * t - 2.0 * alpha * np.sign(t), 0.0)


def _attract_za(t: np.ndarray) -> np.ndarray:
    return -np.sign(t)


def _attract_rza(t: np.ndarray, epsilon: float) -> np.ndarray:
    return -np.sign(t) / (1.0 + epsilon * np.abs(t))


def attractor(variant, t, params: AlgoParams):
    """Evaluate the zero-point attractor g(t) for one tap value (or an
    array of tap values).

    Returns the raw attractor output, not yet weighted by kappa or rho.

    Raises
    ------
    ValueError
        For ``variant = LMS`` (plain LMS has no attractor).
    """
    variant = Variant(variant)
    t = np.asarray(t, dtype=float)
    if variant is Variant.L0LMS:
        out = _attract_l0(t, params.alpha)
    elif variant is Variant.ZALMS:
        out = _attract_za(t)
    elif variant is Variant.RZALMS:
        out = _attract_rza(t, params.epsilon)
    else:
        raise ValueError("no attractor for plain LMS")
    return out if out.ndim else float(out)


def synth_output(s, x, v: float) -> float:
    """Observed output of the unknown system: d = x @ s + v."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    if s.shape != x.shape:
        raise ValueError(f"length mismatch: s{s.shape} vs x{x.shape}")
    return float(x @ s + v)


def step(state: FilterState, x, d: float, params: AlgoParams):
    """One adaptive-filter iteration.

    Computes the a-priori error ``e = d - x @ w`` and applies

        w' = w + mu*e*x + (attraction term evaluated at w)

    where the attraction term is ``kappa * g(w)`` for L0LMS,
    ``rho * g(w)`` for ZALMS/RZALMS, and absent for LMS.  The attractor
    argument is the current (pre-gradient) weight vector.  Pure: returns
    a new state, inputs untouched.

    Parameters
    ----------
    state : FilterState
    x : array
        Current regressor, most-recent-first, same length as ``state.w``.
    d : float
        Observed (noisy) output sample.
    params : AlgoParams

    Returns
    -------
    (FilterState, float)
        The updated state and the a-priori error e.
    """
    x = np.asarray(x, dtype=float)
    w = state.w
    if x.shape != w.shape:
        raise ValueError(f"dimension mismatch: x{x.shape} vs w{w.shape}")
    if not (np.isfinite(d) and np.all(np.isfinite(x))):
        raise ValueError("non-finite input values")
    e = float(d - x @ w)
    w_new = w + (params.mu * e) * x
    v = params.variant
    if v is Variant.L0LMS:
        if params.kappa != 0.0:
            w_new += params.kappa * _attract_l0(w, params.alpha)
    elif v is Variant.ZALMS:
        if params.rho != 0.0:
            w_new += params.rho * _attract_za(w)
    elif v is Variant.RZALMS:
        if params.rho != 0.0:
            w_new += params.rho * _attract_rza(w, params.epsilon)
    return FilterState(w=w_new, n=state.n + 1), e
