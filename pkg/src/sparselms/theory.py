"""Closed-form performance theory for the zero-attracting (l0) LMS family.

Everything here is analytic: steady-state mean-square deviation (MSD),
optimal attraction weight, the sign-attractor (ZA) limit, and the full
transient learning-curve model.  The formulas hold for white zero-mean
Gaussian input of power ``Px``, white additive noise of power ``Pv``,
and rest on the usual independence approximation between the regressor,
the weights, and the noise.

Numerical style: several published-form expressions subtract nearly equal
large terms (the attraction constants ``beta1`` and ``beta2`` agree to
five or more digits in realistic regimes).  Every such expression is
evaluated here through an algebraically identical cancellation-free
rearrangement, so dual-form consistency holds to ~1e-12 instead of ~1e-8.
"""

from __future__ import annotations

import decimal
import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .kernels import AlgoParams, SparseSystem, Variant

__all__ = [
    "SnrConvention", "SignalModel", "TapClassification", "DeltaSet",
    "AttractionStrengths", "BetaSet", "EtaSet", "SteadyStateReport",
    "ConvergenceModel", "ZASteadyReport", "AccelerationReport",
    "StabilityError", "ConsistencyError", "DegenerateSpectrumError",
    "ParameterRangeError", "deltas", "classify", "strengths", "mu_max",
    "lms_theory", "steady_bias", "betas", "etas", "solve_omega",
    "l0_steady_msd", "optimal_kappa", "approx_min_msd", "za_steady_msd",
    "convergence_model", "exact_recursion", "small_tap_mean_curve",
    "acceleration_check", "ApproxMode",
]

_SQRT_8_PI = math.sqrt(8.0 / math.pi)


class StabilityError(ValueError):
    """Step size outside the mean-square stability range."""


class ConsistencyError(ArithmeticError):
    """Two analytically equivalent formulas disagreed numerically."""


class DegenerateSpectrumError(ValueError):
    """Transient modes coincide; the closed-form curve is ill-defined."""


class ParameterRangeError(ValueError):
    """A closed form was evaluated outside its valid parameter range."""


class SnrConvention(str, enum.Enum):
    # output-referred: noise compared against the filtered-signal power
    # Px * ||s||^2; input-referred: against the raw input power Px.
    OUTPUT_REFERRED = "OUTPUT_REFERRED"
    INPUT_REFERRED = "INPUT_REFERRED"


class ApproxMode(str, enum.Enum):
    SPARSE = "SPARSE"   # very sparse system, small step size
    Q0 = "Q0"           # all-zero system


@dataclass(frozen=True)
class SignalModel:
    """Input/noise powers, optionally tied to a stated SNR.

    ``ref_power`` is the signal power the SNR refers to (``Px * ||s||^2``
    for the output-referred convention, ``Px`` for input-referred).  When
    both ``snr_db`` and ``ref_power`` are present, ``Pv`` is validated
    against them.
    """

    Px: float
    Pv: float
    snr_db: float | None = None
    snr_convention: SnrConvention = SnrConvention.OUTPUT_REFERRED
    ref_power: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "snr_convention",
                           SnrConvention(self.snr_convention))
        if not (self.Px > 0 and self.Pv > 0):
            raise ValueError("Px and Pv must be > 0")
        if self.snr_db is not None and self.ref_power is not None:
            expect = self.ref_power * 10.0 ** (-self.snr_db / 10.0)
            if not math.isclose(self.Pv, expect, rel_tol=1e-9):
                raise ValueError(
                    f"Pv={self.Pv} inconsistent with snr_db={self.snr_db} "
                    f"(expected {expect})")

    @classmethod
    def from_snr(cls, Px: float, snr_db: float,
                 convention=SnrConvention.OUTPUT_REFERRED,
                 s=None, Q: int | None = None,
                 sigma_s: float = 1.0) -> "SignalModel":
        """Derive Pv from an SNR statement.

        Output-referred needs the signal power at the system output:
        pass the coefficient vector ``s`` (uses ``||s||^2``) or the
        support size ``Q`` (uses the ensemble expectation
        ``Q * sigma_s^2``).
        """
        convention = SnrConvention(convention)
        if convention is SnrConvention.OUTPUT_REFERRED:
            if s is not None:
                s = np.asarray(s, dtype=float)
                ref = Px * float(s @ s)
            elif Q is not None:
                ref = Px * Q * sigma_s ** 2
            else:
                raise ValueError(
                    "output-referred SNR needs s or Q to fix signal power")
        else:
            ref = Px
        return cls(Px=Px, Pv=ref * 10.0 ** (-snr_db / 10.0),
                   snr_db=snr_db, snr_convention=convention, ref_power=ref)


@dataclass(frozen=True)
class TapClassification:
    """Index partition of the coefficients by magnitude: ``large``
    (at or beyond the attraction-range edge), ``small`` (non-zero,
    strictly inside), ``zero``."""

    large: np.ndarray
    small: np.ndarray
    zero: np.ndarray


@dataclass(frozen=True)
class DeltaSet:
    """The four step-size contraction constants that appear throughout
    the steady-state and transient formulas."""

    delta_L: float
    delta_Q: float
    delta_0: float
    delta_0_prime: float

    def as_tuple(self):
        return (self.delta_L, self.delta_Q, self.delta_0,
                self.delta_0_prime)


@dataclass(frozen=True)
class AttractionStrengths:
    """Aggregate attractor action on the small (non-zero, in-range)
    coefficients: ``G`` sums g(s_k)^2, ``G_prime`` sums s_k*g(s_k)
    (never positive — the attractor opposes the coefficient)."""

    G: float
    G_prime: float


@dataclass(frozen=True)
class BetaSet:
    """Constants of the steady-state MSD expression in the attraction
    weight.  ``diff`` and ``summ`` store beta1 -+ beta2 computed through
    cancellation-free identities (beta1 and beta2 can agree to many
    digits, so ``beta1 - beta2`` must never be formed literally)."""

    beta0: float
    beta1: float
    beta2: float
    beta3: float
    diff: float   # beta1 - beta2, exact rearrangement
    summ: float   # beta1 + beta2, exact rearrangement


@dataclass(frozen=True)
class EtaSet:
    """Constants of the sparse-limit approximations and of the stable
    beta recombinations."""

    eta0: float
    eta1: float
    eta2: float
    eta3: float
    eta4: float
    eta5: float
    eta6: float


@dataclass(frozen=True)
class SteadyStateReport:
    """Steady-state summary at one operating point.

    ``bias`` is per-tap and therefore only available when the actual
    coefficient vector is known (None in expected-strengths mode).
    """

    omega: float
    d_inf: float
    bias: np.ndarray | None
    kappa_opt: float
    d_min: float
    kappa_outperform_bound: float
    d_lms: float


@dataclass(frozen=True)
class ZASteadyReport:
    """Steady state of the sign-attractor (ZA) variant."""

    d_inf_za: float
    gamma: float
    y: float
    rho_opt: float


@dataclass(frozen=True)
class ConvergenceModel:
    """Transient MSD model: a linear two-state recursion (total deviation
    and zero-tap deviation) driven by a geometric forcing term, plus its
    closed-form solution  D_n = c1*lam1^n + c2*lam2^n + c3*lam3^n + d_inf.

    ``lambda1`` is the dominant (largest) of the two recursion eigenvalues
    so that the attraction-free limit keeps only the ``c1`` mode.
    """

    a00: float
    a01: float
    a10: float
    a11: float
    b00_hat: float
    b01_hat: float
    b1_hat: float
    lambda1: float
    lambda2: float
    lambda3: float
    c1: float
    c2: float
    c3: float
    d_inf: float
    omega: float
    condition_number: float
    # generating parameters, kept for downstream checks
    L: int
    Q: int
    mu: float
    kappa: float
    alpha: float
    Px: float
    Pv: float
    s_norm_sq: float

    @property
    def A(self) -> np.ndarray:
        return np.array([[self.a00, self.a01], [self.a10, self.a11]])

    def msd(self, n) -> np.ndarray | float:
        """Closed-form learning curve at iteration(s) n."""
        n = np.asarray(n)
        out = (self.d_inf + self.c1 * self.lambda1 ** n
               + self.c2 * self.lambda2 ** n + self.c3 * self.lambda3 ** n)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class AccelerationReport:
    sufficient_mu: bool
    sufficient_cs_empty: bool
    actual_faster: bool
    l0_rate: float
    lms_rate: float


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def deltas(L: int, Q: int, mu: float, Px: float) -> DeltaSet:
    """The four contraction constants for lengths L, Q and step mu."""
    if L < 1 or not 0 <= Q <= L:
        raise ValueError(f"need L >= 1 and 0 <= Q <= L, got L={L}, Q={Q}")
    if not (mu > 0 and Px > 0):
        raise ValueError("mu and Px must be > 0")
    return DeltaSet(
        delta_L=2.0 - (L + 2) * mu * Px,
        delta_Q=2.0 - (Q + 2) * mu * Px,
        delta_0=1.0 - mu * Px,
        delta_0_prime=2.0 - mu * Px,
    )


def classify(s, alpha: float) -> TapClassification:
    """Partition coefficients into large / small / zero relative to the
    attraction-range edge 1/alpha.  The boundary |s_k| = 1/alpha counts
    as large."""
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    edge = 1.0 / alpha
    return TapClassification(
        large=np.flatnonzero(a >= edge),
        small=np.flatnonzero((a > 0) & (a < edge)),
        zero=np.flatnonzero(a == 0),
    )


def _g_l0(t, alpha):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= 1.0 / alpha,
                    2.0 * alpha * alpha * t - 2.0 * alpha * np.sign(t), 0.0)


def strengths(alpha: float, s=None, Q: int | None = None,
              sigma_s: float = 1.0, nodes: int = 128) -> AttractionStrengths:
    """Attraction strengths, exact or in expectation.

    Exact mode (``s`` given): sum g(s_k)^2 and s_k*g(s_k) over the small
    coefficients of ``s``.

    Expected mode (``Q`` given): model the Q non-zero coefficients as
    N(0, sigma_s^2) and return Q-scaled expectations of the same
    quantities restricted to the attraction range.  The integrals run
    over [0, min(1/alpha, 16*sigma_s)] with Gauss-Legendre quadrature
    (both integrands are even; past 16 sigma the Gaussian mass is below
    1e-56, and truncating there keeps the nodes where the density lives
    when 1/alpha is huge).
    """
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if (s is None) == (Q is None):
        raise ValueError("give exactly one of s (exact) or Q (expected)")
    if s is not None:
        s = np.asarray(s, dtype=float)
        m = (np.abs(s) > 0) & (np.abs(s) < 1.0 / alpha)
        gs = _g_l0(s[m], alpha)
        return AttractionStrengths(G=float(np.sum(gs * gs)),
                                   G_prime=float(np.sum(s[m] * gs)))
    if Q == 0:
        return AttractionStrengths(G=0.0, G_prime=0.0)
    x, w = leggauss(nodes)
    c = min(1.0 / alpha, 16.0 * sigma_s)
    t = 0.5 * c * (x + 1.0)
    ww = 0.5 * c * w
    pdf = np.exp(-0.5 * (t / sigma_s) ** 2) / (sigma_s * math.sqrt(2 * math.pi))
    gt = 2.0 * alpha * alpha * t - 2.0 * alpha      # t > 0 branch
    G = 2.0 * Q * float(np.sum(ww * gt * gt * pdf))
    Gp = 2.0 * Q * float(np.sum(ww * t * gt * pdf))
    return AttractionStrengths(G=G, G_prime=Gp)


def mu_max(L: int, Px: float) -> float:
    """Upper mean-square-stability limit for the step size."""
    return 2.0 / ((L + 2) * Px)


def _require_stable(L, mu, Px):
    lim = mu_max(L, Px)
    if not 0.0 < mu < lim:
        raise StabilityError(
            f"mu={mu} outside the stable range (0, {lim})")


def lms_theory(L: int, mu: float, Px: float, Pv: float, s=None,
               n=None):
    """Plain-LMS steady MSD, or the instantaneous MSD at iteration n.

    Without ``n``: the steady-state value mu*Pv*L/delta_L.  With ``n``
    (scalar or array): the single-mode geometric learning curve starting
    from ||s||^2, which requires ``s``.
    """
    _require_stable(L, mu, Px)
    d = deltas(L, 0, mu, Px)
    d_inf = mu * Pv * L / d.delta_L
    if n is None:
        return d_inf
    if s is None:
        raise ValueError("the transient value needs s (for ||s||^2)")
    s = np.asarray(s, dtype=float)
    lam = 1.0 - mu * Px * d.delta_L
    n = np.asarray(n)
    out = d_inf + (float(s @ s) - d_inf) * lam ** n
    return out if out.ndim else float(out)


def steady_bias(s, params: AlgoParams, Px: float) -> np.ndarray:
    """Steady-state mean weight error per tap for the l0 variant:
    kappa*g(s_k)/(mu*Px) on small coefficients, zero on large and zero
    coefficients (those are unbiased).

    Valid when the attraction is a small perturbation of the gradient
    step; warns when 2*alpha^2*kappa >= 0.1*mu*Px.
    """
    if Variant(params.variant) is not Variant.L0LMS:
        raise ValueError("steady_bias applies to the l0 variant only")
    if 2.0 * params.alpha ** 2 * params.kappa >= 0.1 * params.mu * Px:
        warnings.warn(
            "attraction strength is not small against the gradient step "
            f"(2*alpha^2*kappa = {2*params.alpha**2*params.kappa:.3e} vs "
            f"0.1*mu*Px = {0.1*params.mu*Px:.3e}); bias formula degrades",
            RuntimeWarning, stacklevel=2)
    s = np.asarray(s, dtype=float)
    cls = classify(s, params.alpha)
    out = np.zeros_like(s)
    sk = s[cls.small]
    out[cls.small] = params.kappa * _g_l0(sk, params.alpha) / (params.mu * Px)
    return out


# ---------------------------------------------------------------------------
# steady state
# ---------------------------------------------------------------------------

def betas(d: DeltaSet, st: AttractionStrengths, L: int, Q: int, mu: float,
          alpha: float, Px: float, Pv: float) -> BetaSet:
    """Constants of the steady-state MSD as a function of the attraction
    weight, with cancellation-free combinations precomputed."""
    DL, DQ, D0, D0p = d.as_tuple()
    G = st.G
    b0 = mu * Px * D0p * DL * G \
        + 4 * alpha ** 2 * DQ * (mu * Px * DL + D0 * DQ / math.pi)
    if b0 == 0.0:
        raise ParameterRangeError(
            "degenerate attraction constants (beta0 = 0)")
    # recombination through intermediate factors: beta1 = e1*(e2+e3+e4),
    # beta2 = 2*e1*sqrt(e2*e3), so beta1 -+ beta2 collapse to squares.
    e1 = 1.0 / (mu ** 2 * Px ** 2 * DL)
    e2 = (L - Q) * b0 / (DL * DQ)
    e3 = 4 * alpha ** 2 * (L - Q) * D0 * DQ / (math.pi * DL)
    e4 = G * D0p * DL / DQ
    b1 = e1 * (e2 + e3 + e4)
    b2 = 2 * e1 * math.sqrt(e2 * e3)
    b3 = 2 * mu ** 3 * Px ** 2 * Pv * D0 * DL / b0
    diff = e1 * ((math.sqrt(e2) - math.sqrt(e3)) ** 2 + e4)
    summ = e1 * ((math.sqrt(e2) + math.sqrt(e3)) ** 2 + e4)
    return BetaSet(beta0=b0, beta1=b1, beta2=b2, beta3=b3,
                   diff=diff, summ=summ)


def etas(d: DeltaSet, st: AttractionStrengths, L: int, Q: int, mu: float,
         alpha: float, Px: float, Pv: float) -> EtaSet:
    """Constants of the sparse-limit MSD approximations."""
    DL, DQ, D0, D0p = d.as_tuple()
    G = st.G
    b = betas(d, st, L, Q, mu, alpha, Px, Pv)
    return EtaSet(
        eta0=16 * Pv * alpha ** 2 * D0 ** 2 / (math.pi * mu * Px ** 2 * DL ** 3),
        eta1=1.0 / (mu ** 2 * Px ** 2 * DL),
        eta2=(L - Q) * b.beta0 / (DL * DQ),
        eta3=4 * alpha ** 2 * (L - Q) * D0 * DQ / (math.pi * DL),
        eta4=G * D0p * DL / DQ,
        eta5=4 * alpha ** 2 * mu * Px * L + 2 * G,
        eta6=16 * alpha ** 2 * L / (math.pi * DL),
    )


def solve_omega(d: DeltaSet, st: AttractionStrengths, L: int, Q: int,
                mu: float, kappa: float, alpha: float, Px: float,
                Pv: float) -> float:
    """RMS deviation scale of the zero coefficients in steady state.

    Unique non-negative root of the quadratic power-balance equation;
    the leading coefficient is positive and the constant term is
    non-positive, so the root exists.  Evaluated as -2c/(b + sqrt(b^2 -
    4ac)) to avoid subtracting nearly equal terms when kappa is small.
    """
    _require_stable(L, mu, Px)
    DL, DQ, D0, D0p = d.as_tuple()
    a = 2 * mu * Px * D0 * DL
    b = 8 * alpha * kappa * D0 * DQ / math.sqrt(2 * math.pi)
    c = -(2 * mu ** 2 * Px * Pv * D0 + 4 * alpha ** 2 * kappa ** 2 * DQ
          + kappa ** 2 * D0p * st.G)
    if b == 0.0 and c == 0.0:
        return 0.0
    disc = b * b - 4 * a * c
    if disc < 0:
        raise ConsistencyError("power-balance quadratic has no real root")
    return -2 * c / (b + math.sqrt(disc))


def _strengths_of(system_or_strengths, alpha):
    """Normalize the (system | (L, Q, strengths)) polymorphic argument."""
    if isinstance(system_or_strengths, SparseSystem):
        sysm = system_or_strengths
        st = strengths(alpha, s=sysm.s)
        return sysm.L, sysm.Q, st, sysm
    L, Q, st = system_or_strengths
    if not isinstance(st, AttractionStrengths):
        raise TypeError("expected (L, Q, AttractionStrengths)")
    return int(L), int(Q), st, None


def _d_inf_beta(b: BetaSet, d_lms: float, kappa: float) -> float:
    # d_lms + beta1*k^2 - beta2*k*sqrt(k^2+beta3), rearranged so the
    # near-cancelling pair enters only through the exact `diff`.
    extra = kappa * (b.diff * kappa
                     - b.beta2 * b.beta3 / (math.sqrt(kappa ** 2 + b.beta3)
                                            + kappa))
    return d_lms + extra


def _low_snr_warning(signal: SignalModel):
    if signal.snr_db is not None and signal.snr_db < 30:
        warnings.warn(
            f"SNR {signal.snr_db} dB is low; the steady-state and "
            "transient formulas degrade noticeably below 30 dB",
            RuntimeWarning, stacklevel=3)


def l0_steady_msd(system_or_strengths, params: AlgoParams,
                  signal: SignalModel) -> SteadyStateReport:
    """Steady-state MSD of the l0 variant, with optimal-weight summary.

    Accepts either a :class:`SparseSystem` (exact strengths, per-tap bias
    available) or a tuple ``(L, Q, AttractionStrengths)`` (expected
    strengths, bias None).  The primary value is computed from the
    weight-explicit form and cross-checked against the power-balance
    form; disagreement beyond relative 1e-9 raises ConsistencyError.
    """
    if Variant(params.variant) is not Variant.L0LMS:
        raise ValueError("l0_steady_msd applies to the l0 variant")
    L, Q, st, sysm = _strengths_of(system_or_strengths, params.alpha)
    _require_stable(L, params.mu, signal.Px)
    _low_snr_warning(signal)
    mu, kappa, alpha = params.mu, params.kappa, params.alpha
    Px, Pv = signal.Px, signal.Pv
    d = deltas(L, Q, mu, Px)
    b = betas(d, st, L, Q, mu, alpha, Px, Pv)
    d_lms = mu * Pv * L / d.delta_L
    d_inf = _d_inf_beta(b, d_lms, kappa)

    # independent route: power balance in the zero-tap deviation scale
    om = solve_omega(d, st, L, Q, mu, kappa, alpha, Px, Pv)
    DL, DQ, D0, D0p = d.as_tuple()
    d_inf_om = (2 * (L - Q) * D0 * om ** 2 / DQ + Q * mu * Pv / DQ
                + kappa ** 2 * D0p * st.G / (mu ** 2 * Px ** 2 * DQ))
    scale = max(abs(d_inf), abs(d_inf_om))
    if scale > 0 and abs(d_inf - d_inf_om) > 1e-9 * scale:
        raise ConsistencyError(
            f"steady-state forms disagree: {d_inf!r} vs {d_inf_om!r}")

    ko, dmin, bound = optimal_kappa(b, d, L, mu, Pv)
    bias = steady_bias(sysm.s, params, Px) if sysm is not None else None
    return SteadyStateReport(omega=om, d_inf=d_inf, bias=bias,
                             kappa_opt=ko, d_min=dmin,
                             kappa_outperform_bound=bound, d_lms=d_lms)


def optimal_kappa(b: BetaSet, d: DeltaSet, L: int, mu: float,
                  Pv: float):
    """Minimizing attraction weight, its MSD, and the largest weight that
    still beats plain LMS.

    Returns ``(kappa_opt, d_min, kappa_outperform_bound)``.  In the
    degenerate case (no small coefficients and fully dense, beta2 = 0 or
    beta1 <= beta2) the optimum collapses to plain LMS: (0, d_lms, 0).
    """
    d_lms = mu * Pv * L / d.delta_L
    if b.beta2 == 0.0 or b.diff <= 0.0:
        return 0.0, d_lms, 0.0
    # kappa_opt = sqrt(beta3)/2 * (r^(1/4) - r^(-1/4)), r = summ/diff,
    # evaluated as a hyperbolic half-angle so small ratios keep digits.
    t = b.beta2 / b.beta1
    ko = math.sqrt(b.beta3) * math.sinh(0.5 * math.atanh(t))
    root = math.sqrt(b.diff * b.summ)              # sqrt(beta1^2 - beta2^2)
    dmin = d_lms - 0.5 * b.beta3 * b.beta2 ** 2 / (b.beta1 + root)
    bound = b.beta2 * math.sqrt(b.beta3 / (b.diff * b.summ))
    return ko, dmin, bound


def approx_min_msd(mode, L: int, Q: int, params: AlgoParams,
                   signal: SignalModel, st: AttractionStrengths) -> float:
    """Simplified minimum-MSD approximations.

    ``SPARSE``: valid for very sparse systems at small step size
    (warns when Q/L or (Q+2)*mu*Px/2 exceeds 0.1).  ``Q0``: the all-zero
    system, exact coincidence with the full optimum and independent of
    alpha.
    """
    mode = ApproxMode(mode)
    mu, alpha = params.mu, params.alpha
    Px, Pv = signal.Px, signal.Pv
    _require_stable(L, mu, Px)
    d = deltas(L, Q, mu, Px)
    DL, DQ, D0, D0p = d.as_tuple()
    d_lms = mu * Pv * L / DL
    if mode is ApproxMode.Q0:
        if Q != 0:
            raise ValueError(f"Q0 mode requires Q = 0, got Q={Q}")
        return d_lms - 2 * mu * Pv * L * D0 ** 2 \
            / (2 * DL * D0 ** 2 + math.pi * mu * Px * DL ** 2)
    if Q / L > 0.1 or (Q + 2) * mu * Px / 2 > 0.1:
        warnings.warn(
            f"sparse approximation stretched: Q/L={Q/L:.3f}, "
            f"(Q+2)*mu*Px/2={(Q+2)*mu*Px/2:.3f} (want both <= 0.1)",
            RuntimeWarning, stacklevel=2)
    e = etas(d, st, L, Q, mu, alpha, Px, Pv)
    root = math.sqrt(e.eta5 ** 2 + 32 * alpha ** 2 * L * st.G / math.pi)
    return d_lms * (1.0 - e.eta6 / (e.eta5 + e.eta6 + root))


def za_steady_msd(L: int, Q: int, mu: float, rho: float, Px: float,
                  Pv: float) -> ZASteadyReport:
    """Steady-state MSD of the sign-attractor (ZA) variant.

    Primary value from the explicit closed form; cross-checked against
    the quadratic-in-y route (the historical derivation for this
    algorithm).  ``rho_opt`` is the l0-optimal weight transported through
    the small-alpha limit (2*alpha*kappa held fixed, per-tap strength
    4*alpha^2 per non-zero coefficient).
    """
    _require_stable(L, mu, Px)
    if rho < 0:
        raise ValueError("rho must be >= 0")
    d = deltas(L, Q, mu, Px)
    DL, DQ, D0, D0p = d.as_tuple()
    gamma = 8 * rho ** 2 * DQ ** 2 * D0 ** 2 / math.pi \
        + 16 * mu * Px * DL * D0 ** 2 * (rho ** 2 * (Q + 1)
                                         + mu ** 2 * Px * Pv)
    if gamma < 0:
        raise ParameterRangeError(
            f"attraction weight rho={rho} leaves the valid range "
            "(negative discriminant)")
    # The sqrt(gamma) term nearly cancels the term after it; multiplying
    # by the conjugate turns their difference into a single-signed sum.
    pair_hi = 2 * rho * D0 * DQ / math.pi + math.sqrt(gamma / (2 * math.pi))
    pair_num = (8 / math.pi * mu * Px * DL * D0 ** 2
                * (rho ** 2 * (Q + 1) + mu ** 2 * Px * Pv))
    attract_gain = 0.0 if rho == 0.0 else \
        -(L - Q) * rho * pair_num / (pair_hi * mu ** 2 * Px ** 2 * DL ** 2)
    d_za = attract_gain + (rho ** 2 * (mu * L * Px + 2 * Q * D0)
                           + L * mu ** 3 * Px ** 2 * Pv) / (mu ** 2 * Px ** 2 * DL)

    # independent route: quadratic in the zero-tap deviation scale y.
    # The route is badly conditioned in binary64 (the MSD can sit many
    # orders below its intermediate terms), so the reference is computed
    # in 40-digit decimal; the consistency gate then probes the closed
    # form above, not the reference's rounding.
    with decimal.localcontext() as ctx:
        ctx.prec = 40
        pi_d = decimal.Decimal("3.141592653589793238462643383279502884197")
        mu_d, rho_d = decimal.Decimal(mu), decimal.Decimal(rho)
        px_d, pv_d = decimal.Decimal(Px), decimal.Decimal(Pv)
        dl_d = 2 - (L + 2) * mu_d * px_d
        d0_d = 1 - mu_d * px_d
        b_d = (L - Q) * rho_d * (2 * d0_d / pi_d).sqrt()
        c_d = (-(decimal.Decimal(L - 2 * Q) / (2 * pi_d) + Q + 1)
               * d0_d * rho_d ** 2 / (mu_d * px_d)
               - d0_d ** 2 * rho_d ** 2 / (pi_d * mu_d ** 2 * px_d ** 2)
               - mu_d * pv_d * d0_d)
        y_d = (-b_d + (b_d * b_d - 4 * dl_d * c_d).sqrt()) / (2 * dl_d)
        t_d = (pi_d * mu_d * px_d + d0_d) * rho_d ** 2 \
            / (2 * pi_d * mu_d ** 2 * px_d ** 2)
        dy_d = 2 / (mu_d * px_d) * (y_d * y_d - t_d) - pv_d / px_d
    y = float(y_d)
    d_y = float(dy_d)
    scale = max(abs(d_za), abs(d_y))
    if scale > 0 and abs(d_za - d_y) > 1e-9 * scale:
        raise ConsistencyError(
            f"ZA steady-state forms disagree: {d_za!r} vs {d_y!r}")

    # optimal rho via the small-alpha limit of the l0 optimum
    alpha_lim = 1e-5
    st_lim = AttractionStrengths(G=4 * alpha_lim ** 2 * Q, G_prime=0.0)
    d_lim = deltas(L, Q, mu, Px)
    b_lim = betas(d_lim, st_lim, L, Q, mu, alpha_lim, Px, Pv)
    ko, _, _ = optimal_kappa(b_lim, d_lim, L, mu, Pv)
    rho_opt = 2 * alpha_lim * ko
    return ZASteadyReport(d_inf_za=d_za, gamma=gamma, y=y, rho_opt=rho_opt)


# ---------------------------------------------------------------------------
# transient
# ---------------------------------------------------------------------------

def _transient_pieces(L, Q, mu, kappa, alpha, Px, Pv, st):
    d = deltas(L, Q, mu, Px)
    DL, DQ, D0, D0p = d.as_tuple()
    om = solve_omega(d, st, L, Q, mu, kappa, alpha, Px, Pv)
    ak_w = alpha * kappa / om if kappa > 0 else 0.0
    a00 = 1.0 - mu * Px * DL
    a01 = -_SQRT_8_PI * ak_w * D0
    a10 = (L - Q) * mu ** 2 * Px ** 2
    a11 = 1.0 - 2 * mu * Px * D0 - _SQRT_8_PI * ak_w * D0
    b00 = (L * mu ** 2 * Px * Pv
           + (L - Q) * (4 * alpha ** 2 * kappa ** 2
                        - _SQRT_8_PI * alpha * kappa * om * D0)
           + kappa ** 2 * D0p * st.G / (mu * Px))
    b01 = -2 * kappa * D0 * (kappa * st.G / (mu * Px) + st.G_prime)
    b1 = (L - Q) * (mu ** 2 * Px * Pv + 4 * alpha ** 2 * kappa ** 2
                    - _SQRT_8_PI * alpha * kappa * om * D0)
    return d, om, (a00, a01, a10, a11), (b00, b01, b1)


def convergence_model(system_or_strengths, params: AlgoParams,
                      signal: SignalModel) -> ConvergenceModel:
    """Build the closed-form transient model.

    The two recursion eigenvalues are computed from the cancellation-free
    discriminant (a00 - a11)^2 + 4*a01*a10 (analytically equal to
    tr^2 - 4*det); ``lambda1`` is the larger.  The curve coefficients
    c1, c2 come from matching the first two exact MSD values, c3 from the
    residue of the geometric forcing mode.  Near-coincident modes raise
    DegenerateSpectrumError (the step-by-step recursion remains valid in
    that regime — use :func:`exact_recursion`).
    """
    L, Q, st, sysm = _strengths_of(system_or_strengths, params.alpha)
    _require_stable(L, params.mu, signal.Px)
    _low_snr_warning(signal)
    mu, kappa, alpha = params.mu, params.kappa, params.alpha
    Px, Pv = signal.Px, signal.Pv
    if sysm is not None:
        s_norm_sq = sysm.norm_sq
    else:
        s_norm_sq = float(Q)    # ensemble expectation with unit-variance taps
    d, om, (a00, a01, a10, a11), (b00, b01, b1) = _transient_pieces(
        L, Q, mu, kappa, alpha, Px, Pv, st)

    tr = a00 + a11
    disc_sq = (a00 - a11) ** 2 + 4 * a01 * a10
    disc = math.sqrt(max(disc_sq, 0.0))
    lam1 = 0.5 * (tr + disc)
    lam2 = 0.5 * (tr - disc)
    lam3 = d.delta_0

    if abs(lam1 - lam2) < 1e-12 or abs(lam1 - lam3) < 1e-12 \
            or abs(lam2 - lam3) < 1e-12:
        raise DegenerateSpectrumError(
            f"transient modes nearly coincide (lambdas = {lam1}, {lam2}, "
            f"{lam3}); evaluate the recursion directly instead")

    A = np.array([[a00, a01], [a10, a11]])
    d_inf = float(np.linalg.solve(np.eye(2) - A,
                                  np.array([b00, b1]))[0])
    c3 = (lam3 - a11) * b01 / ((lam3 - lam1) * (lam3 - lam2))
    D0_ = s_norm_sq
    D1_ = a00 * D0_ + b00 + b01           # zero-tap deviation starts at 0
    M = np.array([[1.0, 1.0], [lam1, lam2]])
    cond = float(np.linalg.cond(M))
    if cond > 1e12:
        raise DegenerateSpectrumError(
            f"mode-matching system is ill-conditioned (cond = {cond:.3e})")
    c1, c2 = np.linalg.solve(M, np.array([D0_ - c3 - d_inf,
                                          D1_ - c3 * lam3 - d_inf]))
    return ConvergenceModel(
        a00=a00, a01=a01, a10=a10, a11=a11,
        b00_hat=b00, b01_hat=b01, b1_hat=b1,
        lambda1=lam1, lambda2=lam2, lambda3=lam3,
        c1=float(c1), c2=float(c2), c3=float(c3), d_inf=d_inf,
        omega=om, condition_number=cond,
        L=L, Q=Q, mu=mu, kappa=kappa, alpha=alpha, Px=Px, Pv=Pv,
        s_norm_sq=s_norm_sq)


def exact_recursion(system_or_strengths, params: AlgoParams,
                    signal: SignalModel, n_max: int) -> np.ndarray:
    """Iterate the two-state transient recursion exactly.

    Returns an ``(n_max+1, 2)`` array of (total deviation, zero-tap
    deviation) starting from (||s||^2, 0).  This is the ground truth the
    closed-form curve must reproduce, and it stays valid when the closed
    form degenerates.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    L, Q, st, sysm = _strengths_of(system_or_strengths, params.alpha)
    _require_stable(L, params.mu, signal.Px)
    mu, kappa, alpha = params.mu, params.kappa, params.alpha
    Px, Pv = signal.Px, signal.Pv
    s_norm_sq = sysm.norm_sq if sysm is not None else float(Q)
    d, om, (a00, a01, a10, a11), (b00, b01, b1) = _transient_pieces(
        L, Q, mu, kappa, alpha, Px, Pv, st)
    A = np.array([[a00, a01], [a10, a11]])
    u = np.array([s_norm_sq, 0.0])
    out = np.empty((n_max + 1, 2))
    out[0] = u
    p3 = 1.0
    lam3 = d.delta_0
    for n in range(n_max):
        u = A @ u + np.array([b00 + b01 * p3, b1])
        p3 *= lam3
        out[n + 1] = u
    return out


def small_tap_mean_curve(s_k: float, n, mu: float, kappa: float, Px: float,
                  alpha: float):
    """Mean weight-error trajectory of one small coefficient.

    Starts at -s_k (zero-initialized weights) and relaxes geometrically
    to the steady bias kappa*g(s_k)/(mu*Px).
    """
    g = float(_g_l0(s_k, alpha))
    bias_inf = kappa * g / (mu * Px)
    lam = 1.0 - mu * Px
    n = np.asarray(n)
    out = bias_inf - (mu * Px * s_k + kappa * g) / (mu * Px) * lam ** n
    return out if out.ndim else float(out)


def acceleration_check(model: ConvergenceModel, params: AlgoParams,
                       classification: TapClassification) -> AccelerationReport:
    """Compare the transient decay rate against plain LMS at the same
    step size.

    ``sufficient_mu`` and ``sufficient_cs_empty`` are the two analytic
    sufficient conditions for strictly faster convergence; ``actual_faster``
    checks the realized spectrum (modes with vanishing coefficients are
    excluded, e.g. the third mode when no small coefficients exist).
    """
    lim = mu_max(model.L, model.Px)
    sufficient_mu = lim / 2 < params.mu < lim
    sufficient_cs_empty = classification.small.size == 0
    lms_rate = model.a00                      # 1 - mu*Px*delta_L
    cs = np.array([model.c1, model.c2, model.c3])
    lams = np.array([model.lambda1, model.lambda2, model.lambda3])
    scale = max(float(np.max(np.abs(cs))), model.s_norm_sq, 1e-300)
    active = np.abs(cs) > 1e-12 * scale
    l0_rate = float(np.max(np.abs(lams[active]))) if active.any() else 0.0
    return AccelerationReport(
        sufficient_mu=sufficient_mu,
        sufficient_cs_empty=sufficient_cs_empty,
        actual_faster=l0_rate < lms_rate,
        l0_rate=l0_rate,
        lms_rate=lms_rate)
