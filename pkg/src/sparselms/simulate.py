"""Seeded Monte Carlo harness for the sparse LMS family.

Reproducibility contract
------------------------
Every random draw comes from a counter-based Philox stream
(``numpy.random.Philox``, 4x64 variant, available and stable since
numpy 1.22 — pinned in pyproject) keyed by
``(seed, trial_index, role)`` where role separates the system draw,
the input process, and the observation noise.  Parallel execution can
therefore never reorder draws, and the trial-average reduction runs in
fixed trial order, so a given ``(spec, seed)`` produces a bit-identical
Trajectory regardless of worker count.

Indexing convention: a trajectory entry ``msd[n]`` is the squared
deviation of ``w_n``, with ``w_0 = 0``; an experiment with
``iterations = N`` performs N adaptation steps and yields N+1 entries.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import theory
from .kernels import AlgoParams, FilterState, SparseSystem, Variant, step, synth_output

__all__ = [
    "SYSTEM_ROLE", "INPUT_ROLE", "NOISE_ROLE", "stream", "gen_system",
    "ExperimentSpec", "TrialResult", "Trajectory", "NotConvergedError",
    "run_trial", "monte_carlo", "estimate_steady", "noise_power",
    "default_iterations", "resolve_kappa", "DIVERGENCE_FACTOR",
]

SYSTEM_ROLE = 0
INPUT_ROLE = 1
NOISE_ROLE = 2

DIVERGENCE_FACTOR = 1e6

_MASK64 = (1 << 64) - 1
_MASK48 = (1 << 48) - 1


class NotConvergedError(RuntimeError):
    """Steady-state estimate requested on a series that is still moving.

    Carries the measured decimal-log slope per iteration in ``slope``.
    """

    def __init__(self, slope: float, threshold: float):
        super().__init__(
            f"log-MSD slope {slope:.3e}/iter exceeds the convergence "
            f"threshold {threshold:.1e}/iter")
        self.slope = slope
        self.threshold = threshold


def stream(seed: int, trial: int, role: int) -> np.random.Generator:
    """Independent Generator for one (seed, trial, role) triple.

    The two Philox key words are the user seed and a (role, trial)
    packing — role in the top 16 bits, trial in the low 48 — so distinct
    triples can never collide.
    """
    if not 0 <= seed <= _MASK64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    if trial < 0 or trial > _MASK48:
        raise ValueError("trial index out of range")
    if role < 0 or role > 0xFFFF:
        raise ValueError("role out of range")
    key = np.array([seed & _MASK64, ((role & 0xFFFF) << 48) | (trial & _MASK48)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def gen_system(L: int, Q: int, seed: int, trial: int = 0,
               sigma_s: float = 1.0) -> SparseSystem:
    """Draw a random sparse system: Q support positions uniform without
    replacement, values i.i.d. N(0, sigma_s^2).  Deterministic given
    (seed, trial)."""
    if not 0 <= Q <= L:
        raise ValueError(f"need 0 <= Q <= L, got Q={Q}, L={L}")
    rng = stream(seed, trial, SYSTEM_ROLE)
    pos = rng.choice(L, size=Q, replace=False)
    vals = rng.standard_normal(Q) * sigma_s
    s = np.zeros(L)
    s[pos] = vals
    return SparseSystem(s=s, L=L, Q=Q)


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment description.

    ``mu`` and ``alpha`` may be scalars or sweeps (tuples); ``kappa`` may
    additionally be the string ``"OPTIMAL"`` (resolved per point from the
    closed-form optimum with expected strengths).  ``monte_carlo``
    consumes fully scalar specs; sweep expansion is the caller's job.

    ``kappa`` is the attraction weight of whichever variant runs: the
    zero-range attractor weight for the l0 variant, the sign-attractor
    weight for the ZA/RZA variants (whose reweighting constant is tied
    to ``alpha``).

    ``Pv`` overrides the SNR-derived noise power when set (e.g. for
    exact noise-free runs).  ``iterations=None`` resolves to ten
    convergence time constants.  ``system_mode`` is ``"redraw"`` (fresh
    system per trial — the ensemble the expected-strengths theory
    describes) or ``"fixed"`` (trial-0 system shared by all trials).
    """

    L: int
    Q: int
    mu: float | tuple
    alpha: float | tuple = 1.0
    kappa: float | tuple | str = 0.0
    snr_db: float | None = None
    trials: int = 100
    iterations: int | None = None
    seed: int = 1
    variants: tuple = (Variant.L0LMS,)
    snr_convention: theory.SnrConvention = theory.SnrConvention.OUTPUT_REFERRED
    Px: float = 1.0
    sigma_s: float = 1.0
    Pv: float | None = None
    system_mode: str = "redraw"

    def __post_init__(self):
        def as_sweep(v, name, allow_optimal=False):
            if isinstance(v, str):
                if allow_optimal and v == "OPTIMAL":
                    return v
                raise ValueError(f"bad {name}: {v!r}")
            if isinstance(v, (list, tuple, np.ndarray)):
                t = tuple(float(x) for x in v)
                if len(t) == 0 or not all(math.isfinite(x) for x in t):
                    raise ValueError(f"{name} sweep must be finite and non-empty")
                return t
            return float(v)

        object.__setattr__(self, "mu", as_sweep(self.mu, "mu"))
        object.__setattr__(self, "alpha", as_sweep(self.alpha, "alpha"))
        object.__setattr__(self, "kappa",
                           as_sweep(self.kappa, "kappa", allow_optimal=True))
        v = self.variants
        if isinstance(v, (str, Variant)):
            v = (v,)
        object.__setattr__(self, "variants", tuple(Variant(x) for x in v))
        object.__setattr__(self, "snr_convention",
                           theory.SnrConvention(self.snr_convention))
        if self.system_mode not in ("redraw", "fixed"):
            raise ValueError(f"bad system_mode: {self.system_mode!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if not 0 <= self.Q <= self.L:
            raise ValueError(f"need 0 <= Q <= L, got Q={self.Q}, L={self.L}")
        if self.snr_db is None and self.Pv is None:
            raise ValueError("give snr_db or an explicit Pv")

    @property
    def is_scalar(self) -> bool:
        return (isinstance(self.mu, float) and isinstance(self.alpha, float)
                and isinstance(self.kappa, float)
                and len(self.variants) == 1)


def noise_power(spec: ExperimentSpec) -> float:
    """Noise power implied by the spec.

    Explicit ``Pv`` wins.  Otherwise, output-referred SNR compares the
    noise against the ensemble output power ``Px * Q * sigma_s^2``;
    input-referred against ``Px``.
    """
    if spec.Pv is not None:
        return float(spec.Pv)
    if spec.snr_convention is theory.SnrConvention.OUTPUT_REFERRED:
        ref = spec.Px * spec.Q * spec.sigma_s ** 2
        if ref <= 0:
            raise ValueError(
                "output-referred SNR is undefined for an all-zero system; "
                "give Pv explicitly or use the input-referred convention")
    else:
        ref = spec.Px
    return ref * 10.0 ** (-spec.snr_db / 10.0)


def default_iterations(L: int, Q: int, mu: float, Px: float) -> int:
    """Ten convergence time constants, 1/(mu*Px*delta_L) each."""
    d = theory.deltas(L, Q, mu, Px)
    if d.delta_L <= 0:
        raise theory.StabilityError(f"mu={mu} is unstable for L={L}")
    return int(math.ceil(10.0 / (mu * Px * d.delta_L)))


def resolve_kappa(spec: ExperimentSpec) -> float:
    """Resolve kappa="OPTIMAL" through the closed-form optimum with
    expected strengths (l0 variant), or its small-alpha sign-attractor
    limit (ZA/RZA variants)."""
    if not isinstance(spec.kappa, str):
        return float(spec.kappa)
    if not (isinstance(spec.mu, float) and isinstance(spec.alpha, float)):
        raise ValueError("resolve sweeps before resolving OPTIMAL kappa")
    Pv = noise_power(spec)
    variant = spec.variants[0]
    if variant in (Variant.ZALMS, Variant.RZALMS):
        rep = theory.za_steady_msd(spec.L, spec.Q, spec.mu, 0.0, spec.Px, Pv)
        return rep.rho_opt
    st = theory.strengths(spec.alpha, Q=spec.Q, sigma_s=spec.sigma_s)
    d = theory.deltas(spec.L, spec.Q, spec.mu, spec.Px)
    b = theory.betas(d, st, spec.L, spec.Q, spec.mu, spec.alpha, spec.Px, Pv)
    ko, _, _ = theory.optimal_kappa(b, d, spec.L, spec.mu, Pv)
    return ko


@dataclass(frozen=True, eq=False)
class TrialResult:
    """One trial's squared-deviation series (entry n is ||w_n - s||^2;
    length iterations+1 unless truncated by divergence)."""

    dev: np.ndarray
    diverged: bool
    diverged_at: int | None
    wbar: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Trial-averaged MSD series plus the run's summary statistics.

    ``steady_estimate`` is the plain mean of the final ``steady_window``
    entries (NaN when the run diverged); ``converged`` and ``slope``
    report the decimal-log slope gate over that window.  If any trial
    diverged, ``msd`` is truncated at the earliest divergence point and
    ``diverged`` is set; ``n_diverged`` counts affected trials.
    """

    msd: np.ndarray
    trials: int
    seed: int
    steady_estimate: float
    steady_window: int
    diverged: bool
    n_diverged: int
    diverged_at: int | None
    slope: float
    converged: bool
    wbar: np.ndarray | None = None
    trial_steady: np.ndarray | None = None

    @property
    def all_diverged(self) -> bool:
        return self.diverged and self.n_diverged == self.trials


def _scalar_params(spec: ExperimentSpec) -> AlgoParams:
    variant = spec.variants[0]
    k = resolve_kappa(spec)
    if variant is Variant.LMS:
        return AlgoParams(variant=variant, mu=spec.mu)
    if variant is Variant.L0LMS:
        return AlgoParams(variant=variant, mu=spec.mu, kappa=k,
                          alpha=spec.alpha)
    if variant is Variant.ZALMS:
        return AlgoParams(variant=variant, mu=spec.mu, rho=k)
    return AlgoParams(variant=variant, mu=spec.mu, rho=k,
                      epsilon=spec.alpha)


def run_trial(system: SparseSystem, spec: ExperimentSpec,
              params: AlgoParams, trial_index: int,
              record_weights_from: int | None = None) -> TrialResult:
    """Run one seeded trial of ``spec.iterations`` adaptation steps.

    The input window is warm-started (the regressor is fully populated
    at n=0, as if the input existed before adaptation began).  Entry 0
    of the returned series is ||s||^2 (zero-initialized weights).
    Divergence — ||w||^2 exceeding 1e6 * max(1, ||s||^2) — truncates the
    series at the offending entry and sets the flag.

    ``record_weights_from`` additionally returns the time average of the
    weight vector from that iteration on (for steady-state bias probes).
    """
    n_iter = spec.iterations
    if n_iter is None:
        n_iter = default_iterations(spec.L, spec.Q, params.mu, spec.Px)
    L = spec.L
    s = system.s
    Pv = noise_power(spec)

    X = stream(spec.seed, trial_index, INPUT_ROLE) \
        .standard_normal(L - 1 + n_iter) * math.sqrt(spec.Px)
    v = stream(spec.seed, trial_index, NOISE_ROLE) \
        .standard_normal(n_iter) * math.sqrt(Pv)

    limit = DIVERGENCE_FACTOR * max(1.0, system.norm_sq)
    dev = np.empty(n_iter + 1)
    dev[0] = system.norm_sq
    state = FilterState.zeros(L)
    diverged_at = None
    w_acc = np.zeros(L) if record_weights_from is not None else None
    w_count = 0

    for n in range(n_iter):
        x = X[n:n + L][::-1]
        d = synth_output(s, x, v[n])
        state, _ = step(state, x, d, params)
        w = state.w
        diff = w - s
        dev[n + 1] = diff @ diff
        if w_acc is not None and n + 1 >= record_weights_from:
            w_acc += w
            w_count += 1
        if w @ w > limit or not np.isfinite(dev[n + 1]):
            diverged_at = n + 1
            dev = dev[:n + 2]
            break

    wbar = w_acc / w_count if w_acc is not None and w_count else None
    return TrialResult(dev=dev, diverged=diverged_at is not None,
                       diverged_at=diverged_at, wbar=wbar)


def _trial_task(args):
    system, spec, params, t, rec = args
    return run_trial(system, spec, params, t, record_weights_from=rec)


def monte_carlo(spec: ExperimentSpec, workers: int = 1,
                record_weights_from: int | None = None) -> Trajectory:
    """Average ``spec.trials`` independent trials at one parameter point.

    Requires a scalar spec (no sweeps, exactly one variant).  Trials run
    independently (in processes when ``workers > 1``); the average is
    accumulated in trial order either way, so the result is
    bit-deterministic for a given (spec, seed).
    """
    if not spec.is_scalar and not (
            isinstance(spec.kappa, str) and isinstance(spec.mu, float)
            and isinstance(spec.alpha, float) and len(spec.variants) == 1):
        raise ValueError(
            "monte_carlo runs one parameter point; expand sweeps first")
    params = _scalar_params(spec)
    n_iter = spec.iterations
    if n_iter is None:
        n_iter = default_iterations(spec.L, spec.Q, params.mu, spec.Px)
        spec = replace(spec, iterations=n_iter)

    if spec.system_mode == "redraw":
        systems = [gen_system(spec.L, spec.Q, spec.seed, trial=t,
                              sigma_s=spec.sigma_s)
                   for t in range(spec.trials)]
    else:
        sys0 = gen_system(spec.L, spec.Q, spec.seed, trial=0,
                          sigma_s=spec.sigma_s)
        systems = [sys0] * spec.trials

    tasks = [(systems[t], spec, params, t, record_weights_from)
             for t in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_trial_task, tasks))
    else:
        results = [_trial_task(t) for t in tasks]

    n_div = sum(r.diverged for r in results)
    cut = min((r.diverged_at for r in results if r.diverged), default=None)
    keep = n_iter + 1 if cut is None else min(r.dev.size for r in results)
    acc = np.zeros(keep)
    for r in results:                     # fixed trial order
        acc += r.dev[:keep]
    msd = acc / spec.trials
    wbar = None
    if record_weights_from is not None and n_div == 0:
        wbar = np.zeros(spec.L)
        for r in results:
            wbar += r.wbar
        wbar /= spec.trials

    window = max(1, int(round(0.1 * msd.size)))
    if n_div > 0:
        return Trajectory(msd=msd, trials=spec.trials, seed=spec.seed,
                          steady_estimate=math.nan, steady_window=window,
                          diverged=True, n_diverged=n_div, diverged_at=cut,
                          slope=math.nan, converged=False, wbar=wbar)
    win = msd[-window:]
    slope = _log_slope(win)
    trial_steady = np.array([float(np.mean(r.dev[-window:])) for r in results])
    return Trajectory(msd=msd, trials=spec.trials, seed=spec.seed,
                      steady_estimate=float(np.mean(win)),
                      steady_window=window, diverged=False, n_diverged=0,
                      diverged_at=None, slope=slope,
                      converged=abs(slope) < SLOPE_THRESHOLD, wbar=wbar,
                      trial_steady=trial_steady)


SLOPE_THRESHOLD = 1e-5      # decimal-log MSD slope per iteration


def _log_slope(win: np.ndarray) -> float:
    if np.ptp(win) == 0.0:
        return 0.0
    y = np.log10(np.maximum(win, 1e-300))
    x = np.arange(win.size, dtype=float)
    return float(np.polyfit(x, y, 1)[0])


def estimate_steady(traj: Trajectory, window: int) -> float:
    """Mean of the final ``window`` MSD entries, gated on convergence.

    The least-squares slope of the decimal-log MSD over that window must
    stay below 1e-5 per iteration in magnitude; otherwise
    :class:`NotConvergedError` reports the measured slope.
    """
    msd = np.asarray(traj.msd, dtype=float)
    if not 1 <= window <= msd.size:
        raise ValueError(f"window must be in [1, {msd.size}], got {window}")
    if traj.diverged:
        raise NotConvergedError(math.inf, SLOPE_THRESHOLD)
    win = msd[-window:]
    slope = _log_slope(win)
    if abs(slope) >= SLOPE_THRESHOLD:
        raise NotConvergedError(slope, SLOPE_THRESHOLD)
    return float(np.mean(win))
