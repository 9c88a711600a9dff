"""Monte Carlo harness: stream pinning, trial mechanics, averaging, steady gate."""

from __future__ import annotations

import math

import numpy as np
import pytest

from sparselms import (
    ExperimentSpec,
    NotConvergedError,
    SnrConvention,
    Variant,
    default_iterations,
    estimate_steady,
    gen_system,
    lms_theory,
    monte_carlo,
    mu_max,
    noise_power,
    resolve_kappa,
    run_trial,
    stream,
)
from sparselms.simulate import (
    INPUT_ROLE,
    NOISE_ROLE,
    SYSTEM_ROLE,
    Trajectory,
    _scalar_params,
)


def small_spec(**kw):
    base = dict(L=32, Q=4, mu=2e-3, alpha=10.0, kappa=0.0, Pv=1e-4,
                trials=3, iterations=200, seed=1)
    base.update(kw)
    return ExperimentSpec(**base)


# ---------------------------------------------------------------------------
# streams and system generation
# ---------------------------------------------------------------------------


def test_stream_deterministic_and_keyed():
    a = stream(1, 0, INPUT_ROLE).standard_normal(8)
    b = stream(1, 0, INPUT_ROLE).standard_normal(8)
    assert np.array_equal(a, b)
    for other in (stream(1, 1, INPUT_ROLE), stream(2, 0, INPUT_ROLE),
                  stream(1, 0, NOISE_ROLE), stream(1, 0, SYSTEM_ROLE)):
        assert not np.array_equal(a, other.standard_normal(8))


def test_stream_unit_variance():
    x = stream(7, 0, INPUT_ROLE).standard_normal(10000)
    assert 0.95 < float(np.var(x)) < 1.05
    assert abs(float(np.mean(x))) < 0.05


def test_gen_system_structure():
    sysm = gen_system(64, 7, seed=3)
    assert (sysm.L, sysm.Q) == (64, 7)
    assert int(np.count_nonzero(sysm.s)) == 7
    again = gen_system(64, 7, seed=3)
    assert np.array_equal(sysm.s, again.s)
    other_trial = gen_system(64, 7, seed=3, trial=1)
    assert not np.array_equal(sysm.s, other_trial.s)


def test_gen_system_tap_scale():
    sysm = gen_system(2000, 500, seed=5, sigma_s=2.0)
    nz = sysm.s[sysm.s != 0.0]
    assert 1.7 < float(np.std(nz)) < 2.3


# ---------------------------------------------------------------------------
# spec plumbing
# ---------------------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ValueError, match="trials"):
        small_spec(trials=0)
    with pytest.raises(ValueError, match="Q <= L"):
        small_spec(Q=33)
    with pytest.raises(ValueError, match="snr_db or"):
        ExperimentSpec(L=8, Q=1, mu=1e-3)
    with pytest.raises(ValueError, match="seed"):
        small_spec(seed=2**64)
    with pytest.raises(ValueError, match="bad mu"):
        small_spec(mu="OPTIMAL")
    with pytest.raises(ValueError, match="system_mode"):
        small_spec(system_mode="frozen")


def test_spec_sweep_normalization():
    spec = small_spec(mu=[1e-3, 2e-3], variants="L0LMS")
    assert spec.mu == (1e-3, 2e-3)
    assert spec.variants == (Variant.L0LMS,)
    assert not spec.is_scalar
    assert small_spec().is_scalar


def test_noise_power_conventions():
    out = ExperimentSpec(L=1000, Q=100, mu=8e-4, snr_db=40.0, trials=1)
    assert noise_power(out) == pytest.approx(0.01, rel=1e-12)
    inp = ExperimentSpec(L=1000, Q=100, mu=8e-4, snr_db=40.0, trials=1,
                         snr_convention=SnrConvention.INPUT_REFERRED)
    assert noise_power(inp) == pytest.approx(1e-4, rel=1e-12)
    explicit = small_spec(snr_db=40.0, Pv=0.5)
    assert noise_power(explicit) == 0.5
    with pytest.raises(ValueError, match="all-zero system"):
        noise_power(ExperimentSpec(L=16, Q=0, mu=1e-3, snr_db=40.0))


def test_default_iterations_time_constants():
    L, Q, mu, Px = 1000, 100, 8e-4, 1.0
    dl = 2.0 - (L + 2) * mu * Px
    assert default_iterations(L, Q, mu, Px) == math.ceil(10.0 / (mu * Px * dl))


def test_resolve_kappa_optimal_matches_theory():
    spec = ExperimentSpec(L=1000, Q=100, mu=8e-4, alpha=10.0, kappa="OPTIMAL",
                          snr_db=40.0, trials=1)
    assert resolve_kappa(spec) == pytest.approx(3.747845320580678e-7, rel=1e-10)
    za = ExperimentSpec(L=1000, Q=100, mu=8e-4, kappa="OPTIMAL", snr_db=40.0,
                        trials=1, variants=(Variant.ZALMS,))
    assert resolve_kappa(za) == pytest.approx(2.2766700834959032e-6, rel=1e-8)


def test_scalar_params_variant_wiring():
    za = _scalar_params(small_spec(kappa=1e-5, variants=(Variant.ZALMS,)))
    assert (za.variant, za.rho) == (Variant.ZALMS, 1e-5)
    rza = _scalar_params(small_spec(kappa=1e-5, alpha=7.0, variants=(Variant.RZALMS,)))
    assert (rza.rho, rza.epsilon) == (1e-5, 7.0)
    l0 = _scalar_params(small_spec(kappa=1e-5, alpha=7.0))
    assert (l0.kappa, l0.alpha) == (1e-5, 7.0)


# ---------------------------------------------------------------------------
# run_trial
# ---------------------------------------------------------------------------


def test_run_trial_deviation_indexing():
    spec = small_spec(iterations=3000)
    sysm = gen_system(spec.L, spec.Q, spec.seed)
    res = run_trial(sysm, spec, _scalar_params(spec), trial_index=0)
    assert res.dev.shape == (spec.iterations + 1,)
    assert res.dev[0] == pytest.approx(sysm.norm_sq, rel=1e-12)
    assert not res.diverged
    # learning happened: tail is well below the start
    assert float(np.mean(res.dev[-20:])) < 0.05 * res.dev[0]


def test_run_trial_zero_system_zero_noise_is_identically_zero():
    spec = small_spec(Q=0, Pv=None, snr_db=40.0,
                      snr_convention=SnrConvention.INPUT_REFERRED)
    object.__setattr__(spec, "Pv", 0.0)      # exact noise-free run
    sysm = gen_system(spec.L, 0, spec.seed)
    res = run_trial(sysm, spec, _scalar_params(spec), trial_index=0)
    assert np.all(res.dev == 0.0)


def test_run_trial_bit_repeatable():
    spec = small_spec(kappa=1e-6)
    sysm = gen_system(spec.L, spec.Q, spec.seed)
    a = run_trial(sysm, spec, _scalar_params(spec), trial_index=2)
    b = run_trial(sysm, spec, _scalar_params(spec), trial_index=2)
    assert np.array_equal(a.dev, b.dev)
    c = run_trial(sysm, spec, _scalar_params(spec), trial_index=3)
    assert not np.array_equal(a.dev, c.dev)


def test_run_trial_divergence_truncates():
    spec = small_spec(mu=1.2 * mu_max(32, 1.0), iterations=4000, Pv=1e-2)
    sysm = gen_system(spec.L, spec.Q, spec.seed)
    res = run_trial(sysm, spec, _scalar_params(spec), trial_index=0)
    assert res.diverged
    assert res.diverged_at is not None
    assert res.dev.shape == (res.diverged_at + 1,)   # ends at the offending entry
    assert res.dev[-1] > 1e3                          # ||w||^2 blew the limit


def test_run_trial_weight_average_window():
    spec = small_spec(iterations=5000)
    sysm = gen_system(spec.L, spec.Q, spec.seed)
    res = run_trial(sysm, spec, _scalar_params(spec), trial_index=0,
                    record_weights_from=3000)
    assert res.wbar is not None and res.wbar.shape == (spec.L,)
    # the time average over the settled tail approximates the system
    assert float(np.linalg.norm(res.wbar - sysm.s) ** 2) < 0.02 * sysm.norm_sq


# ---------------------------------------------------------------------------
# monte_carlo
# ---------------------------------------------------------------------------


def test_monte_carlo_single_trial_equals_run_trial():
    spec = small_spec(trials=1)
    traj = monte_carlo(spec)
    sysm = gen_system(spec.L, spec.Q, spec.seed, trial=0)
    res = run_trial(sysm, spec, _scalar_params(spec), trial_index=0)
    assert np.array_equal(traj.msd, res.dev)


def test_monte_carlo_worker_count_invariance():
    spec = small_spec(trials=4, kappa=1e-6)
    one = monte_carlo(spec, workers=1)
    two = monte_carlo(spec, workers=2)
    assert np.array_equal(one.msd, two.msd)
    assert one.steady_estimate == two.steady_estimate


def test_monte_carlo_rejects_sweeps():
    with pytest.raises(ValueError, match="expand sweeps"):
        monte_carlo(small_spec(mu=[1e-3, 2e-3]))


def test_monte_carlo_fixed_vs_redrawn_systems():
    fixed = monte_carlo(small_spec(system_mode="fixed", trials=3))
    redraw = monte_carlo(small_spec(system_mode="redraw", trials=3))
    assert fixed.msd[0] == pytest.approx(gen_system(32, 4, 1, trial=0).norm_sq)
    start = np.mean([gen_system(32, 4, 1, trial=t).norm_sq for t in range(3)])
    assert redraw.msd[0] == pytest.approx(start, rel=1e-12)
    assert not np.array_equal(fixed.msd, redraw.msd)


def test_monte_carlo_divergence_reporting():
    spec = small_spec(mu=1.2 * mu_max(32, 1.0), iterations=4000,
                      Pv=1e-2, trials=3)
    traj = monte_carlo(spec)
    assert traj.diverged and traj.n_diverged == 3 and traj.all_diverged
    assert math.isnan(traj.steady_estimate)
    assert not traj.converged
    assert traj.msd.shape == (traj.diverged_at + 1,)


def test_monte_carlo_steady_fields():
    # L=64 keeps the per-sample MSD fluctuation small enough that the
    # log-slope gate clears with a wide margin once settled
    spec = ExperimentSpec(L=64, Q=8, mu=0.01, alpha=10.0, kappa=0.0,
                          Pv=1e-4, trials=10, iterations=20000, seed=1)
    traj = monte_carlo(spec)
    assert traj.steady_window == 2000                # final 10% by default
    assert traj.steady_estimate == pytest.approx(
        float(np.mean(traj.msd[-2000:])), rel=1e-12)
    assert traj.trial_steady is not None and traj.trial_steady.shape == (10,)
    assert traj.converged
    # per-trial means average to the ensemble mean of the same window
    assert float(np.mean(traj.trial_steady)) == pytest.approx(
        traj.steady_estimate, rel=1e-12)


# ---------------------------------------------------------------------------
# estimate_steady
# ---------------------------------------------------------------------------


def _fake_traj(msd):
    msd = np.asarray(msd, dtype=float)
    return Trajectory(msd=msd, trials=1, seed=1, steady_estimate=float(msd[-1]),
                      steady_window=1, diverged=False, n_diverged=0,
                      diverged_at=None, slope=0.0, converged=True)


def test_estimate_steady_constant_series():
    traj = _fake_traj(np.full(1000, 3.5e-4))
    assert estimate_steady(traj, window=100) == pytest.approx(3.5e-4, rel=1e-12)


def test_estimate_steady_settled_geometric_curve():
    d_inf, d0, lam = 2e-4, 10.0, 0.999
    n = np.arange(40000)
    traj = _fake_traj(d_inf + (d0 - d_inf) * lam**n)
    got = estimate_steady(traj, window=2000)
    assert got == pytest.approx(d_inf, rel=1e-3)


def test_estimate_steady_rejects_drifting_series():
    n = np.arange(5000)
    traj = _fake_traj(1e-4 * np.exp(2e-4 * n))       # still rising
    with pytest.raises(NotConvergedError) as exc:
        estimate_steady(traj, window=1000)
    assert exc.value.slope > 1e-5


def test_estimate_steady_rejects_divergence_and_bad_window():
    spec = small_spec(mu=1.2 * mu_max(32, 1.0), iterations=4000, Pv=1e-2)
    traj = monte_carlo(spec)
    with pytest.raises(NotConvergedError):
        estimate_steady(traj, window=50)
    good = _fake_traj(np.full(100, 1e-4))
    with pytest.raises(ValueError, match="window"):
        estimate_steady(good, window=0)
    with pytest.raises(ValueError, match="window"):
        estimate_steady(good, window=101)


# ---------------------------------------------------------------------------
# cross-validation against the plain-LMS closed form
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_lms_simulation_tracks_closed_form():
    """Plain-LMS Monte Carlo vs the analytic steady value and learning curve:
    both within 1 dB (steady; curve pointwise past 10% of the run)."""
    L, Q, mu = 256, 16, 4e-4
    spec = ExperimentSpec(L=L, Q=Q, mu=mu, snr_db=40.0, trials=20,
                          iterations=60000, seed=1, variants=(Variant.LMS,))
    traj = monte_carlo(spec)
    Pv = noise_power(spec)

    steady_theory = lms_theory(L, mu, 1.0, Pv)
    gap_db = 10 * math.log10(traj.steady_estimate / steady_theory)
    assert abs(gap_db) <= 1.0, f"steady gap {gap_db:+.3f} dB"

    s_ref = np.zeros(L)
    s_ref[:Q] = 1.0                                   # ||s||^2 = Q on average
    n = np.arange(60001)
    curve_theory = lms_theory(L, mu, 1.0, Pv, s=s_ref, n=n)
    tail = slice(6000, None)
    gaps = 10 * np.log10(traj.msd[tail] / curve_theory[tail])
    assert float(np.max(np.abs(gaps))) <= 1.0, \
        f"curve max gap {float(np.max(np.abs(gaps))):+.3f} dB"
