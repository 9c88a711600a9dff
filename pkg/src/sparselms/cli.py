"""Command-line front end: presets, CSV emission, theory-vs-sim compare.

Subcommands
-----------
``theory``      closed-form values only (no Monte Carlo), same file layout
``simulate``    Monte Carlo only
``experiment``  both, plus a JSON run manifest
``compare``     per-point dB gap report between two CSV files

File conventions: ``<name>_<snr>dB_<quantity>.csv``.  Steady-state sweep
files carry ``(param, msd_theory, msd_sim, msd_sim_ci)``, learning-curve
files ``(n, msd_theory, msd_sim)``; every MSD column also appears as a
``*_db`` column.  Linear values are written with 17 significant digits,
dB values with 4 decimals.

Exit codes: 0 success, 1 validation error, 2 divergence detected,
3 tolerance failure in ``compare``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, theory
from .kernels import AlgoParams, Variant
from .simulate import (ExperimentSpec, monte_carlo, noise_power,
                       resolve_kappa)

ENV_OUTDIR = "SPARSELMS_OUTDIR"
DEFAULT_SEED = 1
PRESET_NAMES = ("exp1", "exp2", "exp3", "exp4", "exp5")


class CliError(Exception):
    """Validation or runtime failure with a process exit code."""

    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return f"{x:.17g}"


def _fmt_db(x) -> str:
    return f"{float(x):.4f}"


def to_db(x):
    """10*log10, mapping non-positive/NaN inputs to NaN."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, math.nan)
    ok = np.isfinite(x) & (x > 0)
    out[ok] = 10.0 * np.log10(x[ok])
    return out if out.ndim else float(out)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    def fmt_cell(col, val):
        if col in ("n", "Q"):
            return _fmt(int(val))
        if col.endswith("_db"):
            return _fmt_db(val)
        return _fmt(val)

    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for row in rows:
                w.writerow([fmt_cell(c, v) for c, v in zip(header, row)])
    except OSError as e:
        raise CliError(f"cannot write {path}: {e}", 1)


# ---------------------------------------------------------------------------
# run manifest
# ---------------------------------------------------------------------------

def _spec_to_dict(spec: ExperimentSpec) -> dict:
    d = {}
    for f in fields(ExperimentSpec):
        v = getattr(spec, f.name)
        if isinstance(v, tuple):
            v = [x.value if isinstance(x, Variant) else x for x in v]
        elif isinstance(v, (Variant, theory.SnrConvention)):
            v = v.value
        d[f.name] = v
    return d


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce and locate a run: the spec, the
    resolved derived parameters (noise powers, optimal attraction
    weights), the tool version, and the list of emitted CSVs.  Survives
    a JSON round trip losslessly."""

    version: str
    timestamp: str
    preset: str | None
    spec: ExperimentSpec
    resolved: dict
    files: tuple

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "timestamp": self.timestamp,
            "preset": self.preset,
            "spec": _spec_to_dict(self.spec),
            "resolved": self.resolved,
            "files": list(self.files),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(version=d["version"], timestamp=d["timestamp"],
                   preset=d["preset"], spec=ExperimentSpec(**d["spec"]),
                   resolved=d["resolved"], files=tuple(d["files"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls.from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# config ingestion
# ---------------------------------------------------------------------------

def load_config(path) -> ExperimentSpec:
    """Parse a JSON config whose keys mirror ExperimentSpec fields.
    Unknown keys are errors (anti-typo); syntax errors report line and
    column."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise CliError(f"cannot read config {path}: {e}", 1)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise CliError(
            f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}", 1)
    if not isinstance(data, dict):
        raise CliError(f"{path}: top-level JSON value must be an object", 1)
    known = {f.name for f in fields(ExperimentSpec)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise CliError(
            f"{path}: unknown config keys: {', '.join(unknown)} "
            f"(known keys: {', '.join(sorted(known))})", 1)
    try:
        return ExperimentSpec(**data)
    except (ValueError, TypeError) as e:
        raise CliError(f"{path}: {e}", 1)


# ---------------------------------------------------------------------------
# per-point evaluation
# ---------------------------------------------------------------------------

def _signal(spec: ExperimentSpec) -> theory.SignalModel:
    return theory.SignalModel(Px=spec.Px, Pv=noise_power(spec))


def _theory_steady(spec: ExperimentSpec) -> theory.SteadyStateReport:
    """Closed-form steady state for a scalar l0/LMS spec (expected
    strengths)."""
    st = theory.strengths(spec.alpha, Q=spec.Q, sigma_s=spec.sigma_s)
    params = AlgoParams(variant=Variant.L0LMS, mu=spec.mu,
                        kappa=float(spec.kappa), alpha=spec.alpha)
    return theory.l0_steady_msd((spec.L, spec.Q, st), params, _signal(spec))


def _theory_curve(spec: ExperimentSpec, n_iter: int) -> np.ndarray:
    variant = spec.variants[0]
    if variant in (Variant.ZALMS, Variant.RZALMS):
        return np.full(n_iter + 1, math.nan)
    kappa = 0.0 if variant is Variant.LMS else float(spec.kappa)
    st = theory.strengths(spec.alpha, Q=spec.Q, sigma_s=spec.sigma_s)
    params = AlgoParams(variant=Variant.L0LMS, mu=spec.mu, kappa=kappa,
                        alpha=spec.alpha)
    model = theory.convergence_model((spec.L, spec.Q, st), params,
                                     _signal(spec))
    return np.asarray(model.msd(np.arange(n_iter + 1)))


def _sim_steady(spec: ExperimentSpec, workers: int):
    """Monte Carlo steady estimate -> (mean, ci_halfwidth, diverged)."""
    traj = monte_carlo(spec, workers=workers)
    if traj.diverged:
        return math.nan, math.nan, True
    ci = math.nan
    if traj.trial_steady is not None and traj.trials > 1:
        ci = 1.96 * float(np.std(traj.trial_steady, ddof=1)) \
            / math.sqrt(traj.trials)
    return traj.steady_estimate, ci, False


# ---------------------------------------------------------------------------
# experiment runner
# ---------------------------------------------------------------------------

def _halfdecade(lo: float, n: int) -> list[float]:
    return [lo * 10.0 ** (k / 2.0) for k in range(n)]


_EXP_BASE = dict(L=1000, Q=100, mu=8e-4, alpha=10.0, trials=100,
                 iterations=30000, seed=DEFAULT_SEED,
                 variants=(Variant.L0LMS,))


def _preset_base(name: str) -> tuple[ExperimentSpec, list[float]]:
    """Base scalar spec and SNR list for a named preset."""
    if name == "exp1":
        return ExperimentSpec(snr_db=40.0, **_EXP_BASE), [40.0, 20.0]
    if name == "exp2":
        return ExperimentSpec(snr_db=40.0, **_EXP_BASE), [40.0]
    if name == "exp3":
        return ExperimentSpec(snr_db=40.0, **_EXP_BASE), [40.0]
    if name == "exp4":
        return ExperimentSpec(snr_db=40.0, **{**_EXP_BASE, "mu": 4e-4}), \
            [40.0, 20.0]
    if name == "exp5":
        return ExperimentSpec(snr_db=40.0, **{**_EXP_BASE, "mu": 4e-4}), \
            [40.0]
    raise CliError(f"unknown preset {name!r} (expected one of "
                   f"{', '.join(PRESET_NAMES)})", 1)


class _Runner:
    """Shared machinery behind the theory / simulate / experiment
    subcommands: evaluates points, assembles rows, writes files."""

    def __init__(self, mode: str, out_dir: Path, workers: int):
        self.want_theory = mode in ("theory", "experiment")
        self.want_sim = mode in ("simulate", "experiment")
        self.mode = mode
        self.out = out_dir
        self.workers = workers
        self.files: list[str] = []
        self.resolved: dict = {}
        self.diverged = False

    # -- column plumbing ---------------------------------------------------

    def _suffix(self) -> str:
        return {"theory": "_theory", "simulate": "_sim"}.get(self.mode, "")

    def _sweep_header(self, param: str, extras: bool = False) -> list[str]:
        cols, dbs = [param], []
        if self.want_theory:
            cols += ["msd_theory"]
            dbs += ["msd_theory_db"]
        if self.want_sim:
            cols += ["msd_sim", "msd_sim_ci"]
            dbs += ["msd_sim_db"]
        if extras:
            if self.want_theory:
                cols += ["msd_theory_za"]
                dbs += ["msd_theory_za_db"]
            if self.want_sim:
                cols += ["msd_sim_za", "msd_sim_rza"]
                dbs += ["msd_sim_za_db", "msd_sim_rza_db"]
        return cols + dbs

    def _curve_header(self) -> list[str]:
        cols, dbs = ["n"], []
        if self.want_theory:
            cols += ["msd_theory"]
            dbs += ["msd_theory_db"]
        if self.want_sim:
            cols += ["msd_sim"]
            dbs += ["msd_sim_db"]
        return cols + dbs

    def _emit(self, name: str, label: str, quantity: str,
              header: list[str], rows: list[list]) -> None:
        fn = f"{name}_{label}_{quantity}{self._suffix()}.csv"
        _write_csv(self.out / fn, header, rows)
        self.files.append(fn)
        print(f"wrote {self.out / fn} ({len(rows)} rows)")

    # -- jobs --------------------------------------------------------------

    def steady_sweep(self, name: str, label: str, quantity: str,
                     param: str, points: list[tuple[float, ExperimentSpec]],
                     extras: dict | None = None) -> None:
        rows = []
        for val, sp in points:
            lin, dbs = [val], []
            if self.want_theory:
                th = _theory_steady(sp).d_inf
                lin += [th]
                dbs += [to_db(th)]
            if self.want_sim:
                si, ci, div = _sim_steady(sp, self.workers)
                self.diverged |= div
                lin += [si, ci]
                dbs += [to_db(si)]
            if extras is not None:
                if self.want_theory:
                    lin += [extras["theory_za"]]
                    dbs += [to_db(extras["theory_za"])]
                if self.want_sim:
                    rz_s, _, div = _sim_steady(extras["rza_spec_of"](sp),
                                               self.workers)
                    self.diverged |= div
                    lin += [extras["sim_za"], rz_s]
                    dbs += [to_db(extras["sim_za"]), to_db(rz_s)]
            rows.append(lin + dbs)
        self._emit(name, label, quantity,
                   self._sweep_header(param, extras is not None), rows)

    def curve(self, name: str, label: str, quantity: str,
              spec: ExperimentSpec) -> None:
        n_iter = spec.iterations
        msd_th = _theory_curve(spec, n_iter) if self.want_theory else None
        msd_si = None
        if self.want_sim:
            traj = monte_carlo(spec, workers=self.workers)
            self.diverged |= traj.diverged
            msd_si = traj.msd
        n_rows = n_iter + 1 if msd_si is None else msd_si.size
        rows = []
        for n in range(n_rows):
            lin, dbs = [n], []
            if msd_th is not None:
                lin += [msd_th[n]]
                dbs += [to_db(msd_th[n])]
            if msd_si is not None:
                lin += [msd_si[n]]
                dbs += [to_db(msd_si[n])]
            rows.append(lin + dbs)
        self._emit(name, label, quantity, self._curve_header(), rows)


def _low_snr_note(snr: float) -> None:
    if snr < 30:
        print(f"note: {snr:g} dB SNR is low; closed forms are approximate "
              "there, expect a visible theory-vs-simulation gap")


def _run_preset(name: str, runner: _Runner, seed: int | None,
                trials: int | None, scale: float | None,
                snr_convention: str | None) -> tuple[ExperimentSpec, dict]:
    base, snrs = _preset_base(name)
    base = _apply_overrides(base, seed, trials, scale, snr_convention)
    res = runner.resolved
    res["snrs"] = list(snrs)
    res["scale"] = scale if scale is not None else 1.0

    for snr in snrs:
        key = f"{snr:g}dB"
        spec0 = replace(base, snr_db=snr)
        _low_snr_note(snr)
        res[key] = {"Pv": noise_power(spec0),
                    "snr_convention": spec0.snr_convention.value}

        if name == "exp1":
            lo, hi = (1e-9, 3e-6) if snr >= 30 else (1e-8, 3e-5)
            ko = resolve_kappa(replace(spec0, kappa="OPTIMAL"))
            res[key]["kappa_opt"] = ko
            grid = sorted({float(k) for k in np.geomspace(lo, hi, 25)} | {ko})
            pts = [(k, replace(spec0, kappa=k)) for k in grid]
            runner.steady_sweep(name, key, "kappa_sweep", "kappa", pts)
            print(f"kappa_opt({key}) = {ko:.6e}")

        elif name == "exp2":
            alphas = _halfdecade(5.6e-4, 11)
            kos = {}
            pts = []
            for a in alphas:
                sp = replace(spec0, alpha=a)
                ko = resolve_kappa(replace(sp, kappa="OPTIMAL"))
                kos[f"{a:.17g}"] = ko
                pts.append((a, replace(sp, kappa=ko)))
            res[key]["kappa_opt_by_alpha"] = kos
            Pv = noise_power(spec0)
            za = theory.za_steady_msd(spec0.L, spec0.Q, spec0.mu, 0.0,
                                      spec0.Px, Pv)
            rho = za.rho_opt
            res[key]["rho_opt"] = rho
            extras = {
                "theory_za": theory.za_steady_msd(
                    spec0.L, spec0.Q, spec0.mu, rho, spec0.Px, Pv).d_inf_za,
                "sim_za": math.nan,
                "rza_spec_of": lambda sp: replace(
                    sp, variants=(Variant.RZALMS,), kappa=rho),
            }
            if runner.want_sim:
                za_spec = replace(spec0, variants=(Variant.ZALMS,),
                                  kappa=rho, alpha=1.0)
                sim_za, _, div = _sim_steady(za_spec, runner.workers)
                runner.diverged |= div
                extras["sim_za"] = sim_za
            runner.steady_sweep(name, key, "alpha_sweep", "alpha", pts,
                                extras=extras)

        elif name == "exp3":
            # sparsity fractions of L: 50..1000 non-zeros at L=1000
            fractions = (0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0)
            qs = sorted({min(spec0.L, max(1, round(f * spec0.L)))
                         for f in fractions})
            kos = {}
            pts = []
            for q in qs:
                sp = replace(spec0, Q=q)
                ko = resolve_kappa(replace(sp, kappa="OPTIMAL"))
                kos[str(q)] = ko
                pts.append((q, replace(sp, kappa=ko)))
            res[key]["kappa_opt_by_Q"] = kos
            runner.steady_sweep(name, key, "Q_sweep", "Q", pts)

        elif name == "exp4":
            ko = resolve_kappa(replace(spec0, kappa="OPTIMAL"))
            res[key]["kappa_opt"] = ko
            for mult in (0.1, 1.0, 10.0):
                runner.curve(name, key, f"curve_kx{mult:g}",
                             replace(spec0, kappa=mult * ko))
            print(f"kappa_opt({key}) = {ko:.6e}")

        elif name == "exp5":
            kos = {}
            for mu in (2e-4, 4e-4):
                sp = replace(spec0, mu=mu)
                ko = resolve_kappa(replace(sp, kappa="OPTIMAL"))
                kos[f"{mu:.17g}"] = ko
                runner.curve(name, key, f"curve_mu{mu:g}",
                             replace(sp, kappa=ko))
            res[key]["kappa_opt_by_mu"] = kos

    return replace(base, snr_db=snrs[0]), res


def _run_config(spec: ExperimentSpec, name: str, runner: _Runner) -> dict:
    """Generic config run: one swept parameter -> steady sweep; fully
    scalar -> learning curve per variant."""
    res = runner.resolved
    if spec.snr_db is not None:
        key = f"{spec.snr_db:g}dB"
        res["snrs"] = [spec.snr_db]
        _low_snr_note(spec.snr_db)
    else:
        key = f"Pv{spec.Pv:g}"
        res["snrs"] = []
    res[key] = {"Pv": noise_power(spec),
                "snr_convention": spec.snr_convention.value}

    swept = [f for f in ("mu", "alpha", "kappa")
             if isinstance(getattr(spec, f), tuple)]
    if len(swept) > 1:
        raise CliError(f"config sweeps one parameter at a time, got "
                       f"sweeps on: {', '.join(swept)}", 1)
    if swept:
        if len(spec.variants) != 1:
            raise CliError("a swept config needs exactly one variant", 1)
        param = swept[0]
        pts = []
        for val in getattr(spec, param):
            sp = replace(spec, **{param: val})
            if isinstance(sp.kappa, str):
                sp = replace(sp, kappa=resolve_kappa(sp))
            pts.append((val, sp))
        runner.steady_sweep(name, key, f"{param}_sweep", param, pts)
        return res

    base = spec
    if isinstance(base.kappa, str):
        base = replace(base, kappa=resolve_kappa(base))
        res[key]["kappa_opt"] = base.kappa
    if base.iterations is None:
        from .simulate import default_iterations
        base = replace(base, iterations=default_iterations(
            base.L, base.Q, base.mu, base.Px))
    for variant in base.variants:
        sp = replace(base, variants=(variant,))
        quantity = "curve" if len(base.variants) == 1 \
            else f"curve_{variant.value}"
        runner.curve(name, key, quantity, sp)
        if runner.want_theory and variant is Variant.L0LMS:
            rep = _theory_steady(sp)
            res[key].update(d_inf=rep.d_inf, d_lms=rep.d_lms,
                            kappa_opt_theory=rep.kappa_opt,
                            d_min=rep.d_min, omega=rep.omega)
            print(f"steady theory: d_inf={rep.d_inf:.6e}  "
                  f"d_lms={rep.d_lms:.6e}  kappa_opt={rep.kappa_opt:.6e}  "
                  f"d_min={rep.d_min:.6e}")
    return res


def _apply_overrides(spec: ExperimentSpec, seed, trials, scale,
                     snr_convention) -> ExperimentSpec:
    if scale is not None:
        if scale <= 0:
            raise CliError("--scale must be > 0", 1)
        L = max(1, round(spec.L * scale))
        Q = min(L, round(spec.Q * scale))
        spec = replace(spec, L=L, Q=Q,
                       trials=max(1, round(spec.trials * scale)))
    if trials is not None:
        spec = replace(spec, trials=trials)
    if seed is not None:
        spec = replace(spec, seed=seed)
    if snr_convention is not None:
        spec = replace(spec, snr_convention=snr_convention)
    return spec


def run_experiment(preset_or_config: str, out_dir, mode: str = "experiment",
                   seed: int | None = None, trials: int | None = None,
                   scale: float | None = None,
                   snr_convention: str | None = None,
                   workers: int = 1):
    """Run a preset or config in the given mode; returns (manifest|None,
    exit_code).  A manifest is produced in experiment mode only."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(f"cannot create output directory {out}: {e}", 1)
    if not os.access(out, os.W_OK):
        raise CliError(f"output directory {out} is not writable", 1)

    runner = _Runner(mode, out, workers)
    if preset_or_config in PRESET_NAMES:
        preset = preset_or_config
        spec, resolved = _run_preset(preset, runner, seed, trials, scale,
                                     snr_convention)
        name = preset
    else:
        preset = None
        spec = load_config(preset_or_config)
        spec = _apply_overrides(spec, seed, trials, scale, snr_convention)
        name = Path(preset_or_config).stem
        resolved = _run_config(spec, name, runner)

    manifest = None
    if mode == "experiment":
        manifest = RunManifest(
            version=__version__,
            timestamp=datetime.now(timezone.utc).isoformat(),
            preset=preset, spec=spec, resolved=resolved,
            files=tuple(runner.files))
        mpath = out / f"{name}_manifest.json"
        manifest.save(mpath)
        print(f"wrote {mpath}")
    if runner.diverged:
        print("divergence detected in at least one Monte Carlo point",
              file=sys.stderr)
        return manifest, 2
    return manifest, 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _read_points(path) -> tuple[str, list[str], dict]:
    try:
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r, None)
            if not header:
                raise CliError(f"{path}: empty CSV", 1)
            rows = list(r)
    except OSError as e:
        raise CliError(f"cannot read {path}: {e}", 1)
    key = header[0]
    pts = {}
    for row in rows:
        pts[row[0]] = {c: v for c, v in zip(header, row)}
    return key, header, pts


def _value_column(header: list[str], preference: list[str], path) -> str:
    for c in preference:
        if c in header:
            return c
    raise CliError(
        f"{path}: no usable MSD column (looked for "
        f"{', '.join(preference)})", 1)


def compare(theory_csv, sim_csv, tolerance_db: float = 1.0,
            out_dir=None) -> int:
    """Per-point gap report: 10*log10(sim/theory) on a matching grid.

    The first file supplies the reference column (msd_theory, else msd,
    else msd_sim), the second the comparison column (msd_sim, else msd,
    else msd_theory) — so comparing an experiment file against itself
    reports its own theory-vs-sim gaps.  Exit 0 iff max |gap| <=
    tolerance; 3 on tolerance failure; 2 when NaN values (divergence)
    block the comparison; 1 on grid mismatch.
    """
    key1, hdr1, pts1 = _read_points(theory_csv)
    key2, hdr2, pts2 = _read_points(sim_csv)
    if key1 != key2:
        raise CliError(f"grid mismatch: key columns differ "
                       f"({key1!r} vs {key2!r})", 1)
    only1 = sorted(set(pts1) - set(pts2), key=lambda s: float(s))
    only2 = sorted(set(pts2) - set(pts1), key=lambda s: float(s))
    if only1 or only2:
        msg = ["grid mismatch:"]
        if only1:
            msg.append(f"  missing from {sim_csv}: "
                       f"{', '.join(only1[:10])}"
                       + (" ..." if len(only1) > 10 else ""))
        if only2:
            msg.append(f"  missing from {theory_csv}: "
                       f"{', '.join(only2[:10])}"
                       + (" ..." if len(only2) > 10 else ""))
        raise CliError("\n".join(msg), 1)

    col1 = _value_column(hdr1, ["msd_theory", "msd", "msd_sim"], theory_csv)
    col2 = _value_column(hdr2, ["msd_sim", "msd", "msd_theory"], sim_csv)

    keys = sorted(pts1, key=lambda s: float(s))
    table = []
    nan_points = 0
    for k in keys:
        a = float(pts1[k][col1])
        b = float(pts2[k][col2])
        if math.isnan(a) or math.isnan(b):
            nan_points += 1
            gap = math.nan
        elif a <= 0 or b <= 0:
            raise CliError(
                f"non-positive MSD at {key1}={k}: {a} vs {b}", 1)
        else:
            gap = 10.0 * math.log10(b / a)
        table.append((k, a, b, gap))

    gaps = np.array([g for *_, g in table if not math.isnan(g)])
    print(f"comparing {col2} ({sim_csv}) against {col1} ({theory_csv}): "
          f"{len(table)} points")
    if len(table) <= 200:
        print(f"{key1:>16}  {'reference':>24}  {'value':>24}  {'gap_db':>9}")
        for k, a, b, g in table:
            print(f"{k:>16}  {a:>24.17g}  {b:>24.17g}  {g:>9.4f}")
    else:
        out = Path(out_dir) if out_dir else Path(".")
        gp = out / (Path(sim_csv).stem + "_vs_" + Path(theory_csv).stem
                    + "_gaps.csv")
        _write_csv(gp, [key1, "msd_reference", "msd_value", "gap_db"],
                   [list(t) for t in table])
        print(f"per-point table written to {gp}")

    if nan_points:
        print(f"divergence detected: {nan_points} point(s) with NaN MSD",
              file=sys.stderr)
        return 2
    mx = float(np.max(np.abs(gaps)))
    mean = float(np.mean(gaps))
    ok = mx <= tolerance_db
    print(f"max |gap| = {mx:.4f} dB, mean gap = {mean:.4f} dB, "
          f"tolerance = {tolerance_db:g} dB -> "
          f"{'PASS' if ok else 'FAIL'}")
    return 0 if ok else 3


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Argument errors are validation errors: exit 1 (argparse's default
    exit 2 is reserved for divergence detection here)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_run_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", metavar="NAME",
                     help=f"named experiment preset "
                          f"({', '.join(PRESET_NAMES)})")
    src.add_argument("--config", metavar="PATH",
                     help="JSON config with ExperimentSpec fields")
    p.add_argument("--out", metavar="DIR",
                   help=f"output directory (default ${ENV_OUTDIR} or .)")
    p.add_argument("--seed", type=int, help="override the RNG seed")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--scale", type=float,
                   help="multiply (L, Q, trials) for desk-scale runs; "
                        "theory uses the scaled parameters too")
    p.add_argument("--snr-convention",
                   choices=[c.value for c in theory.SnrConvention],
                   help="SNR accounting convention")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel trial workers (default 1)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="sparselms",
        description="Sparse-LMS laboratory: closed-form theory, seeded "
                    "Monte Carlo, preset experiments, comparisons.")
    p.add_argument("--version", action="version",
                   version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    for cmd, hlp in (("theory", "evaluate closed forms only"),
                     ("simulate", "run Monte Carlo only"),
                     ("experiment", "theory + simulation + manifest")):
        sp = sub.add_parser(cmd, help=hlp)
        _add_run_args(sp)
        sp.set_defaults(mode=cmd)

    cp = sub.add_parser("compare",
                        help="per-point dB gap report between two CSVs")
    cp.add_argument("theory_csv", help="reference file (theory side)")
    cp.add_argument("sim_csv", help="comparison file (simulation side)")
    cp.add_argument("--tolerance-db", type=float, default=1.0,
                    help="max |gap| allowed in dB (default 1.0)")
    cp.add_argument("--out", metavar="DIR",
                    help="directory for the per-point gap CSV when the "
                         "table is too large for stdout")
    cp.set_defaults(mode="compare")
    return p


def _out_dir(args) -> str:
    return args.out or os.environ.get(ENV_OUTDIR) or "."


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.mode == "compare":
            return compare(args.theory_csv, args.sim_csv,
                           tolerance_db=args.tolerance_db,
                           out_dir=args.out or os.environ.get(ENV_OUTDIR))
        if args.preset and args.preset not in PRESET_NAMES:
            raise CliError(f"unknown preset {args.preset!r} (expected one "
                           f"of {', '.join(PRESET_NAMES)})", 1)
        target = args.preset if args.preset else args.config
        _, code = run_experiment(
            target, _out_dir(args), mode=args.mode, seed=args.seed,
            trials=args.trials, scale=args.scale,
            snr_convention=args.snr_convention, workers=args.workers)
        return code
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (theory.StabilityError, theory.ConsistencyError,
            theory.DegenerateSpectrumError, theory.ParameterRangeError,
            ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
