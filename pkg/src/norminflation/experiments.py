"""Experiment orchestration: time ladder, scaling fits, the inflation pipeline, sweeps."""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .construction import (FrequencyFamily, build_frequency_family, build_initial_data,
                           geometric_magnitudes)
from .errors import BudgetExceeded, ConfigError, NumericalError
from .norms import NormReport, besov_norm, linf_report, xt_norm
from .planewave import TrigField, first_iterate, heat_flow, split_u1
from .solver import (GridField, SolverConfig, compute_remainder, diagnostics, evolve,
                     save_snapshot, spectralize)

log = logging.getLogger(__name__)

COMPONENTS = ("u0_besov", "u10_besov", "u11_xt", "N2_xt", "N3_xt")
EXPECTED_EXPONENTS = {
    ("u0_besov", "Q"): 1.0, ("u0_besov", "r"): -0.5, ("u10_besov", "Q"): 2.0,
    ("u11_xt", "r"): -0.5, ("N2_xt", "r"): -0.5, ("N3_xt", "r"): -1.0,
}


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    K: int = 2
    r: int = 2
    preset: str = "desk"
    magnitudes: list | None = None
    shell_ratio: int | None = None
    Q: float = 2.0
    nu: float = 1.0
    N: int = 128
    thin: bool = True  # z-axis of size 1 when every wavevector has k_z = 0
    T_end: float = 1.0
    dt_max: float = 1e-2
    cfl: float = 0.5
    snapshots_per_decade: int = 16
    besov_per_decade: int = 64
    curve_per_decade: int = 16
    oversample: float = 4.0
    xt_T: float = 0.1
    family_norms: bool = True
    run_solver: bool = True
    sweep_Q: list = dc_field(default_factory=list)
    sweep_r: list = dc_field(default_factory=list)
    sweep_K: list = dc_field(default_factory=list)
    sweep_budget: int = 64
    workers: int = 1
    output_dir: str = "runs/default"
    seed: int = 0

    def shell_magnitudes(self) -> list[int] | None:
        if self.magnitudes is not None:
            return [int(m) for m in self.magnitudes]
        if self.shell_ratio is not None:
            return geometric_magnitudes(self.K, self.r, self.shell_ratio)
        return None

    def family(self) -> FrequencyFamily:
        return build_frequency_family(self.K, self.r, self.preset, self.shell_magnitudes())

    def validate(self) -> None:
        if self.Q < 0 or self.nu <= 0 or self.T_end <= 0 or self.xt_T <= 0:
            raise ConfigError("Q must be >= 0; nu, T_end, xt_T positive")
        if self.xt_T > self.T_end and self.run_solver:
            raise ConfigError("xt_T must not exceed T_end")
        if self.magnitudes is not None and self.shell_ratio is not None:
            raise ConfigError("give either magnitudes or shell_ratio, not both")
        self.family()
        n = max(len(self.sweep_Q), 1) * max(len(self.sweep_r), 1) * max(len(self.sweep_K), 1)
        if n > self.sweep_budget:
            raise BudgetExceeded(f"sweep of {n} points exceeds budget {self.sweep_budget}")

    def grid_shape(self, fam: FrequencyFamily) -> tuple[int, int, int]:
        kz_free = True  # the constructed family lives in the k_z = 0 plane
        return (self.N, self.N, 1 if (self.thin and kz_free) else self.N)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e


def config_hash(cfg: ExperimentConfig) -> str:
    d = cfg.to_dict()
    d.pop("output_dir", None)
    d.pop("workers", None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    package_version: str
    numpy_version: str
    scipy_version: str
    notes: list = dc_field(default_factory=list)

    @classmethod
    def for_config(cls, cfg: ExperimentConfig) -> "RunManifest":
        import scipy
        return cls(cfg.to_dict(), config_hash(cfg), __version__, np.__version__, scipy.__version__)

    def to_dict(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------------
# time ladder
# ----------------------------------------------------------------------

@dataclass
class LadderEntry:
    alpha: int
    r_alpha: int
    T_alpha: float


@dataclass
class TimeLadder:
    beta: int
    beta_uncapped: float
    entries: list

    def times(self) -> list[float]:
        return [e.T_alpha for e in self.entries]

    def to_dict(self) -> dict:
        return {"beta": self.beta, "beta_uncapped": self.beta_uncapped,
                "entries": [asdict(e) for e in self.entries]}


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def build_time_ladder(Q: float, fam: FrequencyFamily) -> TimeLadder:
    """beta = round(Q^3) capped at r; r_alpha = round(r - alpha r / beta); T_alpha = |k_{r_alpha}|^-2."""
    if fam.r < 1:
        raise ConfigError("ladder needs r >= 1")
    if Q < 1:
        raise ConfigError("ladder needs Q >= 1")
    r = fam.r
    raw = float(Q) ** 3
    beta = max(1, min(_round_half_up(raw), r))
    mags = [float(fam.K)] + [s.magnitude for s in fam.shells]  # |k_0| = K
    entries, seen = [], set()
    for alpha in range(1, beta + 1):
        ra = _round_half_up(r - alpha * r / beta)
        ra = min(max(ra, 0), r)
        if ra in seen:
            continue
        seen.add(ra)
        entries.append(LadderEntry(alpha, ra, mags[ra] ** -2))
    ts = [e.T_alpha for e in entries]
    assert all(a < b for a, b in zip(ts, ts[1:]))
    return TimeLadder(beta, raw, entries)


# ----------------------------------------------------------------------
# component norms and scaling fits
# ----------------------------------------------------------------------

def u10_plateau(u10: TrigField, k1: float, *, n: int = 9, per_decade: int = 64, oversample: float = 4.0):
    """Besov norm of u10(t) over the window 4/|k1|^2 <= t <= 1/4; returns (max, window, reports, t_max)."""
    lo, hi = 4.0 / k1**2, 0.25
    if lo >= hi:
        raise ConfigError(f"|k1| = {k1} too small for a plateau window")
    ts = np.logspace(math.log10(lo), math.log10(hi), n)
    reps = [besov_norm(u10, at=float(t), per_decade=per_decade, oversample=oversample) for t in ts]
    vals = [r.value for r in reps]
    i = int(np.argmax(vals))
    return vals[i], (lo, hi), reps, float(ts[i])


def component_norm(component: str, K: int, r: int, Q: float, *, magnitudes=None, shell_ratio=None,
                   T: float = 0.1, oversample: float = 4.0) -> float:
    if component not in COMPONENTS:
        raise ConfigError(f"unknown component {component!r}")
    mags = magnitudes if magnitudes is not None else (
        geometric_magnitudes(K, r, shell_ratio) if shell_ratio is not None else None)
    fam = build_frequency_family(K, r, "desk", mags)
    data = build_initial_data(fam, Q)
    if component == "u0_besov":
        return besov_norm(data.field, oversample=oversample).value
    fi = first_iterate(data)
    if component == "u10_besov":
        u10, _ = split_u1(fi.u1, fam)
        return u10_plateau(u10, fam.shells[0].magnitude, oversample=oversample)[0]
    if component == "u11_xt":
        f = split_u1(fi.u1, fam)[1]
    else:
        f = fi.duhamel_part(component.split("_")[0])
    if f.n_terms == 0:
        return 0.0
    return xt_norm(f, T, oversample=oversample).value


@dataclass
class ScalingFit:
    component: str
    axis: str
    grid: list
    values: list
    exponent: float
    ci: tuple
    expected: float | None
    excluded: list = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def fit_power_law(x, y, *, seed: int = 0, n_boot: int = 2000, level: float = 0.95,
                  min_points: int = 3, min_span: float = 4.0) -> tuple[float, tuple[float, float]]:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.any(x <= 0):
        raise ConfigError("scaling grid must be positive")
    if len(x) < min_points or x.max() / x.min() < min_span:
        raise ConfigError(f"degenerate grid: need >= {min_points} points spanning >= x{min_span}")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ConfigError("all-zero or nonpositive norms; check the configuration")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    fitted = A @ coef
    for b in range(n_boot):
        yb = fitted + rng.choice(resid, size=len(resid), replace=True)
        boots[b] = np.linalg.lstsq(A, yb, rcond=None)[0][0]
    a = (1 - level) / 2
    return float(coef[0]), (float(np.quantile(boots, a)), float(np.quantile(boots, 1 - a)))


def measure_scaling(component: str, axis: str, grid: Sequence, *, K: int = 2, r: int = 2, Q: float = 2.0,
                    shell_ratio: int = 16, T: float = 0.1, oversample: float = 4.0, seed: int = 0,
                    exclude_empty: bool = False) -> ScalingFit:
    """Log-log least-squares exponent of a component norm along the Q or r axis.

    With ``exclude_empty`` grid points where the component has no modes by
    construction (N3 at r = 1) are dropped and the point-count rule relaxed to 2.
    """
    if axis not in ("Q", "r"):
        raise ConfigError("axis must be 'Q' or 'r'")
    vals, keep, excluded = [], [], []
    for g in grid:
        kw = dict(K=K, r=r, Q=Q)
        kw[axis] = int(g) if axis == "r" else float(g)
        v = component_norm(component, shell_ratio=shell_ratio, T=T, oversample=oversample, **kw)
        vals.append(v)
        if exclude_empty and v == 0.0 and component == "N3_xt" and axis == "r" and int(g) == 1:
            excluded.append(g)
        else:
            keep.append(len(vals) - 1)
    x = [float(grid[i]) for i in keep]
    y = [vals[i] for i in keep]
    if excluded:
        e, ci = fit_power_law(x, y, seed=seed, min_points=2, min_span=2.0)
    else:
        e, ci = fit_power_law(x, y, seed=seed)
    return ScalingFit(component, axis, list(grid), vals, e, ci, EXPECTED_EXPONENTS.get((component, axis)), excluded)


# ----------------------------------------------------------------------
# full pipeline
# ----------------------------------------------------------------------

@dataclass
class InflationReport:
    params: dict
    manifest_hash: str
    u0_besov: dict
    u10_plateau: dict
    u11_xt: dict | None
    family_xt: dict
    besov_curve: list
    inflation_ratio: float | None
    t_star: float | None
    window: tuple
    y_ladder: list
    y_xt: dict | None
    audit: dict | None
    ladder: dict
    solver: dict
    ratio_all_t: float | None = None
    scaling: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> dict:
        row = dict(self.params)
        row.update({
            "u0_besov": _fmt(self.u0_besov["value"]),
            "u10_plateau": _fmt(self.u10_plateau["value"]),
            "u11_xt": _fmt(self.u11_xt["value"]) if self.u11_xt else "",
            "N1_xt": _fmt(self.family_xt.get("N1")), "N2_xt": _fmt(self.family_xt.get("N2")),
            "N3_xt": _fmt(self.family_xt.get("N3")),
            "inflation_ratio": _fmt(self.inflation_ratio), "t_star": _fmt(self.t_star),
            "ratio_all_t": _fmt(self.ratio_all_t),
            "y_xt": _fmt(self.y_xt["value"]) if self.y_xt else "",
            "y_xt_over_Q4T": _fmt(self.y_xt["over_Q4T"]) if self.y_xt else "",
            "y_linf_T": _fmt(self.y_xt["linf_at_T"]) if self.y_xt else "",
            "audit_ok": "" if self.audit is None else str(self.audit["holds"]),
            "manifest_hash": self.manifest_hash,
        })
        return row


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def _stage(name):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except (ConfigError, NumericalError, BudgetExceeded) as e:
                raise type(e)(f"[stage {name}] {e}") from e
        return inner
    return wrap


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, NormReport):
        return o.to_dict()
    raise TypeError(type(o).__name__)


def run_inflation_experiment(cfg: ExperimentConfig, out_dir=None, *, write: bool = True) -> InflationReport:
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "manifest.json", RunManifest.for_config(cfg).to_dict())

    fam, data = _stage("construct")(lambda: (cfg.family(), build_initial_data(cfg.family(), cfg.Q)))()
    k1 = fam.shells[0].magnitude
    if write:
        _write_json(out / "initial_data.json", data.to_dict())

    fi = _stage("iterate")(first_iterate)(data)
    u10, u11 = split_u1(fi.u1, fam)
    if write:
        _write_json(out / "u1.json", {"u1": fi.u1.to_dict(), "u10": u10.to_dict(), "u11": u11.to_dict(),
                                      "near_resonant": fi.near_resonant})

    def exact_norms():
        b0 = besov_norm(data.field, per_decade=cfg.besov_per_decade, oversample=cfg.oversample) \
            if data.field.n_terms else None
        plateau, window, reps, t_pl = u10_plateau(u10, k1, oversample=cfg.oversample)
        x11 = xt_norm(u11, cfg.xt_T, oversample=cfg.oversample) if cfg.family_norms and u11.n_terms else None
        fam_xt = {}
        if cfg.family_norms:
            for name in ("N1", "N2", "N3"):
                f = fi.duhamel_part(name)
                fam_xt[name] = xt_norm(f, cfg.xt_T, oversample=cfg.oversample).value if f.n_terms else 0.0
        return b0, (plateau, window, reps, t_pl), x11, fam_xt

    b0, (plateau, window_pl, pl_reps, t_pl), x11, fam_xt = _stage("norms")(exact_norms)()
    u0_b = b0.value if b0 else 0.0
    ladder = build_time_ladder(max(cfg.Q, 1.0), fam)

    report = InflationReport(
        params={"K": cfg.K, "r": cfg.r, "Q": cfg.Q, "N": cfg.N, "nu": cfg.nu,
                "shells": " ".join(str(m) for m in fam.magnitudes)},
        manifest_hash=config_hash(cfg),
        u0_besov=b0.to_dict() if b0 else {"value": 0.0},
        u10_plateau={"value": plateau, "window": list(window_pl), "t_at_max": t_pl,
                     "report": pl_reps[int(np.argmax([r.value for r in pl_reps]))].to_dict()},
        u11_xt=x11.to_dict() if x11 else None,
        family_xt=fam_xt, besov_curve=[], inflation_ratio=None, t_star=None,
        window=(1.0 / k1**2, 1.0), y_ladder=[], y_xt=None, audit=None, ladder=ladder.to_dict(), solver={})

    if cfg.run_solver:
        _stage("solve")(_solve_and_measure)(cfg, fam, data, fi, u10, u11, u0_b, ladder, report, out, write)

    if write:
        _write_json(out / "report.json", report.to_dict())
        _write_gnuplot(out, report)
    return report


def _solve_and_measure(cfg, fam, data, fi, u10, u11, u0_b, ladder, report, out, write):
    shape = cfg.grid_shape(fam)
    k1 = fam.shells[0].magnitude
    scfg = SolverConfig(N=shape, nu=cfg.nu, T_end=cfg.T_end, dt=cfg.dt_max, cfl=cfg.cfl,
                        snapshot_t_min=1e-4 / k1**2, snapshots_per_decade=cfg.snapshots_per_decade,
                        extra_times=tuple(t for t in ladder.times() + [cfg.xt_T] if t <= cfg.T_end))
    scfg.validate(kmax=data.field.max_wavenumbers())
    if cfg.nu != 1.0:
        raise ConfigError("the exact iterate uses unit viscosity; remainder needs nu = 1")
    g0 = spectralize(data.field, 0.0, shape, cfg.nu)
    t0 = time.perf_counter()
    traj = evolve(g0, scfg)
    elapsed = time.perf_counter() - t0
    divs = [f.max_divergence() for f in traj.fields]
    report.solver = {"shape": list(shape), "steps": traj.meta["steps"], "dt_min": traj.meta["dt_min"],
                     "dt_max": traj.meta["dt_max"], "snapshots": len(traj), "max_divergence": max(divs)}
    log.info("solver: %d steps in %.1fs", traj.meta["steps"], elapsed)

    # Besov curve over the window (1/|k1|^2, 1)
    lo, hi = 1.0 / k1**2, 1.0
    curve = []
    for t, f in zip(traj.times, traj.fields):
        if t < hi and u0_b > 0:
            rep = besov_norm(f, per_decade=cfg.curve_per_decade, oversample=cfg.oversample)
            curve.append({"t": float(t), "besov": rep.value, "t_star": rep.witnesses["t_star"],
                          "x0_star": list(map(float, rep.witnesses["x0_star"])), "in_window": bool(lo < t)})
    report.besov_curve = curve
    inside = [c for c in curve if c["in_window"]]
    if curve:
        report.ratio_all_t = max(c["besov"] for c in curve) / u0_b
    if inside:
        i = int(np.argmax([c["besov"] for c in inside]))
        report.t_star = inside[i]["t"]
        report.inflation_ratio = inside[i]["besov"] / u0_b

    y, dropped = compute_remainder(traj, data.field, fi.u1)
    report.solver["remainder_dropped_max"] = max(dropped) if dropped else 0.0
    Q4 = cfg.Q**4
    for e in ladder.entries:
        if e.T_alpha <= cfg.T_end:
            rep = xt_norm(y, e.T_alpha, oversample=cfg.oversample)
            i = int(np.argmin(np.abs(y.times - e.T_alpha)))
            linf = linf_report(y.fields[i], cfg.oversample).value
            report.y_ladder.append({"alpha": e.alpha, "r_alpha": e.r_alpha, "T": e.T_alpha, "xt": rep.value,
                                    "linf_at_T": linf, "identity_ok": linf <= rep.value / math.sqrt(e.T_alpha) * (1 + 1e-12)})
    rep = xt_norm(y, cfg.xt_T, oversample=cfg.oversample)
    i = int(np.argmin(np.abs(y.times - cfg.xt_T)))
    linf = linf_report(y.fields[i], cfg.oversample).value
    report.y_xt = {"T": cfg.xt_T, "value": rep.value, "over_Q4T": rep.value / (Q4 * cfg.xt_T) if Q4 else None,
                   "linf_at_T": linf, "identity_ok": linf <= rep.value / math.sqrt(cfg.xt_T) * (1 + 1e-12),
                   "report": rep.to_dict()}

    if report.t_star is not None:
        i = int(np.argmin(np.abs(traj.times - report.t_star)))
        ts = float(traj.times[i])
        lin = spectralize(heat_flow(data.field), ts, shape, check_band=False)
        diff = traj.fields[i].with_coeffs(traj.fields[i].coeffs - lin.coeffs)
        lhs = besov_norm(diff, per_decade=cfg.curve_per_decade, oversample=cfg.oversample).value
        b10 = besov_norm(u10, at=ts, per_decade=cfg.curve_per_decade, oversample=cfg.oversample).value
        l11 = linf_report(u11, cfg.oversample, t=ts).value
        ly = linf_report(y.fields[i], cfg.oversample).value
        report.audit = {"t": ts, "lhs": lhs, "u10_besov": b10, "u11_linf": l11, "y_linf": ly,
                        "rhs": b10 - l11 - ly, "holds": bool(lhs >= b10 - l11 - ly - 1e-12 * max(1.0, lhs))}
        if write:
            save_snapshot(traj.fields[i], out / "u_tstar.nsgf", {"role": "solution at t_star"})
    if write:
        with open(out / "diagnostics.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "energy", "enstrophy", "max_divergence"])
            for f in traj.fields:
                d = diagnostics(f)
                wr.writerow([repr(f.time), repr(d["energy"]), repr(d["enstrophy"]), repr(d["max_divergence"])])


def _write_gnuplot(out: Path, report: InflationReport) -> None:
    if report.besov_curve:
        with open(out / "besov_curve.dat", "w") as fh:
            fh.write("# t  besov(u(t))  besov(u0)\n")
            for c in report.besov_curve:
                if c["t"] <= 0:
                    continue  # log axis
                fh.write(f"{c['t']!r} {c['besov']!r} {report.u0_besov['value']!r}\n")
        (out / "besov_curve.gp").write_text(
            "set logscale x\nset xlabel 't'\nset ylabel 'Besov norm'\n"
            "plot 'besov_curve.dat' using 1:2 with linespoints title 'u(t)', "
            "'' using 1:3 with lines title 'u0'\n")
    if report.y_ladder:
        with open(out / "y_ladder.dat", "w") as fh:
            fh.write("# T_alpha  xt(y)  linf(y(T_alpha))\n")
            for e in report.y_ladder:
                fh.write(f"{e['T']!r} {e['xt']!r} {e['linf_at_T']!r}\n")
        (out / "y_ladder.gp").write_text(
            "set logscale xy\nset xlabel 'T'\nplot 'y_ladder.dat' using 1:2 with linespoints title 'X_T norm of y'\n")


# ----------------------------------------------------------------------
# sweeps
# ----------------------------------------------------------------------

def sweep_points(cfg: ExperimentConfig) -> list[ExperimentConfig]:
    Qs = cfg.sweep_Q or [cfg.Q]
    rs = cfg.sweep_r or [cfg.r]
    Ks = cfg.sweep_K or [cfg.K]
    pts = []
    for K, r, Q in itertools.product(Ks, rs, Qs):
        mags = cfg.magnitudes
        if mags is not None and len(mags) != r:
            raise ConfigError("explicit magnitudes cannot be swept over r; use shell_ratio")
        pts.append(replace(cfg, K=K, r=r, Q=Q, sweep_Q=[], sweep_r=[], sweep_K=[],
                           output_dir=str(Path(cfg.output_dir) / f"K{K}_r{r}_Q{Q!r}")))
    return pts


def _run_point(c: ExperimentConfig) -> dict:
    return run_inflation_experiment(c, c.output_dir).to_dict()


def sweep(cfg: ExperimentConfig) -> tuple[Path, Path]:
    """Run the cross product of sweep axes; write summary.csv and index.json; return their paths."""
    cfg.validate()
    pts = sweep_points(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            dicts = list(ex.map(_run_point, pts))
    else:
        dicts = [_run_point(p) for p in pts]
    reports = [InflationReport(**d) for d in dicts]
    rows = [r.csv_row() for r in reports]
    scaling = {}
    for comp, key in (("u0_besov", "u0_besov"), ("u10_besov", "u10_plateau")):
        for axis in ("Q", "r"):
            xs = sorted({float(r["Q" if axis == "Q" else "r"]) for r in rows})
            if len(xs) < 3:
                continue
            other = [a for a in ("Q", "r", "K") if a != axis]
            groups = {}
            for row in rows:
                groups.setdefault(tuple(row[a] for a in other), []).append(row)
            for gkey, grp in sorted(groups.items(), key=lambda kv: repr(kv[0])):
                x = [float(g[axis]) for g in grp]
                y = [float(g[key]) for g in grp]
                try:
                    e, ci = fit_power_law(x, y, seed=cfg.seed)
                except ConfigError:
                    continue
                scaling[f"{comp}:{axis}:{'/'.join(map(str, gkey))}"] = {"exponent": e, "ci": list(ci)}
    buf = io.StringIO()
    keys = list(rows[0].keys())
    wr = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    wr.writeheader()
    for row in rows:
        wr.writerow(row)
    csv_path = out / "summary.csv"
    csv_path.write_text(buf.getvalue())
    idx = {"config_hash": config_hash(cfg), "points": [p.output_dir for p in pts], "scaling": scaling,
           "csv": "summary.csv", "rows": len(rows)}
    idx_path = out / "index.json"
    _write_json(idx_path, idx)
    return csv_path, idx_path
