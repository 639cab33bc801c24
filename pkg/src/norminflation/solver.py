"""Periodic pseudospectral Navier-Stokes on [0, 2pi)^3, projection form.

    du/dt = nu Lap u - P (u . grad) u

Storage is the rfftn half-spectrum, shape (3, nx, ny, nz//2 + 1), normalised so
that coefficients are Fourier amplitudes (``norm="forward"``).  Axes may have
different sizes; a z axis of size 1 is exact for data that do not depend on z.
Time stepping is the Lawson integrating-factor RK4 scheme: the viscous part is
applied exactly, the nonlinear term is 2/3-dealiased.
"""
from __future__ import annotations

import json
import logging
import math
import struct
import sys
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft

from .errors import ConfigError, NumericalError
from .norms import Trajectory
from .planewave import COS, SIN, TrigField, sample_modes

log = logging.getLogger(__name__)

MAGIC = b"NSGF"


def _shape3(N) -> tuple[int, int, int]:
    if np.isscalar(N):
        return (int(N),) * 3
    shape = tuple(int(n) for n in N)
    if len(shape) != 3:
        raise ConfigError("grid shape must have three axes")
    return shape


class Grid:
    """Wavenumber tables for one lattice shape (cached per shape)."""

    _cache: dict = {}

    def __new__(cls, shape):
        shape = _shape3(shape)
        if shape in cls._cache:
            return cls._cache[shape]
        self = super().__new__(cls)
        if any(n < 1 for n in shape):
            raise ConfigError(f"bad grid shape {shape}")
        self.shape = shape
        nx, ny, nz = shape
        kx = np.fft.fftfreq(nx, 1.0 / nx)
        ky = np.fft.fftfreq(ny, 1.0 / ny)
        kz = np.fft.rfftfreq(nz, 1.0 / nz)
        self.kx, self.ky, self.kz = (a.astype(float) for a in np.meshgrid(kx, ky, kz, indexing="ij", sparse=True))
        self.kvec = (self.kx, self.ky, self.kz)
        self.k2 = self.kx**2 + self.ky**2 + self.kz**2
        self.k2_safe = np.where(self.k2 == 0, 1.0, self.k2)
        keep = np.ones(self.k2.shape, dtype=bool)
        for kk, n in zip(self.kvec, shape):
            if n > 1:
                keep &= (np.abs(kk) <= n / 3) & (np.abs(kk) < n / 2)
        self.dealias = keep
        # rfft weight: interior z-planes stand for two conjugate coefficients
        w = np.full(len(kz), 2.0)
        w[0] = 1.0
        if nz % 2 == 0 and nz > 1:
            w[-1] = 1.0
        self.zweight = w[None, None, :]
        self.band = tuple(n // 3 if n > 1 else 0 for n in shape)
        cls._cache[shape] = self
        return self

    def project(self, uh: np.ndarray) -> np.ndarray:
        div = self.kx * uh[0] + self.ky * uh[1] + self.kz * uh[2]
        out = uh.copy()
        for d, kk in enumerate(self.kvec):
            out[d] -= kk * div / self.k2_safe
        return out

    def divergence(self, uh: np.ndarray) -> np.ndarray:
        return 1j * (self.kx * uh[0] + self.ky * uh[1] + self.kz * uh[2])


def _rfftn(a, shape):
    return scipy.fft.rfftn(a, s=shape, axes=(-3, -2, -1), norm="forward")


def _irfftn(a, shape):
    return scipy.fft.irfftn(a, s=shape, axes=(-3, -2, -1), norm="forward")


@dataclass
class GridField:
    """Velocity field stored as half-spectrum coefficients on a periodic lattice."""

    coeffs: np.ndarray
    time: float = 0.0
    nu: float = 1.0
    shape: tuple = dc_field(default=None)

    def __post_init__(self):
        if self.shape is None:
            c = self.coeffs.shape
            self.shape = (c[1], c[2], 2 * (c[3] - 1))
        self.shape = _shape3(self.shape)
        nx, ny, nz = self.shape
        if self.coeffs.shape != (3, nx, ny, nz // 2 + 1):
            raise ConfigError(f"coefficient array {self.coeffs.shape} does not match shape {self.shape}")

    @property
    def N(self) -> int:
        return max(self.shape)

    @property
    def grid(self) -> Grid:
        return Grid(self.shape)

    @classmethod
    def zeros(cls, N, nu=1.0, time=0.0) -> "GridField":
        nx, ny, nz = _shape3(N)
        return cls(np.zeros((3, nx, ny, nz // 2 + 1), dtype=complex), time, nu, (nx, ny, nz))

    @classmethod
    def from_physical(cls, data: np.ndarray, time=0.0, nu=1.0) -> "GridField":
        shape = data.shape[1:]
        return cls(_rfftn(np.asarray(data, dtype=float), shape), time, nu, shape)

    def physical(self) -> np.ndarray:
        """Real samples, shape (3, nx, ny, nz)."""
        return _irfftn(self.coeffs, self.shape)

    def with_coeffs(self, coeffs, time=None) -> "GridField":
        return GridField(coeffs, self.time if time is None else time, self.nu, self.shape)

    def to_trigfield(self, rtol: float = 0.0) -> TrigField:
        """Exact conversion of the band-limited grid data to plane-wave form."""
        g = self.grid
        c = self.coeffs
        nz = self.shape[2]
        mag = np.abs(c).max(axis=0)
        mask = mag > rtol * (mag.max() if mag.size else 0.0)
        # drop the redundant half of the kz=0 (and kz=Nyquist) planes: keep canonical representatives
        idx = np.nonzero(mask)
        kx = g.kx[idx[0], 0, 0].astype(np.int64)
        ky = g.ky[0, idx[1], 0].astype(np.int64)
        kz = g.kz[0, 0, idx[2]].astype(np.int64)
        w = g.zweight[0, 0, idx[2]]
        a = c[:, idx[0], idx[1], idx[2]].T  # (M, 3) complex
        # on self-conjugate planes each pair appears twice with conjugate values; halve the weight
        w = np.where(w == 1.0, 1.0, 2.0)
        k = np.column_stack([kx, ky, kz])
        # Nyquist entries are aliased cosines; treat them with their own (real) value
        amp_c = (a.real * w[:, None])
        amp_s = (-a.imag * w[:, None])
        for d, n in enumerate(self.shape):
            if n > 1 and n % 2 == 0:
                ny_ = k[:, d] == -n // 2
                k[ny_, d] = n // 2
        kk = np.vstack([k, k])
        ph = np.concatenate([np.full(len(k), COS), np.full(len(k), SIN)]).astype(np.int8)
        amps = np.vstack([amp_c, amp_s])
        n = len(ph)
        return TrigField(kk, ph, amps, np.zeros(n), np.zeros(n, dtype=np.int8))

    def max_divergence(self) -> float:
        g = self.grid
        div = np.abs(g.kx * self.coeffs[0] + g.ky * self.coeffs[1] + g.kz * self.coeffs[2])
        scale = math.sqrt(float(np.max(g.k2))) * float(np.abs(self.coeffs).max()) if self.coeffs.any() else 1.0
        return float(div.max()) / scale if scale else 0.0

    def energy(self) -> float:
        """(1/2) int |u|^2 over the torus."""
        return 0.5 * (2 * math.pi) ** 3 * float(np.sum(self.grid.zweight * np.abs(self.coeffs) ** 2))


def spectralize(f: TrigField, t: float, N, nu: float = 1.0, *, check_band: bool = True) -> GridField:
    """Inject the modes of f(., t) into half-spectrum coefficients on an N lattice."""
    shape = _shape3(N)
    k, ph, amps = f.amplitudes(t)
    if check_band and len(k):
        for d, n in enumerate(shape):
            lim = n // 3 if n > 1 else 0
            if np.abs(k[:, d]).max() > lim:
                raise ConfigError(f"wavenumber {int(np.abs(k[:, d]).max())} on axis {d} exceeds band {lim} for grid {shape}")
    nx, ny, nz = shape
    c = np.zeros((3, nx, ny, nz // 2 + 1), dtype=complex)
    if len(k):
        # represent each mode by the coefficient with kz >= 0
        sgn = np.where(k[:, 2] < 0, -1, 1)
        kk = k * sgn[:, None]
        one = np.where((ph == COS)[:, None], amps / 2, np.where(sgn[:, None] > 0, -0.5j, 0.5j) * amps)
        ix, iy, iz = kk[:, 0] % nx, kk[:, 1] % ny, kk[:, 2]
        for d in range(3):
            np.add.at(c[d], (ix, iy, iz), one[:, d])
            # kz = 0 plane: the conjugate partner lives in the same half-spectrum
            on_plane = iz == 0
            if on_plane.any():
                np.add.at(c[d], ((-kk[on_plane, 0]) % nx, (-kk[on_plane, 1]) % ny, iz[on_plane]),
                          np.conj(one[on_plane, d]))
    return GridField(c, float(t), nu, shape)


def sample_trig(f: TrigField, t: float, shape) -> np.ndarray:
    k, ph, a = f.amplitudes(t)
    return np.moveaxis(sample_modes(k, ph, a, _shape3(shape)), -1, 0)


def nonlinear_term(u: GridField | np.ndarray, shape=None) -> np.ndarray:
    """-P (u . grad) u in divergence form, dealiased; returns half-spectrum coefficients."""
    if isinstance(u, GridField):
        uh, shape = u.coeffs, u.shape
    else:
        uh = u
    g = Grid(shape)
    phys = _irfftn(uh, shape)
    prod = np.empty((6,) + tuple(shape))
    pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
    for n, (i, j) in enumerate(pairs):
        np.multiply(phys[i], phys[j], out=prod[n])
    ph = _rfftn(prod, shape)
    idx = {(i, j): n for n, (i, j) in enumerate(pairs)}
    out = np.empty_like(uh)
    for i in range(3):
        acc = 0
        for j in range(3):
            acc = acc + g.kvec[j] * ph[idx[(min(i, j), max(i, j))]]
        out[i] = 1j * acc
    out *= g.dealias
    return -g.project(out)


def _snap_count_floor(t_lo, t_hi, per_decade):
    return max(int(math.ceil(per_decade * math.log10(t_hi / t_lo))) + 1, 2)


@dataclass
class SolverConfig:
    N: int | tuple = 64
    nu: float = 1.0
    T_end: float = 1.0
    dt_policy: str = "cfl"  # 'cfl' or 'fixed'
    dt: float = 1e-3  # fixed step, or cap on the CFL step
    cfl: float = 0.5
    snapshot_t_min: float | None = None
    snapshots_per_decade: int = 16
    extra_times: tuple = ()
    dealias: str = "2/3"
    integrator: str = "ifrk4"
    nonlinear: bool = True
    energy_tol: float = 1e-8
    max_steps: int = 10_000_000

    def validate(self, kmax=None) -> None:
        shape = _shape3(self.N)
        if self.dt_policy not in ("cfl", "fixed"):
            raise ConfigError(f"unknown dt policy {self.dt_policy!r}")
        if self.dealias != "2/3" or self.integrator != "ifrk4":
            raise ConfigError("only the 2/3 rule and integrating-factor RK4 are implemented")
        if not (self.T_end > 0 and self.dt > 0 and self.nu >= 0 and 0 < self.cfl <= 1):
            raise ConfigError("T_end, dt must be positive, nu nonnegative, 0 < cfl <= 1")
        if kmax is not None:
            for d, n in enumerate(shape):
                if kmax[d] > 0 and n < 3 * kmax[d]:
                    raise ConfigError(f"grid {shape} too coarse: axis {d} needs N >= 3*{int(kmax[d])}")

    def schedule(self, k1: float | None = None) -> np.ndarray:
        lo = self.snapshot_t_min
        if lo is None:
            lo = 1e-4 / k1**2 if k1 else self.T_end * 1e-6
        lo = min(lo, self.T_end)
        n = _snap_count_floor(lo, self.T_end, self.snapshots_per_decade) if lo < self.T_end else 1
        ts = np.concatenate([[0.0], np.logspace(math.log10(lo), math.log10(self.T_end), n),
                             [t for t in self.extra_times if 0 < t <= self.T_end]])
        ts = np.unique(np.round(ts, 15))
        return ts

    def to_dict(self) -> dict:
        d = asdict(self)
        d["N"] = list(_shape3(self.N)) if not np.isscalar(self.N) else self.N
        d["extra_times"] = [float(t) for t in self.extra_times]
        return d


@dataclass
class StepLog:
    steps: int = 0
    dt_min: float = math.inf
    dt_max: float = 0.0
    energy_increases: int = 0


def _ifrk4_step(uh, h, g: Grid, nu, shape, nonlinear=True):
    E = np.exp(-nu * g.k2 * h)
    E2 = np.exp(-nu * g.k2 * h / 2)
    if not nonlinear:
        return E * uh
    a = nonlinear_term(uh, shape)
    b = nonlinear_term(E2 * (uh + h / 2 * a), shape)
    c = nonlinear_term(E2 * uh + h / 2 * b, shape)
    d = nonlinear_term(E * uh + h * E2 * c, shape)
    return E * uh + h / 6 * (E * a + 2 * E2 * (b + c) + d)


def evolve(u0: GridField, cfg: SolverConfig, times: Sequence[float] | None = None,
           step_log: StepLog | None = None) -> Trajectory:
    """Advance u0 to cfg.T_end; snapshots at ``times`` (default cfg.schedule())."""
    g = u0.grid
    shape = u0.shape
    nu = cfg.nu
    cfg.validate()
    if u0.max_divergence() > 1e-10:
        raise ConfigError("initial field is not divergence-free")
    ts = np.asarray(cfg.schedule() if times is None else times, dtype=float)
    if np.any(np.diff(ts) <= 0) or ts[0] < u0.time:
        raise ConfigError("snapshot times must increase from the initial time")
    uh = u0.coeffs * g.dealias
    t = u0.time
    out_t, out_f = [], []
    stats = step_log if step_log is not None else StepLog()
    energy = GridField(uh, t, nu, shape).energy()
    h_x = 2 * math.pi / max(shape)
    for target in ts:
        while t < target * (1 - 1e-14) and target - t > 1e-300:
            if cfg.dt_policy == "fixed":
                h = cfg.dt
            else:
                umax = float(np.abs(_irfftn(uh, shape)).max()) if cfg.nonlinear else 0.0
                h = cfg.cfl * h_x / umax if umax > 0 else cfg.dt
                h = min(h, cfg.dt)
            h = min(h, target - t)
            uh = _ifrk4_step(uh, h, g, nu, shape, cfg.nonlinear)
            t = target if abs(target - t - h) <= 1e-14 * max(target, 1) else t + h
            stats.steps += 1
            stats.dt_min, stats.dt_max = min(stats.dt_min, h), max(stats.dt_max, h)
            if stats.steps > cfg.max_steps:
                raise NumericalError(f"step budget {cfg.max_steps} exhausted at t={t:.6g}")
            e_new = GridField(uh, t, nu, shape).energy()
            if not math.isfinite(e_new):
                raise NumericalError(f"non-finite energy at t={t:.6g} after {stats.steps} steps (dt={h:.3g})")
            if e_new > energy * (1 + cfg.energy_tol) + 1e-300:
                raise NumericalError(f"energy increased from {energy:.17g} to {e_new:.17g} at t={t:.6g} "
                                     f"(dt={h:.3g}); reduce dt or raise N")
            energy = e_new
        snap = GridField(uh.copy(), float(target), nu, shape)
        out_t.append(float(target))
        out_f.append(snap)
    return Trajectory(np.array(out_t), out_f, source="solver",
                      meta={"steps": stats.steps, "dt_min": stats.dt_min, "dt_max": stats.dt_max,
                            "shape": list(shape), "nu": nu})


def exact_trajectory(f: TrigField, times, N, nu: float = 1.0) -> Trajectory:
    return Trajectory(np.asarray(times, float), [spectralize(f, t, N, nu) for t in times], source="exact")


def compute_remainder(traj: Trajectory, u0: TrigField, u1: TrigField, *, band_check: bool = False) -> tuple[Trajectory, list]:
    """y(t) = u(t) - exp(t Lap) u0 + u1(t), snapshotwise.

    Exact fields are spectralized at the snapshot times on the trajectory's grid;
    modes outside the lattice band are dropped and their norm recorded.
    Returns (y trajectory, per-snapshot dropped amplitude).
    """
    from .planewave import heat_flow

    if not traj.fields or not isinstance(traj.fields[0], GridField):
        raise ConfigError("compute_remainder expects a solver trajectory of GridFields")
    shape = traj.fields[0].shape
    lin = heat_flow(u0)
    ys, dropped = [], []
    band = Grid(shape).band
    for t, u in zip(traj.times, traj.fields):
        if abs(u.time - t) > 1e-12 * max(1.0, t):
            raise ConfigError(f"snapshot time {u.time} does not match trajectory time {t}")
        corr = u1 - lin
        k, ph, a = corr.amplitudes(t)
        inband = np.all(np.abs(k) <= np.asarray(band), axis=1) if len(k) else np.zeros(0, bool)
        dropped.append(float(np.linalg.norm(a[~inband], axis=1).sum()) if len(k) else 0.0)
        sel = TrigField(k[inband], ph[inband], a[inband], np.zeros(inband.sum()), np.zeros(inband.sum(), np.int8))
        c = spectralize(sel, 0.0, shape, u.nu, check_band=False)
        ys.append(u.with_coeffs(u.coeffs + c.coeffs, time=t))
    return Trajectory(traj.times.copy(), ys, source="solver", meta={"kind": "remainder"}), dropped


def forcing_terms(y: GridField, w: TrigField, u1: TrigField, t: float) -> dict:
    """Magnitudes of the three forcing groups in the remainder equation at time t.

    With u = w - u1 + y (w the heat flow of the datum) the remainder obeys
    y_t - Lap y + P[G1 + G2 + G3] = 0 where
      G1 = -(w.grad)u1 - (u1.grad)w + (u1.grad)u1      (no y)
      G2 = (w.grad)y + (y.grad)w - (u1.grad)y - (y.grad)u1   (linear in y)
      G3 = (y.grad)y.
    Returned as sup-norms of the projected, dealiased terms on y's grid.
    """
    shape = y.shape
    g = Grid(shape)
    W = spectralize(w, t, shape, check_band=False).coeffs
    U1 = spectralize(u1, t, shape, check_band=False).coeffs
    Y = y.coeffs

    def B(a, b):
        return -nonlinear_term_pair(a, b, shape)

    G1 = -B(W, U1) - B(U1, W) + B(U1, U1)
    G2 = B(W, Y) + B(Y, W) - B(U1, Y) - B(Y, U1)
    G3 = B(Y, Y)
    return {name: float(np.abs(_irfftn(G, shape)).max()) for name, G in (("G1", G1), ("G2", G2), ("G3", G3))}


def nonlinear_term_pair(ah, bh, shape) -> np.ndarray:
    """-P (a . grad) b, dealiased (divergence form, valid for div a = 0)."""
    g = Grid(shape)
    a = _irfftn(ah, shape)
    b = _irfftn(bh, shape)
    out = np.empty_like(ah)
    for i in range(3):
        acc = 0
        for j in range(3):
            acc = acc + g.kvec[j] * _rfftn(a[j] * b[i], shape)
        out[i] = 1j * acc
    out *= g.dealias
    return -g.project(out)


def diagnostics(u: GridField, shells: Sequence[Sequence[int]] | None = None) -> dict:
    g = u.grid
    spec = g.zweight * (np.abs(u.coeffs) ** 2).sum(axis=0)
    out = {
        "time": u.time,
        "energy": u.energy(),
        "enstrophy": 0.5 * (2 * math.pi) ** 3 * float(np.sum(g.k2 * spec)) * 1.0,
        "max_divergence": u.max_divergence(),
    }
    tf = u.to_trigfield(rtol=1e-14)
    inventory = sorted(tf.wavevectors())
    out["active_wavevectors"] = [list(map(int, w)) for w in inventory]
    if shells is not None:
        out["spectrum_by_shell"] = {str(tuple(s)): float(np.linalg.norm(tf.select_wavevectors([tuple(s)]).amplitudes(0)[2]))
                                    for s in shells}
    return out


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------

def save_snapshot(u: GridField, path, meta: dict | None = None) -> None:
    """Binary layout: see docs/formats.md.  Writes ``path`` and ``path.json``."""
    path = Path(path)
    tag = b"<" if sys.byteorder == "little" else b">"
    phys = np.ascontiguousarray(u.physical(), dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(MAGIC + tag + b"\0\0\0")
        fh.write(struct.pack("=3q", *u.shape))
        fh.write(struct.pack("=2d", u.time, u.nu))
        fh.write(phys.tobytes(order="C"))
    side = {"format": "NSGF", "version": 1, "shape": list(u.shape), "time": u.time, "nu": u.nu,
            "byteorder": sys.byteorder, "components": ["ux", "uy", "uz"]}
    side.update(meta or {})
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")


def load_snapshot(path) -> GridField:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ConfigError(f"{path} is not a snapshot file")
    e = raw[4:5].decode()
    if e not in "<>":
        raise ConfigError("bad endianness tag")
    shape = struct.unpack(e + "3q", raw[8:32])
    time, nu = struct.unpack(e + "2d", raw[32:48])
    n = 3 * math.prod(shape)
    data = np.frombuffer(raw, dtype=e + "f8", count=n, offset=48).reshape((3,) + tuple(shape))
    return GridField.from_physical(data.astype(float), time, nu)


def bilinear_quadrature(w: TrigField, times: Sequence[float], shape, *, epsrel: float = 1e-11) -> list[GridField]:
    """Pseudospectral B(w, w)(t) = int_0^t exp((t-s) Lap) P (w.grad) w (s) ds at increasing ``times``.

    ``w`` is sampled on ``shape`` (which must hold the products alias-free, i.e.
    twice the bandwidth of w inside the 2/3 band); the time integral is done by
    adaptive vector quadrature segment by segment, propagating with the exact
    heat factor between segments.
    """
    from scipy import integrate

    shape = _shape3(shape)
    g = Grid(shape)
    kmax = w.max_wavenumbers()
    for d, n in enumerate(shape):
        if n > 1 and 2 * kmax[d] > g.band[d]:
            raise ConfigError(f"grid {shape} cannot hold the products of bandwidth {int(kmax[d])} on axis {d}")
    ts = np.asarray(times, dtype=float)
    if np.any(np.diff(ts) <= 0) or ts[0] < 0:
        raise ConfigError("times must be increasing and nonnegative")
    cshape = (3,) + g.k2.shape

    def forcing(s):
        wh = spectralize(w, s, shape, check_band=False).coeffs
        return -nonlinear_term(wh, shape)  # +P (w.grad) w

    acc = np.zeros(cshape, dtype=complex)
    t_prev = 0.0
    out = []
    for t in ts:
        def integrand(s, t=t):
            v = np.exp(-g.k2 * (t - s)) * forcing(s)
            return np.concatenate([v.real.ravel(), v.imag.ravel()])
        seg = integrate.quad_vec(integrand, t_prev, t, epsabs=0, epsrel=epsrel)[0] if t > t_prev else 0.0
        half = int(np.prod(cshape))
        acc = np.exp(-g.k2 * (t - t_prev)) * acc
        if t > t_prev:
            acc = acc + (seg[:half] + 1j * seg[half:]).reshape(cshape)
        out.append(GridField(acc.copy(), float(t), 1.0, shape))
        t_prev = t
    return out
