"""Exact calculus on trigonometric vector fields with exponential time profiles.

A field is a finite sum of modes

    sum_m  A_m(t) * phi_m(k_m . x),     phi_m in {cos, sin},

on the 2*pi-periodic torus, where k_m is an integer wavevector and every
amplitude is a time profile ``sum_i c_i t^{p_i} exp(-lambda_i t)`` with vector
coefficients c_i.  Vector coefficients let modes whose amplitudes point in
different directions merge when they share a wavevector and phase.

Storage is flat (one row per profile term) so that heat flow, advection,
projection and Duhamel integration are all vectorised numpy operations.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Iterable, Sequence

import numpy as np
import scipy.fft

from .errors import BudgetExceeded

COS, SIN = 0, 1
PHASE_NAMES = ("cos", "sin")
DEFAULT_MODE_BUDGET = 10**6
EPS_RES = 1e-9


def canonical_sign(k: np.ndarray) -> np.ndarray:
    """+1/-1 per row so that sign*k is lexicographically positive (+1 for k=0)."""
    k = np.atleast_2d(k)
    nz = k != 0
    first = np.argmax(nz, axis=1)
    lead = k[np.arange(len(k)), first]
    return np.where(lead < 0, -1, 1).astype(np.int64)


def canonical_wavevector(k) -> tuple[int, int, int]:
    k = np.asarray(k, dtype=np.int64).reshape(1, 3)
    return tuple(int(c) for c in (k * canonical_sign(k)[:, None])[0])


@dataclass(frozen=True)
class TimeProfile:
    """``sum_i coef_i * t**power_i * exp(-rate_i * t)`` with 3-vector coefficients."""

    coef: np.ndarray
    rate: np.ndarray
    power: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        w = t[..., None] ** self.power * np.exp(-np.multiply.outer(t, self.rate))
        return w @ self.coef

    def at_zero(self) -> np.ndarray:
        return self.coef[self.power == 0].sum(axis=0)

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.rate == 0) and np.all(self.power == 0))

    def __len__(self):
        return len(self.rate)


@dataclass(frozen=True)
class TrigMode:
    wavevector: tuple[int, int, int]
    phase: str
    profile: TimeProfile

    def amplitude(self, t: float = 0.0) -> np.ndarray:
        return self.profile(t)


class TrigField:
    """Canonical sum of plane-wave modes; immutable value type.

    Canonical form: wavevectors lexicographically positive, ``sin`` modes at
    k = 0 dropped, rows sorted by (wavevector, phase, rate, power), duplicate
    (wavevector, phase, rate, power) rows merged and exact-zero rows pruned.
    Two fields are equal iff their canonical arrays are equal.
    """

    __slots__ = ("k", "phase", "coef", "rate", "power")

    def __init__(self, k, phase, coef, rate, power, *, _canonical=False):
        k = np.asarray(k, dtype=np.int64).reshape(-1, 3)
        phase = np.asarray(phase, dtype=np.int8).reshape(-1)
        coef = np.asarray(coef, dtype=float).reshape(-1, 3)
        rate = np.asarray(rate, dtype=float).reshape(-1)
        power = np.asarray(power, dtype=np.int8).reshape(-1)
        if not (len(k) == len(phase) == len(coef) == len(rate) == len(power)):
            raise ValueError("term arrays must have equal length")
        if not _canonical:
            k, phase, coef, rate, power = _canonicalize(k, phase, coef, rate, power)
        for name, arr in zip(self.__slots__, (k, phase, coef, rate, power)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __setattr__(self, name, value):
        raise AttributeError("TrigField is immutable")

    # -- constructors --------------------------------------------------
    @classmethod
    def zero(cls) -> "TrigField":
        return cls(np.zeros((0, 3)), [], np.zeros((0, 3)), [], [])

    @classmethod
    def mode(cls, amplitude, wavevector, phase="cos", rate=0.0, power=0) -> "TrigField":
        ph = PHASE_NAMES.index(phase) if isinstance(phase, str) else int(phase)
        return cls([wavevector], [ph], [amplitude], [rate], [power])

    @classmethod
    def from_modes(cls, modes: Iterable[TrigMode]) -> "TrigField":
        rows = []
        for m in modes:
            ph = PHASE_NAMES.index(m.phase)
            for c, lam, p in zip(m.profile.coef, m.profile.rate, m.profile.power):
                rows.append((m.wavevector, ph, c, lam, p))
        if not rows:
            return cls.zero()
        k, ph, c, lam, p = zip(*rows)
        return cls(k, ph, c, lam, p)

    # -- structure -----------------------------------------------------
    @property
    def n_terms(self) -> int:
        return len(self.rate)

    def _mode_index(self):
        """(mode id per term row, row offsets of each mode)."""
        if self.n_terms == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(1, dtype=np.int64)
        change = np.ones(self.n_terms, dtype=bool)
        change[1:] = np.any(self.k[1:] != self.k[:-1], axis=1) | (self.phase[1:] != self.phase[:-1])
        mode_id = np.cumsum(change) - 1
        starts = np.flatnonzero(change)
        return mode_id, np.append(starts, self.n_terms)

    @property
    def n_modes(self) -> int:
        return len(self._mode_index()[1]) - 1

    @property
    def modes(self) -> list[TrigMode]:
        _, off = self._mode_index()
        out = []
        for a, b in zip(off[:-1], off[1:]):
            prof = TimeProfile(self.coef[a:b], self.rate[a:b], self.power[a:b])
            out.append(TrigMode(tuple(int(c) for c in self.k[a]), PHASE_NAMES[self.phase[a]], prof))
        return out

    def mode_table(self):
        """Unique (wavevector, phase) pairs in canonical order."""
        _, off = self._mode_index()
        first = off[:-1]
        return self.k[first], self.phase[first]

    def wavevectors(self) -> set[tuple[int, int, int]]:
        return {tuple(int(c) for c in row) for row in self.k}

    def max_wavenumbers(self) -> np.ndarray:
        if self.n_terms == 0:
            return np.zeros(3, dtype=np.int64)
        return np.abs(self.k).max(axis=0)

    @property
    def is_time_constant(self) -> bool:
        return bool(np.all(self.rate == 0) and np.all(self.power == 0))

    # -- evaluation ----------------------------------------------------
    def amplitudes(self, t: float = 0.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(k, phase, A) per mode with the profile evaluated at time t."""
        mode_id, off = self._mode_index()
        weight = float(t) ** self.power * np.exp(-self.rate * float(t))
        amps = np.zeros((len(off) - 1, 3))
        np.add.at(amps, mode_id, self.coef * weight[:, None])
        k, ph = self.mode_table()
        return k, ph, amps

    def snapshot(self, t: float) -> "TrigField":
        """The field frozen at time t, as a time-independent field."""
        k, ph, amps = self.amplitudes(t)
        n = len(ph)
        return TrigField(k, ph, amps, np.zeros(n), np.zeros(n, dtype=np.int8))

    def divergence_residual(self) -> float:
        """max over terms of |c.k| / (|c||k|); zero iff divergence-free."""
        if self.n_terms == 0:
            return 0.0
        kf = self.k.astype(float)
        num = np.abs(np.einsum("ij,ij->i", self.coef, kf))
        den = np.linalg.norm(self.coef, axis=1) * np.linalg.norm(kf, axis=1)
        mask = den > 0
        return float((num[mask] / den[mask]).max()) if mask.any() else 0.0

    def is_divergence_free(self, tol: float = 1e-12) -> bool:
        return self.divergence_residual() <= tol

    def max_abs_coef(self) -> float:
        return float(np.abs(self.coef).max()) if self.n_terms else 0.0

    def select(self, mask) -> "TrigField":
        mask = np.asarray(mask, dtype=bool)
        return TrigField(self.k[mask], self.phase[mask], self.coef[mask], self.rate[mask],
                         self.power[mask], _canonical=True)

    def select_wavevectors(self, wavevectors) -> "TrigField":
        keys = {canonical_wavevector(w) for w in wavevectors}
        mask = [tuple(int(c) for c in row) in keys for row in self.k]
        return self.select(mask)

    def prune(self, rtol: float) -> "TrigField":
        """Drop terms with |coef| <= rtol * (largest |coef| in the field)."""
        if self.n_terms == 0:
            return self
        mag = np.abs(self.coef).max(axis=1)
        return self.select(mag > rtol * mag.max())

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other: "TrigField") -> "TrigField":
        if not isinstance(other, TrigField):
            return NotImplemented
        return TrigField(np.vstack([self.k, other.k]), np.concatenate([self.phase, other.phase]),
                         np.vstack([self.coef, other.coef]), np.concatenate([self.rate, other.rate]),
                         np.concatenate([self.power, other.power]))

    def __neg__(self) -> "TrigField":
        return TrigField(self.k, self.phase, -self.coef, self.rate, self.power, _canonical=True)

    def __sub__(self, other: "TrigField") -> "TrigField":
        return self + (-other)

    def __mul__(self, c) -> "TrigField":
        c = float(c)
        if c == 0.0:
            return TrigField.zero()
        return TrigField(self.k, self.phase, self.coef * c, self.rate, self.power, _canonical=True)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrigField):
            return NotImplemented
        return all(np.array_equal(getattr(self, s), getattr(other, s)) for s in self.__slots__)

    def __hash__(self):
        return hash((self.k.tobytes(), self.phase.tobytes(), self.coef.tobytes(),
                     self.rate.tobytes(), self.power.tobytes()))

    def __repr__(self):
        return f"TrigField(n_modes={self.n_modes}, n_terms={self.n_terms})"

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        modes = []
        for m in self.modes:
            terms = [{"c": [float(x) for x in c], "lambda": float(lam), "p": int(p)}
                     for c, lam, p in zip(m.profile.coef, m.profile.rate, m.profile.power)]
            modes.append({"k": list(m.wavevector), "phase": m.phase, "terms": terms})
        return {"type": "TrigField", "modes": modes}

    @classmethod
    def from_dict(cls, d: dict) -> "TrigField":
        rows = [(m["k"], PHASE_NAMES.index(m["phase"]), t["c"], t["lambda"], t["p"])
                for m in d["modes"] for t in m["terms"]]
        if not rows:
            return cls.zero()
        k, ph, c, lam, p = zip(*rows)
        return cls(k, ph, c, lam, p)

    def pretty(self, digits: int = 6) -> str:
        return format_field(self, digits)


def _canonicalize(k, phase, coef, rate, power):
    if len(k) == 0:
        return k, phase, coef, rate, power
    sign = canonical_sign(k)
    k = k * sign[:, None]
    coef = coef * np.where(phase == SIN, sign, 1)[:, None]
    keep = ~((phase == SIN) & ~k.any(axis=1)) & coef.any(axis=1)
    k, phase, coef, rate, power = k[keep], phase[keep], coef[keep], rate[keep], power[keep]
    if len(k) == 0:
        return k, phase, coef, rate, power
    order = np.lexsort((power, rate, phase, k[:, 2], k[:, 1], k[:, 0]))
    k, phase, coef, rate, power = k[order], phase[order], coef[order], rate[order], power[order]
    new = np.ones(len(k), dtype=bool)
    new[1:] = (np.any(k[1:] != k[:-1], axis=1) | (phase[1:] != phase[:-1])
               | (rate[1:] != rate[:-1]) | (power[1:] != power[:-1]))
    starts = np.flatnonzero(new)
    coef = np.add.reduceat(coef, starts, axis=0)
    k, phase, rate, power = k[starts], phase[starts], rate[starts], power[starts]
    keep = coef.any(axis=1)
    return k[keep], phase[keep], coef[keep], rate[keep], power[keep]


def format_field(f: TrigField, digits: int = 6) -> str:
    """Plain-text rendering, one mode per line."""
    if f.n_terms == 0:
        return "0"
    lines = []
    for m in f.modes:
        terms = []
        for c, lam, p in zip(m.profile.coef, m.profile.rate, m.profile.power):
            vec = "(" + ", ".join(f"{x:.{digits}g}" for x in c) + ")"
            tfac = ("t " if p == 1 else "") + (f"e^(-{lam:.{digits}g} t)" if lam else "")
            terms.append(f"{vec} {tfac}".rstrip())
        kx = ",".join(str(c) for c in m.wavevector)
        lines.append(f"[{' + '.join(terms)}] {m.phase}(({kx}).x)")
    return "\n".join(lines)


# ----------------------------------------------------------------------
# core operations
# ----------------------------------------------------------------------

def heat_flow(f: TrigField) -> TrigField:
    """Apply exp(t*Laplacian) in the profile variable: each rate gains |k|^2."""
    k2 = (f.k.astype(float) ** 2).sum(axis=1)
    return TrigField(f.k, f.phase, f.coef, f.rate + k2, f.power, _canonical=True)


def leray_project(f: TrigField) -> TrigField:
    """Amplitude a -> a - (a.k)k/|k|^2 per term; mean modes untouched."""
    kf = f.k.astype(float)
    k2 = (kf ** 2).sum(axis=1)
    safe = np.where(k2 > 0, k2, 1.0)
    ak = np.einsum("ij,ij->i", f.coef, kf)
    coef = f.coef - (ak / safe)[:, None] * kf
    out = TrigField(f.k, f.phase, coef, f.rate, f.power)
    assert out.divergence_residual() <= 1e-12
    return out


# product table: (phase_u, psi) -> (output phase, sum factor, difference factor)
_PRODUCT = {
    (COS, COS): (COS, 0.5, 0.5),
    (COS, SIN): (SIN, 0.5, -0.5),
    (SIN, COS): (SIN, 0.5, 0.5),
    (SIN, SIN): (COS, -0.5, 0.5),
}


def advect(u: TrigField, w: TrigField, budget: int = DEFAULT_MODE_BUDGET) -> TrigField:
    """(u . grad) w, expanded into plane waves by product-to-sum identities."""
    if u.n_terms == 0 or w.n_terms == 0:
        return TrigField.zero()
    kw = w.k.astype(float)
    s = u.coef @ kw.T
    # a.l below a few ulps of |a||l| is round-off of an orthogonal pair
    scale = np.outer(np.linalg.norm(u.coef, axis=1), np.linalg.norm(kw, axis=1))
    s[np.abs(s) <= 8 * np.finfo(float).eps * scale] = 0.0
    iu, iw = np.nonzero(s)
    if 2 * len(iu) > budget:
        raise BudgetExceeded(f"advect would create {2 * len(iu)} terms (budget {budget})")
    if len(iu) == 0:
        return TrigField.zero()
    pw = u.power[iu].astype(np.int16) + w.power[iw]
    if np.any(pw > 1):
        raise ValueError("advect output would carry t^2 profiles; only first-iterate products supported")
    # d/dx cos(l.x) = -l sin(l.x); d/dx sin(l.x) = l cos(l.x)
    psi = np.where(w.phase[iw] == COS, SIN, COS)
    dsign = np.where(w.phase[iw] == COS, -1.0, 1.0)
    phu = u.phase[iu]
    out_phase = np.empty(len(iu), dtype=np.int8)
    fsum = np.empty(len(iu))
    fdiff = np.empty(len(iu))
    for (a, b), (op, fs, fd) in _PRODUCT.items():
        sel = (phu == a) & (psi == b)
        out_phase[sel], fsum[sel], fdiff[sel] = op, fs, fd
    base = (dsign * s[iu, iw])[:, None] * w.coef[iw]
    rate = u.rate[iu] + w.rate[iw]
    ksum = u.k[iu] + w.k[iw]
    kdiff = u.k[iu] - w.k[iw]
    return TrigField(
        np.vstack([ksum, kdiff]),
        np.concatenate([out_phase, out_phase]),
        np.vstack([base * fsum[:, None], base * fdiff[:, None]]),
        np.concatenate([rate, rate]),
        np.concatenate([pw, pw]),
    )


def duhamel_integrate(f: TrigField, eps_res: float = EPS_RES, log: list | None = None) -> TrigField:
    """Closed-form ``int_0^t exp((t - tau) Laplacian) f(tau) dtau``.

    Non-resonant term c e^{-lam tau} at |m|^2 = mu gives
    c/(mu - lam) (e^{-lam t} - e^{-mu t}); resonant (|lam - mu| <= eps_res *
    max(lam, mu)) gives c t e^{-mu t}.  Near-resonant substitutions append a
    record with a bound on the induced error to ``log``.
    """
    if f.n_terms == 0:
        return f
    if np.any(f.power != 0):
        raise ValueError("duhamel_integrate accepts only t^0 profile terms")
    mu = (f.k.astype(float) ** 2).sum(axis=1)
    lam = f.rate
    gap = mu - lam
    res = np.abs(gap) <= eps_res * np.maximum(np.abs(mu), np.abs(lam))
    near = res & (gap != 0)
    if log is not None and near.any():
        for i in np.flatnonzero(near):
            lo = max(min(mu[i], lam[i]), np.finfo(float).tiny)
            bound = np.linalg.norm(f.coef[i]) * abs(gap[i]) * 2.0 / (np.e**2 * lo**2)
            log.append({"k": f.k[i].tolist(), "lambda": float(lam[i]), "mu": float(mu[i]),
                        "error_bound": float(bound)})
    nr = ~res
    c_nr = f.coef[nr] / gap[nr][:, None]
    return TrigField(
        np.vstack([f.k[nr], f.k[nr], f.k[res]]),
        np.concatenate([f.phase[nr], f.phase[nr], f.phase[res]]),
        np.vstack([c_nr, -c_nr, f.coef[res]]),
        np.concatenate([lam[nr], mu[nr], mu[res]]),
        np.concatenate([np.zeros(nr.sum()), np.zeros(nr.sum()), np.ones(res.sum())]).astype(np.int8),
    )


def snapshot(f: TrigField, t: float) -> TrigField:
    return f.snapshot(t)


def evaluate(f: TrigField, x, t: float = 0.0) -> np.ndarray:
    """Pointwise value; x of shape (3,) or (P, 3)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    k, ph, amps = f.amplitudes(t)
    if len(ph) == 0:
        out = np.zeros((len(x), 3))
    else:
        arg = x @ k.T.astype(float)
        basis = np.where(ph == COS, np.cos(arg), np.sin(arg))
        out = basis @ amps
    return out[0] if single else out


def sample_modes(k: np.ndarray, phase: np.ndarray, amps: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Values of sum_m amps_m phi_m(k_m.x) on the uniform grid of ``shape``; exact for any shape.

    amps may have any number of trailing components: (M,) or (M, c).
    Returns an array of shape (*shape, c) or shape.
    """
    shape = tuple(int(n) for n in shape)
    amps = np.asarray(amps)
    scalar = amps.ndim == 1
    a = amps[:, None] if scalar else amps
    coeffs = np.zeros(shape + (a.shape[1],), dtype=complex)
    if len(phase):
        idx = tuple((k[:, d] % shape[d]) for d in range(3))
        one_sided = np.where((phase == COS)[:, None], a.astype(complex), -1j * a)
        np.add.at(coeffs, idx, one_sided)
    vals = scipy.fft.ifftn(coeffs, axes=(0, 1, 2), norm="forward").real
    return vals[..., 0] if scalar else vals


def sample(f: TrigField, t: float, shape: Sequence[int]) -> np.ndarray:
    """Field values on the grid; returns (3, *shape)."""
    k, ph, amps = f.amplitudes(t)
    return np.moveaxis(sample_modes(k, ph, amps, shape), -1, 0)


# ----------------------------------------------------------------------
# first Picard iterate
# ----------------------------------------------------------------------

@dataclass
class FirstIterate:
    """u1 = B(e^{tD}u0, e^{tD}u0) and its pre-Duhamel classification."""

    heat: TrigField
    advection: TrigField
    N1: TrigField
    N2: TrigField
    N3: TrigField
    u1: TrigField
    near_resonant: list = dc_field(default_factory=list)

    def duhamel_part(self, name: str) -> TrigField:
        """Duhamel image of P(N_i) for name in {'N1', 'N2', 'N3'}."""
        return duhamel_integrate(leray_project(getattr(self, name)))


def first_iterate(u0, budget: int = DEFAULT_MODE_BUDGET) -> FirstIterate:
    """Compute u1 together with N1 (same-shell difference), N2 (same-shell sum), N3 (cross-shell)."""
    fam = u0.family
    eta = canonical_wavevector(fam.eta)
    heats = [heat_flow(f) for f in u0.shell_fields()]
    N1 = N2 = N3 = TrigField.zero()
    for s, ws in enumerate(heats):
        same = advect(ws, ws, budget)
        is_eta = np.all(same.k == np.asarray(eta), axis=1)
        N1 = N1 + same.select(is_eta)
        rest = same.select(~is_eta)
        sh = fam.shells[s]
        expected = {canonical_wavevector(np.add(sh.k, sh.k_prime))}
        stray = rest.wavevectors() - expected
        if stray:
            raise AssertionError(f"unexpected same-shell interaction wavevectors {sorted(stray)}")
        N2 = N2 + rest
        for s2, ws2 in enumerate(heats):
            if s2 != s:
                N3 = N3 + advect(ws, ws2, budget)
    heat = heat_flow(u0.field)
    full = advect(heat, heat, budget)
    scale = max(full.max_abs_coef(), 1.0)
    if (N1 + N2 + N3 - full).max_abs_coef() > 1e-12 * scale:
        raise AssertionError("N1 + N2 + N3 does not reproduce the advection term")
    if (~full.k.any(axis=1)).any():
        raise AssertionError("mean mode produced by the interaction")
    log: list = []
    u1 = duhamel_integrate(leray_project(full), log=log)
    return FirstIterate(heat=heat, advection=full, N1=N1, N2=N2, N3=N3, u1=u1, near_resonant=log)


def split_u1(u1: TrigField, fam) -> tuple[TrigField, TrigField]:
    """u10 = the +-eta modes of u1, u11 = the remainder."""
    eta = np.asarray(canonical_wavevector(fam.eta))
    mask = np.all(u1.k == eta, axis=1)
    return u1.select(mask), u1.select(~mask)
