"""Lacunary frequency families and the initial datum built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .planewave import COS, TrigField

INT_LIMIT = 2**62  # shell magnitudes and their pairwise sums must stay inside int64
ETA = (0, 1, 0)
DIRECTION = (1, 0, 0)


@dataclass(frozen=True)
class Shell:
    k: tuple[int, int, int]
    k_prime: tuple[int, int, int]
    v: tuple[float, float, float]
    v_prime: tuple[float, float, float]

    @property
    def magnitude(self) -> float:
        return math.sqrt(sum(c * c for c in self.k))


@dataclass(frozen=True)
class FrequencyFamily:
    eta: tuple[int, int, int]
    K: int
    r: int
    shells: tuple[Shell, ...]
    preset: str
    growth_ratios: tuple[float, ...]

    @property
    def magnitudes(self) -> list[int]:
        return [int(s.k[0]) for s in self.shells]

    def check(self, tol: float = 1e-12) -> None:
        """Raise AssertionError if any structural constraint fails."""
        eta = np.array(self.eta, dtype=float)
        assert np.isclose(np.linalg.norm(eta), 1.0)
        k0 = np.array(self.shells[0].k, dtype=float)
        for s in self.shells:
            k, kp = np.array(s.k, float), np.array(s.k_prime, float)
            v, vp = np.array(s.v), np.array(s.v_prime)
            assert np.allclose(np.cross(k, k0), 0.0), "shell not parallel to k0 direction"
            assert np.array_equal(np.subtract(s.k, s.k_prime), self.eta)
            assert abs(k @ v) <= tol * np.linalg.norm(k)
            assert abs(kp @ vp) <= tol * np.linalg.norm(kp)
            assert abs(eta @ v - 0.5) <= tol and abs(eta @ vp - 0.5) <= tol
            assert abs(np.linalg.norm(v) - 1) <= tol and abs(np.linalg.norm(vp) - 1) <= tol
        assert all(g >= 2 for g in self.growth_ratios), "lacunarity floor violated"
        if self.preset == "paper" and self.r >= 1:
            assert self.magnitudes[0] >= 2 * self.K**2

    def to_dict(self) -> dict:
        return {
            "type": "FrequencyFamily",
            "eta": list(self.eta),
            "K": self.K,
            "r": self.r,
            "preset": self.preset,
            "growth_ratios": [repr(float(g)) for g in self.growth_ratios],
            "shells": [
                {"k": list(s.k), "k_prime": list(s.k_prime),
                 "v": [repr(float(x)) for x in s.v], "v_prime": [repr(float(x)) for x in s.v_prime]}
                for s in self.shells
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencyFamily":
        shells = tuple(
            Shell(tuple(s["k"]), tuple(s["k_prime"]), tuple(float(x) for x in s["v"]),
                  tuple(float(x) for x in s["v_prime"]))
            for s in d["shells"]
        )
        return cls(tuple(d["eta"]), int(d["K"]), int(d["r"]), shells, d["preset"],
                   tuple(float(g) for g in d["growth_ratios"]))


def paper_magnitudes(K: int, r: int) -> list[int]:
    """m_1 = 2K^2, m_s = 2^s K m_{s-1}."""
    mags = [2 * K * K]
    for s in range(2, r + 1):
        mags.append(2**s * K * mags[-1])
    return mags


def geometric_magnitudes(K: int, r: int, ratio: int) -> list[int]:
    """Desk shells m_s = 2K^2 ratio^(s-1)."""
    if int(ratio) != ratio or ratio < 2:
        raise ConfigError("shell ratio must be an integer >= 2")
    return [2 * K * K * int(ratio) ** s for s in range(r)]


def _unit_vectors(m: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    # v solves k.v = 0, eta.v = 1/2, |v| = 1 for k = (m,0,0), eta = (0,1,0);
    # v' does the same for k' = (m,-1,0).
    rad = 0.75 - 1.0 / (4.0 * m * m)
    if rad < 0:
        raise ConfigError(f"no unit vector satisfies the constraints for |k| = {m}")
    v = (0.0, 0.5, math.sqrt(3.0) / 2.0)
    vp = (1.0 / (2.0 * m), 0.5, math.sqrt(rad))
    return v, vp


def build_frequency_family(K: int, r: int, preset: str = "desk",
                           magnitudes: Sequence[int] | None = None) -> FrequencyFamily:
    if preset not in ("paper", "desk"):
        raise ConfigError(f"unknown preset {preset!r}")
    if int(K) != K or K < 2:
        raise ConfigError("K must be an integer >= 2")
    if int(r) != r or r < 1:
        raise ConfigError("r must be an integer >= 1")
    K, r = int(K), int(r)
    if magnitudes is not None:
        if preset == "paper":
            raise ConfigError("explicit shell magnitudes are only accepted by the desk preset")
        mags = [int(m) for m in magnitudes]
        if len(mags) != r:
            raise ConfigError(f"expected {r} shell magnitudes, got {len(mags)}")
        if mags[0] < 2:
            raise ConfigError("shell magnitudes must be >= 2")
    else:
        mags = paper_magnitudes(K, r)
    if any(2 * m + 1 >= INT_LIMIT for m in mags):
        raise ConfigError(f"shell magnitudes overflow the 64-bit integer range (max {max(mags)})")
    ratios = tuple(mags[i] / mags[i - 1] for i in range(1, r))
    if any(g < 2 for g in ratios):
        raise ConfigError(f"shell ratios {ratios} violate the lacunarity floor of 2")
    shells = []
    for m in mags:
        v, vp = _unit_vectors(m)
        shells.append(Shell((m, 0, 0), (m, -1, 0), v, vp))
    fam = FrequencyFamily(ETA, K, r, tuple(shells), preset, ratios)
    fam.check()
    return fam


@dataclass(frozen=True)
class InitialData:
    family: FrequencyFamily
    Q: float
    field: TrigField
    prime_uses_k_prime: bool = False

    def shell_amplitude(self, s: int, prime: bool = False) -> float:
        sh = self.family.shells[s]
        norm = math.sqrt(sum(c * c for c in (sh.k_prime if prime and self.prime_uses_k_prime else sh.k)))
        return self.Q * norm / math.sqrt(self.family.r)

    def shell_fields(self) -> list[TrigField]:
        return [_shell_field(self, s) for s in range(self.family.r)]

    def to_dict(self) -> dict:
        return {"type": "InitialData", "Q": self.Q, "prime_uses_k_prime": self.prime_uses_k_prime,
                "family": self.family.to_dict(), "field": self.field.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "InitialData":
        return cls(FrequencyFamily.from_dict(d["family"]), float(d["Q"]),
                   TrigField.from_dict(d["field"]), bool(d.get("prime_uses_k_prime", False)))


def _shell_field(data: InitialData, s: int) -> TrigField:
    sh = data.family.shells[s]
    a = data.shell_amplitude(s)
    ap = data.shell_amplitude(s, prime=True)
    return TrigField([sh.k, sh.k_prime], [COS, COS],
                     [np.multiply(a, sh.v), np.multiply(ap, sh.v_prime)], [0.0, 0.0], [0, 0])


def build_initial_data(fam: FrequencyFamily, Q: float, prime_uses_k_prime: bool = False) -> InitialData:
    """u0 = Q/sqrt(r) sum_s |k_s| [v_s cos(k_s.x) + v_s' cos(k_s'.x)].

    The k_s' mode carries the prefactor |k_s| as written; ``prime_uses_k_prime``
    switches it to |k_s'|.
    """
    if not np.isfinite(Q) or Q < 0:
        raise ConfigError("Q must be a finite nonnegative number")
    proto = InitialData(fam, float(Q), TrigField.zero(), prime_uses_k_prime)
    f = TrigField.zero()
    for s in range(fam.r):
        f = f + _shell_field(proto, s)
    if not np.all(np.isfinite(f.coef)):
        raise ConfigError("initial amplitudes overflow")
    assert f.is_divergence_free()
    return InitialData(fam, float(Q), f, prime_uses_k_prime)
