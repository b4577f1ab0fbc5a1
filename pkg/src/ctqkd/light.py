"""Semiclassical per-mode pulse content and its vectorized carrier.

LightField is the tagged union used on the fast Monte Carlo path: coherent
amplitude, thermal mean, definite photon number, saturating blinding light,
or vacuum.  FieldArray holds one field per pulse as a struct of arrays so a
whole session can be propagated, phase-shifted and click-sampled with numpy.
Blinding light saturates a threshold detector, so its click probability
ignores efficiency and attenuation.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from typing import Union

import numpy as np

KIND_VACUUM = 0
KIND_COHERENT = 1
KIND_THERMAL = 2
KIND_FOCK = 3
KIND_BLINDING = 4

# exact complex multipliers for phases k * pi/2, k = 0..3
QUARTER_PHASES = np.array([1.0 + 0.0j, 0.0 + 1.0j, -1.0 + 0.0j, 0.0 - 1.0j])


@dataclass(frozen=True)
class Vacuum:
    pass


@dataclass(frozen=True)
class Coherent:
    amplitude: complex

    @property
    def mean_photons(self) -> float:
        return abs(self.amplitude) ** 2


@dataclass(frozen=True)
class Thermal:
    mean_photons: float

    def __post_init__(self):
        if self.mean_photons < 0.0:
            raise ValueError(f"mean photon number must be >= 0, got {self.mean_photons}")


@dataclass(frozen=True)
class FockN:
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"photon number must be >= 0, got {self.n}")


@dataclass(frozen=True)
class Blinding:
    forced_click_prob: float

    def __post_init__(self):
        if not 0.0 <= self.forced_click_prob <= 1.0:
            raise ValueError(
                f"forced click probability must be in [0, 1], got {self.forced_click_prob}"
            )


LightField = Union[Vacuum, Coherent, Thermal, FockN, Blinding]


class FieldArray:
    """One light field per pulse, stored column-wise for vectorized transforms.

    Only the column matching an element's kind is meaningful; the others stay
    at their neutral values.
    """

    __slots__ = ("kind", "amp", "mean", "nph", "blind")

    def __init__(self, kind, amp, mean, nph, blind):
        self.kind = np.asarray(kind, dtype=np.uint8)
        self.amp = np.asarray(amp, dtype=np.complex128)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.nph = np.asarray(nph, dtype=np.int64)
        self.blind = np.asarray(blind, dtype=np.float64)

    def __len__(self) -> int:
        return self.kind.size

    @classmethod
    def vacuum(cls, n: int) -> "FieldArray":
        return cls(
            np.zeros(n, dtype=np.uint8),
            np.zeros(n, dtype=np.complex128),
            np.zeros(n),
            np.zeros(n, dtype=np.int64),
            np.zeros(n),
        )

    @classmethod
    def coherent(cls, amplitudes: np.ndarray) -> "FieldArray":
        fa = cls.vacuum(len(amplitudes))
        fa.kind[:] = KIND_COHERENT
        fa.amp[:] = amplitudes
        return fa

    @classmethod
    def thermal(cls, means: np.ndarray) -> "FieldArray":
        fa = cls.vacuum(len(means))
        fa.kind[:] = KIND_THERMAL
        fa.mean[:] = means
        return fa

    @classmethod
    def uniform(cls, field: LightField, n: int) -> "FieldArray":
        """Broadcast a single LightField to n pulses."""
        fa = cls.vacuum(n)
        if isinstance(field, Coherent):
            fa.kind[:] = KIND_COHERENT
            fa.amp[:] = field.amplitude
        elif isinstance(field, Thermal):
            fa.kind[:] = KIND_THERMAL
            fa.mean[:] = field.mean_photons
        elif isinstance(field, FockN):
            fa.kind[:] = KIND_FOCK
            fa.nph[:] = field.n
        elif isinstance(field, Blinding):
            fa.kind[:] = KIND_BLINDING
            fa.blind[:] = field.forced_click_prob
        elif not isinstance(field, Vacuum):
            raise TypeError(f"not a LightField: {field!r}")
        return fa

    @classmethod
    def from_fields(cls, fields) -> "FieldArray":
        parts = [cls.uniform(f, 1) for f in fields]
        if not parts:
            return cls.vacuum(0)
        return cls(
            np.concatenate([p.kind for p in parts]),
            np.concatenate([p.amp for p in parts]),
            np.concatenate([p.mean for p in parts]),
            np.concatenate([p.nph for p in parts]),
            np.concatenate([p.blind for p in parts]),
        )

    def field(self, i: int) -> LightField:
        k = int(self.kind[i])
        if k == KIND_COHERENT:
            return Coherent(complex(self.amp[i]))
        if k == KIND_THERMAL:
            return Thermal(float(self.mean[i]))
        if k == KIND_FOCK:
            return FockN(int(self.nph[i]))
        if k == KIND_BLINDING:
            return Blinding(float(self.blind[i]))
        return Vacuum()

    def copy(self) -> "FieldArray":
        return FieldArray(
            self.kind.copy(), self.amp.copy(), self.mean.copy(),
            self.nph.copy(), self.blind.copy(),
        )

    def take(self, idx) -> "FieldArray":
        return FieldArray(
            self.kind[idx], self.amp[idx], self.mean[idx], self.nph[idx], self.blind[idx]
        )

    @classmethod
    def where(cls, mask: np.ndarray, a: "FieldArray", b: "FieldArray") -> "FieldArray":
        """Elementwise select: a where mask else b."""
        return cls(
            np.where(mask, a.kind, b.kind),
            np.where(mask, a.amp, b.amp),
            np.where(mask, a.mean, b.mean),
            np.where(mask, a.nph, b.nph),
            np.where(mask, a.blind, b.blind),
        )

    def attenuated(self, transmittance: float, rng: np.random.Generator | None = None) -> "FieldArray":
        """Loss channel: coherent amplitude scales by sqrt(T), thermal mean by T,
        definite photon numbers undergo binomial thinning (needs rng), blinding
        light is unaffected."""
        t = float(transmittance)
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"transmittance must be in [0, 1], got {t}")
        out = self.copy()
        if t == 1.0:
            return out
        out.amp *= np.sqrt(t)
        out.mean *= t
        fock = self.kind == KIND_FOCK
        if fock.any():
            if rng is None:
                raise ValueError("rng required to thin definite photon numbers through loss")
            out.nph[fock] = rng.binomial(self.nph[fock], t)
        return out

    def phase_shifted(self, multiplier) -> "FieldArray":
        """Multiply coherent amplitudes by a unit-modulus factor (scalar or
        per-pulse array); phase-invariant fields are untouched."""
        out = self.copy()
        out.amp *= multiplier
        return out

    def mean_photons(self) -> np.ndarray:
        """Mean photon number per pulse; blinding light reports +inf."""
        out = np.abs(self.amp) ** 2
        out = np.where(self.kind == KIND_THERMAL, self.mean, out)
        out = np.where(self.kind == KIND_FOCK, self.nph.astype(float), out)
        out = np.where(self.kind == KIND_BLINDING, np.inf, out)
        return out

    def noclick_factors(self, eta_eff: float) -> np.ndarray:
        """Per-pulse no-click probability at effective efficiency eta_eff,
        excluding dark counts.

        Coherent: exp(-eta mu); thermal: 1/(1 + eta mu); photon number n:
        (1 - eta)^n; vacuum: 1.  Blinding light returns 1 - forced_click_prob
        regardless of eta.  Factors for independent fields on one detector
        multiply.
        """
        if not 0.0 <= eta_eff <= 1.0:
            raise ValueError(f"effective efficiency must be in [0, 1], got {eta_eff}")
        out = np.ones(len(self))
        k = self.kind
        coh = k == KIND_COHERENT
        out[coh] = np.exp(-eta_eff * np.abs(self.amp[coh]) ** 2)
        th = k == KIND_THERMAL
        out[th] = 1.0 / (1.0 + eta_eff * self.mean[th])
        fo = k == KIND_FOCK
        out[fo] = (1.0 - eta_eff) ** self.nph[fo]
        bl = k == KIND_BLINDING
        out[bl] = 1.0 - self.blind[bl]
        return out


def field_noclick_factor(field: LightField, eta_eff: float) -> float:
    return float(FieldArray.uniform(field, 1).noclick_factors(eta_eff)[0])


def field_click_prob(field: LightField, eta: float, dark_prob: float) -> float:
    """Threshold-detector click probability for a single field."""
    return 1.0 - (1.0 - dark_prob) * field_noclick_factor(field, eta)


def attenuate_field(field: LightField, transmittance: float,
                    rng: np.random.Generator | None = None) -> LightField:
    return FieldArray.uniform(field, 1).attenuated(transmittance, rng).field(0)


def phase_shift_field(field: LightField, phi: float) -> LightField:
    return FieldArray.uniform(field, 1).phase_shifted(cmath.exp(1j * phi)).field(0)
