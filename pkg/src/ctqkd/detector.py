"""Threshold single-photon detector model and click-stream statistics.

A threshold detector is characterized by a quantum efficiency eta and a
dark-count probability per gate.  Click probabilities have closed forms for
thermal and coherent illumination and a photon-number-resolved form for an
arbitrary Fock-basis state.  The band-power statistic P(1-P) is the
dimensionless proxy for the electrical power a spectrum analyser measures in
a fixed band on the detector output; both link monitors are built on the
frequency z-test in power_test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import DensityMatrix


class NotDistinguishableError(ValueError):
    """Two click probabilities coincide: no finite sample count separates them."""


@dataclass(frozen=True)
class DetectorModel:
    """Threshold detector with quantum efficiency eta and per-gate dark-count
    probability dark_prob."""

    eta: float
    dark_prob: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if not 0.0 <= self.dark_prob < 1.0:
            raise ValueError(f"dark_prob must be in [0, 1), got {self.dark_prob}")


@dataclass(frozen=True)
class ClickStream:
    """Ordered click/no-click record, one boolean per detection gate."""

    clicks: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.clicks, dtype=bool)
        c.setflags(write=False)
        object.__setattr__(self, "clicks", c)

    @property
    def n_gates(self) -> int:
        return int(self.clicks.size)

    def frequency(self) -> float:
        if self.n_gates == 0:
            raise ValueError("empty click stream")
        return float(self.clicks.mean())

    def to_runlength(self) -> str:
        """Compact run-length text form, e.g. "0:5 1:3 0:2"."""
        if self.n_gates == 0:
            return ""
        bits = self.clicks.astype(np.int8)
        edges = np.flatnonzero(np.diff(bits)) + 1
        starts = np.concatenate(([0], edges))
        ends = np.concatenate((edges, [bits.size]))
        return " ".join(f"{bits[s]}:{e - s}" for s, e in zip(starts, ends))

    @classmethod
    def from_runlength(cls, text: str) -> "ClickStream":
        runs = []
        for token in text.split():
            value, count = token.split(":")
            runs.append(np.full(int(count), value == "1", dtype=bool))
        return cls(np.concatenate(runs) if runs else np.zeros(0, dtype=bool))


@dataclass(frozen=True)
class PowerTestOutcome:
    """Result of comparing a click stream against an expected click probability.

    observed_stat / expected_stat are the band-power statistics P(1-P);
    z_score is the frequency z relative to the expected probability.
    """

    observed_stat: float
    expected_stat: float
    z_score: float
    passed: bool
    n_gates: int

    def to_csv_row(self) -> str:
        return (
            f"{self.observed_stat:.6g},{self.expected_stat:.6g},"
            f"{self.z_score:.6g},{self.passed},{self.n_gates}"
        )

    CSV_HEADER = "observed_stat,expected_stat,z_score,passed,n_gates"

    def to_dict(self) -> dict:
        return {
            "observed_stat": self.observed_stat,
            "expected_stat": self.expected_stat,
            "z_score": self.z_score,
            "passed": self.passed,
            "n_gates": self.n_gates,
        }


def click_prob_thermal(det: DetectorModel, mu_t: float) -> float:
    """Avalanche probability under thermal light of mean photon number mu_t:
    1 - (1 - dark_prob) / (1 + eta mu_t)."""
    if mu_t < 0.0:
        raise ValueError(f"mean photon number must be >= 0, got {mu_t}")
    return 1.0 - (1.0 - det.dark_prob) / (1.0 + det.eta * mu_t)


def click_prob_coherent(det: DetectorModel, mu: float) -> float:
    """Avalanche probability under coherent light of mean photon number mu:
    1 - (1 - dark_prob) exp(-eta mu)."""
    if mu < 0.0:
        raise ValueError(f"mean photon number must be >= 0, got {mu}")
    return 1.0 - (1.0 - det.dark_prob) * math.exp(-det.eta * mu)


def click_prob_state(det: DetectorModel, rho: DensityMatrix) -> float:
    """Avalanche probability for an arbitrary state:
    1 - (1 - dark_prob) sum_n rho_nn (1 - eta)^n.

    Reduces to the thermal/coherent closed forms on the corresponding exact
    matrices; any state with a different vacuum probability than the expected
    one yields a different click probability and is therefore separable with
    enough samples.
    """
    weights = (1.0 - det.eta) ** np.arange(rho.dim)
    return 1.0 - (1.0 - det.dark_prob) * float(rho.diagonal() @ weights)


def sample_clicks(p_click: float, n_gates: int, rng: np.random.Generator) -> ClickStream:
    """Independent Bernoulli(p_click) click stream, deterministic given rng state."""
    if not 0.0 <= p_click <= 1.0:
        raise ValueError(f"click probability must be in [0, 1], got {p_click}")
    if n_gates < 1:
        raise ValueError(f"n_gates must be >= 1, got {n_gates}")
    return ClickStream(rng.random(n_gates) < p_click)


def band_power_statistic(stream: ClickStream) -> float:
    """Empirical P(1-P): the normalized fixed-band electrical power of the
    detector output.  Vanishes both for a dead detector (P=0) and for a
    saturated one (P=1), which is the blinded-detector signature."""
    p = stream.frequency()
    return p * (1.0 - p)


def power_test(stream: ClickStream, expected_p: float, z_threshold: float) -> PowerTestOutcome:
    """Frequency z-test of a click stream against an expected click probability.

    z = (P_hat - expected_p) / sqrt(expected_p (1 - expected_p) / n); the test
    passes iff |z| <= z_threshold.  The band statistic is reported alongside
    because detector blinding is most visible there.
    """
    if not 0.0 < expected_p < 1.0:
        raise ValueError(f"expected_p must be strictly inside (0, 1), got {expected_p}")
    p_hat = stream.frequency()
    sigma = math.sqrt(expected_p * (1.0 - expected_p) / stream.n_gates)
    z = (p_hat - expected_p) / sigma
    return PowerTestOutcome(
        observed_stat=p_hat * (1.0 - p_hat),
        expected_stat=expected_p * (1.0 - expected_p),
        z_score=z,
        passed=abs(z) <= z_threshold,
        n_gates=stream.n_gates,
    )


def samples_needed(p_a: float, p_b: float, z: float) -> int:
    """Smallest n with |p_a - p_b| >= z (sqrt(p_a q_a / n) + sqrt(p_b q_b / n)).

    Normal-approximation sample count for telling two Bernoulli rates apart
    with z-sigma separation on both sides.  The closer the rates, the larger
    the count; equal rates are not distinguishable by any finite n.
    """
    for name, p in (("p_a", p_a), ("p_b", p_b)):
        if not 0.0 < p < 1.0:
            raise ValueError(f"{name} must be strictly inside (0, 1), got {p}")
    if p_a == p_b:
        raise NotDistinguishableError("p_a == p_b: no finite sample count distinguishes them")
    spread = math.sqrt(p_a * (1.0 - p_a)) + math.sqrt(p_b * (1.0 - p_b))
    return max(1, math.ceil((z * spread / abs(p_a - p_b)) ** 2))
