"""Two-layer session state machine.

One session runs the full optical round trip.  Alice prepares pulse pairs
with a coherent state in one polarization mode and a thermal state in the
other, hiding the placement behind two per-pulse secret bits (source wiring
and rotator angle).  Bob phase-modulates every pulse with one of four phases
(his key), taps a known fraction onto his own monitor detector, and returns
the light.  Alice undoes her rotation, separates the modes, feeds the
thermal output to a monitored detector, and measures the coherent output in
a pair of delay interferometers with basis offsets 0 and pi/2.  Sifting
keeps single-click events whose interferometer basis matches the phase
difference Bob applied, and a disclosed random sample of the sifted key
estimates the error rate.

The engine works on struct-of-array batches so a 1e5-pulse session runs in
milliseconds; the per-record operations are thin wrappers over the same
code.  All randomness flows through one numpy Generator in a fixed order,
so a (config, attack, seed) triple reproduces results exactly.

Phases are carried internally as integer quarter turns (phi = q * pi/2 with
exact complex multipliers), which keeps phase bookkeeping free of float
drift.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .detector import (
    ClickStream,
    DetectorModel,
    PowerTestOutcome,
    click_prob_thermal,
    power_test,
)
from .light import (
    KIND_COHERENT,
    KIND_VACUUM,
    QUARTER_PHASES,
    FieldArray,
    LightField,
)

CANONICAL_PHASES = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)

ALARM_NONE = "none"
ALARM_QBER = "qber"
ALARM_ALICE_POWER = "alice_power"
ALARM_BOB_POWER = "bob_power"
ALARM_MULTIPLE = "multiple"


class ConfigError(ValueError):
    """Inconsistent session configuration, reported before any simulation."""


def phase_to_quarter(phi: float) -> int:
    """Map a canonical phase {0, pi/2, pi, 3pi/2} to its quarter-turn index."""
    q = phi / (math.pi / 2)
    k = int(round(q))
    if abs(q - k) > 1e-9 or not 0 <= k <= 3:
        raise ValueError(f"phase {phi!r} is not one of 0, pi/2, pi, 3pi/2")
    return k


@dataclass(frozen=True)
class PulseRecord:
    """State of one optical pulse at its current position in the pipeline.

    mode_assignment is Alice's source wiring (0: coherent into the H port),
    rotation her rotator angle (0 or pi/2, applied before the channel), and
    field_H / field_V the fields in the physical modes as currently
    propagating.  bob_phase is set once the pulse has passed Bob.
    """

    index: int
    mode_assignment: int
    rotation: float
    field_H: LightField
    field_V: LightField
    bob_phase: Optional[float] = None


class PulseBatch:
    """Struct-of-arrays pulse train; behaves as a sequence of PulseRecord."""

    __slots__ = ("mode_assignment", "rotation_quarter", "field_h", "field_v", "bob_quarter")

    def __init__(self, mode_assignment, rotation_quarter, field_h, field_v, bob_quarter=None):
        self.mode_assignment = np.asarray(mode_assignment, dtype=np.uint8)
        self.rotation_quarter = np.asarray(rotation_quarter, dtype=np.uint8)
        self.field_h = field_h
        self.field_v = field_v
        if bob_quarter is None:
            bob_quarter = np.full(self.mode_assignment.size, -1, dtype=np.int8)
        self.bob_quarter = np.asarray(bob_quarter, dtype=np.int8)

    def __len__(self) -> int:
        return self.mode_assignment.size

    def __getitem__(self, i: int) -> PulseRecord:
        if not 0 <= i < len(self):
            raise IndexError(i)
        q = int(self.bob_quarter[i])
        return PulseRecord(
            index=i,
            mode_assignment=int(self.mode_assignment[i]),
            rotation=float(self.rotation_quarter[i]) * (math.pi / 2),
            field_H=self.field_h.field(i),
            field_V=self.field_v.field(i),
            bob_phase=None if q < 0 else q * (math.pi / 2),
        )

    @classmethod
    def from_records(cls, records: Sequence[PulseRecord]) -> "PulseBatch":
        assign = [r.mode_assignment for r in records]
        rot = [phase_to_quarter(r.rotation) for r in records]
        bq = [-1 if r.bob_phase is None else phase_to_quarter(r.bob_phase) for r in records]
        return cls(
            assign,
            rot,
            FieldArray.from_fields([r.field_H for r in records]),
            FieldArray.from_fields([r.field_V for r in records]),
            bq,
        )

    def copy(self) -> "PulseBatch":
        return PulseBatch(
            self.mode_assignment.copy(),
            self.rotation_quarter.copy(),
            self.field_h.copy(),
            self.field_v.copy(),
            self.bob_quarter.copy(),
        )

    def propagated(self, transmittance: float, rng: np.random.Generator | None = None) -> "PulseBatch":
        out = self.copy()
        out.field_h = self.field_h.attenuated(transmittance, rng)
        out.field_v = self.field_v.attenuated(transmittance, rng)
        return out


@dataclass(frozen=True)
class SessionConfig:
    """Run parameters for one session.

    mu_coherent and mu_thermal are the source mean photon numbers (known only
    to Alice in the protocol; announced after the quantum phase so both ends
    can check their monitors).  transmittance_oneway is the fiber
    transmittance per pass and tap_reflectance the fraction Bob splits onto
    his monitor detector.  The channel and tap values are treated as
    pre-calibrated public knowledge when computing monitor expectations.
    """

    n_pulses: int = 100_000
    mu_coherent: float = 0.2
    mu_thermal: float = 0.2
    transmittance_oneway: float = 0.9
    tap_reflectance: float = 0.05
    detector_alice: DetectorModel = field(default_factory=lambda: DetectorModel(0.1, 1e-5))
    detector_bob: DetectorModel = field(default_factory=lambda: DetectorModel(0.1, 1e-5))
    z_threshold: float = 5.0
    qber_threshold: float = 0.05
    qber_sample_fraction: float = 0.4
    seed: int = 1

    def __post_init__(self):
        if self.n_pulses < 2:
            raise ConfigError(f"n_pulses must be >= 2, got {self.n_pulses}")
        if self.mu_coherent < 0 or self.mu_thermal < 0:
            raise ConfigError("mean photon numbers must be >= 0")
        if not 0.0 <= self.transmittance_oneway <= 1.0:
            raise ConfigError(f"transmittance_oneway must be in [0, 1], got {self.transmittance_oneway}")
        if not 0.0 <= self.tap_reflectance < 1.0:
            raise ConfigError(f"tap_reflectance must be in [0, 1), got {self.tap_reflectance}")
        if self.z_threshold <= 0:
            raise ConfigError("z_threshold must be positive")
        if not 0.0 < self.qber_threshold < 1.0:
            raise ConfigError("qber_threshold must be in (0, 1)")
        if not 0.0 < self.qber_sample_fraction < 1.0:
            raise ConfigError("qber_sample_fraction must be in (0, 1)")

    # Expected means at the measurement points, assuming the calibrated channel.
    def mu_coherent_at_bob(self) -> float:
        return self.mu_coherent * self.transmittance_oneway

    def mu_thermal_at_bob(self) -> float:
        return self.mu_thermal * self.transmittance_oneway

    def roundtrip_transmittance(self) -> float:
        return self.transmittance_oneway**2 * (1.0 - self.tap_reflectance)

    def mu_coherent_at_alice(self) -> float:
        return self.mu_coherent * self.roundtrip_transmittance()

    def mu_thermal_at_alice(self) -> float:
        return self.mu_thermal * self.roundtrip_transmittance()

    def expected_bob_monitor_p(self) -> float:
        """Honest click probability of Bob's tap detector: the no-click
        factors of the coherent and thermal modes multiply on one detector."""
        det = self.detector_bob
        eta_eff = det.eta * self.tap_reflectance
        q_coh = math.exp(-eta_eff * self.mu_coherent_at_bob())
        q_th = 1.0 / (1.0 + eta_eff * self.mu_thermal_at_bob())
        return 1.0 - (1.0 - det.dark_prob) * q_coh * q_th

    def expected_alice_thermal_p(self) -> float:
        return click_prob_thermal(self.detector_alice, self.mu_thermal_at_alice())

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InterferometerEvent:
    """Outcome of one pulse-pair measurement.

    basis is which interferometer fired (A: offset 0, B: offset pi/2), or
    None for no-click / double-click events.  delta_phi is the phase
    difference Bob actually applied, carried as ground truth for sifting.
    """

    pair_index: int
    basis: Optional[str]
    clicked_detector: str  # "D0", "D1", "none", "double"
    delta_phi: float


@dataclass
class SiftOutcome:
    """Sifted bits before and after error-estimation disclosure."""

    pair_indices: np.ndarray
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    disclosed: np.ndarray  # boolean mask over the sifted set
    qber: Optional[float]
    key_alice: np.ndarray
    key_bob: np.ndarray


@dataclass
class SessionResult:
    config: SessionConfig
    attack_label: str
    sifted_key_alice: np.ndarray
    sifted_key_bob: np.ndarray
    qber: Optional[float]
    alice_monitor: PowerTestOutcome
    bob_monitor: Optional[PowerTestOutcome]
    alarm: str
    alarm_sources: tuple
    counts: dict
    eve: object = None  # EveReport or None

    def to_json(self) -> str:
        doc = {
            "config": self.config.to_dict(),
            "attack": self.attack_label,
            "counts": self.counts,
            "qber": self.qber,
            "alice_monitor": self.alice_monitor.to_dict(),
            "bob_monitor": self.bob_monitor.to_dict() if self.bob_monitor else None,
            "alarm": self.alarm,
            "alarm_sources": list(self.alarm_sources),
            "eve": self.eve.to_dict() if self.eve is not None else None,
        }
        return json.dumps(doc, indent=2)

    def summary_line(self) -> str:
        z_a = self.alice_monitor.z_score
        z_b = self.bob_monitor.z_score if self.bob_monitor else float("nan")
        q = "nan" if self.qber is None else f"{self.qber:.6g}"
        return (
            f"attack={self.attack_label} qber={q} z_alice={z_a:.6g} "
            f"z_bob={z_b:.6g} sifted={self.counts['sifted']} alarm={self.alarm}"
        )


# ---------------------------------------------------------------------------
# Alice's preparation and mode separation


def alice_prepare(cfg: SessionConfig, rng: np.random.Generator) -> PulseBatch:
    """Prepare the outgoing pulse train.

    Each pulse draws two independent fair bits: the source wiring
    (mode_assignment) and the rotator angle.  Their XOR decides which
    physical mode carries the coherent state on the channel, so the
    channel-side placement is itself a fresh fair bit per pulse.  The
    coherent amplitude is sqrt(mu_coherent) at reference phase 0.
    """
    n = cfg.n_pulses
    assign = rng.integers(0, 2, n, dtype=np.uint8)
    rot = rng.integers(0, 2, n, dtype=np.uint8)
    coh_in_h = (assign ^ rot) == 0
    amp = np.full(n, math.sqrt(cfg.mu_coherent), dtype=np.complex128)
    coh = FieldArray.coherent(amp)
    th = FieldArray.thermal(np.full(n, cfg.mu_thermal))
    field_h = FieldArray.where(coh_in_h, coh, th)
    field_v = FieldArray.where(coh_in_h, th, coh)
    return PulseBatch(assign, rot, field_h, field_v)


def separate_modes(batch: PulseBatch) -> tuple[FieldArray, FieldArray]:
    """Undo Alice's rotation and route by her source wiring.

    Output 1 receives whatever sits in the mode she assigned the coherent
    state to; output 2 the other mode.  Honest pulses therefore always yield
    (coherent, thermal); an attacker who replaced the channel fields lands on
    output 2 whenever the mode secret says so.
    """
    swapped = batch.rotation_quarter == 1
    post_h = FieldArray.where(swapped, batch.field_v, batch.field_h)
    post_v = FieldArray.where(swapped, batch.field_h, batch.field_v)
    assign_h = batch.mode_assignment == 0
    out1 = FieldArray.where(assign_h, post_h, post_v)
    out2 = FieldArray.where(assign_h, post_v, post_h)
    return out1, out2


def alice_separate_modes(pulse: PulseRecord) -> tuple[LightField, LightField]:
    out1, out2 = separate_modes(PulseBatch.from_records([pulse]))
    return out1.field(0), out2.field(0)


# ---------------------------------------------------------------------------
# Channel and Bob's side


def propagate(pulse: PulseRecord, transmittance: float,
              rng: np.random.Generator | None = None) -> PulseRecord:
    """One-way loss on both modes; definite photon numbers thin binomially."""
    return PulseBatch.from_records([pulse]).propagated(transmittance, rng)[0]


def modulate_batch(batch: PulseBatch, quarters: np.ndarray) -> PulseBatch:
    """Bob's polarization-insensitive phase modulation on both modes.

    Only coherent amplitudes pick up the phase; thermal, Fock and blinding
    fields are phase invariant and pass bit-exactly unchanged.
    """
    mult = QUARTER_PHASES[np.asarray(quarters, dtype=np.int64)]
    out = batch.copy()
    out.field_h = batch.field_h.phase_shifted(mult)
    out.field_v = batch.field_v.phase_shifted(mult)
    out.bob_quarter = np.asarray(quarters, dtype=np.int8)
    return out


def bob_modulate(pulse: PulseRecord, phi_B: float) -> PulseRecord:
    """Apply one of Bob's four canonical phases to a single pulse."""
    q = phase_to_quarter(phi_B)
    return modulate_batch(PulseBatch.from_records([pulse]), np.array([q]))[0]


def bob_monitor_tap(batch: PulseBatch, cfg: SessionConfig,
                    rng: np.random.Generator) -> Optional[PowerTestOutcome]:
    """Bob's state check: tap fraction r of both modes onto one detector and
    z-test the click frequency against the expectation for the announced
    source means.  Returns None when the tap is disabled (r = 0)."""
    r = cfg.tap_reflectance
    if r == 0.0:
        return None
    det = cfg.detector_bob
    eta_eff = det.eta * r
    factors = batch.field_h.noclick_factors(eta_eff) * batch.field_v.noclick_factors(eta_eff)
    p_click = 1.0 - (1.0 - det.dark_prob) * factors
    stream = ClickStream(rng.random(len(batch)) < p_click)
    return power_test(stream, cfg.expected_bob_monitor_p(), cfg.z_threshold)


def alice_thermal_monitor(output2: FieldArray, cfg: SessionConfig,
                          rng: np.random.Generator) -> PowerTestOutcome:
    """Protection-layer monitor on Alice's output 2.

    Samples clicks from whatever actually arrived and z-tests the frequency
    against the thermal expectation mu_thermal * T^2 * (1-r)."""
    det = cfg.detector_alice
    p_click = 1.0 - (1.0 - det.dark_prob) * output2.noclick_factors(det.eta)
    stream = ClickStream(rng.random(len(output2)) < p_click)
    return power_test(stream, cfg.expected_alice_thermal_p(), cfg.z_threshold)


# ---------------------------------------------------------------------------
# Interferometric measurement and sifting


def interferometer_means(amp_prev: complex, amp_curr: complex) -> np.ndarray:
    """Mean photon numbers at the four detectors [D0A, D1A, D0B, D1B] for a
    coherent pulse pair.

    The light splits evenly between the two interferometers; inside each, the
    delayed early pulse interferes with the late pulse, giving
    |a_prev e^(i delta) +/- a_curr|^2 / 8 at the two ports.  The four means
    always sum to the average pulse energy."""
    out = np.empty(4)
    for b in (0, 1):
        s = amp_prev * QUARTER_PHASES[b]
        out[2 * b] = abs(s + amp_curr) ** 2 / 8.0
        out[2 * b + 1] = abs(s - amp_curr) ** 2 / 8.0
    return out


def measure_interference(out1: FieldArray, delta_q: np.ndarray, det: DetectorModel,
                         rng: np.random.Generator) -> dict:
    """Click-sample all consecutive pulse pairs of Alice's coherent output.

    Coherent (or vacuum) pairs interfere with the bilinear port means; any
    other field combination carries no stable phase and is treated as an
    incoherent 1/8 split with identical statistics at all four detectors.
    Each detector clicks independently; exactly one click yields a usable
    event, two or more a discarded double.
    """
    m = len(out1) - 1
    kind_prev, kind_curr = out1.kind[:-1], out1.kind[1:]
    a_prev, a_curr = out1.amp[:-1], out1.amp[1:]

    means = np.empty((4, m))
    for b in (0, 1):
        s = a_prev * QUARTER_PHASES[b]
        means[2 * b] = np.abs(s + a_curr) ** 2 / 8.0
        means[2 * b + 1] = np.abs(s - a_curr) ** 2 / 8.0

    coherent_like = np.isin(kind_prev, (KIND_VACUUM, KIND_COHERENT)) & np.isin(
        kind_curr, (KIND_VACUUM, KIND_COHERENT)
    )
    p_int = 1.0 - (1.0 - det.dark_prob) * np.exp(-det.eta * means)
    f_pair = out1.noclick_factors(det.eta / 8.0)
    p_inc = 1.0 - (1.0 - det.dark_prob) * f_pair[:-1] * f_pair[1:]
    p = np.where(coherent_like[None, :], p_int, p_inc[None, :])

    clicks = rng.random((4, m)) < p
    n_clicks = clicks.sum(axis=0)
    single = n_clicks == 1
    detector = clicks.argmax(axis=0)
    return {
        "single": single,
        "double": n_clicks >= 2,
        "basis_q": (detector >> 1).astype(np.int8),
        "port": (detector & 1).astype(np.uint8),
        "delta_q": np.asarray(delta_q, dtype=np.int64),
    }


def interferometer_measure(prev: PulseRecord, curr: PulseRecord, cfg: SessionConfig,
                           rng: np.random.Generator) -> InterferometerEvent:
    """Measure one pulse pair after mode separation (record-level API)."""
    for p in (prev, curr):
        if p.bob_phase is None:
            raise ValueError("pulses must have passed Bob before interferometry")
    out1_prev, _ = alice_separate_modes(prev)
    out1_curr, _ = alice_separate_modes(curr)
    dq = (phase_to_quarter(curr.bob_phase) - phase_to_quarter(prev.bob_phase)) % 4
    fa = FieldArray.from_fields([out1_prev, out1_curr])
    meas = measure_interference(fa, np.array([dq]), cfg.detector_alice, rng)
    if meas["double"][0]:
        basis, clicked = None, "double"
    elif meas["single"][0]:
        basis = "AB"[meas["basis_q"][0]]
        clicked = f"D{meas['port'][0]}"
    else:
        basis, clicked = None, "none"
    return InterferometerEvent(
        pair_index=curr.index, basis=basis, clicked_detector=clicked,
        delta_phi=dq * (math.pi / 2),
    )


def sift_and_qber(meas: dict, cfg: SessionConfig, rng: np.random.Generator) -> SiftOutcome:
    """Keep matched-basis single clicks, disclose a random sample for error
    estimation, and strip the disclosed bits from the key.

    Basis A keeps phase differences {0, pi}, basis B {pi/2, 3pi/2}.  Bob's
    bit is 0/1 for offset 0/pi from the basis phase; Alice's is the port that
    clicked.  An empty sifted set leaves qber undefined (None).
    """
    single, basis_q = meas["single"], meas["basis_q"]
    delta_q, port = meas["delta_q"], meas["port"]
    kept = single & ((delta_q % 2) == basis_q)
    idx = np.flatnonzero(kept)
    alice_bits = port[idx].astype(np.uint8)
    bob_bits = (((delta_q[idx] - basis_q[idx]) % 4) == 2).astype(np.uint8)
    k = idx.size
    if k == 0:
        empty = np.zeros(0, dtype=np.uint8)
        return SiftOutcome(idx, alice_bits, bob_bits, np.zeros(0, dtype=bool),
                           None, empty, empty)
    n_disc = min(k, max(1, round(cfg.qber_sample_fraction * k)))
    disc_idx = np.sort(rng.choice(k, size=n_disc, replace=False))
    disclosed = np.zeros(k, dtype=bool)
    disclosed[disc_idx] = True
    qber = float(np.mean(alice_bits[disclosed] != bob_bits[disclosed]))
    return SiftOutcome(
        pair_indices=idx,
        alice_bits=alice_bits,
        bob_bits=bob_bits,
        disclosed=disclosed,
        qber=qber,
        key_alice=alice_bits[~disclosed],
        key_bob=bob_bits[~disclosed],
    )


# ---------------------------------------------------------------------------
# Verdict and full session


def classify_alarm(qber: Optional[float], alice_monitor: PowerTestOutcome,
                   bob_monitor: Optional[PowerTestOutcome], cfg: SessionConfig) -> tuple[str, tuple]:
    sources = []
    if qber is not None and qber > cfg.qber_threshold:
        sources.append(ALARM_QBER)
    if not alice_monitor.passed:
        sources.append(ALARM_ALICE_POWER)
    if bob_monitor is not None and not bob_monitor.passed:
        sources.append(ALARM_BOB_POWER)
    if not sources:
        return ALARM_NONE, ()
    if len(sources) == 1:
        return sources[0], tuple(sources)
    return ALARM_MULTIPLE, tuple(sources)


def session_verdict(result: SessionResult, cfg: SessionConfig) -> str:
    """Alarm classification; the exchanged key is accepted only on "none"."""
    alarm, _ = classify_alarm(result.qber, result.alice_monitor, result.bob_monitor, cfg)
    return alarm


def run_session(cfg: SessionConfig, attack=None) -> SessionResult:
    """Execute one full session, optionally with an eavesdropping strategy.

    Pipeline: prepare -> forward fiber -> (forward interposition) -> Bob
    modulate + monitor + tap loss -> (return interposition) -> return fiber
    -> mode separation -> thermal monitor -> interferometers -> sifting ->
    verdict.  Deterministic given (cfg, attack, seed).
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_pulses

    batch = alice_prepare(cfg, rng)
    batch = batch.propagated(cfg.transmittance_oneway, rng)
    if attack is not None:
        batch = attack.apply_forward(batch, cfg, rng)

    quarters = rng.integers(0, 4, n)
    batch = modulate_batch(batch, quarters)
    bob_outcome = bob_monitor_tap(batch, cfg, rng)
    batch = batch.propagated(1.0 - cfg.tap_reflectance, rng)

    if attack is not None:
        batch = attack.apply_return(batch, cfg, rng)
    batch = batch.propagated(cfg.transmittance_oneway, rng)
    batch.bob_quarter = quarters.astype(np.int8)

    out1, out2 = separate_modes(batch)
    alice_outcome = alice_thermal_monitor(out2, cfg, rng)

    delta_q = (quarters[1:] - quarters[:-1]) % 4
    meas = measure_interference(out1, delta_q, cfg.detector_alice, rng)
    sift = sift_and_qber(meas, cfg, rng)

    eve = attack.finalize_report(sift, rng) if attack is not None else None
    alarm, sources = classify_alarm(sift.qber, alice_outcome, bob_outcome, cfg)

    counts = {
        "sent": n,
        "pairs": n - 1,
        "single_clicks": int(meas["single"].sum()),
        "double_clicks": int(meas["double"].sum()),
        "sifted": int(sift.pair_indices.size),
        "disclosed": int(sift.disclosed.sum()),
    }
    return SessionResult(
        config=cfg,
        attack_label=attack.label if attack is not None else "none",
        sifted_key_alice=sift.key_alice,
        sifted_key_bob=sift.key_bob,
        qber=sift.qber,
        alice_monitor=alice_outcome,
        bob_monitor=bob_outcome,
        alarm=alarm,
        alarm_sources=sources,
        counts=counts,
        eve=eve,
    )
