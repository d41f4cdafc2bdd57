"""Unknown-phase trials driven by a seeded random bit source.

The hardware in the loop would be a quantum random number generator
rotating both sensors to phases nobody chose; here a counter-based
pseudo-random bit stream stands in, preserving the 64-bit block protocol
bit-exactly so the mapping from bit block to phase is the part under
test, not the entropy source.

Each trial folds its truth onto the identifiable branch before any
comparison, and truths landing at a fringe extremum are flagged in the
result rather than dropped: an extremum trial still spends its photons,
it just cannot localize the phase, and hiding that would quietly bias
any precision summary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .estimation import block_stats, estimate_blocks, fold_to_branch
from .model import PhaseSetting, global_phase
from .resources import PrecisionReport, ResourceAudit
from .simulator import (
    LANE_BITS,
    sample_blocked_run,
    sample_blocked_run_pulse_level,
    stream_generator,
)

__all__ = [
    "PHASE_BITS",
    "TRIALS_CSV_HEADER",
    "bits_to_phase",
    "random_bit_blocks",
    "draw_phase_settings",
    "is_extremum",
    "PhaseMeasurement",
    "measure_phase_point",
    "PhaseTrial",
    "RandomPhaseTrialSet",
    "run_random_phase_experiment",
    "write_trials_csv",
]

PHASE_BITS = 64
TRIALS_CSV_HEADER = "index,estimated_phase_rad,stddev,stddev_err"

# |cos u| at or above this marks a fringe extremum: the likelihood loses
# its curvature on one side and per-block estimates pile on the branch
# boundary.
EXTREMUM_COS = 0.95


def bits_to_phase(bits):
    """Map exactly 64 bits, most significant first, onto [0, 2*pi).

    Accepts an iterable of 0/1 integers or a string of '0'/'1'
    characters; the block is read as an unsigned integer v and the phase
    is 2*pi * v / 2**64, tiling the circle evenly.  The tiling is
    injective in exact arithmetic; at double precision the step is far
    below one ulp near the top of the range, where the final block
    rounds to the full turn itself (the same phase as 0).
    """
    if isinstance(bits, str):
        if any(c not in "01" for c in bits):
            raise DomainError("bit string may contain only '0' and '1'")
        values = [int(c) for c in bits]
    else:
        values = [int(b) for b in bits]
        if any(b not in (0, 1) for b in values):
            raise DomainError(f"bits must be 0 or 1, got {sorted(set(values))}")
    if len(values) != PHASE_BITS:
        raise DomainError(
            f"phase blocks are exactly {PHASE_BITS} bits, got {len(values)}"
        )
    v = 0
    for b in values:
        v = (v << 1) | b
    return 2.0 * math.pi * v / 2.0 ** PHASE_BITS


def random_bit_blocks(seed, count, *, chunk_index=0):
    """Deterministic (count, 64) array of bits from the bit-source lane."""
    if count < 0:
        raise ConfigurationError(f"count must be >= 0, got {count}")
    rng = stream_generator(seed, LANE_BITS, chunk_index=chunk_index)
    return rng.integers(0, 2, size=(count, PHASE_BITS), dtype=np.uint8)


def draw_phase_settings(seed, num_phases):
    """Draw (theta_a, theta_b) pairs, two 64-bit blocks per phase.

    Block order is theta_a then theta_b for phase 0, then phase 1, and
    so on; consuming the stream any other way would silently change
    every seeded experiment.
    """
    blocks = random_bit_blocks(seed, 2 * num_phases)
    settings = []
    for i in range(num_phases):
        theta_a = bits_to_phase(blocks[2 * i])
        theta_b = bits_to_phase(blocks[2 * i + 1])
        settings.append(PhaseSetting(theta_a, theta_b))
    return settings


def is_extremum(u):
    """Whether an interference phase sits at a fringe extremum."""
    return abs(math.cos(u)) >= EXTREMUM_COS


@dataclass(frozen=True)
class PhaseMeasurement:
    """One phase point reduced to estimate, spread, and resource audit."""

    theta_hat: float
    stats: object
    audit: ResourceAudit
    report: PrecisionReport
    extremum: bool


def measure_phase_point(source, eff, calibration, u, k_bar, s, *, seed,
                        setting_index=0, method="blocked",
                        include_rest=False):
    """Simulate and reduce s blocks of k_bar informative events at u.

    method 'blocked' uses the exact factorized block sampler; 'pulses'
    streams individual pulses (slow, used to validate the shortcut).
    The audit covers the whole run; the precision report divides its n
    by s, because the spread it quotes is the precision of one block's
    worth of resources, not of the pooled run.
    """
    if calibration is None:
        raise ConfigurationError(
            "a fringe calibration must be fitted before phase estimation"
        )
    if method == "blocked":
        sampler = sample_blocked_run
    elif method == "pulses":
        sampler = sample_blocked_run_pulse_level
    else:
        raise ConfigurationError(
            f"method must be 'blocked' or 'pulses', got {method!r}"
        )
    rng = stream_generator(seed, _run_lane(method), setting_index=setting_index)
    run = sampler(source, eff, u, k_bar, s, rng, setting_index=setting_index)
    estimates = estimate_blocks(run.block_counts, calibration,
                                include_rest=include_rest)
    stats = block_stats(estimates, k_bar=k_bar)
    audit = ResourceAudit.from_tallies(run.tally, source, eff)
    theta_hat = float(np.mean(estimates))
    report = PrecisionReport.assemble(
        theta_hat, stats, audit.n / s,
        params={
            "mu": source.mu,
            "visibility": source.visibility,
            "eta": dict(eff.eta),
            "k_bar": int(k_bar),
            "s": int(s),
        },
    )
    return PhaseMeasurement(
        theta_hat=theta_hat, stats=stats, audit=audit, report=report,
        extremum=is_extremum(u),
    )


def _run_lane(method):
    from .simulator import LANE_BLOCKS, LANE_PULSES

    return LANE_BLOCKS if method == "blocked" else LANE_PULSES


@dataclass(frozen=True)
class PhaseTrial:
    """One random-phase trial: drawn setting, folded truth, measurement."""

    index: int
    setting: PhaseSetting
    theta_true: float
    measurement: PhaseMeasurement

    @property
    def residual(self):
        return self.measurement.theta_hat - self.theta_true


@dataclass(frozen=True)
class RandomPhaseTrialSet:
    """All trials of one seeded random-phase experiment."""

    seed: int
    phases_truth: tuple
    trials: tuple

    def residuals(self):
        return np.array([t.residual for t in self.trials])

    def flagged_indices(self):
        return [t.index for t in self.trials if t.measurement.extremum]


def run_random_phase_experiment(source, eff, calibration, num_phases, k_bar,
                                s, *, seed, method="blocked",
                                include_rest=False):
    """Run num_phases random unknown-phase trials end to end.

    For each trial both sensor angles are drawn from the bit source, the
    combined truth is folded onto the identifiable branch, and the
    blocks are simulated and estimated against the supplied calibration.
    num_phases=0 is a valid vacuous request.
    """
    if num_phases < 0:
        raise ConfigurationError(f"num_phases must be >= 0, got {num_phases}")
    if calibration is None:
        raise ConfigurationError(
            "a fringe calibration must be fitted before phase estimation"
        )
    settings = draw_phase_settings(seed, num_phases)
    trials = []
    for i, setting in enumerate(settings):
        theta_true = fold_to_branch(global_phase(setting))
        u = 3.0 * theta_true
        measurement = measure_phase_point(
            source, eff, calibration, u, k_bar, s, seed=seed,
            setting_index=i, method=method, include_rest=include_rest,
        )
        trials.append(PhaseTrial(index=i, setting=setting,
                                 theta_true=theta_true,
                                 measurement=measurement))
    return RandomPhaseTrialSet(
        seed=int(seed),
        phases_truth=tuple(settings),
        trials=tuple(trials),
    )


def write_trials_csv(trial_set, path_or_file):
    """Results table, one row per random phase: the estimate, its
    spread over blocks, and the error bar of the spread itself."""

    def emit(fh):
        fh.write(TRIALS_CSV_HEADER + "\n")
        for trial in trial_set.trials:
            m = trial.measurement
            fh.write(
                f"{trial.index},{m.theta_hat!r},"
                f"{m.stats.delta_hat!r},{m.stats.delta_err!r}\n"
            )

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w") as fh:
            emit(fh)
