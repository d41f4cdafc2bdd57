"""Deterministic Monte Carlo generation of per-pulse click patterns.

Every random draw in the package flows from one 64-bit seed through
counter-based streams: a chunk of work owns the Philox generator keyed by

    key = [seed, (lane << 56) | (setting_index << 32) | (chunk_index)]

so any chunk's stream is reproducible in isolation and independent of
every other chunk.  Parallel runs split the pulse range into fixed-size
chunks, sample each chunk on its own stream, and reduce results in chunk
order; the output is therefore bit-identical for any worker count,
including zero (sequential).

Two sampling paths are exposed:

- the pulse path (`run_experiment`, `sample_patterns`): every pulse is
  drawn explicitly - pair number, per-pair routing, per-photon survival -
  and carries the emitted-pair truth side channel used by the resource
  audit;
- distributional shortcuts (`sample_tally`, `sample_blocked_run`): the
  per-pulse outcome is an iid categorical over the 16 patterns, so a run
  that only needs counts can be drawn as a multinomial, and a blocked run
  (s blocks of k_bar informative events each) factorizes exactly into a
  negative-binomial pulse total, per-block multinomials over the nine
  informative types, and a multinomial over the non-informative types.
  The factorization is an identity, not an approximation; the test suite
  checks the two paths against each other.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from concurrent.futures import ThreadPoolExecutor
from typing import IO

import numpy as np

from .errors import ConfigurationError, DomainError, EmptyStatisticsError
from .events import Tally
from .model import (
    INFORMATIVE_PATTERNS,
    N_PATTERNS,
    EfficiencyBudget,
    PhaseSetting,
    SourceParams,
    global_phase,
    pattern_distribution,
    route_probs,
)

__all__ = [
    "LANE_PULSES",
    "LANE_TALLY",
    "LANE_BLOCKS",
    "LANE_BITS",
    "ExperimentConfig",
    "ExperimentResult",
    "EventRecord",
    "BlockedRunSample",
    "stream_generator",
    "sample_pulse",
    "sample_patterns",
    "run_experiment",
    "sample_tally",
    "sample_blocked_run",
    "read_event_log",
    "EVENT_LOG_HEADER",
]

# Stream lanes keep unrelated consumers of the same seed independent.
LANE_PULSES = 0  # pulse-path sampling
LANE_TALLY = 1  # multinomial tally shortcut
LANE_BLOCKS = 2  # blocked-run shortcut
LANE_BITS = 3  # random-bit source (phase QRNG stand-in)

_DEFAULT_CHUNK = 1 << 20

EVENT_LOG_HEADER = "pulse_index,setting_index,pattern,truth_pairs"


def stream_generator(seed, lane, setting_index=0, chunk_index=0):
    """Philox generator for one work chunk, keyed, never seeded serially.

    The second key word packs (lane, setting_index, chunk_index) as
    (8, 24, 32) bits; the ranges are validated because silent wrap-around
    would alias streams.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    lane = int(lane)
    setting_index = int(setting_index)
    chunk_index = int(chunk_index)
    if not 0 <= lane < 2**8:
        raise ConfigurationError(f"lane must be in [0, 255], got {lane}")
    if not 0 <= setting_index < 2**24:
        raise ConfigurationError(
            f"setting_index must be in [0, 2^24), got {setting_index}"
        )
    if not 0 <= chunk_index < 2**32:
        raise ConfigurationError(f"chunk_index must be in [0, 2^32), got {chunk_index}")
    word = (lane << 56) | (setting_index << 32) | chunk_index
    return np.random.Generator(np.random.Philox(key=[seed, word]))


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of a simulated acquisition.

    pulses_per_setting need not be a multiple of chunk_size: chunk
    boundaries are fixed at multiples of chunk_size and the final chunk is
    simply short, so the chunk decomposition (and hence every random
    stream) depends only on (pulses_per_setting, chunk_size), never on the
    worker count.
    """

    source: SourceParams
    eff: EfficiencyBudget
    settings: tuple
    pulses_per_setting: int
    seed: int
    chunk_size: int = _DEFAULT_CHUNK
    routing: str = "sensing"

    def __post_init__(self):
        settings = tuple(self.settings)
        if not settings:
            raise ConfigurationError("config needs at least one phase setting")
        for s in settings:
            if not isinstance(s, PhaseSetting):
                raise ConfigurationError(f"settings must be PhaseSetting, got {s!r}")
        object.__setattr__(self, "settings", settings)
        if not isinstance(self.pulses_per_setting, int) or self.pulses_per_setting < 1:
            raise ConfigurationError(
                f"pulses_per_setting must be an integer >= 1, got {self.pulses_per_setting}"
            )
        if not isinstance(self.chunk_size, int) or self.chunk_size < 1:
            raise ConfigurationError(
                f"chunk_size must be an integer >= 1, got {self.chunk_size}"
            )
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned, got {self.seed}")
        if self.routing not in ("sensing", "calibration"):
            raise ConfigurationError(
                f"routing must be 'sensing' or 'calibration', got {self.routing!r}"
            )
        if len(settings) >= 2**24:
            raise ConfigurationError("too many settings for the stream layout")
        n_chunks = -(-self.pulses_per_setting // self.chunk_size)
        if n_chunks >= 2**32:
            raise ConfigurationError("too many chunks for the stream layout")


@dataclass(frozen=True)
class EventRecord:
    """One pulse of the event log: what a time-tag record reduces to here."""

    pulse_index: int
    setting_index: int
    pattern: int
    truth_pairs: int


@dataclass
class ExperimentResult:
    """Per-setting tallies plus the simulation-truth pair totals."""

    tallies: list
    truth_pairs: list
    pulses: list

    def __iter__(self):
        return iter(self.tallies)


def _alice_bob_index(routes):
    # route order (A1B1, A1B2, A2B1, A2B2): alice = r >> 1, bob = r & 1
    return routes >> 1, routes & 1


def sample_patterns(source, eff, u, rng, n, routing="sensing"):
    """Vectorized pulse path: n pulses on a caller-owned generator.

    Returns (patterns uint8[n], truth_pairs int16[n]).  The draw sequence
    per chunk is fixed: pair numbers, then routes, then Alice survivals,
    then Bob survivals; changing it would change every seeded result, so
    it is part of the determinism contract.
    """
    if n < 0:
        raise ConfigurationError(f"pulse count must be >= 0, got {n}")
    cum_pairs = np.cumsum(source.pair_weights())
    p_route = route_probs(u, source.visibility, routing)
    cum_route = np.cumsum(p_route)
    eta = eff.as_array()

    m = np.searchsorted(cum_pairs, rng.random(n), side="right")
    np.clip(m, 0, source.n_max, out=m)  # guards roundoff in the last cumsum bin
    m = m.astype(np.int16)
    total = int(m.sum())
    routes = np.searchsorted(cum_route, rng.random(total), side="right")
    np.clip(routes, 0, 3, out=routes)
    a_idx, b_idx = _alice_bob_index(routes)
    a_click = rng.random(total) < eta[a_idx]
    b_click = rng.random(total) < eta[2 + b_idx]
    masks = (a_click << a_idx | (b_click << (2 + b_idx))).astype(np.uint8)

    patterns = np.zeros(n, dtype=np.uint8)
    emitting = m > 0
    if total:
        starts = np.concatenate(([0], np.cumsum(m, dtype=np.int64)))[:-1]
        patterns[emitting] = np.bitwise_or.reduceat(masks, starts[emitting])
    return patterns, m


def sample_pulse(source, eff, u, rng, routing="sensing"):
    """One pulse: (click pattern, emitted pairs).  rng is caller-owned."""
    patterns, m = sample_patterns(source, eff, u, rng, 1, routing)
    return int(patterns[0]), int(m[0])


def _chunk_bounds(pulses, chunk_size):
    n_chunks = -(-pulses // chunk_size)
    for c in range(n_chunks):
        lo = c * chunk_size
        yield c, lo, min(chunk_size, pulses - lo)


def _interference_phase(setting):
    # validates the (1, 2) pass topology as a side effect
    return 3.0 * global_phase(setting)


def run_experiment(config, *, workers=None, event_log=None):
    """Run the full pulse-path acquisition described by config.

    Deterministic given (config.seed, config.chunk_size): chunk streams
    are keyed by (seed, setting, chunk) and reduced in chunk order, so any
    worker count gives bit-identical tallies and event logs.  When
    event_log is a path or writable text file, every pulse is appended as
    `pulse_index,setting_index,pattern,truth_pairs`.
    """
    close_log = False
    log_fh: IO | None = None
    if event_log is not None:
        if hasattr(event_log, "write"):
            log_fh = event_log
        else:
            log_fh = open(Path(event_log), "w", newline="")
            close_log = True
        log_fh.write(EVENT_LOG_HEADER + "\n")
    try:
        tallies = []
        truth_totals = []
        pulse_totals = []
        for s_idx, setting in enumerate(config.settings):
            u = _interference_phase(setting)
            counts = np.zeros(N_PATTERNS, dtype=np.int64)
            truth = 0
            chunks = list(_chunk_bounds(config.pulses_per_setting, config.chunk_size))

            def draw(chunk):
                c_idx, lo, size = chunk
                rng = stream_generator(config.seed, LANE_PULSES, s_idx, c_idx)
                patterns, m = sample_patterns(
                    config.source, config.eff, u, rng, size, config.routing
                )
                return lo, patterns, m

            if workers and workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    produced = pool.map(draw, chunks)
                    for lo, patterns, m in produced:
                        counts += np.bincount(patterns, minlength=N_PATTERNS)
                        truth += int(m.sum(dtype=np.int64))
                        if log_fh is not None:
                            _write_log_chunk(log_fh, lo, s_idx, patterns, m)
            else:
                for chunk in chunks:
                    lo, patterns, m = draw(chunk)
                    counts += np.bincount(patterns, minlength=N_PATTERNS)
                    truth += int(m.sum(dtype=np.int64))
                    if log_fh is not None:
                        _write_log_chunk(log_fh, lo, s_idx, patterns, m)
            tallies.append(Tally(counts, setting_index=s_idx))
            truth_totals.append(truth)
            pulse_totals.append(config.pulses_per_setting)
        return ExperimentResult(tallies, truth_totals, pulse_totals)
    finally:
        if close_log and log_fh is not None:
            log_fh.close()


def _write_log_chunk(fh, lo, setting_index, patterns, m):
    n = len(patterns)
    table = np.empty((n, 4), dtype=np.int64)
    table[:, 0] = np.arange(lo, lo + n)
    table[:, 1] = setting_index
    table[:, 2] = patterns
    table[:, 3] = m
    np.savetxt(fh, table, fmt="%d", delimiter=",")


def read_event_log(path_or_file):
    """Parse an event-log CSV back into per-setting tallies and truth totals.

    Accepts logs written by run_experiment or any file with the same
    header and integer rows.  Returns an ExperimentResult whose tallies
    are ordered by setting index.
    """
    def load(fh):
        first = fh.readline()
        with warnings.catch_warnings():
            # empty logs are reported as EmptyStatisticsError below
            warnings.simplefilter("ignore", UserWarning)
            rows = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
        return first, rows

    if hasattr(path_or_file, "read"):
        first, rows = load(path_or_file)
    else:
        with open(Path(path_or_file), newline="") as fh:
            first, rows = load(fh)
    if first.strip() != EVENT_LOG_HEADER:
        raise ConfigurationError(
            f"expected event-log header {EVENT_LOG_HEADER!r}, got {first.strip()!r}"
        )
    if rows.size == 0:
        raise EmptyStatisticsError("event log has no rows")
    if rows.shape[1] != 4:
        raise ConfigurationError(
            f"event-log rows must have 4 columns, got {rows.shape[1]}"
        )
    patterns = rows[:, 2]
    if patterns.min() < 0 or patterns.max() >= N_PATTERNS:
        raise ConfigurationError("event log contains out-of-range patterns")
    if rows[:, 3].min() < 0:
        raise ConfigurationError("event log contains negative pair counts")
    tallies = []
    truth_totals = []
    pulses = []
    for s_idx in np.unique(rows[:, 1]):
        sel = rows[:, 1] == s_idx
        counts = np.bincount(patterns[sel], minlength=N_PATTERNS)
        tallies.append(Tally(counts, setting_index=int(s_idx)))
        truth_totals.append(int(rows[sel, 3].sum()))
        pulses.append(int(sel.sum()))
    return ExperimentResult(tallies, truth_totals, pulses)


def sample_tally(source, eff, u, pulses, rng, routing="sensing", setting_index=0):
    """Multinomial shortcut: a pulse-count tally without per-pulse draws.

    Distribution-exact because pulses are iid categorical over the 16
    patterns.  No truth side channel (pair numbers are integrated out).
    """
    if pulses < 0:
        raise ConfigurationError(f"pulse count must be >= 0, got {pulses}")
    dist = pattern_distribution(source, eff, u, routing=routing)
    counts = rng.multinomial(pulses, dist.probs)
    return Tally(counts.astype(np.int64), setting_index=setting_index)


@dataclass
class BlockedRunSample:
    """A run recorded as s blocks of exactly k_bar informative events.

    block_counts[b, j] counts block b's events of the j-th informative
    type, ordered as INFORMATIVE_PATTERNS.  tally is the full 16-type
    tally of the whole run (all blocks plus non-informative events);
    pulses is the number of pulse slots consumed, the final pulse being
    the run's last informative event.
    """

    block_counts: np.ndarray
    tally: Tally
    pulses: int
    informative_patterns: tuple = INFORMATIVE_PATTERNS

    @property
    def s(self):
        return self.block_counts.shape[0]

    @property
    def k_bar(self):
        return int(self.block_counts[0].sum()) if self.s else 0


def _blocked_from_pieces(block_counts, rest_counts, pulses, setting_index):
    counts = np.zeros(N_PATTERNS, dtype=np.int64)
    counts[list(INFORMATIVE_PATTERNS)] = block_counts.sum(axis=0)
    rest_patterns = [p for p in range(N_PATTERNS) if p not in INFORMATIVE_PATTERNS]
    counts[rest_patterns] += rest_counts
    return BlockedRunSample(
        block_counts=block_counts,
        tally=Tally(counts, setting_index=setting_index),
        pulses=pulses,
    )


def sample_blocked_run(source, eff, u, k_bar, s, rng, routing="sensing",
                       setting_index=0):
    """Draw a blocked acquisition by its exact factorization.

    The pulse stream is iid, so conditioned on type (informative or not)
    events are iid categorical; blocks partition the informative events
    by arrival order, hence the s block count vectors are independent
    multinomial(k_bar, q).  The pulse total is k_bar*s plus a negative
    binomial number of non-informative pulses, and those split
    multinomially between no-click/single-side types.  Identical in
    distribution to running the pulse path and cutting blocks.
    """
    if k_bar < 1 or s < 1:
        raise ConfigurationError("blocked run needs k_bar >= 1 and s >= 1")
    dist = pattern_distribution(source, eff, u, routing=routing)
    inf_idx = list(INFORMATIVE_PATTERNS)
    p_inf = dist.informative_probability()
    if p_inf <= 0.0:
        raise DomainError("informative probability is zero at this setting")
    q = dist.probs[inf_idx] / p_inf
    block_counts = rng.multinomial(k_bar, q, size=s).astype(np.int64)

    failures = int(rng.negative_binomial(k_bar * s, p_inf))
    rest_patterns = [p for p in range(N_PATTERNS) if p not in INFORMATIVE_PATTERNS]
    p_rest = dist.probs[rest_patterns]
    rest_total = p_rest.sum()
    if failures and rest_total > 0.0:
        rest_counts = rng.multinomial(failures, p_rest / rest_total).astype(np.int64)
    else:
        rest_counts = np.zeros(len(rest_patterns), dtype=np.int64)
    pulses = k_bar * s + failures
    return _blocked_from_pieces(block_counts, rest_counts, pulses, setting_index)


def sample_blocked_run_pulse_level(source, eff, u, k_bar, s, rng,
                                   routing="sensing", setting_index=0,
                                   chunk=1 << 18):
    """Reference blocked acquisition on the explicit pulse path.

    Streams pulses until the (k_bar*s)-th informative event, trims at
    exactly that pulse, and cuts blocks by informative arrival order.
    Slower than sample_blocked_run by orders of magnitude; exists to
    cross-validate the factorized sampler and for callers that want the
    literal stream.
    """
    if k_bar < 1 or s < 1:
        raise ConfigurationError("blocked run needs k_bar >= 1 and s >= 1")
    need = k_bar * s
    informative = np.zeros(N_PATTERNS, dtype=bool)
    informative[list(INFORMATIVE_PATTERNS)] = True
    codes = []
    counts = np.zeros(N_PATTERNS, dtype=np.int64)
    collected = 0
    pulses = 0
    while collected < need:
        patterns, _ = sample_patterns(source, eff, u, rng, chunk, routing)
        keep_mask = informative[patterns]
        kept = patterns[keep_mask]
        if collected + len(kept) >= need:
            # trim the chunk at the pulse carrying the final needed event
            take = need - collected
            cut = int(np.nonzero(keep_mask)[0][take - 1]) + 1
            patterns = patterns[:cut]
            kept = kept[:take]
        counts += np.bincount(patterns, minlength=N_PATTERNS)
        codes.append(kept)
        collected += len(kept)
        pulses += len(patterns)
    stream = np.concatenate(codes)
    pattern_to_slot = {p: j for j, p in enumerate(INFORMATIVE_PATTERNS)}
    slots = np.array([pattern_to_slot[int(p)] for p in stream], dtype=np.int64)
    block_counts = np.zeros((s, len(INFORMATIVE_PATTERNS)), dtype=np.int64)
    block_of = np.repeat(np.arange(s), k_bar)
    np.add.at(block_counts, (block_of, slots), 1)
    return BlockedRunSample(
        block_counts=block_counts,
        tally=Tally(counts, setting_index=setting_index),
        pulses=pulses,
    )
