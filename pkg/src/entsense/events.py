"""Event taxonomy, tallies, and count-based efficiency estimation.

Every pulse yields a 4-bit click pattern (see :mod:`entsense.model` for the
bit layout).  The sixteen patterns are classified into one no-click outcome
and fifteen detection-event types: four singles, six twofolds, four
threefolds, and one fourfold.  Nine of them are informative for phase
sensing (both nodes clicked); their total is the normalization ``C_sum``
used by all downstream estimation, so no event is post-selected away.

A :class:`Tally` is the sufficient statistic of a run at one phase setting:
counts per event type plus derived totals.  Tallies form a commutative
monoid under :meth:`Tally.merge`, which is what makes chunked parallel
simulation safe.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Mapping
import warnings

import numpy as np

from .errors import ConfigurationError, DomainError, EmptyStatisticsError
from .model import (
    CHANNELS,
    COINCIDENCE_PATTERNS,
    INFORMATIVE_PATTERNS,
    N_PATTERNS,
    pattern_bits,
    pattern_is_informative,
)

__all__ = [
    "EventType",
    "INFORMATIVE_TYPES",
    "COINCIDENCE_TYPES",
    "classify",
    "Tally",
    "coincidence_fractions",
    "estimate_efficiencies",
    "write_tally_csv",
    "read_tally_csv",
]


class EventType(IntEnum):
    """The sixteen detection outcomes, valued by their 4-bit click mask.

    Member names are the exact serialization tokens (``A1``, ``A1B2``,
    ``A1A2B1B2``, ...), so ``EventType[token]`` parses a CSV cell and
    ``.name`` writes one.  ``int(event) == pattern mask`` by construction,
    which makes :func:`classify` a bijection over ``[0, 15]``.
    """

    NoClick = 0b0000
    A1 = 0b0001
    A2 = 0b0010
    A1A2 = 0b0011
    B1 = 0b0100
    A1B1 = 0b0101
    A2B1 = 0b0110
    A1A2B1 = 0b0111
    B2 = 0b1000
    A1B2 = 0b1001
    A2B2 = 0b1010
    A1A2B2 = 0b1011
    B1B2 = 0b1100
    A1B1B2 = 0b1101
    A2B1B2 = 0b1110
    A1A2B1B2 = 0b1111

    @property
    def channels(self) -> tuple[str, ...]:
        """Detector channels that clicked, in (A1, A2, B1, B2) order."""
        return pattern_bits(int(self))

    @property
    def multiplicity(self) -> int:
        """Number of channels that clicked."""
        return int(self).bit_count()

    @property
    def is_informative(self) -> bool:
        """True when both nodes registered at least one click."""
        return pattern_is_informative(int(self))

    @property
    def category(self) -> str:
        """Coarse class: NoClick, Single, Twofold, Threefold, or Fourfold."""
        return _CATEGORY_BY_MULTIPLICITY[self.multiplicity]


_CATEGORY_BY_MULTIPLICITY = ("NoClick", "Single", "Twofold", "Threefold", "Fourfold")

# The nine event types usable for sensing, ascending by mask.
INFORMATIVE_TYPES: tuple[EventType, ...] = tuple(
    EventType(p) for p in INFORMATIVE_PATTERNS
)

# The four cross-node twofolds, ordered to match model.COINCIDENCE_CHANNELS.
COINCIDENCE_TYPES: tuple[EventType, ...] = tuple(
    EventType(p) for p in COINCIDENCE_PATTERNS
)

_INFORMATIVE_MASKS = np.array(INFORMATIVE_PATTERNS, dtype=np.intp)
# _CHANNEL_MEMBERSHIP[c, p] is 1 when pattern p contains channel c's click.
_CHANNEL_MEMBERSHIP = np.array(
    [[(p >> b) & 1 for p in range(N_PATTERNS)] for b in range(4)], dtype=np.int64
)

_COUNT_LIMIT = np.iinfo(np.int64).max


def classify(pattern: int) -> EventType:
    """Map a 4-bit click mask to its event type.

    Total and bijective over ``[0, 15]``; anything outside that range is a
    domain error, not a clamp.
    """
    p = int(pattern)
    if not 0 <= p < N_PATTERNS:
        raise DomainError(f"click pattern must be in [0, 15], got {pattern!r}")
    return EventType(p)


def _as_count_array(counts) -> np.ndarray:
    arr = np.asarray(counts)
    if arr.shape != (N_PATTERNS,):
        raise ConfigurationError(
            f"tally counts must have shape ({N_PATTERNS},), got {arr.shape}"
        )
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise ConfigurationError("tally counts must be integers")
    arr = arr.astype(np.int64, copy=True)
    if np.any(arr < 0):
        raise ConfigurationError("tally counts must be nonnegative")
    return arr


@dataclass
class Tally:
    """Event-type counts for one phase setting.

    ``counts[p]`` is the number of pulses whose click mask was ``p``.  The
    sum over all sixteen entries is the number of pulses processed; nothing
    is discarded.  Instances merge associatively and commutatively as long
    as the setting index matches, so partial tallies from parallel chunks
    can be combined in any order.
    """

    counts: np.ndarray = field(default_factory=lambda: np.zeros(N_PATTERNS, np.int64))
    setting_index: int = 0

    def __post_init__(self) -> None:
        self.counts = _as_count_array(self.counts)
        self.setting_index = int(self.setting_index)
        if self.setting_index < 0:
            raise ConfigurationError("setting_index must be nonnegative")

    @classmethod
    def from_patterns(cls, patterns, setting_index: int = 0) -> "Tally":
        """Tally a batch of click masks (any integer array-like)."""
        arr = np.asarray(patterns, dtype=np.int64).ravel()
        if arr.size and (arr.min() < 0 or arr.max() >= N_PATTERNS):
            raise DomainError("click patterns must be in [0, 15]")
        return cls(np.bincount(arr, minlength=N_PATTERNS), setting_index)

    @classmethod
    def from_counts(
        cls, counts: Mapping[EventType | int | str, int], setting_index: int = 0
    ) -> "Tally":
        """Build a tally from an event-type -> count mapping."""
        arr = np.zeros(N_PATTERNS, dtype=np.int64)
        for key, value in counts.items():
            arr[int(_coerce_type(key))] += int(value)
        return cls(arr, setting_index)

    def __getitem__(self, key: EventType | int | str) -> int:
        return int(self.counts[int(_coerce_type(key))])

    def add_pattern(self, pattern: int, repeat: int = 1) -> None:
        """Streaming update: record one pattern ``repeat`` times."""
        p = int(classify(pattern))
        if repeat < 0:
            raise ConfigurationError("repeat must be nonnegative")
        self.counts[p] += repeat

    @property
    def total(self) -> int:
        """Pulses processed (all sixteen outcomes, no-click included)."""
        return int(self.counts.sum())

    @property
    def c_sum(self) -> int:
        """Total count of the nine informative event types."""
        return int(self.counts[_INFORMATIVE_MASKS].sum())

    def channel_clicks(self) -> dict[str, int]:
        """Singles-inclusive per-channel totals.

        Every pattern containing channel ``i`` contributes, so these mirror
        what a per-detector counter would report.
        """
        totals = _CHANNEL_MEMBERSHIP @ self.counts
        return {ch: int(totals[i]) for i, ch in enumerate(CHANNELS)}

    def coincidence_counts(self) -> tuple[int, ...]:
        """Counts of the four cross-node twofolds, (A1B1, A1B2, A2B1, A2B2)."""
        return tuple(int(self.counts[int(t)]) for t in COINCIDENCE_TYPES)

    def as_dict(self) -> dict[EventType, int]:
        return {EventType(p): int(self.counts[p]) for p in range(N_PATTERNS)}

    def merge(self, other: "Tally") -> "Tally":
        """Combine two partial tallies of the same setting."""
        if not isinstance(other, Tally):
            raise TypeError(f"cannot merge Tally with {type(other).__name__}")
        if other.setting_index != self.setting_index:
            raise ConfigurationError(
                "cannot merge tallies of different settings "
                f"({self.setting_index} vs {other.setting_index})"
            )
        # Desk-scale runs sit far below 2**63, but a silent wrap would be
        # unforgivable, so check in exact integer arithmetic.
        merged = self.counts.astype(object) + other.counts.astype(object)
        if max(merged) > _COUNT_LIMIT:
            raise OverflowError("tally count exceeds 64-bit range")
        return Tally(merged.astype(np.int64), self.setting_index)

    def __add__(self, other: "Tally") -> "Tally":
        return self.merge(other)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tally):
            return NotImplemented
        return self.setting_index == other.setting_index and bool(
            np.array_equal(self.counts, other.counts)
        )

    @classmethod
    def zero(cls, setting_index: int = 0) -> "Tally":
        return cls(np.zeros(N_PATTERNS, dtype=np.int64), setting_index)


def _coerce_type(key: EventType | int | str) -> EventType:
    if isinstance(key, EventType):
        return key
    if isinstance(key, str):
        try:
            return EventType[key]
        except KeyError:
            raise DomainError(f"unknown event type {key!r}") from None
    return classify(key)


def coincidence_fractions(tally: Tally) -> tuple[float, float, float, float]:
    """Fractions C(A_iB_j) / C_sum in (A1B1, A1B2, A2B1, A2B2) order.

    The denominator counts all nine informative types, so the four
    fractions sum to less than 1 whenever threefold or fourfold events
    occurred; that deficit is real signal about multi-pair emission, not an
    accounting error.
    """
    c_sum = tally.c_sum
    if c_sum == 0:
        raise EmptyStatisticsError(
            "no informative events in tally; coincidence fractions undefined"
        )
    return tuple(c / c_sum for c in tally.coincidence_counts())


def estimate_efficiencies(tally: Tally) -> dict[str, float]:
    """Count-based heralding-efficiency estimates from a calibration tally.

    In calibration routing each pair is channel-anticorrelated (a B1 click
    heralds an A1 photon deterministically and vice versa), so the exact
    twofold coincidences divided by the partner channel's singles-inclusive
    total estimate the per-channel efficiencies:

        eta_A1 = C(A1B1) / N(B1)    eta_B1 = C(A1B1) / N(A1)
        eta_A2 = C(A2B2) / N(B2)    eta_B2 = C(A2B2) / N(A2)

    Estimates can overshoot 1 on small samples; that is flagged with a
    warning rather than clipped.  Applying this to a sensing-mode tally
    gives meaningless numbers (the partner channel is only half
    predictable), which is the caller's contract to respect.
    """
    c11 = tally[EventType.A1B1]
    c22 = tally[EventType.A2B2]
    n = tally.channel_clicks()
    pairs = {
        "A1": (c11, "B1"),
        "B1": (c11, "A1"),
        "A2": (c22, "B2"),
        "B2": (c22, "A2"),
    }
    estimates: dict[str, float] = {}
    for channel, (coincidences, partner) in pairs.items():
        denom = n[partner]
        if denom == 0:
            raise EmptyStatisticsError(
                f"no clicks on channel {partner}; cannot estimate "
                f"efficiency of {channel}"
            )
        estimates[channel] = coincidences / denom
    overshoot = [ch for ch, e in estimates.items() if e > 1.0]
    if overshoot:
        warnings.warn(
            f"efficiency estimate above 1 for {', '.join(sorted(overshoot))}; "
            "sample too small or tally not from a calibration run",
            UserWarning,
            stacklevel=2,
        )
    return estimates


_TALLY_HEADER = ("setting_index", "event_type", "count")


def write_tally_csv(tallies: Iterable[Tally] | Tally, path) -> None:
    """Write tallies as CSV rows ``setting_index,event_type,count``.

    One row per event type per tally, event types in ascending mask order,
    spelled by their serialization token (``NoClick``, ``A1``, ...,
    ``A1A2B1B2``).
    """
    if isinstance(tallies, Tally):
        tallies = [tallies]
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TALLY_HEADER)
        for tally in tallies:
            for p in range(N_PATTERNS):
                writer.writerow(
                    (tally.setting_index, EventType(p).name, int(tally.counts[p]))
                )


def read_tally_csv(path) -> list[Tally]:
    """Read tallies written by :func:`write_tally_csv`, ordered by setting.

    Rows for the same setting accumulate, so a file holding partial tallies
    round-trips to their merged totals.
    """
    accumulators: dict[int, np.ndarray] = {}
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != _TALLY_HEADER:
            raise ConfigurationError(
                f"expected tally CSV header {','.join(_TALLY_HEADER)}, got {header}"
            )
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise ConfigurationError(f"malformed tally CSV row: {row}")
            setting = int(row[0])
            event = _coerce_type(row[1].strip())
            count = int(row[2])
            if count < 0:
                raise ConfigurationError(f"negative count in tally CSV row: {row}")
            accumulators.setdefault(
                setting, np.zeros(N_PATTERNS, dtype=np.int64)
            )[int(event)] += count
    return [Tally(accumulators[s], s) for s in sorted(accumulators)]


def iter_event_rows(tally: Tally) -> Iterator[tuple[int, str, int]]:
    """Yield ``(setting_index, event_type, count)`` rows, mask-ascending."""
    for p in range(N_PATTERNS):
        yield (tally.setting_index, EventType(p).name, int(tally.counts[p]))
