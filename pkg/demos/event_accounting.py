"""Event taxonomy and the no-discard resource ledger.

Every pulse lands in exactly one of 16 click patterns. The census
below groups a sampled tally by how many detectors fired; the nine
patterns with at least one click per side are the informative ones the
estimator consumes, and everything, including singles and the empty
pattern, flows into the photon accounting. The audit inverts the
channel efficiencies to recover the true photon passes

    n = N~(A1) + N~(A2) + 2 N~(B1) + 2 N~(B2)

(B photons cross their plate twice) and that n is the denominator of
the shot-noise limit the precision claims are measured against.
"""

from entsense import (
    EfficiencyBudget,
    EventType,
    ResourceAudit,
    SourceParams,
    sample_tally,
    stream_generator,
)
from entsense.simulator import LANE_TALLY

SOURCE = SourceParams(mu=0.056, visibility=0.9804, n_max=4)
EFF = EfficiencyBudget({"A1": 0.7432, "A2": 0.7667, "B1": 0.7477, "B2": 0.6974})
PULSES = 20_000_000


def main():
    rng = stream_generator(99, LANE_TALLY)
    tally = sample_tally(SOURCE, EFF, 0.9, PULSES, rng)

    census = {}
    for pattern in range(16):
        cat = EventType(pattern).category
        census[cat] = census.get(cat, 0) + int(tally.counts[pattern])
    print(f"{PULSES} pulses by click multiplicity:")
    for cat in ("NoClick", "Single", "Twofold", "Threefold", "Fourfold"):
        print(f"  {cat:<10} {census[cat]:>9}")
    print(f"  informative, one+ click per side (C_sum): {tally.c_sum}")
    print(f"  two-detector coincidence quartet:         "
          f"{sum(tally.coincidence_counts())}")

    audit = ResourceAudit.from_tallies(tally, SOURCE, EFF)
    print("\nper-channel clicks recorded -> corrected for loss:")
    for ch in ("A1", "A2", "B1", "B2"):
        print(f"  {ch}: {audit.N_i[ch]:>9.0f} -> {audit.N_tilde_i[ch]:>12.1f}")
    print(f"\naudited photon passes n = {audit.n:.1f}")
    expected = 3.0 * SOURCE.mean_pairs() * PULSES
    print(f"expected 3 * mean_pairs * pulses = {expected:.1f}")
    print(f"relative difference = {audit.n / expected - 1.0:+.4%}")
    print("the gap mixes the shot noise of the realized pair number")
    print("around its mean with a small multi-pair bias of the")
    print("click-inversion formula (a few tenths of a percent here)")


if __name__ == "__main__":
    main()
