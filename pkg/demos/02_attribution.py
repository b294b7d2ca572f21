"""Stage-2 attribution: is an attacked window draining energy, memory, or both?

A per-device baseline is fitted to telemetry from normal periods. Each attacked
window is then scored by how far its mean power and memory sit from that
baseline in standard deviations, and the pair of z-scores picks a verdict.

    python3 demos/02_attribution.py
"""

from collections import Counter

from rcdetect.attribution import attribute_windows, build_baselines
from rcdetect.synthgen import ScenarioConfig, build_corpus

corpus = build_corpus(ScenarioConfig(seed=42, n_devices=3, duration_s=300))
profiles = build_baselines(corpus.telemetry)
for dev, p in profiles.items():
    print(f"{dev}: energy {p.energy_mean:7.2f} +/- {p.energy_std:5.2f} mW   "
          f"memory {p.memory_mean:8.1f} +/- {p.memory_std:5.1f} KiB   ({p.count} samples)")

attacked = [t for t in corpus.truth if t.kind is not None]
results = attribute_windows([t.window for t in attacked], profiles, corpus.telemetry, thresholds=(3.0, 3.0))

print("\nfirst few attacked windows")
for t, r in list(zip(attacked, results))[:6]:
    print(f"  {t.window.device_id} @{t.window.start}  {t.kind.value:15} "
          f"z_energy={r.energy_z:6.2f} z_memory={r.memory_z:6.2f} -> {r.verdict.name}")

# how often the rule lands on the verdict the schedule intended
tally = Counter((t.kind.value, r.verdict.name) for t, r in zip(attacked, results))
print("\nattack kind x verdict")
for (kind, verdict), n in sorted(tally.items()):
    print(f"  {kind:15} {verdict:14} {n}")
exact = sum(r.verdict == t.verdict for t, r in zip(attacked, results))
print(f"exact verdicts: {exact}/{len(attacked)}")
