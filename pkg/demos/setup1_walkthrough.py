"""
Segmenting a forward / down-to-contact / sideways-to-contact demonstration
===========================================================================

Run from the repository root::

    python3 demos/setup1_walkthrough.py

Everything printed here comes from the library; nothing is hard-coded.
"""

from pathlib import Path

import numpy as np

from segflow.config import RunConfig
from segflow.gmm_segmenter import candidate_intervals
from segflow.pipeline import replay, segment_demonstration
from segflow.synth_oracle import generate, load_script

ROOT = Path(__file__).resolve().parents[1]

# A scripted demonstration: 1 s forward, a pause, down until a table is
# touched, another pause, sideways until a wall is touched.
script = load_script(ROOT / "scripts" / "setup1.json")
demo, truth = generate(script)
print(f"{len(demo)} samples at {demo.rate_hz:g} Hz, channels {demo.q_names} / {demo.w_names}")
print("scripted boundaries", truth.boundary_times, "contacts", truth.contact_times)

# Position clustering alone: BIC picks the component count, each component
# yields one candidate interval.
result = segment_demonstration(demo)
print(f"\nGMM: k={result.gmm.k}")
for iv in candidate_intervals(result.gmm):
    print(f"  [{iv.t_b1:6.3f}, {iv.t_b2:6.3f}]")
print("initial points", [round(p.t, 3) for p in result.initial])

# Force-based points come from peaks of the normalized prediction error.
print(f"\nthreshold {result.threshold:.1f}")
for p in result.force_points:
    print(f"  force peak at {p.t:.3f} s, strength {p.strength:.0f}")

# Fusion: force points replace nearby position points.
print("\nplan")
for i, s in enumerate(result.plan.segments):
    extra = f", stop above {s.force_threshold:.2f} N" if s.is_contact else ""
    print(f"  {i}: {s.t_start:6.3f} -> {s.t_end:6.3f}  {s.label}{extra}")

# Replay against a simulated robot with the two walls from the script.
cfg = RunConfig({"sim.walls": [w.to_dict() for w in truth.walls]})
models, trace = replay(demo, result.plan, cfg)
print("\nreplay")
for e in trace.events:
    if e["type"] == "Completed":
        print(f"  segment {e['segment']} done after {e['duration']:.3f} s ({e['reason']})")
    elif e["type"] == "Skipped":
        print(f"  segment {e['segment']} skipped (idle)")
final = np.asarray(trace.y[-1])
print("final position", np.round(final, 4))
