"""
Peak picking on the bundled normalized-error series
====================================================

The two fixture series are precomputed; only thresholding and clustering
run here.
"""

from pathlib import Path

from segflow.force_detector import detect_peaks, load_nis_csv

ROOT = Path(__file__).resolve().parents[1]

for name in ("setup1_nis.csv", "setup2_nis.csv"):
    series = load_nis_csv(ROOT / "fixtures" / name)
    peaks = detect_peaks(series, threshold=5.0, min_separation=0.5)
    print(f"{name}: {len(series.t)} samples, max {series.value.max():.3f}")
    for p in peaks:
        print(f"  {p.t:.6g} {p.strength:.3f}")

# Raising the threshold drops the weaker first contact in the first series.
series = load_nis_csv(ROOT / "fixtures" / "setup1_nis.csv")
print("threshold 10:", [(round(p.t, 3), round(p.strength, 3)) for p in detect_peaks(series, 10.0)])
