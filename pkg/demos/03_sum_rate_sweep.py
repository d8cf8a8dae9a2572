"""
Sum rate of BD precoding with few-bit DACs
==========================================

64 transmit antennas serve 16 users with two antennas each. The sweep
compares full-resolution BD (equal loading and water-filling) with the
quantization-aware precoder at 2, 3 and 4 bits. Set ``TRIALS`` higher for
smoother curves.
"""

# %%
import os

from cqamimo import preset, run_sweep, write_results

TRIALS = int(os.environ.get("TRIALS", "20"))
scenario = preset("fig2", trials=TRIALS)
methods = ["BD-FR", "BD-FR+WF", "CQA-BD", "CQA-BD-MAAS"]

# %%
result = run_sweep(scenario, methods)
print(f"{len(result.rows)} rows in {result.runtime_ms / 1e3:.1f} s")

# %% Table: rows are SNR points, columns methods
labels = sorted({(r.method, r.bits) for r in result.rows}, key=lambda m: (m[0], m[1] or 0))
print("snr_db " + " ".join(f"{m}{'' if b is None else '@' + str(b):>16s}" for m, b in labels))
for snr in scenario.snr_db_grid:
    cells = [result.lookup(snr, m, b).mean_rate for m, b in labels]
    print(f"{snr:6.1f} " + " ".join(f"{c:16.2f}" for c in cells))

# %% Keep the numbers for plotting elsewhere
write_results(result, os.path.join(os.environ.get("CQAMIMO_OUTPUT_DIR", "."), "fig2.csv"))
