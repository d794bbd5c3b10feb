"""
From per-case metrics to a final leaderboard
============================================
"""

import numpy as np

from segaeval.ranking import TeamRecord, build_leaderboard

rng = np.random.default_rng(0)
records = [
    TeamRecord("steady", dsc_values=rng.normal(0.92, 0.01, 30), hd_values=rng.normal(4, 0.5, 30),
               p_var=0.8, p_inter=0.05, mean_runtime_s=40.0),
    TeamRecord("sharp", dsc_values=rng.normal(0.94, 0.04, 30), hd_values=rng.normal(3, 2.0, 30),
               p_var=0.4, p_inter=0.20, mean_runtime_s=90.0),
    TeamRecord("crashed", dsc_values=rng.normal(0.90, 0.02, 30), hd_values=rng.normal(5, 1, 30),
               p_var=0.6, p_inter=0.10, nr_flag=True),
]
board = build_leaderboard(records)
print(" ".join(f"{c:>8s}" for c in board.COLUMNS))
for row in board.table():
    print(" ".join(f"{v[:8]:>8s}" for v in row))
