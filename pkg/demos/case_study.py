"""Self-stabilising mutation model: hosts attracted to the population mean with strength gamma.

Runs the N-scaled host system to time T and prints a coarse text histogram next to the
Beta(2 theta0 (1 + gamma/theta), 2 theta1 (1 + gamma/theta)) density it should approach.
Use ``wfsim run case-study`` for the full 10^5-sample version with CSV output.
"""

import numpy as np
from scipy import stats as sps

from wfsim import diffusion

for gamma in (0.0, 3.0):
    case = diffusion.CaseStudyParams(0.8, 0.6, gamma)
    run = diffusion.case_study_particle_run(case, N=300, reps=30_000, T=5.0, master_seed=5)
    beta = sps.beta(*case.shapes)
    print(f"\ngamma = {gamma:g}: mean {run.mean:.4f} (target {case.m:.4f}), variance {run.variance:.4f}, W1 to Beta {run.w1:.4f}")
    counts, edges = np.histogram(run.samples, bins=10, range=(0, 1))
    expected = np.diff(beta.cdf(edges)) * run.samples.size
    for lo, c, e in zip(edges[:-1], counts, expected):
        print(f"  [{lo:.1f}, {lo + 0.1:.1f})  {'#' * int(60 * c / counts.max()):<60} {c:6d}  (Beta {e:8.0f})")
