"""
Convergence studies
===================

The experiment the package exists for: sweep mesh levels, measure control
errors against the closed-form optimum, and read off the observed orders.
Cellwise constant controls converge with order one; the variational and
post-processed controls with order two (both up to logarithmic factors);
the discrete point-source field converges in L1 with order two as well.
The same sweeps are available from the command line via
`ptcontrol study`.
"""

from ptcontrol.cli import StudyConfig, run_study
from ptcontrol.error import eoc_least_squares

SWEEPS = [
    ("cellwise", (-1.0, 1.0)),
    ("cellwise", (-0.2, 0.2)),
    ("variational", (-0.2, 0.2)),
    ("postproc", (-0.2, 0.2)),
    ("greens", (-0.2, 0.2)),
]

for variant, (lower, upper) in SWEEPS:
    config = StudyConfig(variant=variant, level_min=2, level_max=5,
                         lower=lower, upper=upper)
    records = run_study(config)
    slope = eoc_least_squares([(r.h, r.error) for r in records])
    print(f"\n{variant}, bounds [{lower}, {upper}]  "
          f"(least-squares order {slope:.3f})")
    print(f"{'level':>5} {'h':>12} {'error':>14} {'eoc':>8}")
    for r in records:
        eoc = "" if r.eoc is None else f"{r.eoc:8.3f}"
        print(f"{r.level:>5} {r.h:>12.6f} {r.error:>14.6e} {eoc}")
