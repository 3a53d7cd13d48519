#!/usr/bin/env python3
"""Platoon reachability: refined vs unrefined bounds and runtime scaling.

For each platoon size, integrates the lifted embedding system with and
without the sampling refinement, reports final base bound sizes, wallclock
times, and obstacle clearance verdicts.
"""

import argparse
import statistics
from pathlib import Path

from liftreach import bound_size, platoon, subspace_sample_matrix, trajectory_to_csv
from liftreach.embedding import EmbeddingState, integrate
from liftreach.exprgraph import build_lifted
from liftreach.intervals import interval_hull_matvec
from liftreach.models import check_obstacle_clearance
from liftreach.refinement import IdentityRefiner, SamplingRefiner


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[3, 6, 9, 12])
    ap.add_argument("--samples", type=int, default=10, help="angle samples s")
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--feedforward", type=Path, default=None,
                    help="optional t,u_x,u_y CSV")
    ap.add_argument("--output", type=Path, default=Path("out/platoon"))
    args = ap.parse_args()
    args.output.mkdir(parents=True, exist_ok=True)

    rows = []
    for P in args.sizes:
        spec = platoon(P=P, feedforward=args.feedforward)
        g = build_lifted(spec.sys, spec.lift)
        y0b = interval_hull_matvec(spec.lift.H, spec.x0box)
        y0 = EmbeddingState(y0b.lo, y0b.hi)
        A = subspace_sample_matrix(spec.lift, args.samples)
        for label, refiner in (
            ("none", IdentityRefiner()),
            ("sampling", SamplingRefiner(A)),
        ):
            times, final, verdicts = [], None, None
            for rep in range(args.repeat):
                traj = integrate(
                    g, refiner, y0, wbox=spec.wbox, thetabox=spec.thetabox,
                    t_final=spec.t_final, dt=spec.dt, method="euler",
                )
                times.append(traj.stats.wallclock_s)
                final = bound_size(traj.final, spec.sys.n, "base")
                if rep == 0:
                    verdicts = check_obstacle_clearance(traj, spec.safety)
                    trajectory_to_csv(traj, args.output / f"platoon_P{P}_{label}.csv")
            mean = statistics.fmean(times)
            std = statistics.pstdev(times) if len(times) > 1 else 0.0
            n_safe = sum(v.safe for v in verdicts)
            rows.append((P, label, mean, std, final, n_safe, len(verdicts)))
            print(f"P={P:2d} {label:8s} time {mean:8.3f} +/- {std:.3f} s  "
                  f"final {final:12.3f}  clear {n_safe}/{len(verdicts)} agents")

    with open(args.output / "scaling.csv", "w") as fh:
        fh.write("P,refinement,mean_time_s,std_time_s,"
                 "final_bound_size_base,agents_clear,agents_total\n")
        for P, label, mean, std, final, n_safe, total in rows:
            fh.write(f"{P},{label},{mean:.17g},{std:.17g},"
                     f"{final:.17g},{n_safe},{total}\n")
    print(f"wrote {args.output / 'scaling.csv'}")


if __name__ == "__main__":
    main()
