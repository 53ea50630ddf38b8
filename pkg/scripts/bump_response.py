"""Half-car response to a half-sine speed hump for both vehicle presets.

Usage: python scripts/bump_response.py [--height 0.07] [--length 0.4] [--speed 5] [--out bump]
Writes one simulation CSV per preset and prints peak heave and pitch.
"""
import argparse
from pathlib import Path

import numpy as np

from roves import halfcar


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--height", type=float, default=0.07, help="hump height (m)")
    ap.add_argument("--length", type=float, default=0.4, help="hump length along travel (m)")
    ap.add_argument("--speed", type=float, default=5.0, help="vehicle speed (m/s)")
    ap.add_argument("--duration", type=float, default=3.0, help="simulated time (s)")
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--out", default="bump", help="output directory")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(halfcar.PRESETS):
        p = halfcar.preset(name)
        bump = halfcar.BumpExcitation(args.height, args.length, args.speed, p.wheelbase, t_start=0.2)
        sim = halfcar.simulate(halfcar.HalfCarState(), bump, p, args.duration, args.dt)
        sim.to_csv(out / f"bump_{name}.csv")
        f = halfcar.natural_frequencies(p)
        th = sim.theta
        print(f"{name:6s} modes {np.round(f, 2).tolist()} Hz | peak z_s {np.abs(sim.z_s).max() * 1e3:6.2f} mm | "
              f"theta {np.degrees(th.min()):+.3f} deg at {sim.t[np.argmin(th)]:.3f} s, "
              f"{np.degrees(th.max()):+.3f} deg at {sim.t[np.argmax(th)]:.3f} s")


if __name__ == "__main__":
    main()
