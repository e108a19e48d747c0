"""Sup-error of one-pass SGD against the Volterra curve as the dimension grows.

    python scripts/scaling_study.py --dims 250 500 1000 2000 --replicas 20
"""

import argparse

from hsgdlab.harness import scaling_study


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dims", type=int, nargs="+", default=[250, 500, 1000, 2000])
    p.add_argument("--replicas", type=int, default=20)
    p.add_argument("--horizon", type=float, default=2.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    rep = scaling_study({"spectrum.kind": "identity", "gamma": args.gamma, "noise_std": args.noise,
                         "seed": args.seed}, args.dims, args.replicas, args.horizon, args.seed)
    for d, m in zip(rep.dims, rep.medians):
        print(f"d={d:<6} median sup error {m:.5f}")
    print(f"fitted exponent {rep.exponent:.3f}")


if __name__ == "__main__":
    main()
