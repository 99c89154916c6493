"""Ratio of the two h-parameters as the twist amplitude shrinks."""

import argparse

from fiberpol.analytics import eta1, h_classical, h_new
from fiberpol.process import ExponentialLength, FiberModel, TwoPointTwist

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--beta", type=float, default=1.0)
p.add_argument("--mean-length", type=float, default=1.0)
args = p.parse_args()

print("theta_max,eta1,h_new,h_classical,ratio,bound_4theta2")
for t in (0.3, 0.1, 0.03, 0.01, 0.003):
    m = FiberModel(TwoPointTwist(t), ExponentialLength(args.mean_length))
    hn, hc = h_new(m, args.beta), h_classical(m, args.beta)
    bound = 4 * t * t / (args.mean_length**-2 + args.beta**2)
    print(f"{t},{eta1(m, args.beta):.10f},{hn:.6e},{hc:.6e},{hn / hc:.8f},{bound:.3e}")
