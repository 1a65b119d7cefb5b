"""Convergence of the slow-jump intensity and the weighted occupation vector
to their averaged limits on one heat-shock fiber."""

import argparse

import numpy as np

from mssa.network import heat_shock
from mssa.oracle import FiberKernel, jump_kernel, regularity_gap
from mssa.reduction import reduce_network


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--v1", type=int, default=3)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)
    args = p.parse_args()

    net = heat_shock()
    red = reduce_network(net)
    v, z = (args.v1, 0), (args.v1, 0, 0)
    lam_hat = red.rate(red.natural[0], v, args.theta)[0]
    print(f"averaged rate {lam_hat:.6f}")
    print(f"{'N':>8}{'|rho - avg|':>14}{'beta gap':>12}{'N * gap':>10}")
    for N in np.logspace(1, 5, 9):
        rho = jump_kernel(net, red, v, z, args.theta, N, args.t).rho[2]
        gap = regularity_gap(FiberKernel(red, v, args.theta, N), z, 2.0)
        print(f"{N:>8.0f}{abs(rho - lam_hat):>14.3e}{gap:>12.3e}{N * gap:>10.3f}")


if __name__ == "__main__":
    main()
