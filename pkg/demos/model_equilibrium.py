"""Corank law of the alternating model: Monte Carlo, chain equilibrium and moments side by side."""

from selmerlab import ModelParams, mc_distribution
from selmerlab.chains import ChainSpec, equilibrium_closed
from selmerlab.moments import GenFnSpec, moment


def main() -> None:
    for params in (ModelParams(0), ModelParams(0, (2,)), ModelParams(0, (0, -2))):
        eq = equilibrium_closed(ChainSpec(params)).marginal(0)
        hist = mc_distribution(params, k=20, samples=50_000, seed=1)
        print(f"type {params.type} r={params.r} t={params.t}")
        for m, p in eq.items():
            if p < 1e-4:
                continue
            print(f"  m={m:2d}  equilibrium {p:.5f}  sampled {hist.marginal(0).get(m, 0) / hist.samples:.5f}")
        mean, se = hist.mean_power(1)
        print(f"  E[2^m] exact {moment(GenFnSpec(params.r, params.t), 1)}  sampled {mean:.4f} +- {se:.4f}")


if __name__ == "__main__":
    main()
