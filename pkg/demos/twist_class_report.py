"""Selmer dimensions over one twist class of y^2 = x(x - 1)(x + 3), against the model prediction."""

import itertools

from selmerlab.descent import CurveFamily, TwistClass, selmer_oracle
from selmerlab.experiments import run_density
from selmerlab.moments import class_hb_average


def main() -> None:
    fam = CurveFamily(1, -3)
    cls = TwistClass(fam, fam.sigma0, -1, (0, 0, 0))
    print(f"class q=-1 s=(0,0,0): type {cls.type}, r={cls.r}, parameter {cls.parameter}")
    print(f"average of 2^dim S: {class_hb_average(cls)}")
    for n, _ in itertools.islice(cls.members(200), 5):
        sd = selmer_oracle(fam, cls.twist(n))
        print(f"  twist by {cls.twist(n)}: dim Sel2 {sd.sel2}, essential {sd.essential}, phi {sd.phi}")
    rep = run_density(cls, 200_000)
    print(f"members below 2e5: {rep.population}, L1 to model {rep.l1_S:.4f}")
    for d, c in rep.counts_S.items():
        print(f"  dim S = {d}: {c / rep.population:.4f} (model {rep.model_S.get(d, 0.0):.4f})")


if __name__ == "__main__":
    main()
