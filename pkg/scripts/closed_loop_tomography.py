"""Sample subtracted thermal light through a lossy PNRD and reconstruct it with EM."""
import argparse

from photonsub.fockdist import subtracted_thermal_pmf, total_variation
from photonsub.mc import SeedSpec, pnrd_shots
from photonsub.thermo import moments
from photonsub.tomo import default_n_max, em_reconstruct, forward_matrix


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shots", type=int, default=10_000_000)
    ap.add_argument("--n-th", type=float, default=2.0)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--channels", type=int, default=8)
    ap.add_argument("--eta", type=float, default=0.6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-iters", type=int, default=1_000_000)
    args = ap.parse_args()

    truth = subtracted_thermal_pmf(args.n_th, args.m)
    hist = pnrd_shots(truth, args.shots, args.channels, args.eta, SeedSpec(args.seed))
    model = forward_matrix(args.channels, args.eta, default_n_max(args.channels, args.eta))
    res = em_reconstruct(hist, model, max_iters=args.max_iters)
    est, ref = moments(res.estimate), moments(truth)
    print(f"clicks      {hist.counts.tolist()}")
    print(f"iterations  {res.iterations} (converged: {res.converged})")
    print(f"TV          {total_variation(res.estimate, truth):.4g}")
    for name in ("mean", "fano", "g2", "mdr"):
        print(f"{name:<11} {getattr(est, name):.5f}  (theory {getattr(ref, name):.5f})")


if __name__ == "__main__":
    main()
