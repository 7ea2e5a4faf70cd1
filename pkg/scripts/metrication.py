"""Relative error of the lattice Riemannian metric in an empty medium, by
connectivity, for lattice-node and off-lattice endpoints."""
import argparse
import math

import numpy as np

from fpplab import FieldSpec, ModelSpec, Rect, RiemannianSpec, build_model
from fpplab.field import FieldRealization


def errors(conn, pairs, on_lattice, rng, size=12.0):
    rs = RiemannianSpec(connectivity=conn)
    empty = FieldRealization(FieldSpec(Rect(0, size, 0, size)), np.zeros((0, 2)), np.zeros(0),
                             np.zeros(0))
    m = build_model(ModelSpec("riemannian", riemannian=rs), empty)
    c = float(rs.psi(0.0))
    hi = int((size - 1) / rs.grid_step)
    out = []
    while len(out) < pairs:
        if on_lattice:
            u, v = (tuple(rng.integers(4, hi, 2) * rs.grid_step) for _ in range(2))
        else:
            u, v = (tuple(rng.uniform(1, size - 1, 2)) for _ in range(2))
        if u != v:
            e = c * math.dist(u, v)
            out.append((m.passage_time(u, v) - e) / e)
    return np.array(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'conn':>5} {'endpoints':>12} {'median':>9} {'max':>9}")
    for conn in (8, 16):
        for on in (True, False):
            e = errors(conn, args.pairs, on, rng)
            print(f"{conn:>5} {'lattice' if on else 'off-lattice':>12} "
                  f"{np.median(e):>9.4f} {e.max():>9.4f}")


if __name__ == "__main__":
    main()
