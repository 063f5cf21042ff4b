"""Regenerate data/synthetic_lineage.csv.

The shipped fixture mimics the shape of a real micro-colony growth-rate
data set: 655 observed cells over 9 generations with missing nodes, traits
near 0.037 1/min, and an asymmetric parent-child relationship (the type-1
link is decreasing).  It is produced by the package's own simulator at the
growth-rate scale, then thinned deterministically.
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from nbar.models import (  # noqa: E402
    AutoregressivePair,
    ModelSpec,
    NoiseModel,
    RootLaw,
    simulate_nbar,
)
from nbar.rng import stream_uniforms  # noqa: E402
from nbar.trees import BinaryTreeData  # noqa: E402

CENTER = 0.037
TARGET = 655
SEED = 20240917


def f0(x):
    return CENTER + 0.35 * (np.asarray(x) - CENTER)


def f1(x):
    return CENTER - 0.45 * (np.asarray(x) - CENTER)


def main() -> None:
    pair = AutoregressivePair(f0, f1, gamma=0.5, ell=CENTER * 2)
    spec = ModelSpec(pair=pair, noise=NoiseModel(0.0016, 0.0019, 0.25),
                     root=RootLaw(kind="point", x0=CENTER), name="lineage")
    tree = simulate_nbar(spec, 9, seed=SEED)
    items = list(tree.items())

    # drop ~20% of the deepest two generations, keep exactly TARGET nodes
    keep = {}
    drop_u = stream_uniforms(SEED + 1, np.arange(len(items), dtype=np.uint64))
    for (path, value), u in zip(items, drop_u):
        if len(path) >= 8 and u < 0.2:
            continue
        keep[path] = value
    surplus = len(keep) - TARGET
    if surplus < 0:
        raise SystemExit(f"thinning too aggressive: {len(keep)} nodes")
    for path in [p for p in sorted(keep, key=lambda q: (-len(q), q))][:surplus]:
        del keep[path]

    out = pathlib.Path(__file__).resolve().parents[1] / "data" / "synthetic_lineage.csv"
    out.parent.mkdir(exist_ok=True)
    BinaryTreeData.from_mapping(keep, depth=9).to_csv(out)
    print(f"wrote {out} with {len(keep)} nodes")


if __name__ == "__main__":
    main()
