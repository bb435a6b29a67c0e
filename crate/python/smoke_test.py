"""Load the compiled sigma_lattice extension and exercise the main entry points.

Build first with `cargo build --release -p sigma-py`. The library path can be
overridden with SIGMA_LATTICE_LIB.
"""

import importlib.machinery
import importlib.util
import math
import os
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    default = ROOT / "target" / "release" / "libsigma_lattice.so"
    path = Path(os.environ.get("SIGMA_LATTICE_LIB", default))
    if not path.exists():
        sys.exit(f"extension not found at {path}; run `cargo build --release -p sigma-py`")
    loader = importlib.machinery.ExtensionFileLoader("sigma_lattice", str(path))
    spec = importlib.util.spec_from_file_location("sigma_lattice", path, loader=loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


def main():
    sl = load()

    s = sl.gap_continuum(1.0, 0.0)
    lo, hi = sl.continuum_mass_bounds(1.0, 0.0)
    assert lo <= s.mass <= hi, (lo, s.mass, hi)
    print(f"m* (lam=1, beta=0) = {s.mass:.12f}, residual {s.residual:.1e}")

    # ln m* falls with slope -2 pi in beta at large coupling
    b0, b1 = sl.gap_continuum(1e6, 0.1), sl.gap_continuum(1e6, 0.3)
    slope = (math.log(b1.mass) - math.log(b0.mass)) / 0.2
    assert abs(slope / (-2 * math.pi) - 1) < 1e-4, slope
    print(f"d ln m*/d beta = {slope:.6f}")

    t = sl.Torus(4.0, 16)
    model = sl.Model(1.0, 0.0, 4, t)
    print(model)

    draws = [sl.sample_gff(model.mass, t, 1, seed=7, draw=k)[0] for k in range(200)]
    var = sum(x * x for d in draws for x in d) / (200 * 256)
    exact = sl.site_variance(model.mass, t)
    assert abs(var / exact - 1) < 0.1, (var, exact)
    print(f"GFF site variance {var:.4f} vs exact {exact:.4f}")

    assert abs(sl.hermite(4, 1.0) - (-2.0)) < 1e-15
    c = 0.3
    bound = sl.action_lower_bound(c, 4, 1.0)
    floor = min(sl.wick_norm4_value(0.01 * k, c, 4) / 16 for k in range(400))
    assert floor >= bound - 1e-12, (floor, bound)

    run = sl.run_chain(model, 50, 200, seed=1)
    e, de = run["exp_minus_delta_h"]
    print(f"acceptance {run['acceptance']:.2f}, <exp(-dH)> = {e:.3f} +- {de:.3f}")
    for name, (mean, err, tau, n_eff) in run["summaries"].items():
        print(f"  {name:16s} {mean: .5f} +- {err:.5f} (tau {tau:.1f})")

    print("smoke test ok")


if __name__ == "__main__":
    main()
