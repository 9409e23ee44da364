"""Compare the compiled and numpy kernel backends on the optimizer's hot path.

    python benchmarks/bench_kernels.py [--duration-us 100] [--repeat 3]

Times one objective-sized propagation (state vector, noiseless), one density
propagation with dephasing, and the CRAB sampler, for each available backend.
"""

import argparse
import time

import numpy as np

from crabchip import backend
from crabchip.pulse import CrabPulse
from crabchip.spin_system import DEFAULT_F_BAR, SystemParams
from crabchip.states import initial_state


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--duration-us", type=float, default=100.0)
    parser.add_argument("--step-ns", type=float, default=2.0)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    duration = args.duration_us * 1e-6
    n_steps = int(round(duration / (args.step_ns * 1e-9)))
    h = duration / n_steps
    rng = np.random.default_rng(0)
    pulse = CrabPulse(DEFAULT_F_BAR, duration, 0.02 * (rng.normal(size=7) + 1j * rng.normal(size=7)))
    system = SystemParams(dephasing_rate=2 * np.pi * 200)
    levels, couplings = system.level_energies, system.couplings()
    psi0 = np.zeros(5, dtype=complex)
    psi0[0] = 1

    print(f"{n_steps} RK4 steps of {h * 1e9:.2f} ns; best of {args.repeat}")
    results = {}
    for name in backend.available():
        k = backend.load(name)
        fgrid = k.crab_samples(pulse.f0, pulse.a0, pulse.coefficients.copy(), duration, h / 2, 2 * n_steps + 1)
        results[name] = {
            "crab_samples": best_of(lambda: k.crab_samples(pulse.f0, pulse.a0, pulse.coefficients.copy(),
                                                          duration, h / 2, 2 * n_steps + 1), args.repeat),
            "rk4_state": best_of(lambda: k.rk4_state(psi0, levels, couplings, fgrid, h), args.repeat),
            "rk4_density": best_of(lambda: k.rk4_density(initial_state(), levels, couplings, fgrid, h,
                                                         system.dephasing_rate, n_steps), args.repeat),
        }
    names = list(results)
    print(f"{'kernel':<14}" + "".join(f"{n + ' [ms]':>16}" for n in names)
          + ("   speedup" if len(names) == 2 else ""))
    for kernel in ("crab_samples", "rk4_state", "rk4_density"):
        row = f"{kernel:<14}" + "".join(f"{results[n][kernel] * 1e3:>16.2f}" for n in names)
        if len(names) == 2:
            row += f"{results['python'][kernel] / results['cython'][kernel]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
