"""Acceptance gate: one verdict line per criterion part, printed in the session summary.

Counts are desk scale (20 trials, 3 seeds) unless a criterion names its own.
"""

import time

import numpy as np
import pytest

from conftest import VERDICTS
from esplab.activations import ActivationSpec, BrownianParams, WeierstrassParams
from esplab.analysis import codebook_stats, effective_gain, estimate_lipschitz
from esplab.esp_harness import (
    EspTestSpec,
    check_collision_bound,
    enumerate_quantized_attractors,
    run_pair,
    verify_post_lock_contraction,
)
from esplab.reservoir import (
    ReservoirConfig,
    ReservoirMatrices,
    build_reservoir,
    gen_inputs,
    init_state,
    simulate,
)
from esplab.sweep import SweepGrid, emit, extreme_rho_run, run_sweep, scaling_run


class Verdict:
    def __init__(self, label, budget_s, shared_s=0.0):
        # shared_s: this part's share of a fixture run before the block
        self.label, self.budget, self.shared = label, budget_s, shared_s

    def __enter__(self):
        self.t0 = time.perf_counter() - self.shared
        return self

    def check(self, ok, detail):
        elapsed = time.perf_counter() - self.t0
        in_time = elapsed < self.budget
        status = "PASS" if ok and in_time else "FAIL"
        timing = f"{elapsed:.1f}s/{self.budget:g}s"
        VERDICTS.append(f"{status}  {self.label:38s} {detail}  [{timing}]")
        assert ok, detail
        assert in_time, f"runtime {elapsed:.1f}s over budget {self.budget}s"

    def __exit__(self, *exc):
        return False


def _frac(d, **sel):
    return d.stats(**sel).convergence_fraction


# 1 ----------------------------------------------------------------------------------


def test_c01_boundedness():
    x = np.random.default_rng(0).uniform(-10.0, 10.0, 100_000)
    limits = {
        # exact (1 - a^K) / (1 - a)^2; the rounded 3.996 is exceeded by |W(1)| itself
        "weierstrass": (-WeierstrassParams().bound - 1e-12, WeierstrassParams().bound + 1e-12),
        "logistic-sigmoid": (0.0, 0.925),
        "logistic-modulo": (0.0, 0.925),
        "mandelbrot-discrete": (0.0, 1.0),
        "mandelbrot-continuous": (0.0, 1.0),
        "cantor-function": (0.0, 1.0),
        "cantor-set": (0.0, 1.0),
        "tanh": (-1.0, 1.0),
    }
    with Verdict("1 boundedness", 10) as v:
        bad = []
        for fam, (lo, hi) in limits.items():
            y = ActivationSpec.of(fam)(x)
            strict_hi = fam.startswith("logistic")
            if y.min() < lo or (y.max() >= hi if strict_hi else y.max() > hi):
                bad.append(f"{fam} range [{y.min():.6g}, {y.max():.6g}]")
        p = BrownianParams()
        yb = ActivationSpec.of("brownian")(x, np.random.default_rng(1))
        if np.max(np.abs(yb)) > p.eta * (1 + 3 * np.sqrt(p.dt)):
            bad.append(f"brownian max {np.max(np.abs(yb)):.6g}")
        w = np.abs(ActivationSpec.of("weierstrass")(x)).max()
        v.check(not bad, "; ".join(bad) or f"{len(limits) + 1} families within bounds, max |weierstrass| {w:.8f}")


# 2 ----------------------------------------------------------------------------------


def test_c02_absorbing_set():
    with Verdict("2 absorbing set, cantor rho=100", 5) as v:
        n = 100
        m = build_reservoir(ReservoirConfig(n=n, rho_target=100.0, seed=0))
        u = gen_inputs("gaussian", 200, seed=0)
        spec = ActivationSpec.of("cantor-function")
        worst = 0.0
        for s in range(5):
            tr = simulate(init_state("random_scaled", n, s), u, m, spec, 0.7)
            worst = max(worst, float(np.max(np.abs(tr.states))))
        v.check(worst <= 2.0 + 1e-9, f"max sup-norm {worst:.12g}")


# 3 ----------------------------------------------------------------------------------


def test_c03_spectral_scaling():
    with Verdict("3 spectral scaling", 60) as v:
        errs = []
        for n in (100, 500):
            for rho in (0.95, 10.0, 100.0):
                m = build_reservoir(ReservoirConfig(n=n, rho_target=rho, seed=0))
                errs.append(abs(m.achieved_rho - rho) / rho)
        v.check(max(errs) < 1e-5, f"worst relative error {max(errs):.2e}")


# 4, 5 -------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def n500():
    t0 = time.perf_counter()
    d = scaling_run(["tanh", "relu", "cantor-function", "logistic-sigmoid"], [500], trials=50)
    return d, (time.perf_counter() - t0) / 2  # two criteria share the run


def test_c04_baseline_convergence(n500):
    d, share = n500
    for fam in ("tanh", "relu"):
        with Verdict(f"4 baseline convergence, {fam}", 120, share) as v:
            st = d.stats(activation=fam)
            ok = st.convergence_fraction == 1.0 and abs(st.median_convergence_time - 15) <= 8
            v.check(ok, f"fraction {st.convergence_fraction:.3f}, median t {st.median_convergence_time}")


def test_c05_fast_fractal_convergence(n500):
    d, share = n500
    for fam in ("cantor-function", "logistic-sigmoid"):
        with Verdict(f"5 fast convergence, {fam}", 120, share) as v:
            st = d.stats(activation=fam)
            ok = st.convergence_fraction == 1.0 and abs(st.median_convergence_time - 6) <= 4
            v.check(ok, f"fraction {st.convergence_fraction:.3f}, median t {st.median_convergence_time}")
    with Verdict("5 speed-up tanh / cantor", 1) as v:
        ratio = d.stats(activation="tanh").median_convergence_time / d.stats(
            activation="cantor-function").median_convergence_time
        v.check(ratio >= 1.8, f"median ratio {ratio:.2f}")


# 6 ----------------------------------------------------------------------------------


@pytest.mark.parametrize(
    "family, n, limit",
    [("weierstrass", 50, 0.05), ("brownian", 10, 0.10), ("logistic-modulo", 50, 0.05)],
)
def test_c06_failure_reproduction(family, n, limit):
    with Verdict(f"6 failure, {family} N={n}", 60 / 3) as v:
        d = scaling_run([family], [n], trials=20, seeds=(0, 1, 2))
        st = d.stats()
        v.check(st.convergence_fraction <= limit,
                f"fraction {st.convergence_fraction:.3f} (limit {limit}), "
                f"mean final distance {st.mean_final_distance:.3g}")


# 7 ----------------------------------------------------------------------------------


def test_c07_crowding_threshold():
    with Verdict("7 crowding, mandelbrot-discrete", 20 * 60) as v:
        sizes = [100, 1000, 2000]
        disc = scaling_run(["mandelbrot-discrete"], sizes, trials=20)
        f100, f1000, f2000 = (_frac(disc, n=n) for n in sizes)
        mid = disc.stats(n=1000).mean_unconverged_final_distance
        ok = (f100 == 1.0 and 0.3 <= f1000 <= 0.9 and mid is not None and 0.05 <= mid <= 0.5
              and f2000 <= 0.1)
        mid_s = "none" if mid is None else f"{mid:.3f}"
        v.check(ok, f"fractions {f100:.2f}/{f1000:.2f}/{f2000:.2f}, unconverged distance N=1000 {mid_s}")
    with Verdict("7 crowding, mandelbrot-continuous", 20 * 60) as v:
        cont = scaling_run(["mandelbrot-continuous"], sizes, trials=20)
        fr = [_frac(cont, n=n) for n in sizes]
        v.check(all(f == 1.0 for f in fr), "fractions " + "/".join(f"{f:.2f}" for f in fr))


# 8 ----------------------------------------------------------------------------------


def test_c08_extreme_rho():
    with Verdict("8 extreme rho", 180) as v:
        c = extreme_rho_run("cantor-function", [10.0, 100.0], trials=20)
        ls = extreme_rho_run("logistic-sigmoid", [5.0], trials=20)
        c10, c100, l5 = _frac(c, rho=10.0), _frac(c, rho=100.0), _frac(ls)
        ok = c10 >= 0.9 and 0.3 <= c100 <= 0.8 and l5 >= 0.9
        v.check(ok, f"cantor rho=10 {c10:.2f}, rho=100 {c100:.2f}; logistic-sigmoid rho=5 {l5:.2f}")


# 9 ----------------------------------------------------------------------------------


def test_c09_desp_implies_esp():
    with Verdict("9 symbol lock => geometric decay", 60) as v:
        locked = geometry_ok = collision_ok = runs = 0
        configs = [
            ("cantor-set", 30, 0.9, 0.5), ("cantor-set", 50, 2.0, 0.7), ("cantor-set", 20, 0.95, 1.0),
            ("mandelbrot-discrete", 40, 0.95, 0.3), ("mandelbrot-discrete", 80, 0.95, 0.7),
        ]
        for fam, n, rho, leak in configs:
            spec = EspTestSpec(ReservoirConfig(n=n, rho_target=rho, leak=leak), ActivationSpec.of(fam))
            d_l = codebook_stats(spec.activation.codebook).d_l
            for trial in range(20):
                r = run_pair(spec, trial, keep_trace=True)
                runs += 1
                collision_ok += check_collision_bound(r, r.trace, leak, d_l)
                if r.symbol_lock_time is not None:
                    locked += 1
                    geometry_ok += verify_post_lock_contraction(r, r.trace, leak, rtol=1e-6)
        ok = locked >= 50 and geometry_ok == locked and collision_ok == runs
        v.check(ok, f"{locked} locked of {runs} runs; geometry {geometry_ok}/{locked}, "
                    f"collision bound {collision_ok}/{runs}")


# 10 ---------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def lipschitz():
    fams = ("tanh", "logistic-sigmoid", "weierstrass", "mandelbrot-continuous")
    t0 = time.perf_counter()
    out = {f: estimate_lipschitz(ActivationSpec.of(f)) for f in fams}
    return out, time.perf_counter() - t0


@pytest.mark.parametrize(
    "family, want, check",
    [
        ("tanh", "1.0 +/- 2%", lambda m: abs(m - 1.0) <= 0.02),
        ("logistic-sigmoid", "0.925 +/- 2%", lambda m: abs(m - 0.925) <= 0.02 * 0.925),
        ("weierstrass", "> 100", lambda m: m > 100),
        ("mandelbrot-continuous", "in [5, 50]", lambda m: 5 <= m <= 50),
    ],
)
def test_c10_lipschitz(lipschitz, family, want, check):
    stats, elapsed = lipschitz
    with Verdict(f"10 lipschitz, {family}", 30, elapsed) as v:
        st = stats[family]
        v.check(check(st.max), f"max {st.max:.4g} (want {want}), median {st.median:.3g}")


# 11 ---------------------------------------------------------------------------------


def test_c11_effective_gain():
    with Verdict("11 effective gain", 1) as v:
        g = effective_gain(0.7, 0.925, 0.95)
        v.check(g == 0.915125, f"gain {g!r}")


# 12 ---------------------------------------------------------------------------------


def test_c12_quantized_oracle():
    with Verdict("12 quantized attractor oracle", 5) as v:
        spec = ActivationSpec.of("cantor-set")  # k = 2, f(0) = 0, f(-50) = 1
        zero = np.zeros(1)
        two = enumerate_quantized_attractors(ReservoirMatrices.from_arrays([[-50.0]], [0.0]), spec, zero,
                                             max_states=2)
        one = enumerate_quantized_attractors(
            ReservoirMatrices.from_arrays([[0.0, 0.0], [-50.0, 0.0]], [0.0, 0.0]), spec, zero, max_states=4)
        # random N = 4 reservoirs with a constant input must close within k^N states
        closed = 0
        for seed in range(20):
            m = build_reservoir(ReservoirConfig(n=4, rho_target=3.0, density=0.5, seed=seed))
            rep = enumerate_quantized_attractors(m, spec, np.array([0.3]), max_states=2**4)
            closed += all(len(c) <= 2**4 for c in rep.cycles)
        ok = (not two.unique and two.n_cycles == 2 and one.unique and one.n_cycles == 1 and closed == 20)
        v.check(ok, f"two-cycle fixture unique={two.unique} ({two.n_cycles} cycles), "
                    f"one-cycle fixture unique={one.unique}; {closed}/20 random N=4 within 2^N states")


# 13 ---------------------------------------------------------------------------------


def test_c13_determinism(tmp_path):
    with Verdict("13 determinism across parallelism", 60) as v:
        grid = SweepGrid(rho_values=(0.9, 3.0), leak_values=(0.3, 0.7), n_values=(40,),
                         activations=("cantor-function",), trials_per_cell=5, seeds=(0, 1))
        files = {}
        for tag, par in (("a", 1), ("b", 1), ("c", 2)):
            d = run_sweep(grid, parallelism=par)
            files[tag] = [emit(d, fmt, tmp_path / f"{tag}.{fmt}").read_bytes() for fmt in ("csv", "json")]
        ok = files["a"] == files["b"] == files["c"]
        v.check(ok, f"config {grid.config_hash()[:12]}: serial, serial and 2-worker outputs identical={ok}")
