import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esplab.activations import ActivationSpec, ConfigurationError
from esplab.analysis import codebook_stats
from esplab.esp_harness import (
    EspTestSpec,
    StateBudgetExceeded,
    SymbolTrace,
    check_collision_bound,
    detect_symbol_lock,
    enumerate_quantized_attractors,
    estimate_decay_rate,
    fading_memory_probe,
    run_pair,
    verify_post_lock_contraction,
    write_result_json,
    write_trace_csv,
)
from esplab.reservoir import ReservoirConfig, ReservoirMatrices


def _spec(family="tanh", n=50, rho=0.95, leak=0.7, **kw):
    return EspTestSpec(ReservoirConfig(n=n, rho_target=rho, leak=leak), ActivationSpec.of(family), **kw)


def test_decay_rate_of_exact_geometric_series():
    d = 5.0 * 0.3 ** np.arange(25)
    assert estimate_decay_rate(d) == pytest.approx(math.log(0.3), rel=1e-12)
    assert estimate_decay_rate(d[:5]) is None


def test_run_pair_shapes_and_convergence_rule():
    r = run_pair(_spec(), 0)
    assert r.distances.shape == (201,)
    assert r.distances[0] > 0 and r.horizon == 200
    assert r.converged
    t = r.convergence_time
    assert r.distances[t] < 0.1 and np.all(r.distances[:t] >= 0.1)
    assert r.decay_rate < 0


def test_initial_gap_uses_scaled_random_state():
    r = run_pair(_spec(n=30), 3)
    assert r.distances_inf[0] == pytest.approx(2.0)


def test_run_pair_deterministic():
    a, b = run_pair(_spec("cantor-function"), 7), run_pair(_spec("cantor-function"), 7)
    assert np.array_equal(a.distances, b.distances)
    assert not np.array_equal(a.distances, run_pair(_spec("cantor-function"), 8).distances)


def test_threshold_is_strict():
    m = ReservoirMatrices.from_arrays([[0.0]], [0.0])
    # zero activation: d_t = 0.5^t * 0.2 hits exactly 0.1 at t = 1 and 0.05 at t = 2
    spec = _spec("relu", n=1, leak=0.5)
    r = run_pair(spec, 0, matrices=m, inputs=np.zeros(10), x0_first=[0.0], x0_second=[-0.2])
    assert r.distances[1] == 0.1
    assert r.convergence_time == 2


def test_extension_only_when_unconverged():
    spec = _spec("weierstrass", extend=True, horizon=50, extended_horizon=120)
    r = run_pair(spec, 0)
    if r.converged and r.convergence_time <= 50:
        assert not r.extended and r.horizon == 50
    else:
        assert r.extended and r.horizon == 120
    r2 = run_pair(_spec("tanh", extend=True, horizon=100, extended_horizon=400), 0)
    assert r2.converged and not r2.extended and r2.distances.size == 101


def test_divergence_recorded_not_raised():
    spec = _spec("relu", n=20, rho=50.0, leak=1.0)
    r = run_pair(spec, 0, x0_second=np.full(20, 1e300))
    assert r.diverged and math.isinf(r.final_distance)
    assert r.to_record()["final_distance"] == "inf"
    json.dumps(r.to_record())


def test_symbol_lock_fixture():
    first = np.array([[0, 1], [1, 1], [0, 0], [0, 0]], dtype=float)
    second = np.array([[1, 1], [1, 0], [0, 0], [0, 0]], dtype=float)
    assert detect_symbol_lock(SymbolTrace(first, second, t0=1)) == 3
    assert detect_symbol_lock(SymbolTrace(first, first, t0=1)) == 1
    assert detect_symbol_lock(SymbolTrace(first[::-1], second[::-1], t0=1)) is None
    with pytest.raises(ConfigurationError):
        detect_symbol_lock(SymbolTrace(first, second), ActivationSpec.of("tanh"))


def test_online_lock_time_matches_trace():
    spec = _spec("mandelbrot-discrete", n=60, rho=0.95)
    r = run_pair(spec, 1, keep_trace=True)
    assert r.trace is not None
    assert r.symbol_lock_time == detect_symbol_lock(r.trace)


@given(st.integers(0, 10_000), st.sampled_from([0.3, 0.5, 0.7, 1.0]))
@settings(max_examples=25, deadline=None)
def test_post_lock_geometry_and_collision_bound(seed, leak):
    spec = _spec("cantor-set", n=30, rho=0.9, leak=leak, horizon=80)
    r = run_pair(spec, seed, keep_trace=True)
    d_l = codebook_stats(spec.activation.codebook).d_l
    assert check_collision_bound(r, r.trace, leak, d_l)
    if r.symbol_lock_time is not None:
        assert verify_post_lock_contraction(r, r.trace, leak)


def test_post_lock_check_rejects_tampered_distances():
    spec = _spec("cantor-set", n=30, rho=0.9, leak=0.5)
    r = run_pair(spec, 0, keep_trace=True)
    assert r.symbol_lock_time is not None
    r.distances = r.distances.copy()
    r.distances[r.symbol_lock_time + 1] *= 1.01
    assert not verify_post_lock_contraction(r, r.trace, 0.5)


def test_fading_memory_probe():
    spec = _spec("tanh", n=50, horizon=100)
    gap = fading_memory_probe(spec, 10, 0)
    assert gap[0] > 0 and gap[-1] < 1e-6
    assert np.all(fading_memory_probe(spec, 10, 0, perturb=False) == 0)


def _cantor_set_fixture(w):
    # f(0) = 0 (sigmoid 0.5 has middle-third digit), f(-50) = 1 (sigmoid ~ 0)
    return ReservoirMatrices.from_arrays(w, np.zeros(len(w))), ActivationSpec.of("cantor-set")


def test_attractors_two_fixed_points():
    m, spec = _cantor_set_fixture([[-50.0]])
    rep = enumerate_quantized_attractors(m, spec, np.zeros(1))
    assert rep.n_cycles == 2 and not rep.unique
    assert sorted(float(c[0][0]) for c in rep.cycles) == [0.0, 1.0]
    assert rep.basin_counts == [1, 1]


def test_attractors_unique_cycle():
    m, spec = _cantor_set_fixture([[0.0, 0.0], [-50.0, 0.0]])
    rep = enumerate_quantized_attractors(m, spec, np.zeros(1))
    assert rep.unique and rep.n_cycles == 1
    assert sum(rep.basin_counts) == 4
    assert max(rep.transients) <= 2**2


def test_attractor_budget_and_codebook_checks():
    m, spec = _cantor_set_fixture([[-50.0]])
    with pytest.raises(StateBudgetExceeded) as info:
        enumerate_quantized_attractors(m, spec, np.zeros(1), max_states=0)
    assert info.value.partial is not None
    with pytest.raises(ConfigurationError):
        enumerate_quantized_attractors(m, ActivationSpec.of("tanh"), np.zeros(1))


def test_exports(tmp_path):
    r = run_pair(_spec(n=10, horizon=20), 0)
    lines = write_trace_csv(r, tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,distance" and len(lines) == 22
    doc = json.loads(write_result_json(r, tmp_path / "r.json", trial=0).read_text())
    assert doc["trial"] == 0 and len(doc["distances"]) == 21


def test_spec_validation():
    with pytest.raises(ValueError):
        _spec(threshold=0.0)
    with pytest.raises(ValueError):
        _spec(horizon=300, extended_horizon=200)
