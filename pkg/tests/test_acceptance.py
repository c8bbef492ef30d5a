"""End-to-end acceptance checks.

Each test prints a ``PASS``/``FAIL`` line and records it for the terminal
summary, so ``pytest tests/test_acceptance.py`` ends with one line per check.
The training-based checks use the default ``TrainConfig`` and master seed 0.
"""

import time

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import ACCEPTANCE_LOG
from hampinn import cli, dataio, experiments, nn, pauli, sim, trainer
from hampinn.experiments import SweepConfig
from hampinn.trainer import TrainConfig

pytestmark = pytest.mark.acceptance

MASTER_SEED = 0

_SIGMA = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]),
          np.diag([1.0, -1.0])]
_STRINGS = [np.kron(_SIGMA[k], _SIGMA[l]) for k in range(4) for l in range(4)]


def record(name, ok, detail):
    ACCEPTANCE_LOG.append((name, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


def median_mae(report, i=0):
    return report["points"][i]["stats"]["median"]


def sweep(preset, kind, values, trials, n_points=5, sigma=0.0):
    return experiments.run_sweep(SweepConfig(preset, kind, values, n_points=n_points,
                                             sigma=sigma, trials=trials, seed=MASTER_SEED))


def test_01_commutator_expansion():
    start = time.perf_counter()
    worst = 0.0
    for a in range(16):
        for b in range(16):
            Pa, Pb = _STRINGS[a], _STRINGS[b]
            target = 1j * (Pa @ Pb - Pb @ Pa)
            rebuilt = np.zeros((4, 4), dtype=complex)
            for idx, coeff in pauli.commutator_expansion(divmod(a, 4), divmod(b, 4)):
                rebuilt += coeff * _STRINGS[4 * idx.k + idx.l]
            worst = max(worst, np.max(np.abs(rebuilt - target)))
    elapsed = time.perf_counter() - start
    record("01 algebra", worst <= 1e-12 and elapsed < 1.0,
           f"max dev {worst:.2e} over 256 pairs (incl. identity), {elapsed:.3f}s")


def _density_route(J, rho0, times):
    # independent route: kron-built H, scipy expm, traces against Pauli strings
    H = -0.5 * sum(J[k, l] * _STRINGS[4 * k + l] for k in range(4) for l in range(4))
    out = []
    for t in times:
        U = expm(-1j * H * t)
        rho = U @ rho0 @ U.conj().T
        out.append([np.trace(rho @ P).real for P in _STRINGS[1:]])
    return np.array(out)


@pytest.fixture(scope="module")
def evolution_runs():
    rng = np.random.default_rng(MASTER_SEED)
    times = np.linspace(0, 1, 10)
    start = time.perf_counter()
    dev, drift = 0.0, 0.0
    for _ in range(100):
        J = rng.uniform(-2 * np.pi, 2 * np.pi, (4, 4))
        J[0, 0] = 0.0
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi /= np.linalg.norm(psi)
        rho0 = np.outer(psi, psi.conj())
        v0 = np.array([np.trace(rho0 @ P).real for P in _STRINGS[1:]])
        vec = sim.evolve_exact(J, v0, times)
        dev = max(dev, np.max(np.abs(vec - _density_route(J, rho0, times))))
        drift = max(drift, np.max(np.abs(np.linalg.norm(vec, axis=1) - np.linalg.norm(v0))))
    return dev, drift, time.perf_counter() - start


def test_02_evolution_cross_check(evolution_runs):
    dev, _, elapsed = evolution_runs
    record("02 evolution", dev <= 1e-9 and elapsed < 10.0,
           f"max componentwise dev {dev:.2e}, 100 runs x 10 times, {elapsed:.2f}s")


def test_03_norm_conservation(evolution_runs):
    _, drift, _ = evolution_runs
    record("03 conservation", drift < 1e-10, f"max norm drift {drift:.2e}")


def test_04_differentiation():
    rng = np.random.default_rng(MASTER_SEED)
    start = time.perf_counter()
    worst_dt, worst_grad = 0.0, 0.0
    presets = ["z", "xyz", "general"]
    h = 1e-5
    for trial in range(50):
        model = nn.init_model(nn.DEFAULT_WIDTHS, int(rng.integers(2**31)))
        model.weights[-1] = rng.uniform(-0.5, 0.5, model.weights[-1].shape)
        model.biases[-1] = rng.uniform(-0.5, 0.5, model.biases[-1].shape)

        t = rng.uniform(0, 1, 50)
        _, dy = nn.forward_with_time_derivative(model, t)
        fd = (nn.forward(model, t + h) - nn.forward(model, t - h)) / (2 * h)
        rel = np.linalg.norm(dy - fd, axis=1) / np.linalg.norm(fd, axis=1)
        worst_dt = max(worst_dt, rel.max())

        preset = presets[trial % 3]
        J = sim.sample_couplings(int(rng.integers(2**31)), 1.0, preset, sim.MIN_ABS_FRACTION)
        ds = sim.generate_dataset(J, N=int(rng.integers(2, 21)), preset=preset)
        problem = trainer.PinnProblem(ds, TrainConfig(preset=preset, dtype="float64"))
        theta, net, j = trainer._flat_views(model, len(problem.active))
        j[:] = rng.uniform(-1, 1, j.size)
        _, _, _, g_net, g_j = problem.evaluate(net, j)
        grad = trainer._pack_grad(g_net, g_j)
        # every coupling coordinate plus a random sample of network weights
        coords = np.concatenate([np.arange(theta.size - j.size, theta.size),
                                 rng.choice(theta.size - j.size, 30, replace=False)])
        num, ana = [], []
        for k in coords:
            old = theta[k]
            theta[k] = old + h
            up = problem.evaluate(net, j, want_grad=False)[0]
            theta[k] = old - h
            down = problem.evaluate(net, j, want_grad=False)[0]
            theta[k] = old
            num.append((up - down) / (2 * h))
            ana.append(grad[k])
        num, ana = np.array(num), np.array(ana)
        worst_grad = max(worst_grad, np.linalg.norm(ana - num) / np.linalg.norm(num))
    elapsed = time.perf_counter() - start
    ok = worst_dt < 1e-6 and worst_grad < 1e-5 and elapsed < 30.0
    record("04 differentiation", ok,
           f"d/dt rel {worst_dt:.2e}, loss-gradient rel {worst_grad:.2e}, "
           f"50 configs, {elapsed:.1f}s")


def test_05_restricted_noiseless_recovery():
    start = time.perf_counter()
    medians = {p: median_mae(sweep(p, "collocation", [5], trials=20)) for p in ("z", "xyz")}
    elapsed = time.perf_counter() - start
    ok = all(m < 0.01 for m in medians.values()) and elapsed < 600
    record("05 HZ/HXYZ N=5", ok,
           f"median MAE z={medians['z']:.3%} xyz={medians['xyz']:.3%}, {elapsed:.0f}s")


def test_06_general_noiseless_recovery():
    start = time.perf_counter()
    report = sweep("general", "collocation", [5, 20], trials=10)
    m5, m20 = median_mae(report, 0), median_mae(report, 1)
    elapsed = time.perf_counter() - start
    ok = m20 < 0.02 and m5 > m20 and elapsed < 900
    record("06 GENERAL N=20", ok,
           f"median MAE N=20 {m20:.3%}, N=5 {m5:.3%}, {elapsed:.0f}s")


def test_07_general_noisy_recovery():
    start = time.perf_counter()
    m = median_mae(sweep("general", "noise", [0.01], trials=10, n_points=20))
    elapsed = time.perf_counter() - start
    record("07 GENERAL sigma=1%", m < 0.05 and elapsed < 900,
           f"median MAE {m:.3%}, {elapsed:.0f}s")


def test_08_noisy_small_n_degrades():
    m = median_mae(sweep("z", "noise", [0.1], trials=10, n_points=5))
    record("08 HZ N=5 sigma=10%", m > 0.10, f"median MAE {m:.3%}")


def test_09_ingested_csv_matches_in_memory(tmp_path):
    path = tmp_path / "data.csv"
    args = ["gen-data", "--preset", "z", "--n", "5", "--sigma", "0.01", "--seed", "5"]
    assert cli.main([*args, "--out", str(path)]) == 0

    J0 = sim.sample_couplings(experiments.derive_seed(5, 0), 1.0, "z", sim.MIN_ABS_FRACTION)
    J = sim.perturb_couplings(J0, 0.01, experiments.derive_seed(5, 1), 1.0, "z")
    memory = sim.generate_dataset(J, N=5, true_couplings=J0, sigma=0.01, preset="z", seed=5)

    config = TrainConfig(preset="z", seed=MASTER_SEED)
    from_file = trainer.fit(dataio.read_dataset(path), config)
    in_memory = trainer.fit(memory, config)
    same = (from_file.mae == in_memory.mae
            and np.array_equal(from_file.couplings, in_memory.couplings))
    record("09 CSV ingestion", same,
           f"MAE file {from_file.mae!r} vs memory {in_memory.mae!r}")


def test_10_cli_determinism(tmp_path):
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        out.mkdir()
        assert cli.main(["gen-data", "--preset", "general", "--sigma", "0.05", "--seed", "3",
                         "--out", str(out / "data.csv")]) == 0
        assert cli.main(["sweep-noise", "--preset", "z", "--n", "5", "--sigma-list",
                         "0.0,0.05", "--trials", "3", "--seed", "3", "--iterations", "300",
                         "--out", str(out / "sweep")]) == 0
        outputs.append(((out / "data.csv").read_bytes(),
                        (out / "sweep" / "raw.csv").read_bytes()))
    record("10 determinism", outputs[0] == outputs[1],
           "gen-data CSV and sweep raw CSV byte-identical across repeated runs")
