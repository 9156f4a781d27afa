import numpy as np
import pytest

from efalrt.lrt import hd_calibration_t0, no_factor_statistic
from efalrt.sampler import GeneratorSpec, sample

# one seed for every Monte Carlo check, fixed before any run
ACCEPTANCE_SEED = 20211

ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Criterion id -> (passed, detail lines); printed in the terminal summary."""
    return request.config.stash[ACCEPTANCE_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE_KEY, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(log):
        passed, details = log[cid]
        terminalreporter.write_line(f"criterion {cid}: {'PASS' if passed else 'FAIL'}")
        for line in details:
            terminalreporter.write_line(f"    {line}")


def random_spd(rng, p, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    eig = np.exp(rng.uniform(0, np.log(cond), size=p))
    m = (q * eig) @ q.T
    return (m + m.T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def hd_standardized_t0():
    """(T0 + n mu) / (n sigma) over 1000 N(0, I) datasets at N=2000, p=500."""
    N, p, reps = 2000, 500, 1000
    spec = GeneratorSpec("iid-normal", seed=ACCEPTANCE_SEED)
    hd = hd_calibration_t0(N, p)
    t0 = np.array([no_factor_statistic(sample(spec.with_stream((N, p, r)), N, p)) for r in range(reps)])
    return (t0 + hd.n * hd.mu) / (hd.n * hd.sigma)


H00_EPSILONS = ("8/24", "10/24", "12/24", "14/24", "18/24", "20/24", "22/24")


def h00_config(generator="iid-normal", **extra):
    from efalrt.simulation import SimConfig

    return SimConfig(
        experiment="typeI-h00", generator=generator, N_list=(1000,), epsilon_list=H00_EPSILONS,
        replications=1000, alpha=0.05, corrections=("none", "bartlett"), calibrations=("chisq",),
        seed=ACCEPTANCE_SEED, **extra,
    )


@pytest.fixture(scope="session")
def h00_grid():
    """T0 type I error grid at N=1000 under N(0, I) data, both corrections."""
    from efalrt.simulation import run_type1_grid

    return run_type1_grid(h00_config())
