import numpy as np
import pytest


def central_diff(f, x, eps):
    """Gradient of scalar ``f`` at array ``x`` by central differences."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2 * eps)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(rng, max_B=5, max_d=3, max_dy=2, max_n=8, max_dx=3):
    """Small random (y, x, alpha, net, basis) tuple for derivative checks."""
    from nkc.kernel_basis import KernelBasis
    from nkc.mlp import Mlp

    B, d = int(rng.integers(1, max_B + 1)), int(rng.integers(1, max_d + 1))
    d_y, n, d_x = int(rng.integers(1, max_dy + 1)), int(rng.integers(1, max_n + 1)), int(rng.integers(1, max_dx + 1))
    basis = KernelBasis(rng.normal(size=(B, d_y)), float(rng.uniform(0.5, 2.0)))
    net = Mlp.init(int(rng.integers(1 << 30)), [d_x, 4, 3, d], "relu" if rng.random() < 0.3 else "linear")
    for b in net.biases:
        b += rng.normal(scale=0.3, size=b.shape)
    alpha = rng.normal(size=(d, basis.n_features))
    return rng.normal(size=(n, d_y)), rng.normal(size=(n, d_x)), alpha, net, basis


def gradient_rel_err(y, x, alpha, net, basis, l2=0.0, eps=1e-6):
    """Max-norm relative error of analytic vs central-difference gradients of the objective."""
    from nkc.mlp import flatten
    from nkc.objective import objective_gradients, objective_value

    ga, gt, _ = objective_gradients(y, x, alpha, net, basis, l2)
    fa = central_diff(lambda a: objective_value(y, x, a, net, basis, l2), alpha, eps)
    theta = net.get_flat()

    def f_theta(th):
        probe = net.copy()
        probe.set_flat(th)
        return objective_value(y, x, alpha, probe, basis, l2)

    ft = central_diff(f_theta, theta, eps)
    analytic = np.concatenate([ga.ravel(), flatten(gt)])
    numeric = np.concatenate([fa.ravel(), ft])
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-12))


ACCEPTANCE_LINES = []


def record(criterion: int, passed: bool, detail: str) -> bool:
    """Collect one PASS/FAIL line for the end-of-run acceptance summary."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append((criterion, line))
    print(line)
    return passed


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance experiment")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES, key=lambda item: item[0]):
            terminalreporter.write_line(line)
