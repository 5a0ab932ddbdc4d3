import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from statiocl import numcore as nc

settings.register_profile("pkg", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


def central_difference(f, arrays, h=1e-6, coords=None):
    """Central differences of scalar ``f(*arrays)`` w.r.t. every (or selected) coordinate.

    Returns a list of gradient arrays and, per array, a boolean mask of
    coordinates where the one-sided slopes disagree (a kink in reach of h).
    """
    grads, kinks = [], []
    base = f(*arrays)
    for k, arr in enumerate(arrays):
        g = np.zeros_like(arr)
        kink = np.zeros(arr.shape, dtype=bool)
        flat_idx = range(arr.size) if coords is None or coords[k] is None else coords[k]
        for i in flat_idx:
            idx = np.unravel_index(i, arr.shape)
            old = arr[idx]
            arr[idx] = old + h
            fp = f(*arrays)
            arr[idx] = old - h
            fm = f(*arrays)
            arr[idx] = old
            g[idx] = (fp - fm) / (2 * h)
            right, left = (fp - base) / h, (base - fm) / h
            kink[idx] = abs(right - left) > 1e-3 * max(abs(right), abs(left), 1e-4)
        grads.append(g)
        kinks.append(kink)
    return grads, kinks


def analytic_grads(fn, arrays):
    leaves = [nc.Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*leaves)
    nc.backward(out)
    return [np.zeros_like(a) if t.grad is None else t.grad for a, t in zip(arrays, leaves)]


def relative_error(analytic, numeric, mask=None):
    a = np.concatenate([x.ravel() for x in analytic])
    n = np.concatenate([x.ravel() for x in numeric])
    if mask is not None:
        keep = ~np.concatenate([m.ravel() for m in mask])
        a, n = a[keep], n[keep]
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(n), np.linalg.norm(a), 1e-12))


def op_gradcheck(fn, arrays, rng, h=1e-6):
    """Relative gradient error of ``fn`` (Tensors -> Tensor) after a random linear readout."""
    with nc.no_grad():
        out_shape = fn(*[nc.Tensor(a) for a in arrays]).shape
    weights = rng.normal(size=out_shape)

    def scalar(*ts):
        return nc.sum(fn(*ts) * weights)

    def value(*arrs):
        with nc.no_grad():
            return scalar(*[nc.Tensor(a) for a in arrs]).item()

    analytic = analytic_grads(scalar, arrays)
    numeric, _ = central_difference(value, [a.copy() for a in arrays], h)
    return relative_error(analytic, numeric)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def report_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
