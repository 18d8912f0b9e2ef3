import io
import csv

import numpy as np
import pytest

from competing_ate.data import Dataset


def three_subject():
    """z = (1, 0, 1), cause-1 events at 1, 2, 3; no treatment column used."""
    return Dataset([1.0, 2.0, 3.0], [1, 1, 1], [0, 0, 0], [[1.0], [0.0], [1.0]], num_causes=1)


def toy_competing(n, seed, p=2, beta_a=(0.7, -0.3), beta_z=None, cens=0.4, K=2):
    """Small exponential competing-risks sample with p normal covariates."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, p))
    a = rng.integers(0, 2, size=n).astype(float)
    if beta_z is None:
        beta_z = [np.linspace(0.5, -0.5, p), np.linspace(-0.3, 0.3, p)]
    lat = []
    for k in range(K):
        rate = np.exp(beta_a[k] * a + z @ beta_z[k])
        lat.append(rng.exponential(1.0 / rate))
    lat.append(rng.exponential(1.0 / cens, size=n) if cens > 0 else np.full(n, np.inf))
    T = np.column_stack(lat)
    j = T.argmin(axis=1)
    cause = np.where(j == K, 0, j + 1)
    return Dataset(T[np.arange(n), j], cause, a, z, num_causes=K)


def toy_with_events(n, seed, min_events=3, **kw):
    """``toy_competing`` redrawn until every cause has ``min_events`` events."""
    s = seed
    while True:
        ds = toy_competing(n, s, **kw)
        if all(ds.event_count(k) >= min_events for k in range(1, ds.num_causes + 1)):
            return ds
        s += 10_000


def hodgkin_like_csv(seed=0):
    """Synthetic file with the Hodgkin-data schema: 865 rows, 616 controls, 249 treated."""
    rng = np.random.default_rng(seed)
    n0, n1 = 616, 249
    treated = np.r_[np.zeros(n0, int), np.ones(n1, int)]
    rng.shuffle(treated)
    n = n0 + n1
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "status", "chemo", "age", "male", "stage2", "mediastinum", "extranodal"])
    times = rng.permutation(np.round(rng.uniform(0.01, 30.0, n), 6) + np.arange(n) * 1e-7)
    for i in range(n):
        w.writerow([f"{times[i]:.7f}", int(rng.choice([0, 1, 2], p=[0.4, 0.35, 0.25])),
                    treated[i], f"{rng.normal(35, 15):.1f}", int(rng.random() < 0.53),
                    int(rng.random() < 0.7), rng.choice(["none", "small", "large"]),
                    int(rng.random() < 0.1)])
    return buf.getvalue().encode("utf-8")


HODGKIN_SCHEMA = {
    "time": "time", "cause": "status", "treated": "chemo",
    "categorical": {"mediastinum": {"levels": ["none", "small", "large"], "reference": "none"}},
}


@pytest.fixture
def small_ds():
    return toy_with_events(80, 1)


# one line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
