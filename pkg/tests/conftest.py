import numpy as np
import pytest
import sympy as sp

from geoshape.geometry import Chart, MetricField


def pytest_report_header(config):
    from geoshape import BACKEND

    return f"geoshape kernel backend: {BACKEND}"


def symbolic_christoffel(G, syms):
    """Levi-Civita symbols ``out[k][i][j]`` by symbolic differentiation."""
    n = len(syms)
    Ginv = G.inv()
    return [[[sp.simplify(sum(Ginv[k, l] * (sp.diff(G[j, l], syms[i]) + sp.diff(G[i, l], syms[j])
                                             - sp.diff(G[i, j], syms[l])) for l in range(n)) / 2)
              for j in range(n)] for i in range(n)] for k in range(n)]


def symbolic_metric_field(G, syms, chart=None, analytic=True):
    """Numeric MetricField from a sympy matrix, with or without derivatives."""
    n = len(syms)
    chart = chart or Chart.euclidean(n)
    f = sp.lambdify([syms], G, "numpy")
    dG = [[[sp.diff(G[i, j], syms[k]) for j in range(n)] for i in range(n)] for k in range(n)]
    df = sp.lambdify([syms], dG, "numpy")
    return MetricField(chart, lambda q: np.array(f(q), dtype=float),
                       (lambda q: np.array(df(q), dtype=float)) if analytic else None)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
