import pytest

ACCEPTANCE = {
    1: "deterministic flow matches closed form, fourth-order convergence",
    2: "isospectrality of deterministic and stochastic matrix updates",
    3: "asymptotic alignment with the reference axis",
    4: "unitary variant precesses at rate mu with unchanged polar angle",
    5: "SDE ensemble reaches the canonical cos(theta) law",
    6: "angle, z and matrix schemes agree in distribution",
    7: "Fokker-Planck solver relaxes to the stationary profile",
    8: "quenched and annealed disorder averages",
    9: "3x3 frames, partition function and matrix sampler",
    10: "mean cos(theta) curve versus tau",
    11: "byte-identical CLI outputs for a fixed seed",
}

_results: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _results.setdefault(n, []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        if n not in _results:
            continue
        status = "PASS" if all(_results[n]) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {ACCEPTANCE[n]}")
