import pytest

from helsonlab.experiments import ExperimentConfig, run

# (criterion, passed, detail) in the order they ran
ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one criterion from its named sub-checks and print a single PASS/FAIL line."""

    def report(criterion: str, checks: dict[str, bool]) -> bool:
        failed = [name for name, ok in checks.items() if not ok]
        passed = not failed
        detail = f"{len(checks) - len(failed)}/{len(checks)} checks" + (f"; failed: {'; '.join(failed)}" if failed else "")
        ACCEPTANCE.append((criterion, passed, detail))
        print(f"{'PASS' if passed else 'FAIL'} {criterion} ({detail})")
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {criterion}  ({detail})")
    n_ok = sum(p for _, p, _ in ACCEPTANCE)
    terminalreporter.write_line(f"{n_ok}/{len(ACCEPTANCE)} acceptance criteria passed")


# Monte Carlo runs shared by the acceptance suite and module tests


@pytest.fixture(scope="session")
def moment_decay_run():
    cfg = ExperimentConfig("moment-decay", x_grid=[1e3, 1e4, 1e5, 1e6], q_list=[0.0, 0.5, 1.0],
                           replicas=10_000, seed=2024)
    return run(cfg)


@pytest.fixture(scope="session")
def lemma13_run():
    cfg = ExperimentConfig("lemma13", y_grid=[1e2, 1e3, 1e4], q_list=[0.0, 0.5, 1.0], replicas=1000, seed=2024,
                           eps=1e-3)
    return run(cfg)
