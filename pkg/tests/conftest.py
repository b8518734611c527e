import pytest


def pytest_terminal_summary(terminalreporter):
    """Print one pass/fail line per acceptance criterion after the run."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num, name, ok, detail in sorted(RESULTS):
        terminalreporter.write_line(
            f"[acceptance] criterion {num} ({name}): "
            f"{'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="session")
def shear_solution_128():
    from microstruct.pde import get_shear_solution
    return get_shear_solution(128)


@pytest.fixture(scope="session")
def shear_solution_256():
    from microstruct.pde import get_shear_solution
    return get_shear_solution(256)


@pytest.fixture(scope="session")
def strut_cell_default():
    from microstruct.cells import build_strut_cell
    return build_strut_cell(0.25, 0.1, 0.2)


@pytest.fixture(scope="session")
def strut_boundary_default():
    from microstruct.cells import build_strut_boundary_cell
    return build_strut_boundary_cell(0.25, 0.1)


@pytest.fixture(scope="session")
def small_force_construction():
    from microstruct.assembly import assemble, plan_small_force
    return assemble(plan_small_force(0.25, 1e-5, 1.0))


@pytest.fixture(scope="session")
def intermediate_construction():
    from microstruct.assembly import assemble, plan_intermediate
    return assemble(plan_intermediate(0.5, 1e-5, 1.0))


@pytest.fixture(scope="session")
def large_force_construction():
    from microstruct.assembly import assemble, plan_large_force
    return assemble(plan_large_force(1.0 - 1.0 / 128.0, 1e-6, 1.0, pde_n=256))


@pytest.fixture(scope="session")
def block_construction():
    from microstruct.assembly import assemble, plan_block
    return assemble(plan_block(0.9, 1.0))
