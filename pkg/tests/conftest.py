import pytest

from cascadesim.catalog import default_catalog
from cascadesim.profiler import profile_config
from cascadesim.workload import gen_prompts


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def small_prompts():
    return gen_prompts(160, seed=42)


@pytest.fixture(scope="session")
def small_table(catalog, small_prompts):
    # small but real: every planner test that needs an actual frontier uses this
    return profile_config(catalog, small_prompts, seed=42)
