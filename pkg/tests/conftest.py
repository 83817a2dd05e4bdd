import pytest

from codemill.sandbox import ResourceLimits, SandboxExecutor


@pytest.fixture(scope="session")
def executor(tmp_path_factory):
    work_root = tmp_path_factory.mktemp("sandbox-work")
    return SandboxExecutor(workers=4, work_root=work_root)


@pytest.fixture
def quick_limits():
    return ResourceLimits(wall_timeout_seconds=10.0)
