import json
import shlex
import sys
from pathlib import Path

import pytest

from config import Config
from derivation import load_selection
from logging_config import configure_logging
from simkernel import SimParams, TargetSpec, Vec3
from store import load_model

HERE = Path(__file__).parent


@pytest.fixture(autouse=True)
def _logging():
    """Route structlog to the stderr pytest is capturing for this test"""
    configure_logging(level='WARNING')


@pytest.fixture
def reference():
    return load_model(Config.fixture_path('atr_reference.json'))


@pytest.fixture
def specific():
    return load_model(Config.fixture_path('maritime_specific.json'))


@pytest.fixture
def selection():
    return load_selection(Config.fixture_path('maritime_selection.json'))


@pytest.fixture
def survey_values():
    return json.loads(Config.fixture_path('survey_params.json').read_text(encoding='utf-8'))


@pytest.fixture
def survey():
    """Bundled survey: two targets, MCU active from t=2, threshold 3"""
    return SimParams(
        t_i=2,
        t_n=5,
        h=3,
        N0=0,
        dN=1,
        targets=(TargetSpec(j=0, s=3, wanted=True), TargetSpec(j=1, s=2, wanted=False)),
        p_desired0=Vec3(0, 0, 0),
        v_desired=Vec3(2, 0, 0),
        v_passive=Vec3(0, 1, 0),
    )


@pytest.fixture
def threshold_hook_command():
    return f"{shlex.quote(sys.executable)} {shlex.quote(str(HERE / 'threshold_hook.py'))}"


@pytest.fixture
def script_hook(tmp_path):
    """Write a throwaway Exec hook script and return its command line"""
    def make(name: str, body: str) -> str:
        path = tmp_path / name
        path.write_text(body, encoding='utf-8')
        return f"{shlex.quote(sys.executable)} {shlex.quote(str(path))}"
    return make
