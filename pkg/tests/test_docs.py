import re
import runpy
from pathlib import Path

import pytest

from pmask.lang import elaborate, parse

ROOT = Path(__file__).resolve().parent.parent


def blocks(md, lang=""):
    return re.findall(rf"```{lang}\n(.*?)```", (ROOT / "docs" / md).read_text(), re.S)


def test_grammar_example_parses():
    src = next(b for b in blocks("grammar.md") if "module NOMINAL" in b)
    assert elaborate(parse(src)).state_count == 4


def test_tutorial_python_runs(capsys):
    (code,) = blocks("tutorial.md", "python")
    exec(code, {})
    assert capsys.readouterr().out.split() == ["False", "True", "30.0"]


@pytest.mark.parametrize("demo", sorted(p.name for p in (ROOT / "demos").glob("*.py")))
def test_demo_runs(demo, capsys):
    runpy.run_path(str(ROOT / "demos" / demo), run_name="__main__")
    assert capsys.readouterr().out
