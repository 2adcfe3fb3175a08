import os

import pytest
import torch
from hypothesis import HealthCheck, settings

from facetrank.corpus import Document, PatientCase

settings.register_profile(
    "repo", max_examples=int(os.environ.get("HYPOTHESIS_EXAMPLES", "60")), deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")
torch.set_num_threads(1)


@pytest.fixture
def braf_doc():
    return Document(
        "28454296",
        "Association between BRAF V600E mutation and melanoma outcome.",
        "We studied melanoma patients. BRAF mutation status was measured! Outcomes differ?",
        ("D008545", "C535533"),
        ("melanoma", "BRAF"),
    )


@pytest.fixture
def braf_case():
    return PatientCase("1", "Melanoma", "BRAF (E586K)", "64-year-old male", ("D008545",), ("melanoma",))


@pytest.fixture(scope="session")
def toy_collection():
    from facetrank.synth import generate_synthetic

    return generate_synthetic(3, 200, 4)


def _examples(col, kind):
    from facetrank.corpus import build_training_examples

    return build_training_examples(col.topics, col.qrels, col.corpus, kind, col.mesh_names)


@pytest.fixture(scope="session")
def rel20(toy_collection):
    ex = _examples(toy_collection, "rel")
    return [e for e in ex if e.label][:10] + [e for e in ex if not e.label][:10]


@pytest.fixture(scope="session")
def ext20(toy_collection):
    return _examples(toy_collection, "ext")[:20]


@pytest.fixture(scope="session")
def abs10(toy_collection):
    return _examples(toy_collection, "abs")[:10]


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """``record(n, ok, detail)`` files one result line per criterion for the summary."""

    def record(n, ok, detail):
        _ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
