import os

# Pin BLAS threading before numpy loads: the desk-scale matrices are small
# enough that thread fan-out costs more than it saves, and a fixed thread
# configuration is part of the determinism contract.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from luxgen.corpus import Document  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_doc(i, text, language="lb", domain="web", source="fix", **meta):
    return Document(
        id=f"{source}-{i}", text=text, language=language, domain=domain, source=source,
        meta=meta,
    )


@pytest.fixture
def doc_factory():
    return make_doc
