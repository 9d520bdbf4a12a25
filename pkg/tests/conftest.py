import random

import pytest

from stancelab.corpus import PaperRecord


def make_paper(
    id="p1",
    title="A Study of Things",
    year=2015,
    venue="ACL",
    domain="NLP",
    abstract="We study things and report results.",
    **kwargs,
):
    return PaperRecord(
        id=id, title=title, year=year, venue=venue, domain=domain, abstract=abstract, **kwargs
    )


@pytest.fixture
def paper_factory():
    return make_paper


WORDS = (
    "model task data results learning neural analysis corpus training "
    "evaluation method baseline language parser approach system feature "
    "embedding attention graph semantic syntax translation robust error "
    "fail limitation novel improve outperform state-of-the-art benchmark"
).split()


def synth_text(rng: random.Random, n_words: int) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(n_words))


@pytest.fixture
def synth_text_factory():
    return synth_text
