import pytest

from svadyn.fixtures import (
    bundled_stimuli,
    generate_agreement_corpus,
    load_bundled_templates,
    load_pile_fixture_index,
    load_pile_frequencies,
    verb_lexicon,
)
from svadyn.ngram import build_index


@pytest.fixture(scope="session")
def pile_index():
    return load_pile_fixture_index()


@pytest.fixture(scope="session")
def pile_frequencies():
    return load_pile_frequencies()


@pytest.fixture(scope="session")
def templates():
    return load_bundled_templates()


@pytest.fixture(scope="session")
def lexicon(templates):
    return verb_lexicon(templates)


@pytest.fixture(scope="session")
def all_items():
    return bundled_stimuli()


@pytest.fixture(scope="session")
def items_by_id(all_items):
    return {item.id: item for item in all_items}


@pytest.fixture(scope="session")
def agreement_index(templates):
    return build_index(generate_agreement_corpus(templates, repeats=3), max_order=2)
