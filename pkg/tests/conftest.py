import pytest

from sentikit.dataio import PromptBank, PromptEntry, synth_dataset
from sentikit.taxonomy import Taxonomy, default_taxonomy


@pytest.fixture(scope="session")
def tax():
    return default_taxonomy()


@pytest.fixture(scope="session")
def tiny_tax():
    """Four fine classes across three primaries; fast to train against."""
    return Taxonomy(
        valence_clusters={"positive": ["joy"], "negative": ["sadness", "fear"]},
        primaries={
            "joy": ["optimism", "cheerfulness"],
            "sadness": ["suffering"],
            "fear": ["horror"],
        },
        synonyms={"optimism": ["positivity", "hopefulness"]},
    )


@pytest.fixture(scope="session")
def small_synth(tax):
    """Separable 3-class fixture at a desk-friendly dimension."""
    images, prompts = synth_dataset(
        n_per_class=20,
        classes=["optimism", "suffering", "horror"],
        dim=32,
        separation=6.0,
        seed=11,
        noise=0.15,
    )
    return images, prompts


def bank_from_prompts(prompts):
    return PromptBank(
        entries=[PromptEntry(prompt=rec.id, cls=rec.label) for rec in prompts.manifest],
        embeddings=prompts,
    )


@pytest.fixture(scope="session")
def small_bank(small_synth):
    _, prompts = small_synth
    return bank_from_prompts(prompts)
