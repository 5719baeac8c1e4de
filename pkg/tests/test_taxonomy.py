import itertools

import pytest

from errforge.taxonomy import (
    ExemplarLookupError,
    Exemplar,
    ExemplarStore,
    TaxonomyError,
    VALID_CLASS_IDS,
    all_classes,
    class_of,
    ensure_class_id,
)


def test_class_names():
    assert class_of(1).name == "Mental typo / sloppy work"
    assert class_of(5).name == "Structural blindness"


def test_class_2_definition():
    assert "Missing definition, term, or formula" in class_of(2).definition


def test_invalid_ids_rejected():
    for bad in (0, 6, -1, 42):
        with pytest.raises(TaxonomyError):
            ensure_class_id(bad)
        with pytest.raises(TaxonomyError):
            class_of(bad)


def test_definitions_pairwise_distinct():
    classes = all_classes()
    assert len(classes) == 5
    for a, b in itertools.combinations(classes, 2):
        assert a.definition != b.definition
        assert a.name != b.name


def test_default_store_has_base_exemplar_per_class():
    store = ExemplarStore.default()
    for cls in VALID_CLASS_IDS:
        assert store.exemplars_for(cls, "base")


def test_class1_base_exemplars_are_the_seeded_pair():
    store = ExemplarStore.default()
    exemplars = store.exemplars_for(1, "base")
    questions = [e.question for e in exemplars]
    assert any("Twice Angie's age" in q for q in questions)
    assert any("A roll of 25 m wire" in q for q in questions)


@pytest.mark.parametrize("cls", VALID_CLASS_IDS)
@pytest.mark.parametrize("set_name", ["base", "expanded"])
def test_lookup_returns_only_requested_class(cls, set_name):
    store = ExemplarStore.default()
    for ex in store.exemplars_for(cls, set_name):
        assert ex.class_id == cls


def test_expanded_falls_back_to_base_with_warning(caplog):
    store = ExemplarStore.default()
    with caplog.at_level("WARNING"):
        expanded = store.exemplars_for(3, "expanded")
    assert expanded == store.exemplars_for(3, "base")
    assert "falling back to base" in caplog.text


def test_hybrid_mix_selects_per_class_set():
    store = ExemplarStore.default()
    assert store.exemplars_for(2, "hybrid_mix", {2: "expanded"}) == store.exemplars_for(
        2, "expanded"
    )
    with pytest.raises(ExemplarLookupError):
        store.exemplars_for(2, "hybrid_mix", {1: "base"})
    with pytest.raises(ExemplarLookupError):
        store.exemplars_for(2, "hybrid_mix", None)


def test_store_missing_base_class_rejected():
    one_class = [
        Exemplar(question="q", erroneous_answer="a", explanation="e", class_id=1)
    ]
    with pytest.raises(TaxonomyError):
        ExemplarStore(one_class)


def test_empty_exemplar_fields_rejected():
    with pytest.raises(TaxonomyError):
        Exemplar(question=" ", erroneous_answer="a", explanation="e", class_id=1)


def test_store_round_trip(tmp_path):
    store = ExemplarStore.default()
    path = tmp_path / "exemplars.jsonl"
    store.save(path)
    reloaded = ExemplarStore.load(path)
    assert reloaded.exemplars == store.exemplars
