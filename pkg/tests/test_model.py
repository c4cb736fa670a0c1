import json
import random

import pytest

from topicmill.model import (
    OTHER,
    Clustering,
    CorpusError,
    Document,
    RunValidationError,
    Topic,
    TopicAssignment,
    TopicModelRun,
    load_corpus,
    load_run,
    save_run,
    validate_run,
)


def test_load_corpus_roundtrip(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(
        '{"id": "d1", "text": "hello", "label": "x"}\n{"id": "d2", "text": "world"}\n'
    )
    docs = load_corpus(path)
    assert [d.id for d in docs] == ["d1", "d2"]
    assert docs[0].gold_label == "x"
    assert docs[1].gold_label is None


def test_load_corpus_duplicate_id(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "d1", "text": "a"}\n{"id": "d1", "text": "b"}\n')
    with pytest.raises(CorpusError, match="d1"):
        load_corpus(path)


def test_load_corpus_missing_text_names_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "d1", "text": "a"}\n{"id": "d2"}\n')
    with pytest.raises(CorpusError, match=":2:"):
        load_corpus(path)


def test_load_corpus_bad_json_names_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "d1", "text": "a"}\nnot json\n')
    with pytest.raises(CorpusError, match=":2:"):
        load_corpus(path)


def test_document_invariants():
    with pytest.raises(ValueError):
        Document(id="", text="x")
    with pytest.raises(ValueError):
        Document(id="d", text="")
    doc = Document(id="d", text="x", summary="s")
    assert doc.effective_text == "s"


def test_clustering_validation():
    Clustering(assignment={"a": 0, "b": 0}, k=1)  # single cluster is fine
    with pytest.raises(ValueError):
        Clustering(assignment={"a": 1}, k=1)
    with pytest.raises(ValueError):
        Clustering(assignment={}, k=0)


def _random_run(rng: random.Random) -> TopicModelRun:
    n_topics = rng.randint(0, 5)
    topics = tuple(
        Topic(
            id=f"t{i}",
            name=f"topic {i}",
            source_cluster=rng.choice([None, i]),
            parent_id=None,
            merged_from=tuple(f"t{j}" for j in range(rng.randint(0, 2))),
        )
        for i in range(n_topics)
    )
    n_docs = rng.randint(1, 8)
    topic_ids = [t.id for t in topics] + [OTHER]
    assignments = []
    clustering = {}
    for d in range(n_docs):
        tid = rng.choice(topic_ids)
        assignments.append(
            TopicAssignment(
                doc_id=f"d{d}",
                topic_id=tid,
                stage="other" if tid == OTHER else rng.choice(["generated", "remapped"]),
            )
        )
        clustering[f"d{d}"] = rng.randint(0, 2)
    return TopicModelRun(
        run_id="abc123",
        config={"run": {"seed": rng.randint(0, 99)}},
        topics=topics,
        assignments=tuple(assignments),
        clustering=Clustering(assignment=clustering, k=3),
        llm_call_count=rng.randint(0, 20),
        provenance={"created_at": "2020-01-01T00:00:00+00:00"},
    )


def test_save_load_roundtrip_randomized(tmp_path):
    rng = random.Random(0)
    for i in range(25):
        run = _random_run(rng)
        out = tmp_path / f"run{i}"
        save_run(run, out)
        assert load_run(out) == run


def test_save_run_zero_topics(tmp_path):
    run = TopicModelRun(
        run_id="r",
        config={},
        topics=(),
        assignments=(TopicAssignment(doc_id="d0", topic_id=OTHER, stage="other"),),
        clustering=Clustering(assignment={"d0": 0}, k=1),
    )
    save_run(run, tmp_path)
    loaded = load_run(tmp_path)
    assert loaded.topics == ()
    assert loaded.assignments[0].topic_id == OTHER  # sentinel preserved verbatim
    assert json.loads((tmp_path / "topics.json").read_text()) == []


def test_validate_run_lists_offending_docs():
    run = TopicModelRun(
        run_id="r",
        config={},
        topics=(Topic(id="t0", name="a"),),
        assignments=(
            TopicAssignment(doc_id="d0", topic_id="t0"),
            TopicAssignment(doc_id="d1", topic_id="t9"),
            TopicAssignment(doc_id="d2", topic_id=OTHER, stage="other"),
        ),
        clustering=Clustering(assignment={"d0": 0, "d1": 0, "d2": 0}, k=1),
    )
    with pytest.raises(RunValidationError) as err:
        validate_run(run)
    assert "d1" in err.value.doc_ids


def test_validate_run_duplicate_assignment():
    run = TopicModelRun(
        run_id="r",
        config={},
        topics=(Topic(id="t0", name="a"),),
        assignments=(
            TopicAssignment(doc_id="d0", topic_id="t0"),
            TopicAssignment(doc_id="d0", topic_id="t0"),
        ),
        clustering=Clustering(assignment={"d0": 0}, k=1),
    )
    with pytest.raises(RunValidationError):
        validate_run(run)
