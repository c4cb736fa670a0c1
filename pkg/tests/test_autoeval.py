import json

import pytest

from topicmill.autoeval import (
    EvalReport,
    LabelAccuracyConfig,
    evaluate_run,
    judge_topic_accuracy,
    judge_topic_completeness,
    label_accuracy,
)
from topicmill.embedding import HashingEmbedder
from topicmill.engine import run_topic_modeling
from topicmill.model import (
    OTHER,
    BusinessDefinition,
    Clustering,
    Document,
    Topic,
    TopicAssignment,
    TopicModelRun,
)
from topicmill.prompts import TemplateRegistry, VerdictParseError

from conftest import blob_mock_entries, make_blob_docs, make_client, make_run_config

OPTS = {"model": "m", "temperature": 0.0, "max_tokens": 256}
BIZ = BusinessDefinition(topic_definition="topics should be concise")


@pytest.fixture(scope="module")
def embedder():
    return HashingEmbedder(dim=128)


def test_judge_accuracy_levels(registry):
    client = make_client([{"response": "Completely Correct"}])
    assert judge_topic_accuracy("text", "topic", BIZ, client, registry, OPTS) == 4
    client = make_client([{"response": "2"}])
    assert judge_topic_accuracy("text", "topic", BIZ, client, registry, OPTS) == 2


def test_judge_completeness_levels(registry):
    client = make_client([{"response": "Mostly covered"}])
    assert judge_topic_completeness("text", "topic", BIZ, client, registry, OPTS) == 3
    client = make_client([{"response": "Complete"}])
    assert judge_topic_completeness("text", "topic", BIZ, client, registry, OPTS) == 4


def test_judge_unparseable_after_retry(registry):
    client = make_client([{"response": "no verdict here"}])
    with pytest.raises(VerdictParseError):
        judge_topic_accuracy("text", "topic", BIZ, client, registry, OPTS)
    assert client.ledger.count("judge") == 2  # original + one retry


def test_judge_business_definitions_in_prompt():
    seen = {}

    class Spy:
        def send(self, req):
            seen["prompt"] = req.user
            return "Completely Correct"

    from topicmill.llm import LlmClient

    registry = TemplateRegistry()
    judge_topic_accuracy(
        "text",
        "topic",
        BusinessDefinition(domain_description="bank chat", topic_definition="be concise"),
        LlmClient(Spy()),
        registry,
        OPTS,
    )
    assert "- topic definition: be concise" in seen["prompt"]
    assert "- domain description: bank chat" in seen["prompt"]


def _two_topic_run():
    topics = (
        Topic(id="t0", name="Refund requests"),
        Topic(id="t1", name="Card issues"),
    )
    docs = [
        Document(id="r0", text="refund please refund"),
        Document(id="r1", text="refund the fee refund"),
        Document(id="c0", text="card is broken card"),
        Document(id="c1", text="card declined card"),
    ]
    assignments = (
        TopicAssignment(doc_id="r0", topic_id="t0"),
        TopicAssignment(doc_id="r1", topic_id="t0"),
        TopicAssignment(doc_id="c0", topic_id="t1"),
        TopicAssignment(doc_id="c1", topic_id="t1"),
    )
    run = TopicModelRun(
        run_id="r",
        config={},
        topics=topics,
        assignments=assignments,
        clustering=Clustering(assignment={d.id: 0 for d in docs}, k=1),
    )
    return run, docs


def test_label_accuracy_requires_two_topics(registry, embedder):
    run, docs = _two_topic_run()
    one_topic = TopicModelRun(
        run_id="r",
        config={},
        topics=run.topics[:1],
        assignments=run.assignments[:2],
        clustering=run.clustering,
        )
    with pytest.raises(ValueError, match="at least 2"):
        label_accuracy(one_topic, docs, LabelAccuracyConfig(), make_client([]), embedder, registry, OPTS)


def test_label_accuracy_echo_judge_is_perfect(registry, embedder):
    run, docs = _two_topic_run()
    entries = [
        {"match": r"(?s)\[Document\].*refund", "response": "Refund requests"},
        {"match": r"(?s)\[Document\].*card", "response": "Card issues"},
    ]
    result = label_accuracy(
        run, docs, LabelAccuracyConfig(), make_client(entries), embedder, registry, OPTS
    )
    assert result.macro == 1.0
    assert result.per_topic["t0"]["accuracy"] == 1.0
    assert result.per_topic["t1"]["accuracy"] == 1.0
    assert result.missing_verdicts == 0


def test_label_accuracy_flipped_judge_is_zero(registry, embedder):
    run, docs = _two_topic_run()
    entries = [
        {"match": r"(?s)\[Document\].*refund", "response": "Card issues"},
        {"match": r"(?s)\[Document\].*card", "response": "Refund requests"},
    ]
    result = label_accuracy(
        run, docs, LabelAccuracyConfig(), make_client(entries), embedder, registry, OPTS
    )
    assert result.macro == 0.0


def test_label_accuracy_zero_doc_topic_skipped(registry, embedder):
    run, docs = _two_topic_run()
    topics = run.topics + (Topic(id="t9", name="Ghost topic"),)
    run = TopicModelRun(
        run_id="r",
        config={},
        topics=topics,
        assignments=run.assignments,
        clustering=run.clustering,
    )
    entries = [{"response": "Refund requests"}]
    result = label_accuracy(
        run, docs, LabelAccuracyConfig(), make_client(entries), embedder, registry, OPTS
    )
    assert "t9" in result.skipped_topics


def test_label_accuracy_macro_unweighted(registry, embedder):
    # duplicating one topic's documents must not move the other topic's
    # per-topic accuracy (macro average is unweighted and per-topic sampling
    # is independently seeded)
    run, docs = _two_topic_run()
    entries = [
        {"match": r"(?s)\[Document\].*refund", "response": "Refund requests"},
        {"match": r"(?s)\[Document\].*card", "response": "Card issues"},
    ]
    base = label_accuracy(
        run, docs, LabelAccuracyConfig(), make_client(entries), embedder, registry, OPTS
    )
    extra_docs = docs + [Document(id=f"r-extra{i}", text="refund again refund") for i in range(6)]
    extra_assignments = run.assignments + tuple(
        TopicAssignment(doc_id=f"r-extra{i}", topic_id="t0") for i in range(6)
    )
    bigger = TopicModelRun(
        run_id="r",
        config={},
        topics=run.topics,
        assignments=extra_assignments,
        clustering=Clustering(assignment={d.id: 0 for d in extra_docs}, k=1),
    )
    grown = label_accuracy(
        bigger, extra_docs, LabelAccuracyConfig(), make_client(entries), embedder, registry, OPTS
    )
    assert grown.per_topic["t1"] == base.per_topic["t1"]
    assert grown.macro == base.macro == 1.0


def test_label_accuracy_unparseable_counts_missing(registry, embedder):
    run, docs = _two_topic_run()
    entries = [{"response": "not a topic name at all"}]
    result = label_accuracy(
        run, docs, LabelAccuracyConfig(), make_client(entries), embedder, registry, OPTS
    )
    assert result.macro is None
    assert result.missing_verdicts == 4


def _eval_config(tmp_path, extra_entries=(), **keys):
    entries = list(extra_entries) + blob_mock_entries()
    return make_run_config(tmp_path, entries, **keys)


def test_evaluate_run_perfect_fixture(tmp_path):
    docs = make_blob_docs()
    cfg = _eval_config(tmp_path)
    run = run_topic_modeling(docs, cfg)
    report = evaluate_run(run, docs, cfg)
    assert report.label_accuracy.macro == 1.0
    assert report.topic_accuracy_mean == 4.0
    assert report.topic_completeness_mean == 4.0
    assert report.n_judged == 40
    assert report.missing_verdicts == 0
    assert report.topic_accuracy_histogram == {1: 0, 2: 0, 3: 0, 4: 40}


def test_evaluate_run_all_other(tmp_path):
    docs = [Document(id=f"d{i}", text=f"word {i}") for i in range(3)]
    entries = [{"match": "generate topics within", "response": "None"}]
    cfg = make_run_config(tmp_path, entries, clustering__k=1)
    run = run_topic_modeling(docs, cfg)
    report = evaluate_run(run, docs, cfg)
    assert report.n_judged == 0
    assert report.label_accuracy is None
    assert report.topic_accuracy_mean is None


def test_evaluate_run_deterministic(tmp_path):
    docs = make_blob_docs()
    cfg = _eval_config(tmp_path)
    run = run_topic_modeling(docs, cfg)
    r1 = evaluate_run(run, docs, cfg).to_dict()
    r2 = evaluate_run(run, docs, cfg).to_dict()
    assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)


def test_evaluate_sample_cap(tmp_path):
    docs = make_blob_docs()
    cfg = _eval_config(tmp_path)
    run = run_topic_modeling(docs, cfg)
    report = evaluate_run(run, docs, cfg, sample_cap=10)
    assert report.n_judged == 10


def test_evaluate_label_accuracy_only(tmp_path):
    docs = make_blob_docs()
    cfg = _eval_config(tmp_path)
    run = run_topic_modeling(docs, cfg)
    report = evaluate_run(run, docs, cfg, label_accuracy_only=True)
    assert report.label_accuracy.macro == 1.0
    assert report.n_judged == 0


def test_evaluate_judges_only(tmp_path):
    docs = make_blob_docs()
    cfg = _eval_config(tmp_path)
    run = run_topic_modeling(docs, cfg)
    report = evaluate_run(run, docs, cfg, judges_only=True)
    assert report.label_accuracy is None
    assert report.n_judged == 40


def test_report_save_shape(tmp_path):
    docs = make_blob_docs()
    cfg = _eval_config(tmp_path)
    run = run_topic_modeling(docs, cfg)
    report = evaluate_run(run, docs, cfg)
    path = report.save(tmp_path / "eval_report.json")
    payload = json.loads(path.read_text())
    assert payload["n_judged"] == 40
    hist = payload["topic_accuracy"]["histogram"]
    assert sum(hist.values()) == payload["n_judged"]
    assert payload["label_accuracy"]["macro"] == 1.0
    assert payload["config"]["label_accuracy"]["topic_embedding"] == "name"


def test_centroid_topic_embedding_mode(tmp_path):
    docs = make_blob_docs()
    cfg = _eval_config(tmp_path, label_accuracy__topic_embedding="centroid")
    run = run_topic_modeling(docs, cfg)
    report = evaluate_run(run, docs, cfg)
    assert report.label_accuracy.macro == 1.0
