import pytest

from topic_graphsum.config import ModelConfig, TrainConfig
from topic_graphsum.synthetic import make_synthetic_corpus
from topic_graphsum.text import build_vocabulary, label_document

TINY = dict(d_emb=4, d_h=2, n_topics=2, d_ntm_hidden=4, d_topic=4, d_node=4, d_attn=3)


def tiny_model_config(**kw) -> ModelConfig:
    return ModelConfig(**{**TINY, **kw})


def tiny_train_config(**kw) -> TrainConfig:
    base = dict(ntm_pretrain_epochs=2, epochs=2, batch_size=4, select_k=2, max_select_oracle=2)
    return TrainConfig(**{**base, **kw})


@pytest.fixture(scope="session")
def toy():
    """(labeled docs, vocabulary) from a small planted-topic corpus."""
    corpus = make_synthetic_corpus(0, 2, 6, 12, 3, words_per_sentence=(2, 4))
    vocab = build_vocabulary(corpus.documents, max_df=1.0)
    docs = [label_document(d, vocab, max_select=2) for d in corpus.documents]
    return docs, vocab


# acceptance criteria: one PASS/FAIL line each in the terminal summary
_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): marks the test of one acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    _ACCEPTANCE[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
