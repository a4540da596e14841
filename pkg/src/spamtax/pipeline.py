"""Vectorizer x classifier pipeline assembly shared by eval, bench, and CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .classifiers import (
    Model,
    TrainConfig,
    predict,
    train_lr,
    train_nb,
    train_svm,
)
from .corpus import Document
from .textprep import TokenDoc, preprocess
from .vectorspace import (
    VectorizerConfig,
    Vocabulary,
    encode_bow,
    encode_corpus,
    encode_tfidf,
    fit_vocabulary,
)

VECTORIZERS = ("bow", "tfidf")
CLASSIFIERS = ("nb", "lr", "svm")

_TRAINERS = {"nb": train_nb, "lr": train_lr, "svm": train_svm}


@dataclass(frozen=True)
class PipelineSpec:
    vectorizer: str
    classifier: str
    vec_config: VectorizerConfig = None  # type: ignore[assignment]
    train_config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.vectorizer not in VECTORIZERS:
            raise ValueError(f"vectorizer must be one of {VECTORIZERS}")
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {CLASSIFIERS}")
        if self.vec_config is None:
            object.__setattr__(self, "vec_config", VectorizerConfig(scheme=self.vectorizer))
        elif self.vec_config.scheme != self.vectorizer:
            raise ValueError("vec_config.scheme disagrees with vectorizer")

    @property
    def name(self) -> str:
        return f"{self.vectorizer}-{self.classifier}"


def all_pipeline_specs(vec_config: VectorizerConfig | None = None,
                       train_config: TrainConfig | None = None) -> list[PipelineSpec]:
    """The six vectorizer x classifier combinations, in a fixed order."""
    specs = []
    for vec in VECTORIZERS:
        for clf in CLASSIFIERS:
            cfg = None
            if vec_config is not None:
                cfg = VectorizerConfig(
                    max_features=vec_config.max_features,
                    min_df=vec_config.min_df,
                    ngram=vec_config.ngram,
                    scheme=vec,
                )
            specs.append(PipelineSpec(
                vectorizer=vec,
                classifier=clf,
                vec_config=cfg,
                train_config=train_config or TrainConfig(),
            ))
    return specs


@dataclass
class FittedPipeline:
    spec: PipelineSpec
    vocab: Vocabulary
    model: Model

    def encode(self, doc: TokenDoc):
        if self.spec.vectorizer == "bow":
            return encode_bow(doc, self.vocab)
        return encode_tfidf(doc, self.vocab)

    def classify_tokens(self, doc: TokenDoc) -> str:
        return predict(self.model, self.encode(doc))

    def classify_text(self, doc: Document, stopwords) -> str:
        return self.classify_tokens(preprocess(doc, stopwords))


def fit_pipeline(docs: Sequence[TokenDoc], labels: Sequence[str],
                 spec: PipelineSpec) -> FittedPipeline:
    """Fit vocabulary and model on the given training documents."""
    vocab = fit_vocabulary(docs, spec.vec_config)
    matrix = encode_corpus(docs, vocab, spec.vectorizer)
    model = _TRAINERS[spec.classifier](matrix, labels, spec.train_config)
    return FittedPipeline(spec=spec, vocab=vocab, model=model)


def predict_pipeline(fitted: FittedPipeline, docs: Sequence[TokenDoc]) -> list[str]:
    matrix = encode_corpus(docs, fitted.vocab, fitted.spec.vectorizer)
    return [predict(fitted.model, row) for row in matrix.rows]
