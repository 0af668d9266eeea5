"""Word clusters from unlabeled text, merged across languages, as CRF NER features."""

__version__ = "0.1.0"

from .clustering import Clustering, ami, init_clustering, exchange_pass, train_clusters
from .corpus import (ColumnSpec, LabeledCorpus, Sentence, Token, Vocabulary, build_vocabulary,
                     normalize_tag_scheme, read_conll, tokenize_plain, write_conll)
from .errors import DataError, NumericalError, ParseError, TagSchemeError
from .evaluation import (EntitySpan, EvalReport, McNemarResult, delta_report, extract_entities,
                         mcnemar, oov_report, score)
from .merge import MergeReport, best_target_cluster, merge_clusterings
