"""Correlation-based similarity measures for word and sentence embeddings."""

__version__ = "0.1.0"

from .embeddings import (EmbeddingTable, SentenceVector, load_embeddings,  # noqa: E402
                         load_text_embeddings, load_word2vec_binary, sentence_embed, tokenize)
from .simcore import (ApsParams, MeasureKind, apsynp, cosine, kendall, mean,  # noqa: E402
                      pearson, rank, similarity, spearman, winsorize)
from .normality import (mean_census, normality_census, qq_points,  # noqa: E402
                        shapiro_wilk, standardize)
from .bootstrap import (BcaInterval, PairedScoreDiff, Verdict, bca_interval,  # noqa: E402
                        significance_verdict)
from .evalharness import (EvalReport, StsTask, WordSimTask, eval_sts,  # noqa: E402
                          eval_wordsim, load_sts, load_sts_dir, load_wordsim, sweep)
