"""Multi-document question answering over typed entity graphs.

Mentions of candidate answers (and the query subject) become graph nodes;
four edge relations connect them; gated relational graph convolutions
propagate query-aware mention encodings; candidates are scored by the best
of their mention nodes. Token embeddings are consumed precomputed, so the
trainable stack is small: a query LSTM, two fusion MLPs, the shared
graph-convolution blocks and a scoring head.
"""

from .data import (
    DatasetStats,
    Query,
    Sample,
    dataset_stats,
    mask_dataset,
    parse_dataset,
    split_check,
    tokenize,
)
from .encode import (
    EmbeddingStore,
    hash_embed,
    load_embeddings,
    save_embeddings,
    static_embed,
)
from .graph import EntityGraph, Mention, RelationType, build_graph, graph_report
from .model import (
    ModelConfig,
    ModelParams,
    Prediction,
    forward_sample,
    load_checkpoint,
    nll_loss,
    prepare_samples,
    save_checkpoint,
)
from .rgcn import RgcnParams, layer_update, propagate
from .synthetic import TaskSpec, generate_two_hop
from .train import (
    EvalReport,
    TrainConfig,
    correlation_analysis,
    ensemble_predict,
    evaluate,
    train,
)

__version__ = "0.1.0"
