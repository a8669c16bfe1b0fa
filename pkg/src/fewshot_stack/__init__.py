"""Few-shot classification on stacked multi-backbone features.

Pipeline: FSF feature stores -> key-aligned concatenation -> SxS channel
restack -> per-episode training of a small CNN-MLP head -> repeated-episode
evaluation, ablation grids, and t-SNE separability exports.
"""

__version__ = "0.1.0"

from .episodes import (
    AblationCell,
    Episode,
    EpisodeSpec,
    EvalReport,
    ablation_grid,
    cross_validate,
    k_sweep,
    run_episode,
    sample_episode,
)
from .fsf import FeatureRecord, FeatureStore, JoinedDataset, join, read_fsf, write_fsf
from .headnet import (
    HeadConfig,
    HeadParams,
    TrainConfig,
    backward,
    count_params,
    forward,
    init_params,
    load_head,
    loss_value,
    predict,
    save_head,
    train_head,
    with_dims,
)
from .optim import AdamState, adam_step
from .reporting import emit_report, render_confusion
from .stacking import StackedTensor, flatten, reshape_stack, stack_batch
from .tsne import EmbeddingPoint, tsne, tsne_embed

__all__ = [
    "AblationCell",
    "AdamState",
    "Episode",
    "EpisodeSpec",
    "EvalReport",
    "EmbeddingPoint",
    "FeatureRecord",
    "FeatureStore",
    "HeadConfig",
    "HeadParams",
    "JoinedDataset",
    "StackedTensor",
    "TrainConfig",
    "ablation_grid",
    "adam_step",
    "backward",
    "count_params",
    "cross_validate",
    "emit_report",
    "flatten",
    "forward",
    "init_params",
    "join",
    "k_sweep",
    "load_head",
    "loss_value",
    "predict",
    "read_fsf",
    "render_confusion",
    "reshape_stack",
    "run_episode",
    "sample_episode",
    "save_head",
    "stack_batch",
    "train_head",
    "tsne",
    "tsne_embed",
    "with_dims",
    "write_fsf",
]
