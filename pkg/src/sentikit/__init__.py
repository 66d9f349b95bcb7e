"""Visual sentiment classification on frozen vision-language embeddings.

Trainable heads (cross-entropy and contrastive projection), prompt-bank
cosine-argmax inference, hierarchical emotion taxonomies with rollup, and
an evaluation harness with baselines, ablations, and cross-dataset grids.
"""

from .dataio import (
    CaptionSet,
    CaptionStore,
    EmbeddingDataset,
    ManifestRecord,
    PromptBank,
    PromptEntry,
    load_prompt_bank,
    read_embeddings,
    split_dataset,
    synth_dataset,
    write_embeddings,
    write_prompt_bank,
)
from .errors import DataError, FormatError, NumericError, TaxonomyMismatch
from .estimators import (
    ContrastiveProbe,
    CrossEntropyProbe,
    PromptSimilarityTransformer,
    ZeroShotPromptClassifier,
    rollup_labels,
)
from .evalkit import (
    ConfusionMatrix,
    EvalReport,
    EvalTarget,
    GridReport,
    ModelSpec,
    ablation_run,
    aggregate_accuracies,
    as_percent,
    baseline_accuracy,
    cross_dataset_run,
    evaluate,
    run_grid,
)
from .heads import (
    ContrastiveHead,
    CrossEntropyHead,
    forward_ce,
    forward_proj,
    identity_projection_head,
    init_head,
    load_model,
    save_model,
)
from .inference import (
    Prediction,
    classify_ce,
    classify_ce_batch,
    classify_contrastive,
    classify_contrastive_batch,
    classify_zeroshot,
    classify_zeroshot_batch,
)
from .losses import TrainBatch, contrastive_loss, cross_entropy_loss
from .taxonomy import (
    PromptTemplate,
    Taxonomy,
    default_taxonomy,
    expand_prompts,
    load_taxonomy,
    resolve_prompt_class,
    rollup,
)
from .trainer import (
    AdamState,
    EpochLog,
    PlateauScheduler,
    TrainConfig,
    adam_step,
    make_batches,
    train,
)

__version__ = "0.1.0"
