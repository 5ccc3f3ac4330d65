"""Genetic programming of word-vector composition programs for word analogies."""

__version__ = "0.1.0"

from .benchmark import (
    Question,
    QuestionGroup,
    SplitGroup,
    aggregate_runs,
    baseline_rule_program,
    evaluate_accuracy,
    filter_oov,
    parse_questions,
    split_train_test,
    transfer_evaluate,
)
from .embeddings import (
    EmbeddingStore,
    load_binary_embeddings,
    load_embeddings,
    load_text_embeddings,
    save_binary_embeddings,
    save_text_embeddings,
)
from .evolution import (
    EvaluatedProgram,
    EvolutionConfig,
    RunResult,
    draw_fitness_subset,
    evolve_run,
    fitness,
    one_point_crossover,
    select_best_program,
    select_truncation,
    uniform_mutation,
)
from .program import (
    Node,
    depth,
    evaluate,
    format_program,
    parse_program,
    random_tree,
    semantically_equivalent,
    size,
)
