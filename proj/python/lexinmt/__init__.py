"""Disambiguated lexically constrained translation toolkit."""

from ._core import (
    AnnotatedPair,
    ConstraintInstance,
    ConstraintInventory,
    LexinmtError,
    NmtModel,
    Stage1Model,
    TemplatePair,
    annotate,
    bleu,
    csr,
    disambig_accuracy,
    exact_match,
    extract_template,
    fill_template,
    generate_synthetic,
    load_inventory,
    make_record,
    read_corpus_jsonl,
    split,
    term_ter,
    train_nmt,
    train_stage1,
    window_overlap,
    write_corpus_jsonl,
)

__all__ = [
    "AnnotatedPair",
    "ConstraintInstance",
    "ConstraintInventory",
    "LexinmtError",
    "NmtModel",
    "Stage1Model",
    "TemplatePair",
    "annotate",
    "bleu",
    "csr",
    "disambig_accuracy",
    "exact_match",
    "extract_template",
    "fill_template",
    "generate_synthetic",
    "load_inventory",
    "make_record",
    "read_corpus_jsonl",
    "split",
    "term_ter",
    "train_nmt",
    "train_stage1",
    "window_overlap",
    "write_corpus_jsonl",
]
