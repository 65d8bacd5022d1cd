"""Annotation post-processing and inference engine for scholarly abstracts.

Subpackage map:
  annotation_data  -- taxonomy + annotation export parsing, effective labels
  agreement        -- pairwise inter-annotator agreement and the agreement matrix
  curation         -- majority-vote label curation with a full arithmetic report
  sampling         -- stratified annotation samples and fixed-size test sets
  textproc         -- cleaning, tokenization, tf-idf vocabulary and vectors
  classifier       -- linear single-/multi-label models, fine-tuning, evaluation
  registry         -- versioned on-disk model registry with lineage
  service          -- HTTP inference API over the registry
  matching         -- annotator-article similarity and 2D projection
  llm_annotation   -- prompt building, response parsing, annotation campaigns
  cli              -- the `saine` command line entry point
"""

__version__ = "0.1.0"
