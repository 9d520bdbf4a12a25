"""Stance analytics for scholarly abstracts.

Subpackages cover the full pipeline: BibTeX ingestion and filtering
(:mod:`stancelab.corpus`), human annotation with agreement statistics
(:mod:`stancelab.annotation`), bag-of-terms featurization
(:mod:`stancelab.features`), trainable and baseline stance scorers
(:mod:`stancelab.model`), evaluation protocols (:mod:`stancelab.evaluation`),
corpus-wide trend analyses (:mod:`stancelab.analysis`), an annotation HTTP
service (:mod:`stancelab.service`), and a CLI (:mod:`stancelab.cli`).
"""

__version__ = "0.1.0"
