"""newsloom: desk-scale topical language modeling and article assembly.

Pipeline stages: ingest a news corpus, tag and carve topical subsets, train
a word-level LSTM per topic, generate text, filter generated sentences for
novelty against the corpus, assemble articles under strict editing rules,
and publish a static blog. A local curation service and browser UI drive
the human-in-the-loop assembly step.
"""

__version__ = "0.1.0"
