"""caplab: curation and quality-evaluation toolkit for image-caption corpora.

Subsystems:

- ``corpus``     shard-file data model and streaming I/O
- ``annotate``   distributed recaption annotation (lease queue + workers)
- ``textstats``  corpus statistics (lengths, n-grams, POS type counts)
- ``quality``    ANLS, judge scoring, GSB aggregation, gold inspection
- ``mixture``    SFT data-mixture search and curriculum planning
- ``scaling``    log-size scaling fits and correlation reports
- ``packing``    stream accumulator for fixed-capacity sequence packing
- ``evalsvc``    blinded side-by-side rating service
"""

__version__ = "0.1.0"
