"""emoview: multi-rater emotion annotation, temporal context construction,
prompt emission, model-backed inference, and evaluation for screen-view
movie-watching streams."""

__version__ = "0.1.0"
