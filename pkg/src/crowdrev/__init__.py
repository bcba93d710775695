"""Review source code by matching it against code posted on Q&A sites.

Code parts from a posts dump are fingerprinted with winnowing and stored
with a defectiveness score; input code is split into blocks, matched by
fingerprint overlap, and the scores of the matched posts are aggregated
into one verdict per file.
"""

from crowdrev._backend import BACKEND
from crowdrev.config import ConfigError, ReviewConfig
from crowdrev.ingest import run_ingest
from crowdrev.matching import find_matches, review_file, review_source, review_tree, split_blocks
from crowdrev.scoring import base_score, score_post
from crowdrev.store import PostsStore
from crowdrev.winnow import Fingerprint, WinnowParams, fingerprint_text, match_degree, normalize

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "Fingerprint",
    "PostsStore",
    "ReviewConfig",
    "WinnowParams",
    "base_score",
    "find_matches",
    "fingerprint_text",
    "match_degree",
    "normalize",
    "review_file",
    "review_source",
    "review_tree",
    "run_ingest",
    "score_post",
    "split_blocks",
]
