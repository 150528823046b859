"""Pretrained audio embedding extraction to AEMB v1 files.

Runs VGGish, OpenL3 and CLAP audio-branch models over a directory of
window WAVs and writes one embedding row per file, in sorted filename
order, to the binary interchange format the scoring pipeline ingests.
"""

from .extract import MODEL_DIMS, extract
from .aemb import write_aemb, read_aemb

__version__ = "0.1.0"
