"""Forest-to-sequence neural machine translation toolkit.

Encodes source sentences jointly as word sequences and packed parse
forests, decodes with attention over both words and forest phrases, and
trains end to end on CPU at desk scale.
"""

__version__ = "0.1.0"
