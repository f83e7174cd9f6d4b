"""Reference external inference backend for the slide-analysis engine.

Speaks the engine's length-prefixed JSON wire protocol and ships a
deterministic scripted stand-in model driven by ground-truth annotation
files, so protocol conformance can be tested without any DL stack.
"""

__version__ = "0.1.0"
