"""Beat and downbeat tracking for performance MIDI with a compact encoder-decoder transformer."""

__version__ = "0.1.0"
