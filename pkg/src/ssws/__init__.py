"""Statistical speech waveform synthesis engine and MUSHRA evaluation workbench."""

__version__ = "0.1.0"
