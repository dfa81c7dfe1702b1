"""
AudioScope - on-screen sound separation with audio-visual attention
"""

__version__ = "0.1.0"
